#include <iostream>
int main() { std::cout << "wellflow\n"; return 0; }
