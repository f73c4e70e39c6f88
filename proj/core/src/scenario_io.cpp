#include "wellflow/scenario_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "wellflow/toml_lite.hpp"

namespace wellflow {

namespace {

[[noreturn]] void fail_row(const std::string& path, int line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  for (std::string& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.pop_back();
  }
  return fields;
}

double parse_number(const std::string& s, const std::string& path, int line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail_row(path, line, "malformed numeric field '" + s + "'");
  return v;
}

struct RawSeries {
  std::vector<double> t;
  std::vector<double> a;
  std::vector<double> b;  // pressure weight column, unused for rates
  std::vector<int> line;  // source line per row, for diagnostics
};

void check_monotone(const std::map<std::string, RawSeries>& per_well, const std::string& path) {
  for (const auto& [well, rs] : per_well) {
    for (std::size_t i = 1; i < rs.t.size(); ++i) {
      if (rs.t[i] == rs.t[i - 1])
        fail_row(path, rs.line[i], "duplicate timestamp for well '" + well + "'");
      if (rs.t[i] < rs.t[i - 1])
        fail_row(path, rs.line[i], "non-monotone time for well '" + well + "'");
    }
  }
}

}  // namespace

ScenarioConfig load_scenario_config(const std::string& toml_path) {
  const toml_lite::Table root = toml_lite::parse_file(toml_path);
  ScenarioConfig cfg;
  cfg.injection_sign = toml_lite::get_string(root, "injection_sign", "negative_in_file");
  if (cfg.injection_sign != "negative_in_file" && cfg.injection_sign != "positive_in_file")
    throw std::runtime_error("injection_sign must be negative_in_file or positive_in_file");

  const toml_lite::Value& wells = toml_lite::require(root, "wells");
  for (const toml_lite::Value& entry : wells.as_array()) {
    const toml_lite::Table& wt = entry.as_table();
    Well w;
    w.name = toml_lite::require(wt, "name").as_string();
    w.role = well_role_from_string(toml_lite::require(wt, "role").as_string());
    cfg.wells.push_back(w);
    if (const toml_lite::Value* p0 = toml_lite::find(wt, "p0_bar"))
      cfg.p0_bar[w.name] = p0->as_number();
  }

  if (const toml_lite::Value* cr = toml_lite::find(root, "cumulative_reference")) {
    Scenario::CumulativeReference ref;
    ref.t_days = toml_lite::number_array(toml_lite::require(cr->as_table(), "t_days"));
    ref.cumulative_m3 = toml_lite::number_array(toml_lite::require(cr->as_table(), "cumulative_m3"));
    cfg.cumulative_reference = std::move(ref);
  }
  return cfg;
}

Scenario load_scenario(const std::vector<std::string>& rate_csv_paths,
                       const std::vector<std::string>& pressure_csv_paths,
                       const ScenarioConfig& config) {
  Scenario s;
  s.wells = config.wells;
  s.p0_bar = config.p0_bar;
  s.cumulative_reference = config.cumulative_reference;
  for (const Well& w : s.wells) s.rates[w.name] = RateHistory();

  for (const std::string& path : rate_csv_paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open rate file '" + path + "'");
    std::string line;
    int lineno = 0;
    std::map<std::string, RawSeries> per_well;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto fields = split_csv_row(line);
      if (lineno == 1 && !fields.empty() && fields[0] == "well") continue;  // header
      if (fields.size() != 3) fail_row(path, lineno, "expected 3 fields: well,time_days,rate_m3d");
      const std::string& well = fields[0];
      const Well* decl = s.find(well);
      if (!decl) fail_row(path, lineno, "unknown well id '" + well + "'");
      RawSeries& rs = per_well[well];
      rs.t.push_back(parse_number(fields[1], path, lineno));
      double q = parse_number(fields[2], path, lineno);
      if (decl->role == WellRole::injector && config.injection_sign == "positive_in_file")
        q = -q;
      rs.a.push_back(q);
      rs.line.push_back(lineno);
    }
    check_monotone(per_well, path);
    for (auto& [well, rs] : per_well) {
      std::vector<RateHistory::Step> steps(rs.t.size());
      for (std::size_t i = 0; i < rs.t.size(); ++i) steps[i] = {rs.t[i], rs.a[i]};
      if (!s.rates.at(well).empty())
        throw std::runtime_error("well '" + well + "' has rate data in more than one file");
      s.rates[well] = RateHistory(std::move(steps));
    }
  }

  for (const std::string& path : pressure_csv_paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pressure file '" + path + "'");
    std::string line;
    int lineno = 0;
    std::map<std::string, RawSeries> per_well;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto fields = split_csv_row(line);
      if (lineno == 1 && !fields.empty() && fields[0] == "well") continue;
      if (fields.size() != 3 && fields.size() != 4)
        fail_row(path, lineno, "expected well,time_days,pressure_bar[,weight]");
      const std::string& well = fields[0];
      if (!s.find(well)) fail_row(path, lineno, "unknown well id '" + well + "'");
      RawSeries& rs = per_well[well];
      rs.t.push_back(parse_number(fields[1], path, lineno));
      rs.a.push_back(parse_number(fields[2], path, lineno));
      rs.b.push_back(fields.size() == 4 ? parse_number(fields[3], path, lineno) : 1.0);
      rs.line.push_back(lineno);
    }
    check_monotone(per_well, path);
    for (auto& [well, rs] : per_well) {
      std::vector<PressureSeries::Sample> samples(rs.t.size());
      for (std::size_t i = 0; i < rs.t.size(); ++i) samples[i] = {rs.t[i], rs.a[i], rs.b[i]};
      if (s.pressures.count(well) && !s.pressures.at(well).empty())
        throw std::runtime_error("well '" + well + "' has pressure data in more than one file");
      s.pressures[well] = PressureSeries(std::move(samples));
    }
  }
  for (const Well& w : s.wells) {
    if (!s.pressures.count(w.name)) s.pressures[w.name] = PressureSeries();
  }

  s.validate();
  return s;
}

std::string format_double(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    // integral values print without exponent or trailing digits
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void write_rate_csv(const std::string& path, const std::map<std::string, RateHistory>& rates) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "well,time_days,rate_m3d\n";
  for (const auto& [well, rh] : rates) {
    for (const auto& step : rh.steps())
      out << well << ',' << format_double(step.t) << ',' << format_double(step.q) << '\n';
  }
}

void write_pressure_csv(const std::string& path,
                        const std::map<std::string, PressureSeries>& pressures) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "well,time_days,pressure_bar,weight\n";
  for (const auto& [well, ps] : pressures) {
    for (const auto& s : ps.samples()) {
      out << well << ',' << format_double(s.t) << ',' << format_double(s.p) << ','
          << format_double(s.w) << '\n';
    }
  }
}

void write_scenario_config(const std::string& path, const ScenarioConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "injection_sign = \"" << config.injection_sign << "\"\n";
  for (const Well& w : config.wells) {
    out << "\n[[wells]]\n";
    out << "name = \"" << w.name << "\"\n";
    out << "role = \"" << to_string(w.role) << "\"\n";
    auto it = config.p0_bar.find(w.name);
    if (it != config.p0_bar.end()) out << "p0_bar = " << format_double(it->second) << "\n";
  }
  if (config.cumulative_reference) {
    out << "\n[cumulative_reference]\n";
    out << "t_days = [";
    for (std::size_t i = 0; i < config.cumulative_reference->t_days.size(); ++i)
      out << (i ? ", " : "") << format_double(config.cumulative_reference->t_days[i]);
    out << "]\ncumulative_m3 = [";
    for (std::size_t i = 0; i < config.cumulative_reference->cumulative_m3.size(); ++i)
      out << (i ? ", " : "") << format_double(config.cumulative_reference->cumulative_m3[i]);
    out << "]\n";
  }
}

}  // namespace wellflow
