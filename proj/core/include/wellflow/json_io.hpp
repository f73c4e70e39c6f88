#pragma once

// JSON schemas for models and reports. Key order is lexicographic and float
// formatting is the shortest round-trip form, so identical inputs always
// serialize byte-identically.

#include <string>

#include "wellflow/bridge.hpp"
#include "wellflow/convolution.hpp"
#include "wellflow/crm.hpp"
#include "wellflow/fit_report.hpp"
#include "wellflow/validation.hpp"
#include "wellflow/well_data.hpp"

namespace wellflow {

std::string model_to_json(const DeconvolutionModel& model);
DeconvolutionModel model_from_json(const std::string& text);

std::string crm_model_to_json(const CrmModel& model);
CrmModel crm_model_from_json(const std::string& text);

std::string fit_report_to_json(const FitReport& report);
std::string qc_report_to_json(const QcReport& report);
std::string equivalence_report_to_json(const EquivalenceReport& report);
std::string validation_report_to_json(const ValidationReport& report);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace wellflow
