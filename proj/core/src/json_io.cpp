#include "wellflow/json_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace wellflow {

using nlohmann::json;

namespace {

json utr_to_json(const Utr& u) {
  json nodes = json::array();
  for (const auto& n : u.nodes()) nodes.push_back({n.t, n.z});
  return json{{"jump", u.jump()}, {"nodes", nodes}};
}

Utr utr_from_json(const json& j) {
  std::vector<Utr::Node> nodes;
  for (const auto& n : j.at("nodes")) nodes.push_back({n.at(0).get<double>(), n.at(1).get<double>()});
  return Utr(j.at("jump").get<double>(), std::move(nodes));
}

}  // namespace

std::string model_to_json(const DeconvolutionModel& model) {
  json j;
  j["wells"] = model.wells;
  j["p0_bar"] = model.p0_bar;
  json responses = json::array();
  for (int obs = 0; obs < model.utrs.size(); ++obs) {
    for (int src = 0; src < model.utrs.size(); ++src) {
      if (!model.utrs.active(obs, src)) continue;
      json entry = utr_to_json(model.utrs.at(obs, src));
      entry["observer"] = model.wells[static_cast<std::size_t>(obs)];
      entry["source"] = model.wells[static_cast<std::size_t>(src)];
      responses.push_back(entry);
    }
  }
  j["responses"] = responses;
  if (!model.rate_corrections.empty()) j["rate_corrections"] = model.rate_corrections;
  j["correction_band"] = {model.correction_band.first, model.correction_band.second};
  return j.dump(2) + "\n";
}

DeconvolutionModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  DeconvolutionModel model;
  model.wells = j.at("wells").get<std::vector<std::string>>();
  model.p0_bar = j.at("p0_bar").get<std::vector<double>>();
  model.utrs = UtrMatrix(static_cast<int>(model.wells.size()));
  for (const auto& entry : j.at("responses")) {
    const int obs = model.index_of(entry.at("observer").get<std::string>());
    const int src = model.index_of(entry.at("source").get<std::string>());
    if (obs < 0 || src < 0) throw std::runtime_error("model response references unknown well");
    model.utrs.set(obs, src, utr_from_json(entry));
  }
  if (j.contains("rate_corrections"))
    model.rate_corrections =
        j.at("rate_corrections").get<std::map<std::string, std::vector<double>>>();
  if (j.contains("correction_band")) {
    model.correction_band = {j.at("correction_band").at(0).get<double>(),
                             j.at("correction_band").at(1).get<double>()};
  }
  model.validate();
  return model;
}

std::string crm_model_to_json(const CrmModel& model) {
  json producers = json::array();
  for (std::size_t n = 0; n < model.producers.size(); ++n) {
    producers.push_back({{"id", model.producers[n]},
                         {"tau_days", model.tau_days[n]},
                         {"gamma_m3_per_bar", model.gamma_m3_per_bar[n]}});
  }
  json connectivity = json::object();
  for (std::size_t n = 0; n < model.producers.size(); ++n) {
    json row = json::object();
    for (std::size_t m = 0; m < model.injectors.size(); ++m)
      row[model.injectors[m]] = model.connectivity(static_cast<long>(n), static_cast<long>(m));
    connectivity[model.producers[n]] = row;
  }
  json j{{"producers", producers}, {"connectivity", connectivity}};
  j["injectors"] = model.injectors;
  return j.dump(2) + "\n";
}

CrmModel crm_model_from_json(const std::string& text) {
  const json j = json::parse(text);
  CrmModel model;
  for (const auto& p : j.at("producers")) {
    model.producers.push_back(p.at("id").get<std::string>());
    model.tau_days.push_back(p.at("tau_days").get<double>());
    model.gamma_m3_per_bar.push_back(p.at("gamma_m3_per_bar").get<double>());
  }
  if (j.contains("injectors")) {
    model.injectors = j.at("injectors").get<std::vector<std::string>>();
  } else {
    // derive the injector list from the first connectivity row
    const auto& conn = j.at("connectivity");
    if (!conn.empty())
      for (const auto& [inj, f] : conn.begin().value().items()) model.injectors.push_back(inj);
  }
  model.connectivity = Eigen::MatrixXd::Zero(static_cast<long>(model.producers.size()),
                                             static_cast<long>(model.injectors.size()));
  const auto& conn = j.at("connectivity");
  for (std::size_t n = 0; n < model.producers.size(); ++n) {
    if (!conn.contains(model.producers[n])) continue;
    for (const auto& [inj, f] : conn.at(model.producers[n]).items()) {
      const int m = model.injector_index(inj);
      if (m < 0) throw std::runtime_error("connectivity references unknown injector '" + inj + "'");
      model.connectivity(static_cast<long>(n), m) = f.get<double>();
    }
  }
  model.validate(false);
  return model;
}

std::string fit_report_to_json(const FitReport& report) {
  json j;
  j["status"] = to_string(report.status);
  j["objective_trace"] = report.objective_trace;
  j["final_rmsd"] = report.final_rmsd;
  if (report.final_r2)
    j["final_r2"] = *report.final_r2;
  else
    j["final_r2"] = nullptr;
  j["residuals"] = report.residuals;
  j["per_well_objective"] = report.per_well_objective;
  j["near_null_directions"] = report.near_null_directions;
  j["de_evaluations"] = report.de_evaluations;
  j["gn_iterations"] = report.gn_iterations;
  return j.dump(2) + "\n";
}

std::string qc_report_to_json(const QcReport& report) {
  json wells = json::object();
  for (const auto& [name, f] : report.wells) {
    wells[name] = {{"pressure_resolution_ok", f.pressure_resolution_ok},
                   {"sampling_rate_ok", f.sampling_rate_ok},
                   {"rate_variation_events", f.rate_variation_events},
                   {"max_relative_amplitude", f.max_relative_amplitude},
                   {"no_variation", f.no_variation}};
  }
  json j{{"wells", wells}, {"verdict", to_string(report.verdict)}};
  if (report.cumulative_deviation)
    j["cumulative_deviation"] = *report.cumulative_deviation;
  else
    j["cumulative_deviation"] = nullptr;
  return j.dump(2) + "\n";
}

std::string equivalence_report_to_json(const EquivalenceReport& report) {
  json per_well = json::object();
  for (const auto& [well, series] : report.per_well) {
    json rows = json::array();
    for (const auto& [t, dev] : series) rows.push_back({t, dev});
    per_well[well] = rows;
  }
  json j{{"max_relative_deviation", report.max_relative_deviation},
         {"tolerance", report.tolerance},
         {"pass", report.pass},
         {"per_well", per_well}};
  return j.dump(2) + "\n";
}

std::string validation_report_to_json(const ValidationReport& report) {
  json per_well = json::object();
  for (const auto& [well, m] : report.per_well) {
    json entry{{"rmsd", m.rmsd}, {"n_points", m.n_points}};
    if (m.r2)
      entry["r2"] = *m.r2;
    else
      entry["r2"] = nullptr;
    per_well[well] = entry;
  }
  json j{{"rmsd", report.rmsd},
         {"n_points", report.n_points},
         {"per_well", per_well},
         {"verdict", to_string(report.verdict)},
         {"threshold_r2", report.threshold_r2},
         {"training_status", to_string(report.training_report.status)}};
  if (report.r2)
    j["r2"] = *report.r2;
  else
    j["r2"] = nullptr;
  return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace wellflow
