#pragma once

// CRM as an exact special case of multiwell convolution: converts a CrmModel
// into the equivalent UTR matrix (constant-slope responses, producer-producer
// interference identically zero) and verifies that the convolution path and
// the explicit CRM pressure form produce the same trajectories.

#include <map>
#include <string>
#include <vector>

#include "wellflow/convolution.hpp"
#include "wellflow/crm.hpp"

namespace wellflow {

struct EquivalenceReport {
  double max_relative_deviation = 0.0;
  double tolerance = 1e-9;
  bool pass = true;
  // per producer: (time, relative deviation) at every compared sample
  std::map<std::string, std::vector<std::pair<double, double>>> per_well;
};

/// UTR matrix over producers followed by injectors. Producer diagonals carry
/// the jump tau/gamma and slope 1/gamma; producer rows towards injectors the
/// slope f/gamma; everything else (including all injector rows) is inactive.
/// `p0` supplies the initial pressure per producer; injector entries are
/// optional and default to 0 since the CRM form does not model them.
DeconvolutionModel crm_to_mdcv(const CrmModel& m, const std::map<std::string, double>& p0);

/// Runs both paths on the scenario's rates and compares at every pressure
/// sample time of each producer (or at `fallback_times` for producers without
/// samples). Relative deviation uses max(|a|, |b|) as the scale.
EquivalenceReport equivalence_check(const CrmModel& m, const Scenario& s, double tolerance,
                                    const std::vector<double>& fallback_times = {});

}  // namespace wellflow
