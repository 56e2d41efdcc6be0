#pragma once

#include <string>
#include <vector>

#include "mdam/env/instance.hpp"

namespace mdam::env {

struct ValidationResult {
  bool ok = false;
  std::string reason;
  double objective = 0.0;
};

/// Re-checks a complete node sequence against the problem's constraints
/// directly from the raw instance data (coverage, route capacity, length
/// budget, prize threshold) and recomputes its objective. Independent of
/// the construction state machine.
ValidationResult validate(const RoutingInstance& instance, const std::vector<int>& nodes,
                          const std::vector<double>* realized_prizes = nullptr);

}  // namespace mdam::env
