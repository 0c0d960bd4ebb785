#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cdsim_tools {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Fast invariant and oracle suite behind `cdsim check`.
std::vector<CheckResult> evaluate_checks();

/// Prints one line per check and returns true when all pass.
bool run_checks(std::ostream& out);

}  // namespace cdsim_tools
