#pragma once

// Self-test suites behind `atnl check`: each runs a fixed-seed invariant
// check and reports the measured value next to its bound.

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

namespace atnl::cli {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckResult> check_grad();
std::vector<CheckResult> check_variance(std::size_t d_k, std::size_t samples);
std::vector<CheckResult> check_pe();
std::vector<CheckResult> check_mask();

/// Runs one suite ("grad", "variance", "pe", "mask") or "all", printing a
/// pass/fail line per check. Returns true when every check passed.
bool run_check_suite(const std::string& suite, std::size_t d_k,
                     std::size_t samples, std::ostream& out);

}  // namespace atnl::cli
