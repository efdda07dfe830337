#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace nits::verify {

/// Outcome of one acceptance check. `measured` is compared against
/// `threshold` in the direction the check names in `detail`.
struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  double seconds = 0.0;
  std::string detail;
};

struct VerifyOptions {
  /// Full mode adds the trained-model checks (density recovery, joint
  /// normalization) and the complete mixture sweep.
  bool full = false;
  std::size_t threads = 1;
  /// Restrict to these criterion ids; empty means all applicable.
  std::vector<int> only;
};

using Reporter = std::function<void(const CheckResult&)>;

/// Runs the oracle suite, calling `report` after each check.
std::vector<CheckResult> run_checks(const VerifyOptions& options, const Reporter& report = {});

/// "[PASS] 1 name: measured=... threshold=... (1.23 s) detail".
std::string format_line(const CheckResult& r);

}  // namespace nits::verify
