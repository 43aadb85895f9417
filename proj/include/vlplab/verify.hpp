#pragma once

#include <string>
#include <vector>

namespace vlplab {

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// The full property battery behind the `verify` subcommand: gradient checks
// for every loss, Sinkhorn marginal contracts, augmentation determinism, and
// the double-loop loss oracles. corrupt_target, when nonempty, perturbs the
// analytic gradient of the named loss check by 10% so the detector itself can
// be exercised.
std::vector<VerifyCheck> run_verification(const std::string& corrupt_target = "");

}  // namespace vlplab
