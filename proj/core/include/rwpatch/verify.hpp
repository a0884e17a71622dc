#pragma once

// Self-checks behind `gradcheck`: central finite differences against the
// tape's gradients (in double), the warp adjoint identity, and homography
// reprojection against direct point projection.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rwpatch/autodiff.hpp"

namespace rwpatch::verify {

using Tensor64 = BasicTensor<double>;
using Build = std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  std::size_t failed = 0;
  double worst = 0;  // largest error seen (relative for gradients, px for reprojection)
  double tolerance = 0;
  double seconds = 0;
  bool ok() const { return failed == 0 && instances > 0; }
};

struct FdOptions {
  double step = 1e-6;
  double tolerance = 1e-3;
};

struct FdOutcome {
  double rel_error = 0;
  std::size_t coords = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a kink
};

/// Projects the op's output onto fixed random weights to get a scalar, then
/// compares tape gradients for inputs flagged differentiable against central
/// differences. Error is ||analytic - numeric|| / max(||analytic||, ||numeric||).
FdOutcome fd_check(const Build& build, const std::vector<Tensor64>& inputs, const std::vector<bool>& differentiable,
                   std::uint64_t seed, const FdOptions& opts = {});

struct GradcheckOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  FdOptions fd;
  std::size_t poses = 100;
  double reprojection_tol = 1e-6;
  double adjoint_tol = 1e-5;
};

/// Names of the gradient checks, in run order.
std::vector<std::string> gradient_check_names();
CheckResult run_gradient_check(const std::string& name, const GradcheckOptions& opts);

CheckResult check_reprojection(const GradcheckOptions& opts);
CheckResult check_warp_adjoint(const GradcheckOptions& opts);

/// Every gradient check, then reprojection and adjoint.
std::vector<CheckResult> run_all(const GradcheckOptions& opts,
                                 const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace rwpatch::verify
