#pragma once

#include <Eigen/Dense>
#include <functional>

// Derivative-free local minimization (Nelder-Mead). Used for the moment
// matching searches, which have a non-smooth penalty term; deterministic
// given the starting point.

namespace gac {

struct NelderMeadOptions {
  int max_iters = 4000;
  double f_tol = 1e-14;     // absolute spread of simplex values
  double x_tol = 1e-12;     // simplex diameter
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double fval = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimize f from x0 with an initial simplex of edge `step`.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double step,
                             const NelderMeadOptions& opts = {});

} // namespace gac
