#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gac/channel.hpp"
#include "gac/group.hpp"

// Estimation of the signal (and optionally the group distribution) from
// channel observations by EM on the marginalized likelihood, plus the scaled
// log-likelihood ratio statistic used to compare candidate models, and the
// closed-form method-of-moments inversion for the two-point coordinate
// deletion example.

namespace gac {

struct MleOptions {
  enum class ThetaMode { known_fixed, estimated };

  int restarts = 8;
  int max_iters = 500;
  double tol = 1e-9; // relative log-likelihood change per iteration
  ThetaMode theta_mode = ThetaMode::known_fixed;
  double init_scale = 1.0; // initial x ~ N(0, (init_scale * data RMS)^2 I)
  std::uint64_t seed = 0;
  std::optional<Signal> init_x; // used by restart 0 when present
  int threads = 1;
};

struct FitResult {
  Signal x_hat;
  GroupDistribution theta_hat;
  double loglik = 0.0; // final marginal log-likelihood (full, unnormalized)
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace; // winning restart, one entry per iteration
  std::string flag;                 // e.g. "singular-mstep"
};

/// Maximize the marginal likelihood of the batch over x (theta known and
/// fixed, or estimated alongside) by EM with deterministic multi-start.
/// Each EM iteration is monotone in the log-likelihood; the returned fit is
/// the restart with the highest final log-likelihood (ties broken by restart
/// index). A rank-deficient M-step normal matrix is flagged and resolved by
/// a pseudo-inverse solve.
FitResult mle_fit(const ObservationBatch& batch, const GroupDistribution& theta_init,
                  const Projection& projection, double sigma, const MleOptions& opts = {});

/// Scaled log-likelihood ratio: sigma^{2 d_bar} / N * sum_j log(f_cand / f_truth)
/// at the observed rows. In the high-noise regime this concentrates near
/// -sigma^{2 d_bar} KL(truth | cand), which is order-1 in the K^n scale.
double loglik_ratio_statistic(const ObservationBatch& batch, const Signal& cand_x,
                              const GroupDistribution& cand_theta, const Signal& truth_x,
                              const GroupDistribution& truth_theta, const Projection& projection,
                              double sigma, int d_bar);

/// Closed-form method of moments for the two-point example (scalar
/// observation of one of two values with equal probability): from debiased
/// first and second moments m1, m2 recover the pair
/// (m1 + sqrt(m2 - m1^2), m1 - sqrt(m2 - m1^2)), larger first.
/// m2 < m1^2 - 1e-12 is an error; small negative discriminants clamp to 0.
std::pair<double, double> mom_two_point(double m1, double m2);

std::string to_text(const FitResult& fit);

} // namespace gac
