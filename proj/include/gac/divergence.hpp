#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gac/channel.hpp"
#include "gac/moments.hpp"

// Chi-square and KL divergence between two channel output distributions
// (Gaussian mixtures over the projected orbits), their small-noise leading
// orders in terms of moment distances, and the Hermite expansion
// coefficients of the output density.

namespace gac {

/// Probabilists' Hermite polynomial He_j(u) (monic, orthogonal under the
/// standard normal weight with norm j!). Three-term recurrence.
double hermite_he(int j, double u);

/// Gauss-Hermite rule in expectation form: sum_i w_i f(z_i) approximates
/// E[f(Z)] for standard normal Z, exact for polynomials of degree
/// < 2 * points. Weights sum to 1.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermiteRule gauss_hermite(int points);

/// log density of the channel output at y (Gaussian mixture over the
/// projected orbit). Stable for extreme y via log-sum-exp.
double mixture_logpdf(const ChannelModel& model, const Eigen::VectorXd& y);

enum class DivergenceMethod { quadrature, monte_carlo, leading_order };

struct DivergenceEstimate {
  double value = 0.0;
  double std_error = 0.0; // exactly 0 for quadrature and leading_order
  DivergenceMethod method = DivergenceMethod::quadrature;
  std::int64_t budget = 0; // evaluations (quadrature) or samples (MC)
  std::string flag;        // non-empty when the estimate is unreliable
};

/// chi^2(A | B) = E_B[(f_A/f_B - 1)^2]. Quadrature supports observed
/// dimension K <= 2 (adaptive tensor Gauss-Hermite against a covering
/// Gaussian importance density, doubled until stable); Monte Carlo draws
/// from B with a heavy-tail guard that refuses to report (NaN + flag) when
/// the empirical kurtosis of the integrand says the variance estimate is
/// untrustworthy.
DivergenceEstimate chi2_divergence(const ChannelModel& a, const ChannelModel& b,
                                   DivergenceMethod method, std::int64_t budget = 200000,
                                   std::uint64_t seed = 0, int threads = 1);

/// KL(A | B) = E_A[log(f_A/f_B)]. Same methods as chi2_divergence.
DivergenceEstimate kl_divergence(const ChannelModel& a, const ChannelModel& b,
                                 DivergenceMethod method, std::int64_t budget = 200000,
                                 std::uint64_t seed = 0, int threads = 1);

struct LeadingOrderValue {
  double value = 0.0;
  int order = 0; // first distinguishing moment order d
};

/// Small-noise leading order of chi^2: sigma^{-2d}/d! * |M^d_A - M^d_B|^2,
/// with d the first order where the moment tensors differ (scan up to
/// max_order; order 0 with value 0 when all probed orders match).
LeadingOrderValue chi2_leading_order(const ChannelModel& a, const ChannelModel& b,
                                     int max_order = 6);

/// Small-noise leading order of KL: half the chi^2 one.
LeadingOrderValue kl_leading_order(const ChannelModel& a, const ChannelModel& b,
                                   int max_order = 6);

/// (1 + chi2)^N - 1 for N independent observations, computed as
/// expm1(N * log1p(chi2)) so it is usable far beyond double overflow of the
/// naive product. May return +inf; never NaN for chi2 >= 0.
double chi2_n_samples(double chi2_single, std::int64_t n_samples);

/// Hermite expansion coefficients of the output density: the order-j
/// coefficient functional alpha_j(y) = sum_g theta_g s_g^j He_j(<y, v_g>/s_g)
/// with v_g = P g x and s_g = |v_g| (terms with s_g = 0 contribute 1 at
/// j = 0 and 0 otherwise). Precomputes the projected orbit.
class AlphaExpansion {
public:
  AlphaExpansion(const Signal& x, const GroupDistribution& theta, const Projection& projection);

  double coefficient(int j, const Eigen::VectorXd& y) const;
  int observed_dim() const { return dim_; }

private:
  int dim_ = 0;
  std::vector<Eigen::VectorXd> v_; // projected orbit points
  std::vector<double> s_;          // their norms
  Eigen::VectorXd w_;              // theta weights
};

} // namespace gac
