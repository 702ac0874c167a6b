#include "gac/divergence.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "gac/parallel.hpp"
#include "gac/rng.hpp"

namespace gac {

double hermite_he(int j, double u) {
  if (j < 0) throw std::invalid_argument("hermite_he: negative order");
  if (j == 0) return 1.0;
  double prev = 1.0, cur = u;
  for (int k = 1; k < j; ++k) {
    const double next = u * cur - double(k) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

GaussHermiteRule gauss_hermite(int points) {
  if (points < 1) throw std::invalid_argument("gauss_hermite: need at least one point");
  static std::mutex cache_mutex;
  static std::map<int, GaussHermiteRule> cache;
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = cache.find(points);
    if (it != cache.end()) return it->second;
  }

  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite recurrence:
  // diagonal 0, off-diagonal sqrt(k). Only the eigenvalues are needed; the
  // weight at node x is 1 / sum_k p_k(x)^2 over the orthonormal polynomials.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(points);
  Eigen::VectorXd sub = Eigen::VectorXd::Zero(std::max(points - 1, 0));
  for (int k = 1; k < points; ++k) sub[k - 1] = std::sqrt(double(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("gauss_hermite: eigen decomposition failed");

  GaussHermiteRule rule;
  rule.nodes.resize(std::size_t(points));
  rule.weights.resize(std::size_t(points));
  for (int i = 0; i < points; ++i) {
    const double x = es.eigenvalues()[i];
    rule.nodes[std::size_t(i)] = x;
    double prev = 0.0, cur = 1.0, sum = 1.0;
    for (int k = 0; k + 1 < points; ++k) {
      const double next = (x * cur - std::sqrt(double(k)) * prev) / std::sqrt(double(k + 1));
      prev = cur;
      cur = next;
      sum += cur * cur;
      // Far tail nodes: the kernel exceeds double range, the weight is zero.
      if (sum > 1e290) {
        sum = std::numeric_limits<double>::infinity();
        break;
      }
    }
    rule.weights[std::size_t(i)] = 1.0 / sum;
  }

  std::lock_guard<std::mutex> lock(cache_mutex);
  return cache.emplace(points, std::move(rule)).first->second;
}

namespace {

// Precomputed mixture density for hot loops.
struct MixturePdf {
  std::vector<Eigen::VectorXd> means; // components with positive weight only
  std::vector<double> logw;
  double sigma = 1.0;
  int dim = 0;

  explicit MixturePdf(const ChannelModel& m) {
    m.validate();
    sigma = m.sigma;
    dim = m.observed_dim();
    const auto orb = orbit(m.x, *m.theta.group);
    const int n = m.theta.group->order();
    for (int g = 0; g < n; ++g) {
      const double w = m.theta.weights[g];
      if (w <= 0.0) continue;
      means.push_back(m.projection.matrix * orb[std::size_t(g)]);
      logw.push_back(std::log(w));
    }
    norm_const = -0.5 * double(dim) * std::log(2.0 * std::numbers::pi * sigma * sigma);
  }

  double logpdf(const Eigen::VectorXd& y) const {
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double best = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> terms;
    terms.resize(means.size());
    for (std::size_t g = 0; g < means.size(); ++g) {
      const double t = logw[g] - (y - means[g]).squaredNorm() * inv2s2;
      terms[g] = t;
      if (t > best) best = t;
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s) + norm_const;
  }

  double norm_const = 0.0;
};

constexpr double kQuadRelTol = 1e-9;
constexpr double kQuadPlateauTol = 1e-5;
constexpr int kQuadStartPoints = 40;
constexpr int kQuadMaxPoints1d = 2560;
constexpr int kQuadMaxPoints2d = 1280;
constexpr double kKurtosisCap = 500.0;

struct ImportanceGaussian {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  double logpdf(const Eigen::VectorXd& y) const {
    double s = 0.0;
    for (int d = 0; d < y.size(); ++d) {
      const double z = (y[d] - center[d]) / scale[d];
      s += -0.5 * z * z - std::log(scale[d]);
    }
    return s - 0.5 * double(y.size()) * std::log(2.0 * std::numbers::pi);
  }
};

// Diagonal Gaussian covering the given points with margin in noise units.
ImportanceGaussian covering_gaussian(const std::vector<Eigen::VectorXd>& pts, int dim,
                                     double sigma) {
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
  for (const auto& p : pts)
    for (int d = 0; d < dim; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  ImportanceGaussian g;
  g.center = 0.5 * (lo + hi);
  g.scale = Eigen::VectorXd(dim);
  for (int d = 0; d < dim; ++d) g.scale[d] = 0.5 * (hi[d] - lo[d]) + 4.0 * sigma;
  return g;
}

// Adaptive tensor Gauss-Hermite integral of `integrand` (a function of y and
// the importance log-density at y) against the covering Gaussian.
template <typename F>
DivergenceEstimate quadrature_integral(const ImportanceGaussian& imp, int dim, F&& integrand) {
  DivergenceEstimate est;
  est.method = DivergenceMethod::quadrature;
  const int cap = dim == 1 ? kQuadMaxPoints1d : kQuadMaxPoints2d;
  double prev = std::numeric_limits<double>::quiet_NaN();
  double prev_diff = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  for (int pts = kQuadStartPoints; pts <= cap; pts *= 2) {
    const GaussHermiteRule rule = gauss_hermite(pts);
    double total = 0.0;
    Eigen::VectorXd y(dim);
    if (dim == 1) {
      for (int i = 0; i < pts; ++i) {
        y[0] = imp.center[0] + imp.scale[0] * rule.nodes[std::size_t(i)];
        total += rule.weights[std::size_t(i)] * integrand(y, imp.logpdf(y));
      }
      est.budget += pts;
    } else {
      for (int i = 0; i < pts; ++i) {
        y[0] = imp.center[0] + imp.scale[0] * rule.nodes[std::size_t(i)];
        double row = 0.0;
        for (int j = 0; j < pts; ++j) {
          y[1] = imp.center[1] + imp.scale[1] * rule.nodes[std::size_t(j)];
          row += rule.weights[std::size_t(j)] * integrand(y, imp.logpdf(y));
        }
        total += rule.weights[std::size_t(i)] * row;
      }
      est.budget += std::int64_t(pts) * pts;
    }
    if (!std::isnan(prev)) {
      const double diff = std::abs(total - prev);
      const double scale = std::abs(total) + 1e-300;
      // Spectral convergence: differences shrink fast until they hit the
      // roundoff plateau. Accept on the tight relative test, or once the
      // differences stop shrinking while already far below a loose bar.
      const bool tight = diff <= kQuadRelTol * scale;
      const bool plateau = !std::isnan(prev_diff) && diff > 0.25 * prev_diff &&
                           diff <= kQuadPlateauTol * scale;
      if (tight || plateau) {
        est.value = total;
        converged = true;
        break;
      }
      prev_diff = diff;
    }
    prev = total;
    est.value = total;
  }
  if (!converged) est.flag = "quadrature-not-converged";
  est.std_error = 0.0;
  return est;
}

} // namespace

double mixture_logpdf(const ChannelModel& model, const Eigen::VectorXd& y) {
  if (y.size() != model.observed_dim())
    throw std::invalid_argument("mixture_logpdf: dimension mismatch");
  const MixturePdf pdf(model);
  if (pdf.means.empty()) throw std::invalid_argument("mixture_logpdf: all weights zero");
  return pdf.logpdf(y);
}

namespace {

// Sampler over the full (possibly zero-weight) component list; keeps the
// same group-index draw convention as simulate().
struct MixtureSampler {
  std::vector<Eigen::VectorXd> means; // one per group element
  std::vector<double> cum;
  double sigma = 1.0;
  int dim = 0;

  explicit MixtureSampler(const ChannelModel& m) {
    sigma = m.sigma;
    dim = m.observed_dim();
    const auto orb = orbit(m.x, *m.theta.group);
    double acc = 0.0;
    for (int g = 0; g < m.theta.group->order(); ++g) {
      acc += m.theta.weights[g];
      cum.push_back(acc);
      means.push_back(m.projection.matrix * orb[std::size_t(g)]);
    }
    cum.back() = 1.0;
  }

  Eigen::VectorXd draw(std::uint64_t key, std::int64_t j) const {
    const double u = rng::uniform(key, std::uint64_t(j), 0, 0);
    std::size_t g = 0;
    while (u >= cum[g] && g + 1 < cum.size()) ++g;
    Eigen::VectorXd y = means[g];
    for (int k = 0; k < dim; k += 2) {
      const rng::GaussPair z = rng::gauss_pair(key, std::uint64_t(j), std::uint32_t(1 + k / 2));
      y[k] += sigma * z.z0;
      if (k + 1 < dim) y[k + 1] += sigma * z.z1;
    }
    return y;
  }
};

DivergenceEstimate chi2_monte_carlo(const MixturePdf& fa, const MixturePdf& fb,
                                    const MixtureSampler& sampler, std::int64_t budget,
                                    std::uint64_t seed, int threads) {
  DivergenceEstimate est;
  est.method = DivergenceMethod::monte_carlo;
  est.budget = budget;
  const std::uint64_t key = rng::derive_key(seed, 0x63686932ull);
  auto sample_value = [&](std::int64_t i) {
    const Eigen::VectorXd y = sampler.draw(key, i);
    const double r = std::expm1(fa.logpdf(y) - fb.logpdf(y));
    return r * r;
  };
  const MeanVar mv = chunked_mean_var(budget, threads, sample_value);
  est.value = mv.mean;
  est.std_error = std::sqrt(mv.var / double(budget));

  // Fourth-moment pass for the heavy-tail guard; counter-based draws make
  // the second pass see exactly the same samples.
  const std::int64_t nchunks = (budget + kReductionChunk - 1) / kReductionChunk;
  std::vector<double> partial(std::size_t(nchunks), 0.0);
  parallel_for_index(nchunks, threads, [&](std::int64_t c) {
    const std::int64_t lo = c * kReductionChunk;
    const std::int64_t hi = std::min(budget, lo + kReductionChunk);
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) {
      const double d = sample_value(i) - mv.mean;
      const double d2 = d * d;
      s += d2 * d2;
    }
    partial[std::size_t(c)] = s;
  });
  double m4 = 0.0;
  for (double p : partial) m4 += p;
  m4 /= double(budget);
  const double var = std::max(mv.var, 1e-300);
  const double excess_kurtosis = m4 / (var * var) - 3.0;
  if (excess_kurtosis > kKurtosisCap) {
    est.flag = "heavy-tails-unreliable-variance";
    est.value = std::numeric_limits<double>::quiet_NaN();
    est.std_error = std::numeric_limits<double>::quiet_NaN();
  }
  return est;
}

DivergenceEstimate kl_monte_carlo(const MixturePdf& fa, const MixturePdf& fb,
                                  const MixtureSampler& sampler_a, std::int64_t budget,
                                  std::uint64_t seed, int threads) {
  DivergenceEstimate est;
  est.method = DivergenceMethod::monte_carlo;
  est.budget = budget;
  const std::uint64_t key = rng::derive_key(seed, 0x6b6c4d43ull);
  const MeanVar mv = chunked_mean_var(budget, threads, [&](std::int64_t i) {
    const Eigen::VectorXd y = sampler_a.draw(key, i);
    return fa.logpdf(y) - fb.logpdf(y);
  });
  est.value = mv.mean;
  est.std_error = std::sqrt(mv.var / double(budget));
  return est;
}

void check_pair(const ChannelModel& a, const ChannelModel& b) {
  a.validate();
  b.validate();
  if (a.observed_dim() != b.observed_dim())
    throw std::invalid_argument("divergence: observed dimensions differ");
}

} // namespace

DivergenceEstimate chi2_divergence(const ChannelModel& a, const ChannelModel& b,
                                   DivergenceMethod method, std::int64_t budget,
                                   std::uint64_t seed, int threads) {
  check_pair(a, b);
  const int K = a.observed_dim();
  const MixturePdf fa(a), fb(b);
  if (fa.means.empty() || fb.means.empty())
    throw std::invalid_argument("chi2_divergence: degenerate mixture (all weights zero)");

  switch (method) {
    case DivergenceMethod::leading_order: {
      const LeadingOrderValue lo = chi2_leading_order(a, b);
      DivergenceEstimate est;
      est.method = DivergenceMethod::leading_order;
      est.value = lo.value;
      return est;
    }
    case DivergenceMethod::monte_carlo: {
      if (budget < 2) throw std::invalid_argument("chi2_divergence: budget too small");
      return chi2_monte_carlo(fa, fb, MixtureSampler(b), budget, seed,
                              resolve_threads(threads));
    }
    case DivergenceMethod::quadrature: {
      if (K > 2)
        throw std::invalid_argument(
            "chi2_divergence: quadrature supports observed dimension <= 2");
      std::vector<Eigen::VectorXd> pts = fa.means;
      pts.insert(pts.end(), fb.means.begin(), fb.means.end());
      // The integrand fA^2/fB peaks near reflections 2a - b as sigma shrinks.
      for (const auto& ma : fa.means)
        for (const auto& mb : fb.means) pts.push_back(2.0 * ma - mb);
      const ImportanceGaussian imp = covering_gaussian(pts, K, std::max(a.sigma, b.sigma));
      DivergenceEstimate est = quadrature_integral(imp, K, [&](const Eigen::VectorXd& y,
                                                               double logg) {
        const double la = fa.logpdf(y);
        const double lb = fb.logpdf(y);
        const double r = std::expm1(la - lb);
        return std::exp(lb - logg) * r * r;
      });
      if (est.value < 0.0) est.value = 0.0;
      return est;
    }
  }
  throw std::logic_error("chi2_divergence: unknown method");
}

DivergenceEstimate kl_divergence(const ChannelModel& a, const ChannelModel& b,
                                 DivergenceMethod method, std::int64_t budget,
                                 std::uint64_t seed, int threads) {
  check_pair(a, b);
  const int K = a.observed_dim();
  const MixturePdf fa(a), fb(b);
  if (fa.means.empty() || fb.means.empty())
    throw std::invalid_argument("kl_divergence: degenerate mixture (all weights zero)");

  switch (method) {
    case DivergenceMethod::leading_order: {
      const LeadingOrderValue lo = kl_leading_order(a, b);
      DivergenceEstimate est;
      est.method = DivergenceMethod::leading_order;
      est.value = lo.value;
      return est;
    }
    case DivergenceMethod::monte_carlo: {
      if (budget < 2) throw std::invalid_argument("kl_divergence: budget too small");
      return kl_monte_carlo(fa, fb, MixtureSampler(a), budget, seed,
                            resolve_threads(threads));
    }
    case DivergenceMethod::quadrature: {
      if (K > 2)
        throw std::invalid_argument("kl_divergence: quadrature supports observed dimension <= 2");
      std::vector<Eigen::VectorXd> pts = fa.means;
      pts.insert(pts.end(), fb.means.begin(), fb.means.end());
      const ImportanceGaussian imp = covering_gaussian(pts, K, std::max(a.sigma, b.sigma));
      return quadrature_integral(imp, K,
                                 [&](const Eigen::VectorXd& y, double logg) {
                                   const double la = fa.logpdf(y);
                                   const double lb = fb.logpdf(y);
                                   return std::exp(la - logg) * (la - lb);
                                 });
    }
  }
  throw std::logic_error("kl_divergence: unknown method");
}

LeadingOrderValue chi2_leading_order(const ChannelModel& a, const ChannelModel& b,
                                     int max_order) {
  check_pair(a, b);
  if (max_order < 1) throw std::invalid_argument("chi2_leading_order: max_order must be >= 1");
  LeadingOrderValue out;
  for (int n = 1; n <= max_order; ++n) {
    const MomentTensor Ma = exact_moment(a.x, a.theta, a.projection, n);
    const MomentTensor Mb = exact_moment(b.x, b.theta, b.projection, n);
    const double raw = tensor_sq_dist(Ma, Mb);
    double scale = 0.0;
    for (std::size_t f = 0; f < Ma.size(); ++f)
      scale += Ma[f] * Ma[f] + Mb[f] * Mb[f];
    if (raw > 1e-12 * (1.0 + scale)) {
      double fact = 1.0;
      for (int i = 2; i <= n; ++i) fact *= double(i);
      out.order = n;
      out.value = raw / (fact * std::pow(b.sigma, 2.0 * n));
      return out;
    }
  }
  return out; // order 0, value 0: indistinguishable through probed orders
}

LeadingOrderValue kl_leading_order(const ChannelModel& a, const ChannelModel& b,
                                   int max_order) {
  LeadingOrderValue out = chi2_leading_order(a, b, max_order);
  out.value *= 0.5;
  return out;
}

double chi2_n_samples(double chi2_single, std::int64_t n_samples) {
  if (n_samples < 1) throw std::invalid_argument("chi2_n_samples: need at least one sample");
  if (!(chi2_single >= 0.0)) {
    if (std::isnan(chi2_single))
      throw std::invalid_argument("chi2_n_samples: NaN single-sample value");
    chi2_single = 0.0;
  }
  return std::expm1(double(n_samples) * std::log1p(chi2_single));
}

AlphaExpansion::AlphaExpansion(const Signal& x, const GroupDistribution& theta,
                               const Projection& projection) {
  theta.validate();
  if (x.size() != theta.group->dimension())
    throw std::invalid_argument("alpha: signal dimension differs from group dimension");
  if (projection.signal_dim() != x.size())
    throw std::invalid_argument("alpha: projection dimension mismatch");
  dim_ = projection.observed_dim();
  const auto orb = orbit(x, *theta.group);
  w_ = theta.weights;
  for (const auto& p : orb) {
    Eigen::VectorXd v = projection.matrix * p;
    s_.push_back(v.norm());
    v_.push_back(std::move(v));
  }
}

double AlphaExpansion::coefficient(int j, const Eigen::VectorXd& y) const {
  if (j < 0) throw std::invalid_argument("alpha: negative order");
  if (y.size() != dim_) throw std::invalid_argument("alpha: dimension mismatch");
  double s = 0.0;
  for (std::size_t g = 0; g < v_.size(); ++g) {
    const double w = w_[int(g)];
    if (w == 0.0) continue;
    if (s_[g] <= 0.0) {
      if (j == 0) s += w;
      continue;
    }
    const double u = y.dot(v_[g]) / s_[g];
    s += w * std::pow(s_[g], double(j)) * hermite_he(j, u);
  }
  return s;
}

} // namespace gac
