#include "gac/estimators.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "gac/digest.hpp"
#include "gac/divergence.hpp"
#include "gac/parallel.hpp"
#include "gac/rng.hpp"

namespace gac {

namespace {

struct RestartOutcome {
  Signal x;
  Eigen::VectorXd theta;
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
  std::string flag;
};

} // namespace

FitResult mle_fit(const ObservationBatch& batch, const GroupDistribution& theta_init,
                  const Projection& projection, double sigma, const MleOptions& opts) {
  theta_init.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("mle_fit: sigma must be positive");
  if (batch.n_samples() < 1) throw std::invalid_argument("mle_fit: empty batch");
  if (batch.observed_dim() != projection.observed_dim())
    throw std::invalid_argument("mle_fit: batch dimension differs from projection output");
  if (opts.restarts < 1) throw std::invalid_argument("mle_fit: restarts must be >= 1");
  if (opts.max_iters < 1) throw std::invalid_argument("mle_fit: max_iters must be >= 1");

  const FiniteGroup& G = *theta_init.group;
  const int L = G.dimension();
  const int K = projection.observed_dim();
  const int m = G.order();
  const std::int64_t N = batch.n_samples();
  const Eigen::MatrixXd& Y = batch.observations;
  const bool estimate_theta = opts.theta_mode == MleOptions::ThetaMode::estimated;

  if (opts.init_x && opts.init_x->size() != L)
    throw std::invalid_argument("mle_fit: init_x dimension mismatch");

  // Per-element projected actions and their Grams; the M-step normal matrix
  // is sum_g Rsum_g * Gram_g.
  std::vector<Eigen::MatrixXd> Pg, gram;
  Pg.resize(std::size_t(m));
  gram.resize(std::size_t(m));
  for (int g = 0; g < m; ++g) {
    Pg[std::size_t(g)] = projection.matrix * G.element(g).matrix;
    gram[std::size_t(g)] = Pg[std::size_t(g)].transpose() * Pg[std::size_t(g)];
  }

  const Eigen::VectorXd row_sq = Y.rowwise().squaredNorm();
  const double data_rms = std::sqrt(row_sq.mean() / double(K));
  const double init_sd = opts.init_scale * (data_rms > 0.0 ? data_rms : 1.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double norm_const = -0.5 * double(K) * std::log(2.0 * std::numbers::pi * sigma * sigma);

  auto run_restart = [&](std::int64_t r, RestartOutcome& out) {
    rng::SampleStream st(rng::derive_key(opts.seed, 0x6d6c6500ull + std::uint64_t(r)), 0);
    Signal x(L);
    if (r == 0 && opts.init_x) {
      x = *opts.init_x;
    } else {
      for (int i = 0; i < L; ++i) x[i] = init_sd * st.next_gauss();
    }
    Eigen::VectorXd theta = estimate_theta
                                ? Eigen::VectorXd::Constant(m, 1.0 / double(m)).eval()
                                : theta_init.weights;

    Eigen::MatrixXd resp(N, m);
    Eigen::VectorXd logw(m);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iters; ++it) {
      // E step. l_{jg} = log theta_g - |y_j - P g x|^2 / (2 sigma^2), with
      // the row-constant |y_j|^2 term folded into the log-likelihood only.
      for (int g = 0; g < m; ++g)
        logw[g] = theta[g] > 0.0 ? std::log(theta[g]) : -1e300;
      Eigen::MatrixXd mu(m, K);
      Eigen::VectorXd mu_sq(m);
      for (int g = 0; g < m; ++g) {
        mu.row(g) = (Pg[std::size_t(g)] * x).transpose();
        mu_sq[g] = mu.row(g).squaredNorm();
      }
      resp.noalias() = Y * mu.transpose(); // N x m of <y_j, mu_g>
      for (int g = 0; g < m; ++g)
        resp.col(g) = (2.0 * resp.col(g).array() - mu_sq[g]) * inv2s2 + logw[g];

      double ll = 0.0;
      for (std::int64_t j = 0; j < N; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        for (int g = 0; g < m; ++g) best = std::max(best, resp(j, g));
        double s = 0.0;
        for (int g = 0; g < m; ++g) {
          const double e = std::exp(resp(j, g) - best);
          resp(j, g) = e;
          s += e;
        }
        resp.row(j) /= s;
        ll += best + std::log(s);
      }
      ll += double(N) * norm_const - row_sq.sum() * inv2s2;
      out.trace.push_back(ll);

      if (std::abs(ll - prev_ll) <= opts.tol * (1.0 + std::abs(ll))) {
        out.converged = true;
        out.iterations = it + 1;
        prev_ll = ll;
        break;
      }
      prev_ll = ll;
      out.iterations = it + 1;

      // M step.
      const Eigen::VectorXd rsum = resp.colwise().sum();
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(L, L);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(L);
      for (int g = 0; g < m; ++g) {
        A.noalias() += rsum[g] * gram[std::size_t(g)];
        b.noalias() += Pg[std::size_t(g)].transpose() * (Y.transpose() * resp.col(g));
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
      const Eigen::VectorXd D = ldlt.vectorD();
      const double dmax = D.cwiseAbs().maxCoeff();
      if (ldlt.info() != Eigen::Success || D.minCoeff() <= 1e-12 * std::max(dmax, 1e-300)) {
        // Rank-deficient normal matrix: the projected actions do not pin x.
        out.flag = "singular-mstep";
        x = A.completeOrthogonalDecomposition().solve(b);
        out.converged = false;
        break;
      }
      x = ldlt.solve(b);
      if (estimate_theta) {
        Eigen::VectorXd t = rsum / double(N);
        t = t.cwiseMax(0.0);
        theta = t / t.sum();
      }
    }
    out.x = x;
    out.theta = theta;
    out.loglik = prev_ll;
  };

  std::vector<RestartOutcome> slots(std::size_t(opts.restarts));
  parallel_for_index(opts.restarts, std::max(1, opts.threads),
                     [&](std::int64_t r) { run_restart(r, slots[std::size_t(r)]); });

  std::size_t win = 0;
  for (std::size_t r = 1; r < slots.size(); ++r)
    if (slots[r].loglik > slots[win].loglik) win = r; // strict: ties keep lowest index
  const RestartOutcome& w = slots[win];

  FitResult fit;
  fit.x_hat = w.x;
  fit.theta_hat = make_distribution(theta_init.group, w.theta);
  fit.loglik = w.loglik;
  fit.iterations = w.iterations;
  fit.converged = w.converged;
  fit.loglik_trace = w.trace;
  fit.flag = w.flag;
  return fit;
}

double loglik_ratio_statistic(const ObservationBatch& batch, const Signal& cand_x,
                              const GroupDistribution& cand_theta, const Signal& truth_x,
                              const GroupDistribution& truth_theta, const Projection& projection,
                              double sigma, int d_bar) {
  if (d_bar < 1) throw std::invalid_argument("loglik_ratio_statistic: d_bar must be >= 1");
  if (batch.n_samples() < 1) throw std::invalid_argument("loglik_ratio_statistic: empty batch");
  ChannelModel cand{cand_x, cand_theta, projection, sigma};
  ChannelModel truth{truth_x, truth_theta, projection, sigma};
  cand.validate();
  truth.validate();
  double s = 0.0;
  for (std::int64_t j = 0; j < batch.n_samples(); ++j) {
    const Eigen::VectorXd y = batch.observations.row(j).transpose();
    s += mixture_logpdf(cand, y) - mixture_logpdf(truth, y);
  }
  return std::pow(sigma, 2.0 * d_bar) / double(batch.n_samples()) * s;
}

std::pair<double, double> mom_two_point(double m1, double m2) {
  double disc = m2 - m1 * m1;
  if (disc < -1e-12)
    throw std::invalid_argument("mom_two_point: second moment below first moment squared");
  if (disc < 0.0) disc = 0.0;
  const double s = std::sqrt(disc);
  return {m1 + s, m1 - s};
}

std::string to_text(const FitResult& fit) {
  std::ostringstream os;
  os << "mle fit\n";
  os << "x_hat:";
  for (int i = 0; i < fit.x_hat.size(); ++i) os << " " << fmt_g17(fit.x_hat[i]);
  os << "\n";
  os << "theta_hat:";
  for (int i = 0; i < fit.theta_hat.weights.size(); ++i)
    os << " " << fmt_g17(fit.theta_hat.weights[i]);
  os << "\n";
  os << "loglik: " << fmt_g17(fit.loglik) << "\n";
  os << "iterations: " << fit.iterations << "\n";
  os << "converged: " << (fit.converged ? "yes" : "no") << "\n";
  if (!fit.flag.empty()) os << "flag: " << fit.flag << "\n";
  return os.str();
}

} // namespace gac
