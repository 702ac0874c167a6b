#include <cmath>
#include <vector>

#include "doctest.h"
#include "gac/divergence.hpp"
#include "gac/group.hpp"
#include "gac/rng.hpp"

using namespace gac;

namespace {

// Single-component "mixture": a pure Gaussian shifted by delta has closed
// form divergences against another pure Gaussian of the same scale.
struct GaussPairModels {
  ChannelModel a;
  ChannelModel b;

  GaussPairModels(double delta, double sigma)
      : a(make(delta, sigma)), b(make(0.0, sigma)) {}

  static ChannelModel make(double mean, double sigma) {
    const auto G = FiniteGroup::cyclic_shift(1);
    Signal x(1);
    x << mean;
    return ChannelModel{x, uniform_distribution(G), Projection::identity(1), sigma};
  }
};

ChannelModel two_point_model(double u, double v, double sigma) {
  const auto G = FiniteGroup::cyclic_shift(2);
  Signal x(2);
  x << u, v;
  return ChannelModel{x, uniform_distribution(G), Projection::coordinate(2, {0}), sigma};
}

} // namespace

TEST_SUITE_BEGIN("divergence");

TEST_CASE("probabilists hermite polynomials") {
  const double u = 0.7;
  CHECK(hermite_he(0, u) == 1.0);
  CHECK(hermite_he(1, u) == u);
  CHECK(hermite_he(2, u) == doctest::Approx(u * u - 1.0).epsilon(1e-15));
  CHECK(hermite_he(3, u) == doctest::Approx(u * u * u - 3.0 * u).epsilon(1e-15));
  CHECK(hermite_he(4, u) ==
        doctest::Approx(u * u * u * u - 6.0 * u * u + 3.0).epsilon(1e-14));
  const double u8 = -1.3;
  CHECK(hermite_he(8, u8) ==
        doctest::Approx(std::pow(u8, 8) - 28 * std::pow(u8, 6) + 210 * std::pow(u8, 4) -
                        420 * u8 * u8 + 105)
            .epsilon(1e-12));
  // recurrence orthogonality spot check: E[He_m He_n] = n! delta_mn under
  // the standard normal, via the quadrature rule itself
  const GaussHermiteRule rule = gauss_hermite(20);
  double acc23 = 0, acc33 = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i];
    acc23 += rule.weights[i] * hermite_he(2, x) * hermite_he(3, x);
    acc33 += rule.weights[i] * hermite_he(3, x) * hermite_he(3, x);
  }
  CHECK(acc23 == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(acc33 == doctest::Approx(6.0).epsilon(1e-10));
}

TEST_CASE("gauss hermite nodes and weights at small sizes") {
  const GaussHermiteRule r2 = gauss_hermite(2);
  REQUIRE(r2.nodes.size() == 2);
  CHECK(r2.nodes[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(r2.nodes[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r2.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r2.weights[1] == doctest::Approx(0.5).epsilon(1e-12));

  const GaussHermiteRule r3 = gauss_hermite(3);
  CHECK(r3.nodes[0] == doctest::Approx(-std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r3.nodes[1] == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  CHECK(r3.nodes[2] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r3.weights[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(r3.weights[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // normal moments through order 8 with a 5 point rule
  const GaussHermiteRule r5 = gauss_hermite(5);
  double m[9] = {0};
  for (std::size_t i = 0; i < r5.nodes.size(); ++i)
    for (int p = 0; p <= 8; ++p) m[p] += r5.weights[i] * std::pow(r5.nodes[i], p);
  CHECK(m[0] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m[1] == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(m[2] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m[4] == doctest::Approx(3.0).epsilon(1e-13));
  CHECK(m[6] == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(m[8] == doctest::Approx(105.0).epsilon(1e-12));
  CHECK_THROWS_AS((void)gauss_hermite(0), std::invalid_argument);
}

TEST_CASE("mixture log density hand value") {
  // equal mixture of N(1,1) and N(2,1) at y = 1.5:
  // f = exp(-1/8)/sqrt(2 pi), log f = -1/8 - log(sqrt(2 pi))
  const ChannelModel m = two_point_model(1.0, 2.0, 1.0);
  Eigen::VectorXd y(1);
  y << 1.5;
  CHECK(mixture_logpdf(m, y) == doctest::Approx(-1.0439385332046727).epsilon(1e-14));

  Eigen::VectorXd bad(2);
  bad << 0, 0;
  CHECK_THROWS_AS((void)mixture_logpdf(m, bad), std::invalid_argument);
}

TEST_CASE("two gaussian closed forms via quadrature") {
  // chi2(N(d,s^2) || N(0,s^2)) = exp(d^2/s^2) - 1, KL = d^2 / (2 s^2)
  for (const double sigma : {0.8, 2.0}) {
    const double delta = 0.9;
    const GaussPairModels gp(delta, sigma);
    const double r2 = delta * delta / (sigma * sigma);
    const DivergenceEstimate chi2 =
        chi2_divergence(gp.a, gp.b, DivergenceMethod::quadrature);
    CHECK(chi2.value == doctest::Approx(std::expm1(r2)).epsilon(1e-8));
    CHECK(chi2.flag.empty());
    const DivergenceEstimate kl = kl_divergence(gp.a, gp.b, DivergenceMethod::quadrature);
    CHECK(kl.value == doctest::Approx(0.5 * r2).epsilon(1e-8));
    CHECK(kl.flag.empty());
  }
}

TEST_CASE("identical models give zero divergence") {
  const ChannelModel m = two_point_model(1.0, 2.0, 1.0);
  const DivergenceEstimate chi2 = chi2_divergence(m, m, DivergenceMethod::quadrature);
  CHECK(chi2.value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(chi2.value >= 0.0);
  const DivergenceEstimate kl = kl_divergence(m, m, DivergenceMethod::quadrature);
  CHECK(kl.value == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("monte carlo agrees with quadrature within errors") {
  const ChannelModel a = two_point_model(0.9, 2.1, 1.2);
  const ChannelModel b = two_point_model(1.0, 2.0, 1.2);
  const DivergenceEstimate q = chi2_divergence(a, b, DivergenceMethod::quadrature);
  const DivergenceEstimate mc =
      chi2_divergence(a, b, DivergenceMethod::monte_carlo, 400000, 2025, 1);
  REQUIRE(mc.std_error > 0.0);
  CHECK(std::abs(mc.value - q.value) < 4.0 * mc.std_error);

  const DivergenceEstimate qk = kl_divergence(a, b, DivergenceMethod::quadrature);
  const DivergenceEstimate mk =
      kl_divergence(a, b, DivergenceMethod::monte_carlo, 400000, 2025, 1);
  CHECK(std::abs(mk.value - qk.value) < 4.0 * mk.std_error);
}

TEST_CASE("monte carlo is deterministic per seed and thread-invariant") {
  const ChannelModel a = two_point_model(0.9, 2.1, 1.2);
  const ChannelModel b = two_point_model(1.0, 2.0, 1.2);
  const DivergenceEstimate e1 = chi2_divergence(a, b, DivergenceMethod::monte_carlo, 100000, 7, 1);
  const DivergenceEstimate e2 = chi2_divergence(a, b, DivergenceMethod::monte_carlo, 100000, 7, 4);
  CHECK(e1.value == e2.value);
  CHECK(e1.std_error == e2.std_error);
  const DivergenceEstimate e3 = chi2_divergence(a, b, DivergenceMethod::monte_carlo, 100000, 8, 1);
  CHECK(e1.value != e3.value);
}

TEST_CASE("heavy tailed chi2 monte carlo refuses to report") {
  // at small sigma the ratio f_a/f_b under f_b has enormous kurtosis
  const ChannelModel a = two_point_model(0.0, 3.0, 0.3);
  const ChannelModel b = two_point_model(1.0, 2.0, 0.3);
  const DivergenceEstimate est =
      chi2_divergence(a, b, DivergenceMethod::monte_carlo, 50000, 3, 1);
  CHECK(std::isnan(est.value));
  CHECK(est.flag == "heavy-tails-unreliable-variance");
}

TEST_CASE("quadrature rejects observed dimension above two") {
  const auto G = FiniteGroup::cyclic_shift(3);
  Signal x(3);
  x << 0, 1, 2;
  const ChannelModel m{x, uniform_distribution(G), Projection::identity(3), 1.0};
  CHECK_THROWS_AS((void)chi2_divergence(m, m, DivergenceMethod::quadrature),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)kl_divergence(m, m, DivergenceMethod::quadrature),
                  std::invalid_argument);
}

TEST_CASE("leading order expansion of chi2") {
  // x = (1,2) vs swap-inequivalent (0,3): first distinguishing order is 2,
  // its coefficient |dM|^2/2! = 2
  for (const double sigma : {4.0, 8.0, 16.0}) {
    const ChannelModel a = two_point_model(0.0, 3.0, sigma);
    const ChannelModel b = two_point_model(1.0, 2.0, sigma);
    const LeadingOrderValue lead = chi2_leading_order(a, b);
    CHECK(lead.order == 2);
    CHECK(lead.value == doctest::Approx(2.0 / std::pow(sigma, 4)).epsilon(1e-12));
    const DivergenceEstimate exact = chi2_divergence(a, b, DivergenceMethod::quadrature);
    // ratio to leading order approaches 1
    CHECK(exact.value / lead.value == doctest::Approx(1.0).epsilon(20.0 / sigma));

    const LeadingOrderValue lkl = kl_leading_order(a, b);
    CHECK(lkl.value == doctest::Approx(1.0 / std::pow(sigma, 4)).epsilon(1e-12));
  }
  // identical models: no distinguishing order
  const ChannelModel m = two_point_model(1.0, 2.0, 2.0);
  const LeadingOrderValue none = chi2_leading_order(m, m);
  CHECK(none.order == 0);
  CHECK(none.value == 0.0);
}

TEST_CASE("kl over chi2 approaches one half as noise grows") {
  double prev_gap = 1e9;
  for (const double sigma : {4.0, 8.0, 16.0}) {
    const ChannelModel a = two_point_model(0.0, 3.0, sigma);
    const ChannelModel b = two_point_model(1.0, 2.0, sigma);
    const double chi2 = chi2_divergence(a, b, DivergenceMethod::quadrature).value;
    const double kl = kl_divergence(a, b, DivergenceMethod::quadrature).value;
    const double gap = std::abs(kl / chi2 - 0.5);
    CHECK(gap < prev_gap + 1e-12);
    prev_gap = gap;
  }
  CHECK(prev_gap < 0.01);
}

TEST_CASE("sample tensorization") {
  // (1 + c)^N - 1 without overflow for small c, large N
  CHECK(chi2_n_samples(1e-6, 1000000) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-4));
  CHECK(chi2_n_samples(0.5, 2) == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(chi2_n_samples(0.0, 5) == 0.0);
  CHECK(chi2_n_samples(-1e-9, 5) == 0.0); // tiny negatives from rounding clamp
  CHECK(chi2_n_samples(1e-3, 10000000) > 1e300);
  CHECK_THROWS_AS((void)chi2_n_samples(std::nan(""), 2), std::invalid_argument);
  CHECK_THROWS_AS((void)chi2_n_samples(0.5, 0), std::invalid_argument);
}

TEST_CASE("alpha coefficients pair to moment inner products") {
  // identity E[alpha^d_A(Z) alpha^d_B(Z)] = d! <M^d_A, M^d_B> under Z ~ N(0,I)
  const auto G = FiniteGroup::cyclic_shift(3);
  Signal x(3);
  x << 0, 1, 2;
  Signal xs(3);
  xs << 0, 2, 1;
  const GroupDistribution th = uniform_distribution(G);
  const Projection P = Projection::coordinate(3, {0, 1});
  const AlphaExpansion A(xs, th, P);
  const AlphaExpansion B(x, th, P);
  CHECK(A.observed_dim() == 2);

  const std::uint64_t key = rng::derive_key(314159, 0);
  const int n = 200000;
  for (int d = 1; d <= 3; ++d) {
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const rng::GaussPair z = rng::gauss_pair(key, std::uint64_t(i), 0);
      Eigen::VectorXd y(2);
      y << z.z0, z.z1;
      const double prod = A.coefficient(d, y) * B.coefficient(d, y);
      sum += prod;
      sum2 += prod * prod;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    double fact = 1.0;
    for (int i = 2; i <= d; ++i) fact *= i;
    const double expect = fact * exact_moment_inner(xs, th, x, th, P, d);
    CHECK(std::abs(mean - expect) < 3.5 * se);
  }

  // order zero coefficient is the total prior mass
  Eigen::VectorXd y0(2);
  y0 << 0.3, -0.4;
  CHECK(A.coefficient(0, y0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("alpha handles zero-norm components") {
  // point mass on a signal whose projection is the zero vector:
  // alpha^0 = 1, alpha^j = 0 for j > 0
  const auto G = FiniteGroup::cyclic_shift(2);
  Signal x(2);
  x << 0.0, 5.0;
  const AlphaExpansion A(x, point_mass(G, 0), Projection::coordinate(2, {0}));
  Eigen::VectorXd y(1);
  y << 0.7;
  CHECK(A.coefficient(0, y) == 1.0);
  CHECK(A.coefficient(1, y) == 0.0);
  CHECK(A.coefficient(2, y) == 0.0);
}

TEST_SUITE_END();
