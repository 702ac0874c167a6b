#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "gac/bounds.hpp"
#include "gac/moments.hpp"

using namespace gac;

namespace {

struct ShiftThree {
  std::shared_ptr<const FiniteGroup> G = FiniteGroup::cyclic_shift(3);
  GroupDistribution theta = uniform_distribution(G);
  Signal x = make_x();
  Signal x_swap = make_swap();
  Projection P = Projection::coordinate(3, {0, 1});

  static Signal make_x() {
    Signal s(3);
    s << 0, 1, 2;
    return s;
  }
  static Signal make_swap() {
    Signal s(3);
    s << 0, 2, 1;
    return s;
  }
};

struct ShiftTwo {
  std::shared_ptr<const FiniteGroup> G = FiniteGroup::cyclic_shift(2);
  GroupDistribution theta = uniform_distribution(G);
  Signal x = make(1, 2);
  Projection P = Projection::coordinate(2, {0});

  static Signal make(double a, double b) {
    Signal s(2);
    s << a, b;
    return s;
  }
};

} // namespace

TEST_SUITE_BEGIN("bounds");

TEST_CASE("aligned mse decomposes into bias and covariance") {
  const ShiftThree f;
  Signal e1(3), e2(3);
  e1 << 0.1, 1.0, 2.0;
  e2 << 2.0, 0.0, 1.3; // aligns to (0, 1.3, 2) after undoing the shift
  const MseReport rep = mse_against_orbit({e1, e2}, f.x, *f.G);
  CHECK(rep.count == 2);
  CHECK(rep.mse == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(rep.bias_sq == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(rep.cov_trace == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(rep.mse == doctest::Approx(rep.bias_sq + rep.cov_trace).epsilon(1e-12));

  const MseReport single = mse_against_orbit({e1}, f.x, *f.G);
  CHECK(single.cov_trace == 0.0);
  CHECK(single.mse == doctest::Approx(single.bias_sq).epsilon(1e-12));
  CHECK(single.mse == doctest::Approx(0.01).epsilon(1e-12));

  CHECK_THROWS_AS((void)mse_against_orbit({}, f.x, *f.G), std::invalid_argument);
}

TEST_CASE("mse is orbit invariant") {
  const ShiftThree f;
  // an estimate equal to a nontrivial orbit point of x has zero error
  const auto orb = orbit(f.x, *f.G);
  for (const Signal& o : orb) {
    const MseReport rep = mse_against_orbit({o}, f.x, *f.G);
    CHECK(rep.mse == doctest::Approx(0.0).epsilon(1e-18));
  }
}

TEST_CASE("leading order bound closed form") {
  const ShiftThree f;
  const double sigma = 2.0;
  const std::int64_t N = 438;
  const BoundReport rep = chapman_robbins_orbit(f.x_swap, f.theta, f.x, f.theta, f.P, sigma, N);
  CHECK(rep.form == BoundForm::leading_order);
  CHECK(rep.d == 3);
  CHECK(rep.k_d == doctest::Approx(4.0 / 9.0).epsilon(1e-12));
  const double lambda = double(N) / std::pow(sigma, 6);
  CHECK(rep.lambda == doctest::Approx(lambda).epsilon(1e-15));
  // aligned distance of the swapped signal to the truth
  const double numerator = 2.0;
  const double expect = numerator / std::expm1(lambda * rep.k_d);
  CHECK(rep.mse_lower == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rep.chi2_n == doctest::Approx(std::expm1(lambda * rep.k_d)).epsilon(1e-12));
  CHECK(rep.flag.empty());
}

TEST_CASE("exact chi-square bound tensorizes the single sample value") {
  const ShiftTwo f;
  const Signal w = ShiftTwo::make(0, 3);
  const double sigma = 2.0;
  const std::int64_t N = 40;
  const BoundReport exact =
      chapman_robbins_orbit(w, f.theta, f.x, f.theta, f.P, sigma, N, DivergenceMethod::quadrature);
  CHECK(exact.form == BoundForm::exact_chi2);
  CHECK(exact.d == 2);
  CHECK(exact.k_d == doctest::Approx(2.0).epsilon(1e-12));

  ChannelModel wa{w, f.theta, f.P, sigma};
  ChannelModel tb{f.x, f.theta, f.P, sigma};
  const double c1 = chi2_divergence(wa, tb, DivergenceMethod::quadrature).value;
  const double chiN = std::expm1(double(N) * std::log1p(c1));
  CHECK(exact.chi2_n == doctest::Approx(chiN).epsilon(1e-12));
  CHECK(exact.mse_lower == doctest::Approx(2.0 / chiN).epsilon(1e-10));

  // the two forms share numerator and distinguishing order and stay within
  // a factor of a few of each other at moderate noise
  const BoundReport lead =
      chapman_robbins_orbit(w, f.theta, f.x, f.theta, f.P, sigma, N, DivergenceMethod::leading_order);
  CHECK(lead.d == exact.d);
  CHECK(exact.mse_lower > 0.0);
  CHECK(exact.mse_lower / lead.mse_lower > 0.2);
  CHECK(exact.mse_lower / lead.mse_lower < 5.0);
}

TEST_CASE("equivalent witness is rejected") {
  const ShiftTwo f;
  CHECK_THROWS_AS((void)chapman_robbins_orbit(f.x, f.theta, f.x, f.theta, f.P, 1.0, 10),
                  std::invalid_argument);
  // an orbit point of the truth is equivalent as well
  const Signal flipped = ShiftTwo::make(2, 1);
  CHECK_THROWS_AS((void)chapman_robbins_orbit(flipped, f.theta, f.x, f.theta, f.P, 1.0, 10),
                  std::invalid_argument);
}

TEST_CASE("witness with identical projected moments but nonzero distance") {
  // projecting onto one coordinate of a shift orbit yields the same mixture
  // for x and its in-place transposition, so no moment order distinguishes
  const ShiftThree f;
  const Projection P1 = Projection::coordinate(3, {0});
  const BoundReport rep = chapman_robbins_orbit(f.x_swap, f.theta, f.x, f.theta, P1, 1.0, 100);
  CHECK(rep.flag == "no-information");
  CHECK(std::isinf(rep.mse_lower));
  CHECK(rep.d == 0);
}

TEST_CASE("bound underflows to zero when the exponent explodes") {
  const ShiftThree f;
  const BoundReport rep =
      chapman_robbins_orbit(f.x_swap, f.theta, f.x, f.theta, f.P, 0.5, 1000000);
  CHECK(rep.flag == "underflow");
  CHECK(rep.mse_lower == 0.0);
}

TEST_CASE("invalid bound arguments throw") {
  const ShiftTwo f;
  const Signal w = ShiftTwo::make(0, 3);
  CHECK_THROWS_AS((void)chapman_robbins_orbit(w, f.theta, f.x, f.theta, f.P, 0.0, 10),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)chapman_robbins_orbit(w, f.theta, f.x, f.theta, f.P, 1.0, 0),
                  std::invalid_argument);
}

TEST_CASE("limit bound closed form") {
  const ShiftTwo f;
  const Signal xt = ShiftTwo::make(2, 1); // sum preserved, so order one is silent
  const double sigma = 2.0;
  const std::int64_t N = 80;
  const BoundReport rep = cr_limit_bound(f.x, f.theta, xt, f.theta, f.P, sigma, N);
  CHECK(rep.form == BoundForm::cr_limit);
  CHECK(rep.d == 2);
  CHECK(rep.k_d == doctest::Approx(0.5).epsilon(1e-10)); // (a-b)^2 / 2
  const double lambda = double(N) / std::pow(sigma, 4);
  CHECK(rep.lambda == doctest::Approx(lambda).epsilon(1e-15));
  CHECK(rep.mse_lower == doctest::Approx(2.0 / (lambda * 0.5)).epsilon(1e-10));
}

TEST_CASE("limit bound first order path") {
  const ShiftTwo f;
  const Signal xt = ShiftTwo::make(1.5, 2.5); // sum changes, order one responds
  const BoundReport rep = cr_limit_bound(f.x, f.theta, xt, f.theta, f.P, 1.0, 10);
  CHECK(rep.d == 1);
  CHECK(rep.k_d == doctest::Approx(0.25).epsilon(1e-10)); // (mean shift)^2
  CHECK(rep.mse_lower == doctest::Approx(0.5 / (10.0 * 0.25)).epsilon(1e-10));
}

TEST_CASE("limit bound rejects the zero direction") {
  const ShiftTwo f;
  CHECK_THROWS_AS((void)cr_limit_bound(f.x, f.theta, f.x, f.theta, f.P, 1.0, 10),
                  std::invalid_argument);
}

TEST_CASE("bound sweep layout and supremum rows") {
  const ShiftTwo f;
  std::vector<std::pair<Signal, GroupDistribution>> witnesses;
  witnesses.emplace_back(ShiftTwo::make(0, 3), f.theta);   // usable
  witnesses.emplace_back(ShiftTwo::make(0.5, 2.5), f.theta); // usable, same moments order
  const std::vector<SweepPoint> grid{{2.0, 100}, {4.0, 1600}};
  const auto rows = bound_sweep(f.x, f.theta, f.P, witnesses, grid);
  REQUIRE(rows.size() == 6); // (2 witnesses + sup) per grid point
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const BoundSweepRow& w0 = rows[3 * p + 0];
    const BoundSweepRow& w1 = rows[3 * p + 1];
    const BoundSweepRow& sup = rows[3 * p + 2];
    CHECK(w0.witness == 0);
    CHECK(w1.witness == 1);
    CHECK(sup.witness == -1);
    CHECK(sup.report.mse_lower ==
          doctest::Approx(std::max(w0.report.mse_lower, w1.report.mse_lower)).epsilon(1e-15));
    CHECK(sup.point.sigma == grid[p].sigma);
  }
}

TEST_CASE("bound sweep quarantines failing witnesses") {
  const ShiftTwo f;
  std::vector<std::pair<Signal, GroupDistribution>> witnesses;
  witnesses.emplace_back(f.x, f.theta);                  // equivalent: per-row error
  witnesses.emplace_back(ShiftTwo::make(0, 3), f.theta); // fine
  const std::vector<SweepPoint> grid{{2.0, 100}};
  const auto rows = bound_sweep(f.x, f.theta, f.P, witnesses, grid);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].report.flag.rfind("error: ", 0) == 0);
  CHECK(std::isnan(rows[0].report.mse_lower));
  CHECK(rows[1].report.flag.empty());
  CHECK(rows[2].witness == -1);
  CHECK(rows[2].report.mse_lower == rows[1].report.mse_lower);
}

TEST_CASE("bound sweep with no usable witness flags the supremum") {
  const ShiftTwo f;
  std::vector<std::pair<Signal, GroupDistribution>> witnesses;
  witnesses.emplace_back(f.x, f.theta);
  const std::vector<SweepPoint> grid{{1.0, 10}};
  const auto rows = bound_sweep(f.x, f.theta, f.P, witnesses, grid);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].report.flag == "no-usable-witness");
  CHECK(std::isnan(rows[1].report.mse_lower));
  CHECK_THROWS_AS((void)bound_sweep(f.x, f.theta, f.P, {}, grid), std::invalid_argument);
}

TEST_SUITE_END();
