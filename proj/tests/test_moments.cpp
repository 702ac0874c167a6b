#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gac/channel.hpp"
#include "gac/group.hpp"
#include "gac/moments.hpp"

using namespace gac;

namespace {

// Reference inner product <M^n_a, M^n_b> over the component means directly:
// sum_{g,h} theta_g theta_h <P g x_a, P h x_b>^n.
double gram_inner(const Signal& xa, const GroupDistribution& ta, const Signal& xb,
                  const GroupDistribution& tb, const Projection& P, int order) {
  const auto oa = orbit(xa, *ta.group);
  const auto ob = orbit(xb, *tb.group);
  double total = 0.0;
  for (int g = 0; g < ta.group->order(); ++g)
    for (int h = 0; h < tb.group->order(); ++h) {
      const double dot = (P.matrix * oa[std::size_t(g)]).dot(P.matrix * ob[std::size_t(h)]);
      total += ta.weights[g] * tb.weights[h] * std::pow(dot, order);
    }
  return total;
}

struct Example1 {
  std::shared_ptr<const FiniteGroup> G = FiniteGroup::cyclic_shift(3);
  Signal x;
  Signal x_swap;
  GroupDistribution theta;
  Projection P = Projection::coordinate(3, {0, 1});
  double b = 1.0, c = 2.0;

  Example1() : theta(uniform_distribution(G)) {
    x = Signal(3);
    x << 0, b, c;
    x_swap = Signal(3);
    x_swap << 0, c, b;
  }
};

} // namespace

TEST_SUITE_BEGIN("moments");

TEST_CASE("tensor indexing and symmetry") {
  MomentTensor t(3, 2);
  CHECK(t.size() == 8);
  const int idx[3] = {1, 0, 1};
  t.at(idx) = 5.0;
  CHECK(t[std::size_t(1 * 4 + 0 * 2 + 1)] == 5.0);

  CHECK(t.max_asymmetry() == 5.0);
  t.symmetrize();
  const int i011[3] = {0, 1, 1};
  const int i110[3] = {1, 1, 0};
  CHECK(t.at(i011) == doctest::Approx(5.0 / 3.0));
  CHECK(t.at(i110) == doctest::Approx(5.0 / 3.0));
  CHECK(t.max_asymmetry() == doctest::Approx(0.0));
}

TEST_CASE("multi index iteration covers all entries once") {
  std::vector<int> idx = {0, 0, 0};
  int count = 1;
  while (next_multi_index(idx, 3)) ++count;
  CHECK(count == 27);
}

TEST_CASE("order zero moment is the scalar one") {
  Example1 ex;
  const MomentTensor m0 = exact_moment(ex.x, ex.theta, ex.P, 0);
  CHECK(m0.size() == 1);
  CHECK(m0[0] == 1.0);
}

TEST_CASE("first three moments match hand calculation") {
  Example1 ex;
  const double b = ex.b, c = ex.c;

  const MomentTensor m1 = exact_moment(ex.x, ex.theta, ex.P, 1);
  CHECK(m1[0] == doctest::Approx((b + c) / 3.0).epsilon(1e-14));
  CHECK(m1[1] == doctest::Approx((b + c) / 3.0).epsilon(1e-14));

  const MomentTensor m2 = exact_moment(ex.x, ex.theta, ex.P, 2);
  const int i00[2] = {0, 0}, i01[2] = {0, 1}, i11[2] = {1, 1};
  CHECK(m2.at(i00) == doctest::Approx((b * b + c * c) / 3.0).epsilon(1e-14));
  CHECK(m2.at(i11) == doctest::Approx((b * b + c * c) / 3.0).epsilon(1e-14));
  CHECK(m2.at(i01) == doctest::Approx(b * c / 3.0).epsilon(1e-14));
  CHECK(m2.max_asymmetry() == doctest::Approx(0.0));

  // third moments over the projected orbit {(0,b), (c,0), (b,c)}:
  // both diagonal entries average b^3 + c^3, the mixed entries keep one
  // factor from each coordinate of the only point with two nonzeros
  const MomentTensor m3 = exact_moment(ex.x, ex.theta, ex.P, 3);
  const int i000[3] = {0, 0, 0}, i111[3] = {1, 1, 1}, i001[3] = {0, 0, 1}, i011[3] = {0, 1, 1};
  CHECK(m3.at(i000) == doctest::Approx((b * b * b + c * c * c) / 3.0).epsilon(1e-14));
  CHECK(m3.at(i111) == doctest::Approx((b * b * b + c * c * c) / 3.0).epsilon(1e-14));
  CHECK(m3.at(i001) == doctest::Approx(b * b * c / 3.0).epsilon(1e-14));
  CHECK(m3.at(i011) == doctest::Approx(b * c * c / 3.0).epsilon(1e-14));
}

TEST_CASE("swap candidate matches orders 1 and 2 but not 3") {
  Example1 ex;
  const MomentTensor a1 = exact_moment(ex.x, ex.theta, ex.P, 1);
  const MomentTensor b1 = exact_moment(ex.x_swap, ex.theta, ex.P, 1);
  CHECK(tensor_sq_dist(a1, b1) == doctest::Approx(0.0));

  const MomentTensor a2 = exact_moment(ex.x, ex.theta, ex.P, 2);
  const MomentTensor b2 = exact_moment(ex.x_swap, ex.theta, ex.P, 2);
  CHECK(tensor_sq_dist(a2, b2) == doctest::Approx(0.0));

  const MomentTensor a3 = exact_moment(ex.x, ex.theta, ex.P, 3);
  const MomentTensor b3 = exact_moment(ex.x_swap, ex.theta, ex.P, 3);
  const double mixed = ex.b * ex.b * ex.c - ex.c * ex.c * ex.b;
  CHECK(tensor_sq_dist(a3, b3) == doctest::Approx(2.0 / 3.0 * mixed * mixed).epsilon(1e-12));
  CHECK(moment_distance(ex.x, ex.theta, ex.x_swap, ex.theta, ex.P, 3) ==
        doctest::Approx(mixed * mixed / 9.0).epsilon(1e-12));
}

TEST_CASE("inner products agree with the direct gram route") {
  Example1 ex;
  for (int n = 1; n <= 5; ++n) {
    const double via_api =
        exact_moment_inner(ex.x, ex.theta, ex.x_swap, ex.theta, ex.P, n);
    const double via_gram = gram_inner(ex.x, ex.theta, ex.x_swap, ex.theta, ex.P, n);
    CHECK(via_api == doctest::Approx(via_gram).epsilon(1e-12));

    // consistency with the dense tensors
    const MomentTensor ma = exact_moment(ex.x, ex.theta, ex.P, n);
    const MomentTensor mb = exact_moment(ex.x_swap, ex.theta, ex.P, n);
    CHECK(tensor_inner(ma, mb) == doctest::Approx(via_gram).epsilon(1e-12));
  }
}

TEST_CASE("moments are invariant under prior pushforward with the acting element") {
  // replacing x by g x and reindexing theta accordingly leaves every moment fixed
  const auto G = FiniteGroup::cyclic_shift(3);
  Signal x(3);
  x << 0.3, -1.2, 2.0;
  Signal w(3);
  w << 0.5, 0.2, 0.3;
  const GroupDistribution theta = make_distribution(G, w);
  const Projection P = Projection::coordinate(3, {0, 1});
  for (int g = 0; g < 3; ++g) {
    const Signal gx = G->element(g).matrix * x;
    const GroupDistribution moved = pushforward_right(theta, g);
    for (int n = 1; n <= 3; ++n) {
      const MomentTensor m_orig = exact_moment(x, theta, P, n);
      const MomentTensor m_moved = exact_moment(gx, moved, P, n);
      CHECK(tensor_sq_dist(m_orig, m_moved) == doctest::Approx(0.0).epsilon(1e-20));
    }
  }
}

TEST_CASE("empirical moments converge to exact at the root-n rate") {
  Example1 ex;
  ChannelModel model{ex.x, ex.theta, ex.P, 0.7};
  const MomentTensor ex2 = exact_moment(ex.x, ex.theta, ex.P, 2);
  // root-mean-square error over independent batches, so a single lucky draw
  // cannot distort the n-dependence
  std::vector<double> errs;
  for (const std::int64_t n : {2000L, 32000L}) {
    double sq = 0.0;
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
      const ObservationBatch batch = simulate(model, n, 5150, rep, false);
      const MomentTensor emp = empirical_moment(batch, 2, model.sigma, true);
      sq += tensor_sq_dist(emp, ex2);
    }
    errs.push_back(std::sqrt(sq / 10.0));
  }
  // 16x the samples: error should shrink by about 4, allow wide slack
  CHECK(errs[1] < errs[0] * 0.55);
  const double slope = std::log(errs[1] / errs[0]) / std::log(16.0);
  CHECK(slope < -0.3);
  CHECK(slope > -0.75);
}

TEST_CASE("debiasing removes the noise terms at orders 2 and 3") {
  Example1 ex;
  ChannelModel model{ex.x, ex.theta, ex.P, 1.3};
  const ObservationBatch batch = simulate(model, 400000, 777, 0, false);

  const MomentTensor raw2 = empirical_moment(batch, 2, model.sigma, false);
  const MomentTensor fix2 = empirical_moment(batch, 2, model.sigma, true);
  const MomentTensor ex2 = exact_moment(ex.x, ex.theta, ex.P, 2);
  // raw second moment overshoots by sigma^2 on the diagonal
  const int i00[2] = {0, 0};
  CHECK(raw2.at(i00) - ex2.at(i00) == doctest::Approx(1.69).epsilon(0.05));
  CHECK(std::abs(fix2.at(i00) - ex2.at(i00)) < 0.03);

  const MomentTensor fix3 = empirical_moment(batch, 3, model.sigma, true);
  const MomentTensor ex3 = exact_moment(ex.x, ex.theta, ex.P, 3);
  CHECK(std::sqrt(tensor_sq_dist(fix3, ex3)) < 0.06);

  CHECK_THROWS_AS((void)empirical_moment(batch, 4, model.sigma, true), std::invalid_argument);
  CHECK_NOTHROW((void)empirical_moment(batch, 4, model.sigma, false));
}

TEST_CASE("finite difference weights reproduce derivatives of polynomials") {
  // five nodes: first derivative of t^k at 0.3 exactly for k <= 4
  const std::vector<double> nodes = {0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<double> w = fd_weights(0.3, nodes, 1);
  REQUIRE(w.size() == nodes.size());
  for (int k = 0; k <= 4; ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) d += w[i] * std::pow(nodes[i], k);
    const double expect = k == 0 ? 0.0 : k * std::pow(0.3, k - 1);
    CHECK(d == doctest::Approx(expect).epsilon(1e-10));
  }
  // zeroth derivative weights interpolate
  const std::vector<double> w0 = fd_weights(0.3, nodes, 0);
  double v = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) v += w0[i] * std::pow(nodes[i], 3);
  CHECK(v == doctest::Approx(0.027).epsilon(1e-10));
}

TEST_CASE("directional derivative squared norms match closed forms") {
  // two point example: Q^1 = 0 (mean constant), Q^2 = (a-b)^2 / 2
  const auto G2 = FiniteGroup::cyclic_shift(2);
  Signal x(2);
  x << 1, 2;
  Signal xt(2);
  xt << 0, 3;
  const GroupDistribution th = uniform_distribution(G2);
  const Projection P = Projection::coordinate(2, {0});
  CHECK(directional_q(x, th, xt, th, P, 1) == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(directional_q(x, th, xt, th, P, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("directional derivative agrees with a centered difference") {
  Example1 ex;
  Signal xt(3);
  xt << 0.2, 1.7, 1.1;
  for (int n = 1; n <= 4; ++n) {
    const double q = directional_q(ex.x, ex.theta, xt, ex.theta, ex.P, n);
    // centered finite difference of Delta M(h) = M(h) - M(0) at small h
    const double h = 1e-4;
    auto at = [&](double t) {
      const Signal xh = (1.0 - t) * ex.x + t * xt;
      return exact_moment(xh, ex.theta, ex.P, n);
    };
    const MomentTensor m0 = at(0.0);
    MomentTensor mp = at(h);
    MomentTensor mm = at(-h);
    mp -= m0;
    mm -= m0;
    double sq = 0.0;
    for (std::size_t i = 0; i < mp.size(); ++i) {
      const double d = (mp[i] - mm[i]) / (2.0 * h);
      sq += d * d;
    }
    double fact = 1.0;
    for (int i = 2; i <= n; ++i) fact *= i;
    CHECK(q == doctest::Approx(sq / fact).epsilon(1e-5));
  }
}

TEST_CASE("cutoff search certifies the swap ambiguity at order 3") {
  Example1 ex;
  ConstraintSet cons;
  cons.zero_indices = {0};
  cons.theta_fixed = true;
  CutoffSearchOptions opts;
  opts.max_order = 4;
  opts.seed = 99;
  const CutoffReport rep = cutoff_search(ex.x, ex.theta, ex.P, cons, opts);
  CHECK(rep.d_bar == 3);
  CHECK(rep.certified);
  // the witness must land on the orbit of the swapped signal
  const Alignment al = best_alignment(rep.witness_x, ex.x_swap, *ex.G);
  CHECK(al.sq_dist < 1e-6);
  CHECK(rep.k_at_cutoff == doctest::Approx(4.0 / 9.0).epsilon(1e-4));
  REQUIRE(rep.matched.size() == 2);
  CHECK(rep.matched[0].first == 1);
  CHECK(rep.matched[1].first == 2);

  // deterministic under the same seed
  const CutoffReport rep2 = cutoff_search(ex.x, ex.theta, ex.P, cons, opts);
  CHECK(rep2.d_bar == rep.d_bar);
  CHECK((rep2.witness_x - rep.witness_x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cutoff search without ambiguity reports one plus the last stage") {
  // two point example with free second coordinate only: matching the mean
  // forces the witness onto the orbit, so no stage succeeds
  const auto G2 = FiniteGroup::cyclic_shift(2);
  Signal x(2);
  x << 1, 2;
  const GroupDistribution th = uniform_distribution(G2);
  const Projection P = Projection::identity(2);
  CutoffSearchOptions opts;
  opts.max_order = 3;
  opts.seed = 7;
  const CutoffReport rep = cutoff_search(x, th, P, ConstraintSet{}, opts);
  // identity projection: order 1 and 2 already pin the orbit
  CHECK(rep.d_bar <= 2);

  // two point example through the first coordinate: the swap is in-orbit,
  // generic witnesses fail at order 2
  const Projection P1 = Projection::coordinate(2, {0});
  const CutoffReport rep1 = cutoff_search(x, th, P1, ConstraintSet{}, opts);
  CHECK(rep1.d_bar == 2);
  CHECK(rep1.certified);
}

TEST_CASE("cutoff search rejects bad constraint indices") {
  Example1 ex;
  ConstraintSet cons;
  cons.zero_indices = {3};
  CHECK_THROWS_AS((void)cutoff_search(ex.x, ex.theta, ex.P, cons, CutoffSearchOptions{}),
                  std::invalid_argument);
  cons.zero_indices = {0, 0};
  CHECK_THROWS_AS((void)cutoff_search(ex.x, ex.theta, ex.P, cons, CutoffSearchOptions{}),
                  std::invalid_argument);
  cons.zero_indices = {0, 1, 2};
  CHECK_THROWS_AS((void)cutoff_search(ex.x, ex.theta, ex.P, cons, CutoffSearchOptions{}),
                  std::invalid_argument);
}

TEST_SUITE_END();
