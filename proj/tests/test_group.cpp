#include <cmath>
#include <vector>

#include "doctest.h"
#include "gac/group.hpp"

using namespace gac;

TEST_SUITE_BEGIN("group");

TEST_CASE("cyclic shift group structure") {
  const auto G = FiniteGroup::cyclic_shift(4);
  CHECK(G->dimension() == 4);
  CHECK(G->order() == 4);
  CHECK(G->identity_index() == 0);

  // the generator is element 1; applying it to (a,b,c,d) gives (d,a,b,c)
  Signal x(4);
  x << 1, 2, 3, 4;
  Signal y = G->element(1).matrix * x;
  CHECK(y[0] == 4);
  CHECK(y[1] == 1);
  CHECK(y[2] == 2);
  CHECK(y[3] == 3);

  // product table is the cyclic group Z/4
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(G->product_index(i, j) == (i + j) % 4);
  for (int i = 0; i < 4; ++i) CHECK(G->inverse_index(i) == (4 - i) % 4);
}

TEST_CASE("explicit group validation") {
  Matrix I = Matrix::Identity(2, 2);
  Matrix S(2, 2);
  S << 0, 1, 1, 0;

  const auto G = FiniteGroup::from_matrices({I, S});
  CHECK(G->order() == 2);
  CHECK(G->product_index(1, 1) == 0);

  // not orthogonal
  Matrix bad(2, 2);
  bad << 1, 1, 0, 1;
  CHECK_THROWS_AS((void)FiniteGroup::from_matrices({I, bad}), std::invalid_argument);

  // not closed: a single non-identity rotation by an irrational angle
  Matrix R(2, 2);
  const double a = 1.0;
  R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  CHECK_THROWS_AS((void)FiniteGroup::from_matrices({I, R}), std::invalid_argument);

  // missing identity
  CHECK_THROWS_AS((void)FiniteGroup::from_matrices({S}), std::invalid_argument);

  // duplicate element
  CHECK_THROWS_AS((void)FiniteGroup::from_matrices({I, S, S}), std::invalid_argument);
}

TEST_CASE("distribution validation") {
  const auto G = FiniteGroup::cyclic_shift(3);
  const GroupDistribution u = uniform_distribution(G);
  CHECK(u.weights.size() == 3);
  CHECK(u.weights[0] == doctest::Approx(1.0 / 3.0));

  const GroupDistribution p = point_mass(G, 2);
  CHECK(p.weights[2] == 1.0);
  CHECK(p.weights[0] == 0.0);

  Signal w(3);
  w << 0.2, 0.3, 0.5;
  const GroupDistribution d = make_distribution(G, w);
  CHECK(d.weights[2] == 0.5);

  Signal neg(3);
  neg << -0.1, 0.6, 0.5;
  CHECK_THROWS_AS((void)make_distribution(G, neg), std::invalid_argument);

  Signal off(3);
  off << 0.2, 0.3, 0.4;
  CHECK_THROWS_AS((void)make_distribution(G, off), std::invalid_argument);
}

TEST_CASE("pushforward reindexes by right translation") {
  const auto G = FiniteGroup::cyclic_shift(3);
  Signal w(3);
  w << 0.5, 0.3, 0.2;
  const GroupDistribution d = make_distribution(G, w);
  const GroupDistribution shifted = pushforward_right(d, 1);
  // new weight at h is the old weight at h*g
  for (int h = 0; h < 3; ++h)
    CHECK(shifted.weights[h] == d.weights[G->product_index(h, 1)]);
  CHECK(shifted.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("orbit and best alignment") {
  const auto G = FiniteGroup::cyclic_shift(3);
  Signal x(3);
  x << 0, 1, 2;
  const auto orb = orbit(x, *G);
  REQUIRE(orb.size() == 3);
  CHECK(orb[0][0] == 0);
  CHECK(orb[1][0] == 2); // one shift of (0,1,2) is (2,0,1)
  CHECK(orb[1][1] == 0);
  CHECK(orb[2][0] == 1); // two shifts give (1,2,0)

  // a perturbed copy of the second orbit point aligns to it
  Signal xh(3);
  xh << 2.1, 0.1, 0.9;
  const Alignment al = best_alignment(xh, x, *G);
  CHECK(al.sq_dist == doctest::Approx(0.03).epsilon(1e-12));
  CHECK((al.signal - orb[0]).norm() < 0.5); // aligned into x's frame
  CHECK(al.sq_dist <= (xh - x).squaredNorm());

  // alignment of an orbit member is exact
  const Alignment self = best_alignment(orb[2], x, *G);
  CHECK(self.sq_dist == doctest::Approx(0.0));
}

TEST_CASE("alignment ties keep the smallest element index") {
  const auto G = FiniteGroup::cyclic_shift(2);
  Signal x(2);
  x << 1, 1; // symmetric: both alignments tie
  Signal xh(2);
  xh << 2, 0;
  const Alignment al = best_alignment(xh, x, *G);
  CHECK(al.element == 0);
}

TEST_SUITE_END();
