#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

// Finite subgroups of the orthogonal group O(L) acting on signals in R^L,
// distributions over group elements, orbits, and best-in-orbit alignment.

namespace gac {

using Signal = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct GroupElement {
  Matrix matrix; // L x L orthogonal
  int index;     // position in the group's canonical element order
};

/// A finite matrix group, validated on construction: every element is
/// orthogonal to 1e-12 per entry, the set is closed under products to 1e-10
/// per entry, contains the identity, and contains an inverse for every
/// element. The element order given at construction is canonical and is the
/// indexing used everywhere else (distributions, simulation assignments).
class FiniteGroup {
public:
  /// Validates and builds the product/inverse tables. Throws
  /// std::invalid_argument with a description of the first violation.
  static std::shared_ptr<const FiniteGroup> from_matrices(std::vector<Matrix> matrices);

  /// Cyclic group of coordinate shifts on R^L, elements {I, R, R^2, ...,
  /// R^{L-1}} in that order, where R maps (x_1, ..., x_L) to
  /// (x_L, x_1, ..., x_{L-1}); for L = 3, R applied to (a, b, c) gives (c, a, b).
  static std::shared_ptr<const FiniteGroup> cyclic_shift(int signal_dim);

  int dimension() const { return dim_; }
  int order() const { return int(elements_.size()); }
  const GroupElement& element(int i) const { return elements_.at(std::size_t(i)); }
  const std::vector<GroupElement>& elements() const { return elements_; }

  /// Index of element(i) * element(j) in canonical order.
  int product_index(int i, int j) const;
  /// Index of element(i)^{-1}.
  int inverse_index(int i) const;
  int identity_index() const { return identity_; }

private:
  FiniteGroup() = default;
  int dim_ = 0;
  int identity_ = -1;
  std::vector<GroupElement> elements_;
  std::vector<int> product_table_; // row-major order x order
  std::vector<int> inverse_;
};

/// Probability distribution over the elements of a FiniteGroup, stored in the
/// group's canonical element order. Weights are nonnegative and sum to 1
/// within 1e-12 (validated).
struct GroupDistribution {
  std::shared_ptr<const FiniteGroup> group;
  Eigen::VectorXd weights;

  void validate() const; // throws std::invalid_argument on violation
};

GroupDistribution uniform_distribution(std::shared_ptr<const FiniteGroup> group);
GroupDistribution point_mass(std::shared_ptr<const FiniteGroup> group, int element_index);
GroupDistribution make_distribution(std::shared_ptr<const FiniteGroup> group,
                                    Eigen::VectorXd weights);

/// Right-translation pushforward: the returned distribution theta' satisfies
/// theta'(h) = theta(h * g), where g = group.element(g_index). If X has
/// distribution theta and we reparameterize x -> g.x, then theta' makes
/// (signal, distribution) observationally unchanged.
GroupDistribution pushforward_right(const GroupDistribution& theta, int g_index);

/// All images g.x in the group's canonical element order (with duplicates:
/// one entry per element, not per distinct point).
std::vector<Signal> orbit(const Signal& x, const FiniteGroup& group);

struct Alignment {
  Signal signal;  // g.x_hat for the minimizing g
  int element;    // index of the minimizing g
  double sq_dist; // |g.x_hat - x|^2 at the minimizer
};

/// The orbit point of x_hat closest to x in Euclidean norm. Ties are broken
/// by the smallest element index, so the result is deterministic.
Alignment best_alignment(const Signal& x_hat, const Signal& x, const FiniteGroup& group);

} // namespace gac
