#include "gac/group.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace gac {

namespace {

constexpr double kOrthoTol = 1e-12;  // per-entry |M^T M - I|
constexpr double kClosureTol = 1e-10; // per-entry product matching

std::string describe(const char* what, int i) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s (element %d)", what, i);
  return buf;
}

} // namespace

std::shared_ptr<const FiniteGroup> FiniteGroup::from_matrices(std::vector<Matrix> matrices) {
  if (matrices.empty()) throw std::invalid_argument("group: no elements given");
  const int L = int(matrices.front().rows());
  if (L <= 0) throw std::invalid_argument("group: zero-dimensional elements");

  auto g = std::shared_ptr<FiniteGroup>(new FiniteGroup());
  g->dim_ = L;
  const int m = int(matrices.size());
  g->elements_.reserve(std::size_t(m));
  for (int i = 0; i < m; ++i) {
    const Matrix& M = matrices[std::size_t(i)];
    if (M.rows() != L || M.cols() != L)
      throw std::invalid_argument(describe("group: element has wrong shape", i));
    const double ortho_err = (M.transpose() * M - Matrix::Identity(L, L)).cwiseAbs().maxCoeff();
    if (ortho_err > kOrthoTol)
      throw std::invalid_argument(describe("group: element is not orthogonal", i));
    g->elements_.push_back(GroupElement{M, i});
  }

  // Duplicate elements would make distribution indexing ambiguous.
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if ((g->elements_[std::size_t(i)].matrix - g->elements_[std::size_t(j)].matrix)
              .cwiseAbs()
              .maxCoeff() <= kClosureTol)
        throw std::invalid_argument(describe("group: duplicate element", j));

  auto find_index = [&](const Matrix& M) -> int {
    for (int k = 0; k < m; ++k)
      if ((g->elements_[std::size_t(k)].matrix - M).cwiseAbs().maxCoeff() <= kClosureTol)
        return k;
    return -1;
  };

  g->identity_ = find_index(Matrix::Identity(L, L));
  if (g->identity_ < 0) throw std::invalid_argument("group: identity element missing");

  g->product_table_.assign(std::size_t(m) * std::size_t(m), -1);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const Matrix P = g->elements_[std::size_t(i)].matrix * g->elements_[std::size_t(j)].matrix;
      const int k = find_index(P);
      if (k < 0)
        throw std::invalid_argument(describe("group: product escapes the element set", i));
      g->product_table_[std::size_t(i) * std::size_t(m) + std::size_t(j)] = k;
    }
  }

  g->inverse_.assign(std::size_t(m), -1);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (g->product_table_[std::size_t(i) * std::size_t(m) + std::size_t(j)] == g->identity_) {
        g->inverse_[std::size_t(i)] = j;
        break;
      }
    }
    if (g->inverse_[std::size_t(i)] < 0)
      throw std::invalid_argument(describe("group: element has no inverse in the set", i));
  }
  return g;
}

std::shared_ptr<const FiniteGroup> FiniteGroup::cyclic_shift(int signal_dim) {
  if (signal_dim < 1) throw std::invalid_argument("cyclic_shift: dimension must be positive");
  const int L = signal_dim;
  // R[i][j] = 1 iff j = (i - 1) mod L, so (R x)_1 = x_L, (R x)_{i} = x_{i-1}.
  Matrix R = Matrix::Zero(L, L);
  for (int i = 0; i < L; ++i) R(i, (i + L - 1) % L) = 1.0;
  std::vector<Matrix> mats;
  mats.reserve(std::size_t(L));
  Matrix cur = Matrix::Identity(L, L);
  for (int k = 0; k < L; ++k) {
    mats.push_back(cur);
    cur = R * cur;
  }
  return from_matrices(std::move(mats));
}

int FiniteGroup::product_index(int i, int j) const {
  const int m = order();
  return product_table_.at(std::size_t(i) * std::size_t(m) + std::size_t(j));
}

int FiniteGroup::inverse_index(int i) const { return inverse_.at(std::size_t(i)); }

void GroupDistribution::validate() const {
  if (!group) throw std::invalid_argument("distribution: null group");
  if (weights.size() != group->order())
    throw std::invalid_argument("distribution: weight count differs from group order");
  double sum = 0.0;
  for (int i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0))
      throw std::invalid_argument("distribution: negative or NaN weight");
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("distribution: weights do not sum to 1");
}

GroupDistribution uniform_distribution(std::shared_ptr<const FiniteGroup> group) {
  if (!group) throw std::invalid_argument("uniform_distribution: null group");
  GroupDistribution d;
  d.group = std::move(group);
  d.weights = Eigen::VectorXd::Constant(d.group->order(), 1.0 / double(d.group->order()));
  return d;
}

GroupDistribution point_mass(std::shared_ptr<const FiniteGroup> group, int element_index) {
  if (!group) throw std::invalid_argument("point_mass: null group");
  if (element_index < 0 || element_index >= group->order())
    throw std::invalid_argument("point_mass: element index out of range");
  GroupDistribution d;
  d.group = std::move(group);
  d.weights = Eigen::VectorXd::Zero(d.group->order());
  d.weights[element_index] = 1.0;
  return d;
}

GroupDistribution make_distribution(std::shared_ptr<const FiniteGroup> group,
                                    Eigen::VectorXd weights) {
  GroupDistribution d;
  d.group = std::move(group);
  d.weights = std::move(weights);
  d.validate();
  return d;
}

GroupDistribution pushforward_right(const GroupDistribution& theta, int g_index) {
  theta.validate();
  const FiniteGroup& G = *theta.group;
  if (g_index < 0 || g_index >= G.order())
    throw std::invalid_argument("pushforward_right: element index out of range");
  GroupDistribution out;
  out.group = theta.group;
  out.weights = Eigen::VectorXd::Zero(G.order());
  for (int h = 0; h < G.order(); ++h)
    out.weights[h] = theta.weights[G.product_index(h, g_index)];
  return out;
}

std::vector<Signal> orbit(const Signal& x, const FiniteGroup& group) {
  if (x.size() != group.dimension())
    throw std::invalid_argument("orbit: signal dimension differs from group dimension");
  std::vector<Signal> out;
  out.reserve(std::size_t(group.order()));
  for (const GroupElement& g : group.elements()) out.push_back(g.matrix * x);
  return out;
}

Alignment best_alignment(const Signal& x_hat, const Signal& x, const FiniteGroup& group) {
  if (x_hat.size() != group.dimension() || x.size() != group.dimension())
    throw std::invalid_argument("best_alignment: dimension mismatch");
  Alignment best;
  best.element = -1;
  best.sq_dist = std::numeric_limits<double>::infinity();
  for (const GroupElement& g : group.elements()) {
    Signal cand = g.matrix * x_hat;
    const double d2 = (cand - x).squaredNorm();
    if (d2 < best.sq_dist) { // strict: ties keep the smallest element index
      best.sq_dist = d2;
      best.element = g.index;
      best.signal = std::move(cand);
    }
  }
  return best;
}

} // namespace gac
