#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gac/channel.hpp"
#include "gac/group.hpp"

// Moment tensors of the projected group orbit, distances between moment
// sequences, directional moment derivatives, and the moment order cutoff
// search (the smallest order at which every non-equivalent candidate is
// distinguished from the truth).

namespace gac {

/// Dense symmetric tensor of a given order over R^K, stored as a flat
/// row-major array of size K^order (order 0 is a scalar). Dense storage is
/// deliberate: the toolkit targets small K and order <= ~6, where the
/// redundancy is cheap and indexing stays trivial.
class MomentTensor {
public:
  MomentTensor() = default;
  MomentTensor(int order, int dim);

  int order() const { return order_; }
  int dim() const { return dim_; }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double at(std::span<const int> index) const;
  double& at(std::span<const int> index);
  std::size_t flat_index(std::span<const int> index) const;

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// Average each entry over all permutations of its multi-index.
  void symmetrize();
  /// Largest |T[idx] - T[perm(idx)]| over all entries and permutations.
  double max_asymmetry() const;

  MomentTensor& operator+=(const MomentTensor& other);
  MomentTensor& operator-=(const MomentTensor& other);
  MomentTensor& operator*=(double s);

private:
  int order_ = 0;
  int dim_ = 0;
  std::vector<double> data_;
};

/// Entrywise inner product sum_k A[k] B[k].
double tensor_inner(const MomentTensor& a, const MomentTensor& b);
/// |A - B|^2 entrywise.
double tensor_sq_dist(const MomentTensor& a, const MomentTensor& b);

/// Advance a multi-index odometer-style; returns false after the last one.
bool next_multi_index(std::vector<int>& index, int dim);

/// Population moment tensor of order n for the projected orbit:
/// sum_g theta_g (P g x)^{tensor n}. Order 0 gives the scalar 1.
MomentTensor exact_moment(const Signal& x, const GroupDistribution& theta,
                          const Projection& projection, int order);

/// Inner product <M_A, M_B> of two exact moment tensors of the same order,
/// computed without forming the tensors: sum over element pairs of
/// theta_g theta'_h <P g x_A, P h x_B>^n.
double exact_moment_inner(const Signal& x_a, const GroupDistribution& theta_a,
                          const Signal& x_b, const GroupDistribution& theta_b,
                          const Projection& projection, int order);

/// Sample average of Y^{tensor n} over the batch rows. With debias = true
/// the additive Gaussian noise contribution is removed exactly for
/// order <= 2 (subtract sigma^2 I) and order 3 (subtract the symmetrized
/// sigma^2 (x) first-moment terms); higher orders are refused.
MomentTensor empirical_moment(const ObservationBatch& batch, int order,
                              double sigma = 0.0, bool debias = false);

/// K^n distance: |M_A - M_B|^2 / n! between exact moment tensors.
double moment_distance(const Signal& x_a, const GroupDistribution& theta_a,
                       const Signal& x_b, const GroupDistribution& theta_b,
                       const Projection& projection, int order);

/// Q^n: squared norm of the h-derivative at 0 of the order-n moment tensor
/// along the linear path x_h = (1-h) x + h x_tilde, theta_h likewise,
/// divided by n!. The tensor is entrywise polynomial in h of degree at most
/// n + 1, so the derivative is computed exactly (to rounding) from n + 2
/// interpolation nodes h in {0, +-1, +-2, ...}/(n + 2) via finite-difference
/// weights on those nodes.
double directional_q(const Signal& x, const GroupDistribution& theta,
                     const Signal& x_tilde, const GroupDistribution& theta_tilde,
                     const Projection& projection, int order);

/// Weights w such that sum_i w_i f(nodes_i) approximates the m-th derivative
/// of f at z, exact for polynomials of degree < nodes.size(). Fornberg's
/// recurrence; arbitrary distinct nodes.
std::vector<double> fd_weights(double z, const std::vector<double>& nodes, int m);

/// Witness search constraints: coordinates of the candidate signal pinned to
/// zero, and whether the candidate distribution is fixed to the truth's
/// (known theta) or free over the simplex.
struct ConstraintSet {
  std::vector<int> zero_indices;
  bool theta_fixed = true;
};

struct CutoffSearchOptions {
  int max_order = 4;        // highest order probed for matching
  double match_tol = 1e-9;  // accept a witness when sum of |dM^n|^2 is below this
  double orbit_floor = 1e-3; // candidates closer than this to the orbit are excluded
  int restarts = 64;
  std::uint64_t seed = 0;
  int threads = 1;
  double init_spread = 0.0; // 0: auto from |x|
};

struct CutoffReport {
  int d_bar = 1;          // first order distinguishing the witness from the truth
  bool certified = false; // true when a genuine off-orbit witness was found
  Signal witness_x;
  GroupDistribution witness_theta;
  double witness_orbit_dist = 0.0;             // Euclidean distance to the orbit of x
  std::vector<std::pair<int, double>> matched; // (order, residual |dM^n|^2) for matched orders
  double k_at_cutoff = 0.0;                    // K^{d_bar} between witness and truth
  std::string note;                            // non-empty only for degenerate outcomes
};

/// Search for the candidate (x_tilde, theta_tilde) that matches the truth's
/// moments to the highest order while staying orbit_floor away from the
/// orbit of x. For each stage d it minimizes sum_{n<=d} |dM^n|^2 with a
/// multi-start Nelder-Mead (restarts run in parallel with per-restart
/// derived seeds; the winner is picked in restart order, so results do not
/// depend on scheduling). d_bar is the first order at which the best
/// surviving witness is distinguished. When no stage yields a witness the
/// report carries d_bar = 1, certified = false, and the best raw candidate.
CutoffReport cutoff_search(const Signal& x, const GroupDistribution& theta,
                           const Projection& projection, const ConstraintSet& constraints,
                           const CutoffSearchOptions& opts = {});

/// Human-readable report (values in %.17g).
std::string to_text(const CutoffReport& report);

/// CSV rows "order,index,value" for one tensor, index as space-separated
/// 1-based coordinates.
void write_tensor_csv(const MomentTensor& t, std::ostream& out);

} // namespace gac
