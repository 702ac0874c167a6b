#include "gac/moments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "gac/digest.hpp"
#include "gac/optim.hpp"
#include "gac/parallel.hpp"
#include "gac/rng.hpp"

namespace gac {

MomentTensor::MomentTensor(int order, int dim) : order_(order), dim_(dim) {
  if (order < 0) throw std::invalid_argument("tensor: negative order");
  if (dim < 1) throw std::invalid_argument("tensor: dimension must be positive");
  std::size_t n = 1;
  for (int i = 0; i < order; ++i) {
    if (n > (std::size_t(1) << 40) / std::size_t(dim))
      throw std::invalid_argument("tensor: size overflow");
    n *= std::size_t(dim);
  }
  data_.assign(n, 0.0);
}

std::size_t MomentTensor::flat_index(std::span<const int> index) const {
  if (int(index.size()) != order_) throw std::invalid_argument("tensor: index arity mismatch");
  std::size_t f = 0;
  for (int i : index) {
    if (i < 0 || i >= dim_) throw std::invalid_argument("tensor: index out of range");
    f = f * std::size_t(dim_) + std::size_t(i);
  }
  return f;
}

double MomentTensor::at(std::span<const int> index) const { return data_[flat_index(index)]; }
double& MomentTensor::at(std::span<const int> index) { return data_[flat_index(index)]; }

bool next_multi_index(std::vector<int>& index, int dim) {
  for (int p = int(index.size()) - 1; p >= 0; --p) {
    if (++index[std::size_t(p)] < dim) return true;
    index[std::size_t(p)] = 0;
  }
  return false;
}

void MomentTensor::symmetrize() {
  if (order_ < 2) return;
  std::vector<int> idx(std::size_t(order_), 0);
  std::vector<char> done(data_.size(), 0);
  std::vector<int> perm;
  do {
    const std::size_t f = flat_index(idx);
    if (done[f]) continue;
    perm = idx;
    std::sort(perm.begin(), perm.end());
    double sum = 0.0;
    int count = 0;
    std::vector<std::size_t> members;
    do {
      const std::size_t g = flat_index(perm);
      if (!done[g]) { // flat set semantics: each distinct entry once
        done[g] = 1;
        members.push_back(g);
        sum += data_[g];
        ++count;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double avg = sum / double(count);
    for (std::size_t g : members) data_[g] = avg;
  } while (next_multi_index(idx, dim_));
}

double MomentTensor::max_asymmetry() const {
  if (order_ < 2) return 0.0;
  double worst = 0.0;
  std::vector<int> idx(std::size_t(order_), 0);
  std::vector<int> perm;
  do {
    const double v = data_[flat_index(idx)];
    perm = idx;
    std::sort(perm.begin(), perm.end());
    do {
      worst = std::max(worst, std::abs(v - data_[flat_index(perm)]));
    } while (std::next_permutation(perm.begin(), perm.end()));
  } while (next_multi_index(idx, dim_));
  return worst;
}

MomentTensor& MomentTensor::operator+=(const MomentTensor& other) {
  if (order_ != other.order_ || dim_ != other.dim_)
    throw std::invalid_argument("tensor: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

MomentTensor& MomentTensor::operator-=(const MomentTensor& other) {
  if (order_ != other.order_ || dim_ != other.dim_)
    throw std::invalid_argument("tensor: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

MomentTensor& MomentTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double tensor_inner(const MomentTensor& a, const MomentTensor& b) {
  if (a.order() != b.order() || a.dim() != b.dim())
    throw std::invalid_argument("tensor_inner: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double tensor_sq_dist(const MomentTensor& a, const MomentTensor& b) {
  if (a.order() != b.order() || a.dim() != b.dim())
    throw std::invalid_argument("tensor_sq_dist: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace {

// Moment tensor with arbitrary (possibly signed) element weights; linear in
// the weights, which is what the directional derivative path needs.
MomentTensor weighted_moment(const Signal& x, const FiniteGroup& group,
                             const Eigen::VectorXd& weights, const Projection& projection,
                             int order) {
  const int K = projection.observed_dim();
  MomentTensor T(order, K);
  if (order == 0) {
    T[0] = weights.sum();
    return T;
  }
  for (int g = 0; g < group.order(); ++g) {
    const double w = weights[g];
    if (w == 0.0) continue;
    const Signal v = projection.matrix * (group.element(g).matrix * x);
    for (std::size_t f = 0; f < T.size(); ++f) {
      std::size_t r = f;
      double prod = w;
      for (int p = 0; p < order; ++p) {
        prod *= v[int(r % std::size_t(K))];
        r /= std::size_t(K);
      }
      T[f] += prod;
    }
  }
  return T;
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= double(i);
  return f;
}

} // namespace

MomentTensor exact_moment(const Signal& x, const GroupDistribution& theta,
                          const Projection& projection, int order) {
  theta.validate();
  if (order < 0) throw std::invalid_argument("exact_moment: negative order");
  if (x.size() != theta.group->dimension())
    throw std::invalid_argument("exact_moment: signal dimension differs from group dimension");
  if (projection.signal_dim() != x.size())
    throw std::invalid_argument("exact_moment: projection dimension mismatch");
  return weighted_moment(x, *theta.group, theta.weights, projection, order);
}

double exact_moment_inner(const Signal& x_a, const GroupDistribution& theta_a,
                          const Signal& x_b, const GroupDistribution& theta_b,
                          const Projection& projection, int order) {
  theta_a.validate();
  theta_b.validate();
  if (order < 0) throw std::invalid_argument("exact_moment_inner: negative order");
  std::vector<Signal> va = orbit(x_a, *theta_a.group);
  std::vector<Signal> vb = orbit(x_b, *theta_b.group);
  for (auto& v : va) v = projection.matrix * v;
  for (auto& v : vb) v = projection.matrix * v;
  double s = 0.0;
  for (int g = 0; g < theta_a.group->order(); ++g)
    for (int h = 0; h < theta_b.group->order(); ++h)
      s += theta_a.weights[g] * theta_b.weights[h] *
           std::pow(va[std::size_t(g)].dot(vb[std::size_t(h)]), double(order));
  return s;
}

MomentTensor empirical_moment(const ObservationBatch& batch, int order, double sigma,
                              bool debias) {
  if (order < 0) throw std::invalid_argument("empirical_moment: negative order");
  if (batch.n_samples() < 1) throw std::invalid_argument("empirical_moment: empty batch");
  if (debias && order > 3)
    throw std::invalid_argument("empirical_moment: debiasing supported for order <= 3 only");
  if (debias && !(sigma > 0.0))
    throw std::invalid_argument("empirical_moment: debiasing needs sigma > 0");
  const int K = batch.observed_dim();
  const std::int64_t n = batch.n_samples();
  MomentTensor T(order, K);
  if (order == 0) {
    T[0] = 1.0;
    return T;
  }
  for (std::int64_t j = 0; j < n; ++j) {
    for (std::size_t f = 0; f < T.size(); ++f) {
      std::size_t r = f;
      double prod = 1.0;
      for (int p = 0; p < order; ++p) {
        prod *= batch.observations(j, int(r % std::size_t(K)));
        r /= std::size_t(K);
      }
      T[f] += prod;
    }
  }
  T *= 1.0 / double(n);

  if (debias && order >= 2) {
    const double s2 = sigma * sigma;
    if (order == 2) {
      for (int i = 0; i < K; ++i) {
        const int idx[2] = {i, i};
        T.at(idx) -= s2;
      }
    } else {
      const MomentTensor m1 = empirical_moment(batch, 1);
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j)
          for (int k = 0; k < K; ++k) {
            const int idx[3] = {i, j, k};
            double corr = 0.0;
            if (j == k) corr += m1[std::size_t(i)];
            if (i == k) corr += m1[std::size_t(j)];
            if (i == j) corr += m1[std::size_t(k)];
            T.at(idx) -= s2 * corr;
          }
    }
  }
  return T;
}

double moment_distance(const Signal& x_a, const GroupDistribution& theta_a,
                       const Signal& x_b, const GroupDistribution& theta_b,
                       const Projection& projection, int order) {
  const MomentTensor A = exact_moment(x_a, theta_a, projection, order);
  const MomentTensor B = exact_moment(x_b, theta_b, projection, order);
  return tensor_sq_dist(A, B) / factorial(order);
}

std::vector<double> fd_weights(double z, const std::vector<double>& nodes, int m) {
  const int n = int(nodes.size()) - 1;
  if (n < m) throw std::invalid_argument("fd_weights: need more nodes than derivative order");
  // Fornberg's recurrence for finite-difference weights on arbitrary grids.
  std::vector<std::vector<double>> C(std::size_t(n) + 1,
                                     std::vector<double>(std::size_t(m) + 1, 0.0));
  double c1 = 1.0;
  double c4 = nodes[0] - z;
  C[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[std::size_t(i)] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[std::size_t(i)] - nodes[std::size_t(j)];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          C[std::size_t(i)][std::size_t(k)] =
              c1 * (k * C[std::size_t(i) - 1][std::size_t(k) - 1] -
                    c5 * C[std::size_t(i) - 1][std::size_t(k)]) /
              c2;
        C[std::size_t(i)][0] = -c1 * c5 * C[std::size_t(i) - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k)
        C[std::size_t(j)][std::size_t(k)] =
            (c4 * C[std::size_t(j)][std::size_t(k)] - k * C[std::size_t(j)][std::size_t(k) - 1]) /
            c3;
      C[std::size_t(j)][0] = c4 * C[std::size_t(j)][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(std::size_t(n) + 1);
  for (int i = 0; i <= n; ++i) w[std::size_t(i)] = C[std::size_t(i)][std::size_t(m)];
  return w;
}

double directional_q(const Signal& x, const GroupDistribution& theta,
                     const Signal& x_tilde, const GroupDistribution& theta_tilde,
                     const Projection& projection, int order) {
  theta.validate();
  theta_tilde.validate();
  if (order < 1) throw std::invalid_argument("directional_q: order must be >= 1");
  if (x.size() != x_tilde.size())
    throw std::invalid_argument("directional_q: signal dimension mismatch");
  if (theta.group != theta_tilde.group &&
      theta.group->order() != theta_tilde.group->order())
    throw std::invalid_argument("directional_q: group mismatch");

  // Entries of the order-n tensor are polynomials of degree <= n + 1 along
  // the path, so n + 2 nodes make the differentiation exact.
  const int count = order + 2;
  std::vector<double> nodes;
  nodes.reserve(std::size_t(count));
  nodes.push_back(0.0);
  for (int k = 1; int(nodes.size()) < count; ++k) {
    nodes.push_back(double(k) / double(count));
    if (int(nodes.size()) < count) nodes.push_back(-double(k) / double(count));
  }
  const std::vector<double> w = fd_weights(0.0, nodes, 1);

  const int K = projection.observed_dim();
  MomentTensor acc(order, K);
  for (int i = 0; i < count; ++i) {
    const double h = nodes[std::size_t(i)];
    const Signal xh = (1.0 - h) * x + h * x_tilde;
    const Eigen::VectorXd wh = (1.0 - h) * theta.weights + h * theta_tilde.weights;
    MomentTensor T = weighted_moment(xh, *theta.group, wh, projection, order);
    T *= w[std::size_t(i)];
    acc += T;
  }
  double s = 0.0;
  for (std::size_t f = 0; f < acc.size(); ++f) s += acc[f] * acc[f];
  return s / factorial(order);
}

namespace {

struct WitnessParam {
  // Decodes an optimizer vector into (x_tilde, theta_weights).
  int signal_dim = 0;
  std::vector<int> free_coords;
  bool theta_fixed = true;
  Eigen::VectorXd fixed_weights;
  int group_order = 0;

  int param_count() const {
    return int(free_coords.size()) + (theta_fixed ? 0 : group_order);
  }

  void decode(const Eigen::VectorXd& u, Signal& x_out, Eigen::VectorXd& w_out) const {
    x_out.setZero(signal_dim);
    for (std::size_t i = 0; i < free_coords.size(); ++i)
      x_out[free_coords[i]] = u[int(i)];
    if (theta_fixed) {
      w_out = fixed_weights;
      return;
    }
    // Softmax keeps the candidate distribution strictly inside the simplex.
    const int m = group_order;
    double mx = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < m; ++g) mx = std::max(mx, u[int(free_coords.size()) + g]);
    w_out.resize(m);
    double sum = 0.0;
    for (int g = 0; g < m; ++g) {
      w_out[g] = std::exp(u[int(free_coords.size()) + g] - mx);
      sum += w_out[g];
    }
    w_out /= sum;
  }
};

double orbit_distance(const Signal& cand, const Signal& x, const FiniteGroup& group) {
  double best = std::numeric_limits<double>::infinity();
  for (const GroupElement& g : group.elements())
    best = std::min(best, (g.matrix * cand - x).norm());
  return best;
}

} // namespace

CutoffReport cutoff_search(const Signal& x, const GroupDistribution& theta,
                           const Projection& projection, const ConstraintSet& constraints,
                           const CutoffSearchOptions& opts) {
  theta.validate();
  const int L = int(x.size());
  if (theta.group->dimension() != L)
    throw std::invalid_argument("cutoff_search: group dimension differs from signal dimension");
  if (opts.max_order < 1) throw std::invalid_argument("cutoff_search: max_order must be >= 1");
  if (opts.restarts < 1) throw std::invalid_argument("cutoff_search: restarts must be >= 1");

  std::vector<char> pinned(std::size_t(L), 0);
  for (int z : constraints.zero_indices) {
    if (z < 0 || z >= L)
      throw std::invalid_argument("cutoff_search: zero index out of range");
    if (pinned[std::size_t(z)])
      throw std::invalid_argument("cutoff_search: duplicate zero index");
    pinned[std::size_t(z)] = 1;
  }

  WitnessParam par;
  par.signal_dim = L;
  par.theta_fixed = constraints.theta_fixed;
  par.fixed_weights = theta.weights;
  par.group_order = theta.group->order();
  for (int i = 0; i < L; ++i)
    if (!pinned[std::size_t(i)]) par.free_coords.push_back(i);
  if (par.param_count() < 1)
    throw std::invalid_argument("cutoff_search: constraint set leaves no free parameters");

  const FiniteGroup& G = *theta.group;
  const int scan_cap = opts.max_order + 3;
  std::vector<MomentTensor> ref;
  ref.reserve(std::size_t(scan_cap));
  for (int n = 1; n <= scan_cap; ++n)
    ref.push_back(exact_moment(x, theta, projection, n));

  double ref_scale = 1.0;
  for (int n = 1; n <= opts.max_order; ++n) {
    const MomentTensor& R = ref[std::size_t(n) - 1];
    double s = 0.0;
    for (std::size_t f = 0; f < R.size(); ++f) s += R[f] * R[f];
    ref_scale += s;
  }
  const double penalty_weight = 1e6 * ref_scale;

  const double spread =
      opts.init_spread > 0.0
          ? opts.init_spread
          : std::max(1.0, x.size() > 0 ? x.cwiseAbs().maxCoeff() : 1.0);

  // Residual through stage d for a decoded candidate (no penalty).
  auto residual_through = [&](const Signal& cx, const Eigen::VectorXd& cw, int d) {
    double s = 0.0;
    for (int n = 1; n <= d; ++n) {
      const MomentTensor T = weighted_moment(cx, G, cw, projection, n);
      s += tensor_sq_dist(T, ref[std::size_t(n) - 1]);
    }
    return s;
  };

  struct StageBest {
    bool found = false;
    double residual = std::numeric_limits<double>::infinity();
    double penalized = std::numeric_limits<double>::infinity();
    Signal x;
    Eigen::VectorXd w;
    double dist = 0.0;
  };

  StageBest fallback; // best raw stage-1 candidate, used when nothing certifies
  StageBest last_witness;
  int last_stage = 0;

  for (int d = 1; d <= opts.max_order; ++d) {
    auto objective = [&](const Eigen::VectorXd& u) {
      Signal cx;
      Eigen::VectorXd cw;
      par.decode(u, cx, cw);
      double s = residual_through(cx, cw, d);
      const double dist = orbit_distance(cx, x, G);
      if (dist < opts.orbit_floor) {
        const double t = 1.0 - dist / opts.orbit_floor;
        s += penalty_weight * t * t;
      }
      return s;
    };

    struct Slot {
      double penalized = std::numeric_limits<double>::infinity();
      Eigen::VectorXd u;
    };
    std::vector<Slot> slots(std::size_t(opts.restarts));
    const std::uint64_t stage_key =
        rng::derive_key(opts.seed, 0x632d7461ull + std::uint64_t(d));
    parallel_for_index(opts.restarts, std::max(1, opts.threads), [&](std::int64_t r) {
      rng::SampleStream st(stage_key, std::uint64_t(r));
      Eigen::VectorXd u0(par.param_count());
      for (std::size_t i = 0; i < par.free_coords.size(); ++i) {
        const double center = (r % 2 == 0) ? x[par.free_coords[i]] : 0.0;
        u0[int(i)] = center + spread * st.next_gauss();
      }
      if (!par.theta_fixed)
        for (int g = 0; g < par.group_order; ++g)
          u0[int(par.free_coords.size()) + g] = 0.5 * st.next_gauss();
      NelderMeadOptions nm;
      nm.max_iters = 4000;
      const NelderMeadResult res = nelder_mead(objective, u0, 0.3 * spread, nm);
      slots[std::size_t(r)].penalized = res.fval;
      slots[std::size_t(r)].u = res.x;
    });

    StageBest stage;
    StageBest raw_best;
    for (const Slot& s : slots) { // index order: deterministic winner
      Signal cx;
      Eigen::VectorXd cw;
      par.decode(s.u, cx, cw);
      const double dist = orbit_distance(cx, x, G);
      const double resid = residual_through(cx, cw, d);
      if (s.penalized < raw_best.penalized) {
        raw_best.found = true;
        raw_best.penalized = s.penalized;
        raw_best.residual = resid;
        raw_best.x = cx;
        raw_best.w = cw;
        raw_best.dist = dist;
      }
      if (resid <= opts.match_tol && dist >= opts.orbit_floor && resid < stage.residual) {
        stage.found = true;
        stage.residual = resid;
        stage.penalized = s.penalized;
        stage.x = cx;
        stage.w = cw;
        stage.dist = dist;
      }
    }
    if (d == 1) fallback = raw_best;
    if (!stage.found) break;
    last_witness = stage;
    last_stage = d;
  }

  CutoffReport rep;
  if (last_stage == 0) {
    rep.d_bar = 1;
    rep.certified = false;
    rep.witness_x = fallback.found ? fallback.x : Signal::Zero(L);
    rep.witness_theta =
        make_distribution(theta.group, fallback.found ? fallback.w : theta.weights);
    rep.witness_orbit_dist = fallback.found ? fallback.dist : 0.0;
    const MomentTensor T1 = exact_moment(rep.witness_x, rep.witness_theta, projection, 1);
    rep.k_at_cutoff = tensor_sq_dist(T1, ref[0]) / 1.0;
    return rep;
  }

  rep.certified = true;
  rep.witness_x = last_witness.x;
  rep.witness_theta = make_distribution(theta.group, last_witness.w);
  rep.witness_orbit_dist = last_witness.dist;
  for (int n = 1; n <= last_stage; ++n) {
    const MomentTensor T = weighted_moment(last_witness.x, G, last_witness.w, projection, n);
    rep.matched.emplace_back(n, tensor_sq_dist(T, ref[std::size_t(n) - 1]));
  }
  rep.d_bar = 0;
  for (int n = last_stage + 1; n <= scan_cap; ++n) {
    const MomentTensor T = weighted_moment(last_witness.x, G, last_witness.w, projection, n);
    const double raw = tensor_sq_dist(T, ref[std::size_t(n) - 1]);
    if (raw > opts.match_tol) {
      rep.d_bar = n;
      rep.k_at_cutoff = raw / factorial(n);
      break;
    }
  }
  if (rep.d_bar == 0) {
    // Witness matched every probed order; report the first unprobed order.
    rep.d_bar = last_stage + 1;
    rep.k_at_cutoff = 0.0;
    rep.note = "witness indistinguishable through probed orders";
  }
  return rep;
}

std::string to_text(const CutoffReport& report) {
  std::ostringstream os;
  os << "moment order cutoff report\n";
  os << "d_bar: " << report.d_bar << "\n";
  os << "certified: " << (report.certified ? "yes" : "no") << "\n";
  os << "witness_orbit_distance: " << fmt_g17(report.witness_orbit_dist) << "\n";
  os << "witness_x:";
  for (int i = 0; i < report.witness_x.size(); ++i)
    os << " " << fmt_g17(report.witness_x[i]);
  os << "\n";
  os << "witness_theta:";
  for (int i = 0; i < report.witness_theta.weights.size(); ++i)
    os << " " << fmt_g17(report.witness_theta.weights[i]);
  os << "\n";
  os << "matched_orders:\n";
  for (const auto& [n, resid] : report.matched)
    os << "  order " << n << ": residual " << fmt_g17(resid) << "\n";
  os << "k_at_cutoff: " << fmt_g17(report.k_at_cutoff) << "\n";
  if (!report.note.empty()) os << "note: " << report.note << "\n";
  return os.str();
}

void write_tensor_csv(const MomentTensor& t, std::ostream& out) {
  std::vector<int> idx(std::size_t(t.order()), 0);
  if (t.order() == 0) {
    out << t.order() << ",1," << fmt_g17(t[0]) << "\n";
    return;
  }
  do {
    out << t.order() << ",";
    for (std::size_t i = 0; i < idx.size(); ++i) out << (i ? " " : "") << (idx[i] + 1);
    out << "," << fmt_g17(t.at(idx)) << "\n";
  } while (next_multi_index(idx, t.dim()));
}

} // namespace gac
