#include "gac/channel.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gac/digest.hpp"
#include "gac/rng.hpp"

namespace gac {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void Fnv1a::absorb_bytes(const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    state ^= b[i];
    state *= 1099511628211ull;
  }
}

void Fnv1a::absorb(std::string_view s) { absorb_bytes(s.data(), s.size()); }

void Fnv1a::absorb_u64(std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
  absorb_bytes(b, 8);
}

void Fnv1a::absorb_i64(std::int64_t v) { absorb_u64(std::uint64_t(v)); }

void Fnv1a::absorb_f64(double v) {
  absorb(fmt_g17(v));
  absorb(";");
}

Projection Projection::identity(int signal_dim) {
  if (signal_dim < 1) throw std::invalid_argument("projection: dimension must be positive");
  Projection p;
  p.kind = Kind::identity;
  p.matrix = Matrix::Identity(signal_dim, signal_dim);
  return p;
}

Projection Projection::coordinate(int signal_dim, std::vector<int> coords) {
  if (signal_dim < 1) throw std::invalid_argument("projection: dimension must be positive");
  if (coords.empty()) throw std::invalid_argument("projection: no coordinates selected");
  Projection p;
  p.kind = Kind::coordinate;
  p.matrix = Matrix::Zero(int(coords.size()), signal_dim);
  for (std::size_t r = 0; r < coords.size(); ++r) {
    const int c = coords[r];
    if (c < 0 || c >= signal_dim)
      throw std::invalid_argument("projection: coordinate index out of range");
    p.matrix(int(r), c) = 1.0;
  }
  p.rows = std::move(coords);
  return p;
}

Projection Projection::general(Matrix m) {
  if (m.rows() < 1 || m.cols() < 1)
    throw std::invalid_argument("projection: empty matrix");
  Projection p;
  p.kind = Kind::general;
  p.matrix = std::move(m);
  return p;
}

void ChannelModel::validate() const {
  theta.validate();
  const int L = int(x.size());
  if (L < 1) throw std::invalid_argument("model: empty signal");
  if (theta.group->dimension() != L)
    throw std::invalid_argument("model: group dimension differs from signal dimension");
  if (projection.signal_dim() != L)
    throw std::invalid_argument("model: projection input dimension differs from signal dimension");
  if (!(sigma > 0.0)) throw std::invalid_argument("model: sigma must be positive");
  for (int i = 0; i < L; ++i)
    if (!std::isfinite(x[i])) throw std::invalid_argument("model: non-finite signal entry");
}

std::uint64_t ChannelModel::digest() const {
  Fnv1a h;
  h.absorb("model:v1;");
  h.absorb_i64(x.size());
  for (int i = 0; i < x.size(); ++i) h.absorb_f64(x[i]);
  h.absorb_i64(theta.group->order());
  for (const GroupElement& g : theta.group->elements())
    for (int r = 0; r < g.matrix.rows(); ++r)
      for (int c = 0; c < g.matrix.cols(); ++c) h.absorb_f64(g.matrix(r, c));
  for (int i = 0; i < theta.weights.size(); ++i) h.absorb_f64(theta.weights[i]);
  h.absorb_i64(projection.matrix.rows());
  h.absorb_i64(projection.matrix.cols());
  for (int r = 0; r < projection.matrix.rows(); ++r)
    for (int c = 0; c < projection.matrix.cols(); ++c) h.absorb_f64(projection.matrix(r, c));
  h.absorb_f64(sigma);
  return h.value();
}

ObservationBatch simulate(const ChannelModel& model, std::int64_t n_samples,
                          std::uint64_t seed, std::uint64_t stream,
                          bool keep_assignments) {
  model.validate();
  if (n_samples < 0) throw std::invalid_argument("simulate: negative sample count");
  const int K = model.observed_dim();
  const int m = model.theta.group->order();

  // Cumulative weights for the inverse-CDF group draw. The last edge is
  // forced to 1 so a uniform draw of 0.999...9 cannot fall off the end.
  std::vector<double> cum(std::size_t(m), 0.0);
  double acc = 0.0;
  for (int g = 0; g < m; ++g) {
    acc += model.theta.weights[g];
    cum[std::size_t(g)] = acc;
  }
  cum[std::size_t(m - 1)] = 1.0;

  std::vector<Signal> means = orbit(model.x, *model.theta.group);
  for (auto& v : means) v = model.projection.matrix * v;

  ObservationBatch batch;
  batch.observations.resize(n_samples, K);
  if (keep_assignments) batch.group_assignments.assign(std::size_t(n_samples), 0);
  batch.seed = seed;
  batch.model_digest = model.digest();

  const std::uint64_t key = rng::derive_key(seed, stream);
  for (std::int64_t j = 0; j < n_samples; ++j) {
    const double u = rng::uniform(key, std::uint64_t(j), 0, 0);
    int g = 0;
    while (u >= cum[std::size_t(g)] && g + 1 < m) ++g;
    if (keep_assignments) batch.group_assignments[std::size_t(j)] = g;
    const Signal& mu = means[std::size_t(g)];
    for (int k = 0; k < K; k += 2) {
      const rng::GaussPair z = rng::gauss_pair(key, std::uint64_t(j), std::uint32_t(1 + k / 2));
      batch.observations(j, k) = mu[k] + model.sigma * z.z0;
      if (k + 1 < K) batch.observations(j, k + 1) = mu[k + 1] + model.sigma * z.z1;
    }
  }
  return batch;
}

ObservationBatch normalized_batch(const ObservationBatch& batch, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("normalized_batch: sigma must be positive");
  if (batch.normalized) throw std::invalid_argument("normalized_batch: already normalized");
  ObservationBatch out = batch;
  out.observations /= sigma;
  out.normalized = true;
  return out;
}

namespace {

constexpr char kMagic[4] = {'G', 'A', 'C', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

} // namespace

void write_batch(const ObservationBatch& batch, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_batch: cannot open " + path);
  f.write(kMagic, 4);
  put_u32(f, kVersion);
  put_u64(f, std::uint64_t(batch.n_samples()));
  put_u64(f, std::uint64_t(batch.observed_dim()));
  put_u64(f, batch.seed);
  put_u64(f, batch.model_digest);
  std::uint64_t flags = 0;
  if (!batch.group_assignments.empty()) flags |= 1;
  if (batch.normalized) flags |= 2;
  put_u64(f, flags);
  // Row-major doubles; this code only targets little-endian IEEE hosts.
  for (std::int64_t r = 0; r < batch.n_samples(); ++r)
    for (int c = 0; c < batch.observed_dim(); ++c) {
      const double v = batch.observations(r, c);
      f.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  for (int a : batch.group_assignments) {
    const std::int32_t v = a;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  if (!f) throw std::runtime_error("write_batch: write failed for " + path);
}

ObservationBatch read_batch(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_batch: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("read_batch: bad magic in " + path);
  const std::uint32_t version = get_u32(f);
  if (version != kVersion) throw std::runtime_error("read_batch: unsupported version");
  const std::uint64_t n = get_u64(f);
  const std::uint64_t K = get_u64(f);
  ObservationBatch batch;
  batch.seed = get_u64(f);
  batch.model_digest = get_u64(f);
  const std::uint64_t flags = get_u64(f);
  batch.normalized = (flags & 2) != 0;
  if (K == 0 || K > 1u << 20) throw std::runtime_error("read_batch: implausible dimension");
  batch.observations.resize(std::int64_t(n), int(K));
  for (std::int64_t r = 0; r < std::int64_t(n); ++r)
    for (int c = 0; c < int(K); ++c) {
      double v;
      f.read(reinterpret_cast<char*>(&v), sizeof v);
      batch.observations(r, c) = v;
    }
  if (flags & 1) {
    batch.group_assignments.resize(std::size_t(n));
    for (std::uint64_t j = 0; j < n; ++j) {
      std::int32_t v;
      f.read(reinterpret_cast<char*>(&v), sizeof v);
      batch.group_assignments[std::size_t(j)] = v;
    }
  }
  if (!f) throw std::runtime_error("read_batch: truncated file " + path);
  return batch;
}

void write_batch_csv(const ObservationBatch& batch, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_batch_csv: cannot open " + path);
  f << "# model_digest=" << batch.model_digest << "\n";
  f << "# seed=" << batch.seed << "\n";
  const bool with_g = !batch.group_assignments.empty();
  for (int c = 0; c < batch.observed_dim(); ++c) f << (c ? "," : "") << "y" << (c + 1);
  if (with_g) f << ",g";
  f << "\n";
  for (std::int64_t r = 0; r < batch.n_samples(); ++r) {
    for (int c = 0; c < batch.observed_dim(); ++c)
      f << (c ? "," : "") << fmt_g17(batch.observations(r, c));
    if (with_g) f << "," << batch.group_assignments[std::size_t(r)];
    f << "\n";
  }
  if (!f) throw std::runtime_error("write_batch_csv: write failed for " + path);
}

} // namespace gac
