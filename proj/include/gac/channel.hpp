#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gac/group.hpp"

// The observation channel: Y = P G x + sigma Z, with G drawn from a
// distribution over a finite group, P a fixed linear projection R^L -> R^K,
// and Z standard Gaussian noise in R^K.

namespace gac {

/// Linear observation map. Constructed as identity, a coordinate selection,
/// or a general K x L matrix.
struct Projection {
  enum class Kind { identity, coordinate, general };

  Matrix matrix; // K x L
  Kind kind = Kind::identity;
  std::vector<int> rows; // kept for coordinate projections (reporting)

  static Projection identity(int signal_dim);
  /// Selects the given signal coordinates (0-based), in the given order.
  static Projection coordinate(int signal_dim, std::vector<int> coords);
  static Projection general(Matrix m);

  int observed_dim() const { return int(matrix.rows()); }
  int signal_dim() const { return int(matrix.cols()); }
};

/// Full channel specification. `validate` checks dimensional consistency and
/// sigma > 0.
struct ChannelModel {
  Signal x;
  GroupDistribution theta;
  Projection projection;
  double sigma = 1.0;

  void validate() const;
  int signal_dim() const { return int(x.size()); }
  int observed_dim() const { return projection.observed_dim(); }

  /// FNV-1a digest of the model's semantic content (dimensions, matrices,
  /// weights, sigma), independent of how the model was constructed.
  std::uint64_t digest() const;
};

/// A simulated (or loaded) set of observations, one per row.
struct ObservationBatch {
  Eigen::MatrixXd observations;       // n x K, row j is Y_j
  std::vector<int> group_assignments; // empty when withheld
  std::uint64_t seed = 0;
  std::uint64_t model_digest = 0;
  bool normalized = false; // true after normalized_batch

  std::int64_t n_samples() const { return observations.rows(); }
  int observed_dim() const { return int(observations.cols()); }
};

/// Draw n observations. Row j is a pure function of (model, seed, stream, j):
/// block 0 of the per-sample counter supplies the group draw, blocks 1..
/// supply the Gaussian noise. Identical inputs give bit-identical batches
/// regardless of thread count or call order.
ObservationBatch simulate(const ChannelModel& model, std::int64_t n_samples,
                          std::uint64_t seed, std::uint64_t stream = 0,
                          bool keep_assignments = true);

/// Rows divided by sigma (noise scale 1 in the normalized convention).
ObservationBatch normalized_batch(const ObservationBatch& batch, double sigma);

/// Binary batch format: magic "GACB", version u32, then n (u64), K (u64),
/// seed (u64), model digest (u64), flags (u64, bit 0 = has assignments,
/// bit 1 = normalized), row-major float64 data, then n int32 assignments if
/// present. Little-endian throughout; round-trips exactly.
void write_batch(const ObservationBatch& batch, const std::string& path);
ObservationBatch read_batch(const std::string& path);

/// CSV export: deterministic comment header (digest, seed), column names
/// y1..yK (plus g when assignments are kept), values in %.17g.
void write_batch_csv(const ObservationBatch& batch, const std::string& path);

} // namespace gac
