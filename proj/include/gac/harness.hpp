#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gac/bounds.hpp"
#include "gac/channel.hpp"
#include "gac/group.hpp"
#include "gac/toml.hpp"

// Experiment harness: TOML-subset configs resolved into validated
// experiment descriptions, deterministic CSV/text outputs, and the
// worked-example verification table.
//
// Config schema (sections and keys; unknown keys are ignored):
//   [experiment] kind, seed, threads, out
//   [model]      signal = [..], sigma
//   [model.group]      kind = "cyclic-shift" | "explicit", matrices = [..]
//   [model.theta]      kind = "uniform" | "point-mass" | "weights",
//                      index (1-based), weights = [..]
//   [model.projection] kind = "identity" | "coordinate" | "general",
//                      coords = [..] (1-based), rows, matrix = [..]
//   [alternative]      signal = [..]; [alternative.theta] like model.theta
//   [grid]       sigma = [..], n_kind = "explicit" | "power",
//                n_values = [..], n_coeff, n_exponent
//   [simulate]   n_samples, format = "binary" | "csv", keep_assignments
//   [moments]    orders = [..], n_samples, debias
//   [cutoff]     max_order, match_tol, orbit_floor, restarts,
//                zero_indices = [..] (1-based), theta_fixed
//   [divergence] which = "both" | "chi2" | "kl",
//                method = "auto" | "quadrature" | "monte-carlo", budget,
//                with_leading_order
//   [bound]      witnesses = [..] (signals concatenated, chunked by L),
//                method = "leading-order" | "quadrature" | "monte-carlo",
//                budget
//   [mle]        replicates, restarts, max_iters, tol,
//                theta_mode = "known" | "estimated", init_scale, with_bound
//   [verify]     ex1_b, ex1_c, ex2_a, ex2_b

namespace gac {

struct ExperimentConfig {
  toml::Document doc;
  std::string kind;
  std::uint64_t seed = 0;
  int threads = 0; // 0: resolve from GAC_THREADS / hardware
  std::string out;

  Signal signal;
  double sigma = 1.0;
  std::shared_ptr<const FiniteGroup> group;
  GroupDistribution theta;
  Projection projection;

  std::vector<double> sigma_grid;       // empty: use [model].sigma alone
  std::vector<std::int64_t> n_grid;     // aligned with sigma_grid when needed

  std::optional<Signal> alt_signal;
  std::optional<GroupDistribution> alt_theta;

  std::uint64_t digest = 0;

  ChannelModel model_at(double sigma_value) const;
  ChannelModel alternative_at(double sigma_value) const;
};

/// Parse and semantically validate a config file. Errors carry the file
/// name and the offending key path.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_document(toml::Document doc);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::string> plot; // optional two-column plot-data file
};

struct RunRecord {
  std::string kind;
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  std::string out_path;
  int rows = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> flags;
  int exit_code = 0;        // 0 ok, 2 flagged numerical failure
  std::string summary;      // one-line human summary
};

/// Execute the configured experiment, writing its output file(s). Throws on
/// configuration errors; numerical refusals and per-row failures become
/// flags and exit_code 2 instead of exceptions.
RunRecord run_experiment(const ExperimentConfig& config, const RunOverrides& overrides = {});

struct VerifyRow {
  std::string name;
  std::string status; // "PASS", "FAIL", "SKIP"
  double expected = 0.0;
  double actual = 0.0;
  std::string note;
};

struct VerifyReport {
  std::vector<VerifyRow> rows;
  bool all_pass = true; // no FAIL rows (SKIP is acceptable)
  std::string text() const;
};

/// Check the toolkit against the worked closed forms of the two reference
/// examples: the cyclic-shift triple with one zero coordinate observed
/// through the first two coordinates (parameters b, c), and the two-point
/// scalar channel (parameters a2, b2). Degenerate parameter choices skip
/// the rows that need them.
VerifyReport verify_examples(double b = 1.0, double c = 2.0, double a2 = 1.0, double b2 = 2.0);

} // namespace gac
