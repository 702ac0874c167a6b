#include "gac/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gac/digest.hpp"
#include "gac/divergence.hpp"
#include "gac/estimators.hpp"
#include "gac/moments.hpp"
#include "gac/parallel.hpp"
#include "gac/rng.hpp"
#include "gac/version.hpp"

namespace gac {

namespace {

[[noreturn]] void config_error(const toml::Document& doc, const std::string& path,
                               const std::string& msg) {
  throw std::runtime_error(doc.origin() + ": key '" + path + "': " + msg);
}

Signal to_signal(const std::vector<double>& v) {
  Signal s(std::int64_t(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) s[std::int64_t(i)] = v[i];
  return s;
}

GroupDistribution theta_from(const toml::Document& doc, const std::string& prefix,
                             std::shared_ptr<const FiniteGroup> group) {
  const std::string kind = doc.get_string(prefix + ".kind", "uniform");
  if (kind == "uniform") return uniform_distribution(std::move(group));
  if (kind == "point-mass") {
    const std::int64_t idx = doc.get_integer(prefix + ".index");
    if (idx < 1 || idx > group->order())
      config_error(doc, prefix + ".index", "1-based element index out of range");
    return point_mass(std::move(group), int(idx - 1));
  }
  if (kind == "weights") {
    const std::vector<double> w = doc.get_number_array(prefix + ".weights");
    if (int(w.size()) != group->order())
      config_error(doc, prefix + ".weights", "weight count differs from group order");
    try {
      return make_distribution(std::move(group), to_signal(w));
    } catch (const std::invalid_argument& e) {
      config_error(doc, prefix + ".weights", e.what());
    }
  }
  config_error(doc, prefix + ".kind", "expected uniform | point-mass | weights");
}

Projection projection_from(const toml::Document& doc, int L) {
  const std::string kind = doc.get_string("model.projection.kind", "identity");
  if (kind == "identity") return Projection::identity(L);
  if (kind == "coordinate") {
    const std::vector<double> raw = doc.get_number_array("model.projection.coords");
    std::vector<int> coords;
    for (double v : raw) {
      const int c = int(v);
      if (double(c) != v || c < 1 || c > L)
        config_error(doc, "model.projection.coords", "entries must be 1-based coordinates");
      coords.push_back(c - 1);
    }
    return Projection::coordinate(L, coords);
  }
  if (kind == "general") {
    const std::int64_t rows = doc.get_integer("model.projection.rows");
    const std::vector<double> flat = doc.get_number_array("model.projection.matrix");
    if (rows < 1 || flat.size() % std::size_t(rows) != 0 ||
        int(flat.size() / std::size_t(rows)) != L)
      config_error(doc, "model.projection.matrix",
                   "flattened row-major size must be rows * signal dimension");
    Matrix M(rows, L);
    for (std::int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < L; ++c) M(r, c) = flat[std::size_t(r) * std::size_t(L) + std::size_t(c)];
    return Projection::general(M);
  }
  config_error(doc, "model.projection.kind", "expected identity | coordinate | general");
}

bool is_failure_flag(const std::string& flag) {
  return flag.find("heavy-tails") != std::string::npos ||
         flag.find("quadrature-not-converged") != std::string::npos ||
         flag.find("error:") != std::string::npos ||
         flag.find("no-usable-witness") != std::string::npos ||
         flag.find("singular-mstep") != std::string::npos;
}

void note_flag(RunRecord& rec, const std::string& flag) {
  if (flag.empty()) return;
  if (std::find(rec.flags.begin(), rec.flags.end(), flag) == rec.flags.end())
    rec.flags.push_back(flag);
  if (is_failure_flag(flag)) rec.exit_code = 2;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open output file " + path);
  f << body;
  if (!f) throw std::runtime_error("write failed for " + path);
}

struct CsvBuilder {
  std::ostringstream os;
  int rows = 0;

  CsvBuilder(std::uint64_t digest, std::uint64_t seed) {
    os << "# config_digest=" << digest << "\n";
    os << "# seed=" << seed << "\n";
    os << "# version=" << toolkit_version << "\n";
  }
  void columns(const std::string& header) { os << header << "\n"; }
  void row(const std::string& line) {
    os << line << "\n";
    ++rows;
  }
  std::string str() const { return os.str(); }
};

std::string form_name(BoundForm f) {
  switch (f) {
    case BoundForm::exact_chi2: return "exact-chi2";
    case BoundForm::leading_order: return "leading-order";
    case BoundForm::cr_limit: return "cr-limit";
  }
  return "?";
}

DivergenceMethod parse_bound_method(const toml::Document& doc, const std::string& key) {
  const std::string m = doc.get_string(key, "leading-order");
  if (m == "leading-order") return DivergenceMethod::leading_order;
  if (m == "quadrature") return DivergenceMethod::quadrature;
  if (m == "monte-carlo") return DivergenceMethod::monte_carlo;
  config_error(doc, key, "expected leading-order | quadrature | monte-carlo");
}

std::vector<std::pair<Signal, GroupDistribution>> witnesses_from(const ExperimentConfig& cfg) {
  const std::vector<double> flat = cfg.doc.get_number_array("bound.witnesses");
  const std::size_t L = std::size_t(cfg.signal.size());
  if (flat.empty() || flat.size() % L != 0)
    config_error(cfg.doc, "bound.witnesses",
                 "expected one or more signals of the model dimension, concatenated");
  GroupDistribution wt = cfg.doc.has("bound.theta.kind") || cfg.doc.has("bound.theta.weights") ||
                                 cfg.doc.has("bound.theta.index")
                             ? theta_from(cfg.doc, "bound.theta", cfg.group)
                             : cfg.theta;
  std::vector<std::pair<Signal, GroupDistribution>> out;
  for (std::size_t off = 0; off < flat.size(); off += L) {
    Signal s = Signal::Zero(std::int64_t(L));
    for (std::size_t i = 0; i < L; ++i) s[std::int64_t(i)] = flat[off + i];
    out.emplace_back(std::move(s), wt);
  }
  return out;
}

// (sigma, N) grid for experiments that need sample counts.
std::vector<SweepPoint> grid_points(const ExperimentConfig& cfg) {
  std::vector<SweepPoint> pts;
  const std::vector<double>& sigmas =
      cfg.sigma_grid.empty() ? std::vector<double>{cfg.sigma} : cfg.sigma_grid;
  if (cfg.n_grid.size() != sigmas.size())
    config_error(cfg.doc, "grid", "no sample-count rule for this experiment");
  for (std::size_t i = 0; i < sigmas.size(); ++i)
    pts.push_back(SweepPoint{sigmas[i], cfg.n_grid[i]});
  return pts;
}

} // namespace

ChannelModel ExperimentConfig::model_at(double sigma_value) const {
  ChannelModel m{signal, theta, projection, sigma_value};
  m.validate();
  return m;
}

ChannelModel ExperimentConfig::alternative_at(double sigma_value) const {
  if (!alt_signal) throw std::runtime_error("config: [alternative] section required");
  ChannelModel m{*alt_signal, alt_theta ? *alt_theta : theta, projection, sigma_value};
  m.validate();
  return m;
}

ExperimentConfig config_from_document(toml::Document doc) {
  ExperimentConfig cfg;
  cfg.kind = doc.get_string("experiment.kind");
  cfg.seed = std::uint64_t(doc.get_integer("experiment.seed", 0));
  cfg.threads = int(doc.get_integer("experiment.threads", 0));
  cfg.out = doc.get_string("experiment.out", "");
  cfg.digest = doc.digest();

  static const char* kinds[] = {"simulate",   "moments",     "cutoff", "divergence-sweep",
                                "bound-sweep", "mle-sweep",  "verify"};
  if (std::find_if(std::begin(kinds), std::end(kinds),
                   [&](const char* k) { return cfg.kind == k; }) == std::end(kinds))
    config_error(doc, "experiment.kind", "unknown experiment kind '" + cfg.kind + "'");

  if (cfg.kind == "verify") {
    cfg.doc = std::move(doc);
    return cfg;
  }

  cfg.signal = to_signal(doc.get_number_array("model.signal"));
  if (cfg.signal.size() < 1) config_error(doc, "model.signal", "empty signal");
  const int L = int(cfg.signal.size());
  cfg.sigma = doc.get_number("model.sigma", 1.0);
  if (!(cfg.sigma > 0.0)) config_error(doc, "model.sigma", "must be positive");

  const std::string gkind = doc.get_string("model.group.kind", "cyclic-shift");
  if (gkind == "cyclic-shift") {
    cfg.group = FiniteGroup::cyclic_shift(L);
  } else if (gkind == "explicit") {
    const std::vector<double> flat = doc.get_number_array("model.group.matrices");
    const std::size_t per = std::size_t(L) * std::size_t(L);
    if (flat.empty() || flat.size() % per != 0)
      config_error(doc, "model.group.matrices",
                   "expected row-major L x L matrices, concatenated");
    std::vector<Matrix> mats;
    for (std::size_t off = 0; off < flat.size(); off += per) {
      Matrix M(L, L);
      for (int r = 0; r < L; ++r)
        for (int c = 0; c < L; ++c)
          M(r, c) = flat[off + std::size_t(r) * std::size_t(L) + std::size_t(c)];
      mats.push_back(std::move(M));
    }
    cfg.group = FiniteGroup::from_matrices(std::move(mats));
  } else {
    config_error(doc, "model.group.kind", "expected cyclic-shift | explicit");
  }

  cfg.theta = theta_from(doc, "model.theta", cfg.group);
  cfg.projection = projection_from(doc, L);
  cfg.model_at(cfg.sigma); // dimension/positivity validation

  if (doc.has("alternative.signal")) {
    Signal alt = to_signal(doc.get_number_array("alternative.signal"));
    if (alt.size() != L) config_error(doc, "alternative.signal", "dimension mismatch");
    cfg.alt_signal = std::move(alt);
    if (doc.has("alternative.theta.kind") || doc.has("alternative.theta.weights") ||
        doc.has("alternative.theta.index"))
      cfg.alt_theta = theta_from(doc, "alternative.theta", cfg.group);
  }

  if (doc.has("grid.sigma")) {
    cfg.sigma_grid = doc.get_number_array("grid.sigma");
    for (double s : cfg.sigma_grid)
      if (!(s > 0.0)) config_error(doc, "grid.sigma", "entries must be positive");
  }
  const std::vector<double>& sigmas =
      cfg.sigma_grid.empty() ? std::vector<double>{cfg.sigma} : cfg.sigma_grid;
  const std::string n_kind = doc.get_string("grid.n_kind", "");
  if (n_kind == "explicit") {
    const std::vector<double> nv = doc.get_number_array("grid.n_values");
    if (nv.size() != sigmas.size())
      config_error(doc, "grid.n_values", "length must match the sigma grid");
    for (double v : nv) {
      if (v < 1 || double(std::int64_t(v)) != v)
        config_error(doc, "grid.n_values", "entries must be positive integers");
      cfg.n_grid.push_back(std::int64_t(v));
    }
  } else if (n_kind == "power") {
    const double c = doc.get_number("grid.n_coeff");
    const double m = doc.get_number("grid.n_exponent");
    for (double s : sigmas) {
      const double n = std::round(c * std::pow(s, m));
      if (!(n >= 1.0) || n > 9e15) config_error(doc, "grid.n_coeff", "rule gives unusable N");
      cfg.n_grid.push_back(std::int64_t(n));
    }
  } else if (!n_kind.empty()) {
    config_error(doc, "grid.n_kind", "expected explicit | power");
  }

  cfg.doc = std::move(doc);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_document(toml::Document::parse_file(path));
}

namespace {

void run_simulate(const ExperimentConfig& cfg, std::uint64_t seed, int /*threads*/,
                  const std::string& out, RunRecord& rec) {
  const std::int64_t n = cfg.doc.get_integer("simulate.n_samples");
  if (n < 1) config_error(cfg.doc, "simulate.n_samples", "must be >= 1");
  const bool keep = cfg.doc.get_bool("simulate.keep_assignments", true);
  const std::string format = cfg.doc.get_string("simulate.format", "binary");
  const ObservationBatch batch = simulate(cfg.model_at(cfg.sigma), n, seed, 0, keep);
  if (format == "binary") {
    write_batch(batch, out);
  } else if (format == "csv") {
    write_batch_csv(batch, out);
  } else if (format == "both") {
    write_batch(batch, out);
    write_batch_csv(batch, out + ".csv");
  } else {
    config_error(cfg.doc, "simulate.format", "expected binary | csv | both");
  }
  rec.rows = int(std::min<std::int64_t>(n, 1 << 30));
  std::ostringstream s;
  s << "wrote " << n << " observations to " << out;
  rec.summary = s.str();
}

void run_moments(const ExperimentConfig& cfg, std::uint64_t seed, int /*threads*/,
                 const std::string& out, RunRecord& rec) {
  std::vector<double> orders_raw = cfg.doc.get_number_array("moments.orders", {1, 2, 3});
  std::vector<int> orders;
  for (double v : orders_raw) {
    if (v < 0 || double(int(v)) != v)
      config_error(cfg.doc, "moments.orders", "entries must be nonnegative integers");
    orders.push_back(int(v));
  }
  const std::int64_t n = cfg.doc.get_integer("moments.n_samples", 0);
  const bool debias = cfg.doc.get_bool("moments.debias", true);

  std::optional<ObservationBatch> batch;
  if (n > 0) batch = simulate(cfg.model_at(cfg.sigma), n, seed, 0, false);

  CsvBuilder csv(cfg.digest, seed);
  csv.columns(n > 0 ? "order,index,exact,empirical,abs_err" : "order,index,exact");
  for (int ord : orders) {
    const MomentTensor exact = exact_moment(cfg.signal, cfg.theta, cfg.projection, ord);
    std::optional<MomentTensor> emp;
    if (batch) emp = empirical_moment(*batch, ord, cfg.sigma, debias && ord <= 3);
    std::vector<int> idx(std::size_t(ord), 0);
    do {
      std::ostringstream line;
      line << ord << ",";
      if (idx.empty()) {
        line << "1";
      } else {
        for (std::size_t i = 0; i < idx.size(); ++i) line << (i ? " " : "") << (idx[i] + 1);
      }
      line << "," << fmt_g17(exact.at(idx));
      if (emp) {
        const double e = emp->at(idx);
        line << "," << fmt_g17(e) << "," << fmt_g17(std::abs(e - exact.at(idx)));
      }
      csv.row(line.str());
    } while (!idx.empty() && next_multi_index(idx, exact.dim()));
  }
  write_text_file(out, csv.str());
  rec.rows = csv.rows;
  rec.summary = "wrote " + std::to_string(csv.rows) + " tensor entries to " + out;
}

void run_cutoff(const ExperimentConfig& cfg, std::uint64_t seed, int threads,
                const std::string& out, RunRecord& rec) {
  ConstraintSet constraints;
  for (double v : cfg.doc.get_number_array("cutoff.zero_indices", {})) {
    const int z = int(v);
    if (double(z) != v || z < 1 || z > cfg.signal.size())
      config_error(cfg.doc, "cutoff.zero_indices", "entries must be 1-based coordinates");
    constraints.zero_indices.push_back(z - 1);
  }
  constraints.theta_fixed = cfg.doc.get_bool("cutoff.theta_fixed", true);

  CutoffSearchOptions opts;
  opts.max_order = int(cfg.doc.get_integer("cutoff.max_order", 4));
  opts.match_tol = cfg.doc.get_number("cutoff.match_tol", 1e-9);
  opts.orbit_floor = cfg.doc.get_number("cutoff.orbit_floor", 1e-3);
  opts.restarts = int(cfg.doc.get_integer("cutoff.restarts", 64));
  opts.seed = seed;
  opts.threads = threads;

  const CutoffReport report =
      cutoff_search(cfg.signal, cfg.theta, cfg.projection, constraints, opts);
  std::ostringstream body;
  body << "# config_digest=" << cfg.digest << "\n";
  body << "# seed=" << seed << "\n";
  body << "# version=" << toolkit_version << "\n";
  body << to_text(report);
  write_text_file(out, body.str());
  if (!report.note.empty()) note_flag(rec, report.note);
  rec.rows = 1;
  std::ostringstream s;
  s << "d_bar=" << report.d_bar << (report.certified ? " (certified)" : " (uncertified)")
    << ", report in " << out;
  rec.summary = s.str();
}

void run_divergence_sweep(const ExperimentConfig& cfg, std::uint64_t seed, int threads,
                          const std::string& out, const std::optional<std::string>& plot,
                          RunRecord& rec) {
  if (!cfg.alt_signal) config_error(cfg.doc, "alternative.signal", "required for this sweep");
  const std::string which = cfg.doc.get_string("divergence.which", "both");
  if (which != "both" && which != "chi2" && which != "kl")
    config_error(cfg.doc, "divergence.which", "expected both | chi2 | kl");
  std::string method_name = cfg.doc.get_string("divergence.method", "auto");
  if (method_name == "auto")
    method_name = cfg.projection.observed_dim() <= 2 ? "quadrature" : "monte-carlo";
  DivergenceMethod method;
  if (method_name == "quadrature") method = DivergenceMethod::quadrature;
  else if (method_name == "monte-carlo") method = DivergenceMethod::monte_carlo;
  else config_error(cfg.doc, "divergence.method", "expected auto | quadrature | monte-carlo");
  const std::int64_t budget = cfg.doc.get_integer("divergence.budget", 200000);
  const bool with_lead = cfg.doc.get_bool("divergence.with_leading_order", true);

  const std::vector<double> sigmas =
      cfg.sigma_grid.empty() ? std::vector<double>{cfg.sigma} : cfg.sigma_grid;

  CsvBuilder csv(cfg.digest, seed);
  csv.columns("sigma,measure,method,value,std_error,budget,lead_order,lead_value,flag");
  std::ostringstream plot_body;
  plot_body << "x,y\n";
  for (double s : sigmas) {
    const ChannelModel A = cfg.alternative_at(s);
    const ChannelModel B = cfg.model_at(s);
    auto emit = [&](const char* measure, const DivergenceEstimate& est,
                    const LeadingOrderValue& lead) {
      std::ostringstream line;
      line << fmt_g17(s) << "," << measure << "," << method_name << "," << fmt_g17(est.value)
           << "," << fmt_g17(est.std_error) << "," << est.budget << ",";
      if (with_lead) line << lead.order << "," << fmt_g17(lead.value);
      else line << ",";
      line << "," << est.flag;
      csv.row(line.str());
      note_flag(rec, est.flag);
    };
    if (which != "kl") {
      const DivergenceEstimate est = chi2_divergence(A, B, method, budget, seed, threads);
      emit("chi2", est, with_lead ? chi2_leading_order(A, B) : LeadingOrderValue{});
      plot_body << fmt_g17(s) << "," << fmt_g17(est.value) << "\n";
    }
    if (which != "chi2") {
      const DivergenceEstimate est = kl_divergence(A, B, method, budget, seed, threads);
      emit("kl", est, with_lead ? kl_leading_order(A, B) : LeadingOrderValue{});
      if (which == "kl") plot_body << fmt_g17(s) << "," << fmt_g17(est.value) << "\n";
    }
  }
  write_text_file(out, csv.str());
  if (plot) write_text_file(*plot, plot_body.str());
  rec.rows = csv.rows;
  rec.summary = "wrote " + std::to_string(csv.rows) + " divergence rows to " + out;
}

void run_bound_sweep(const ExperimentConfig& cfg, std::uint64_t seed, int threads,
                     const std::string& out, const std::optional<std::string>& plot,
                     RunRecord& rec) {
  const auto witnesses = witnesses_from(cfg);
  const auto grid = grid_points(cfg);
  const DivergenceMethod method = parse_bound_method(cfg.doc, "bound.method");
  const std::int64_t budget = cfg.doc.get_integer("bound.budget", 200000);

  const auto rows = bound_sweep(cfg.signal, cfg.theta, cfg.projection, witnesses, grid, method,
                                budget, seed, threads);
  CsvBuilder csv(cfg.digest, seed);
  csv.columns("sigma,n_samples,witness,form,d,lambda,k_d,chi2_n,mse_lower,flag");
  std::ostringstream plot_body;
  plot_body << "x,y\n";
  for (const BoundSweepRow& r : rows) {
    std::ostringstream line;
    line << fmt_g17(r.point.sigma) << "," << r.point.n_samples << ",";
    if (r.witness < 0) line << "sup";
    else line << r.witness;
    line << "," << form_name(r.report.form) << "," << r.report.d << ","
         << fmt_g17(r.report.lambda) << "," << fmt_g17(r.report.k_d) << ","
         << fmt_g17(r.report.chi2_n) << "," << fmt_g17(r.report.mse_lower) << ","
         << r.report.flag;
    csv.row(line.str());
    note_flag(rec, r.report.flag);
    if (r.witness < 0)
      plot_body << fmt_g17(r.point.sigma) << "," << fmt_g17(r.report.mse_lower) << "\n";
  }
  write_text_file(out, csv.str());
  if (plot) write_text_file(*plot, plot_body.str());
  rec.rows = csv.rows;
  rec.summary = "wrote " + std::to_string(csv.rows) + " bound rows to " + out;
}

void run_mle_sweep(const ExperimentConfig& cfg, std::uint64_t seed, int threads,
                   const std::string& out, const std::optional<std::string>& plot,
                   RunRecord& rec) {
  const auto grid = grid_points(cfg);
  const int replicates = int(cfg.doc.get_integer("mle.replicates", 50));
  if (replicates < 1) config_error(cfg.doc, "mle.replicates", "must be >= 1");

  MleOptions opts;
  opts.restarts = int(cfg.doc.get_integer("mle.restarts", 8));
  opts.max_iters = int(cfg.doc.get_integer("mle.max_iters", 500));
  opts.tol = cfg.doc.get_number("mle.tol", 1e-9);
  opts.init_scale = cfg.doc.get_number("mle.init_scale", 1.0);
  const std::string theta_mode = cfg.doc.get_string("mle.theta_mode", "known");
  if (theta_mode == "known") opts.theta_mode = MleOptions::ThetaMode::known_fixed;
  else if (theta_mode == "estimated") opts.theta_mode = MleOptions::ThetaMode::estimated;
  else config_error(cfg.doc, "mle.theta_mode", "expected known | estimated");
  opts.threads = 1; // replicates parallelize; each fit stays serial

  const bool with_bound = cfg.doc.get_bool("mle.with_bound", false);
  std::vector<std::pair<Signal, GroupDistribution>> witnesses;
  DivergenceMethod bound_method = DivergenceMethod::leading_order;
  std::int64_t bound_budget = 200000;
  if (with_bound) {
    witnesses = witnesses_from(cfg);
    bound_method = parse_bound_method(cfg.doc, "bound.method");
    bound_budget = cfg.doc.get_integer("bound.budget", 200000);
  }

  CsvBuilder csv(cfg.digest, seed);
  csv.columns(
      "sigma,n_samples,replicates,mse,bias_sq,cov_trace,se_mse,median_sq_err,se_median,"
      "converged,flagged,mse_lower_sup,flag");
  std::ostringstream plot_body;
  plot_body << "x,y\n";

  for (std::size_t p = 0; p < grid.size(); ++p) {
    const SweepPoint pt = grid[p];
    const ChannelModel model = cfg.model_at(pt.sigma);
    std::vector<FitResult> fits;
    fits.resize(std::size_t(replicates));
    parallel_for_index(replicates, std::max(1, threads), [&](std::int64_t r) {
      const std::uint64_t stream = (std::uint64_t(p) << 24) + std::uint64_t(r) + 1;
      const ObservationBatch batch = simulate(model, pt.n_samples, seed, stream, false);
      MleOptions local = opts;
      local.seed = rng::derive_key(seed, stream);
      fits[std::size_t(r)] = mle_fit(batch, cfg.theta, cfg.projection, pt.sigma, local);
    });

    std::vector<Signal> estimates;
    std::vector<double> sq_errs;
    int converged = 0, flagged = 0;
    std::string row_flag;
    for (const FitResult& f : fits) {
      estimates.push_back(f.x_hat);
      sq_errs.push_back(best_alignment(f.x_hat, cfg.signal, *cfg.group).sq_dist);
      if (f.converged) ++converged;
      if (!f.flag.empty()) {
        ++flagged;
        row_flag = f.flag;
      }
    }
    const MseReport mse = mse_against_orbit(estimates, cfg.signal, *cfg.group);
    std::vector<double> sorted = sq_errs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median =
        n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double var = 0.0;
    for (double e : sq_errs) var += (e - mse.mse) * (e - mse.mse);
    var /= double(n);
    const double se_mse = std::sqrt(var / double(n));
    const double se_median = 1.2533141373155003 * std::sqrt(var / double(n));

    std::string sup_text;
    if (with_bound) {
      const auto rows =
          bound_sweep(cfg.signal, cfg.theta, cfg.projection, witnesses, {pt}, bound_method,
                      bound_budget, seed, threads);
      const BoundReport& sup = rows.back().report;
      sup_text = fmt_g17(sup.mse_lower);
      note_flag(rec, sup.flag);
    }

    std::ostringstream line;
    line << fmt_g17(pt.sigma) << "," << pt.n_samples << "," << replicates << ","
         << fmt_g17(mse.mse) << "," << fmt_g17(mse.bias_sq) << "," << fmt_g17(mse.cov_trace)
         << "," << fmt_g17(se_mse) << "," << fmt_g17(median) << "," << fmt_g17(se_median) << ","
         << converged << "," << flagged << "," << sup_text << "," << row_flag;
    csv.row(line.str());
    note_flag(rec, row_flag);
    plot_body << fmt_g17(pt.sigma) << "," << fmt_g17(mse.mse) << "\n";
  }
  write_text_file(out, csv.str());
  if (plot) write_text_file(*plot, plot_body.str());
  rec.rows = csv.rows;
  rec.summary = "wrote " + std::to_string(csv.rows) + " sweep rows to " + out;
}

void run_verify(const ExperimentConfig& cfg, const std::string& out, RunRecord& rec) {
  const double b = cfg.doc.get_number("verify.ex1_b", 1.0);
  const double c = cfg.doc.get_number("verify.ex1_c", 2.0);
  const double a2 = cfg.doc.get_number("verify.ex2_a", 1.0);
  const double b2 = cfg.doc.get_number("verify.ex2_b", 2.0);
  const VerifyReport report = verify_examples(b, c, a2, b2);
  std::fputs(report.text().c_str(), stdout);
  if (!out.empty()) {
    CsvBuilder csv(cfg.digest, 0);
    csv.columns("name,status,expected,actual,note");
    for (const VerifyRow& r : report.rows) {
      std::ostringstream line;
      line << r.name << "," << r.status << "," << fmt_g17(r.expected) << ","
           << fmt_g17(r.actual) << "," << r.note;
      csv.row(line.str());
    }
    write_text_file(out, csv.str());
    rec.rows = csv.rows;
  } else {
    rec.rows = int(report.rows.size());
  }
  if (!report.all_pass) {
    rec.exit_code = 2;
    rec.flags.push_back("verify-failures");
  }
  int pass = 0, fail = 0, skip = 0;
  for (const VerifyRow& r : report.rows) {
    if (r.status == "PASS") ++pass;
    else if (r.status == "FAIL") ++fail;
    else ++skip;
  }
  std::ostringstream s;
  s << pass << " pass, " << fail << " fail, " << skip << " skip";
  rec.summary = s.str();
}

std::string default_out(const std::string& kind) {
  if (kind == "simulate") return "batch.gacb";
  if (kind == "cutoff") return "cutoff.txt";
  if (kind == "verify") return "";
  return kind + ".csv";
}

} // namespace

RunRecord run_experiment(const ExperimentConfig& config, const RunOverrides& overrides) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.kind = config.kind;
  rec.config_digest = config.digest;
  rec.seed = overrides.seed.value_or(config.seed);
  const int threads = resolve_threads(overrides.threads.value_or(config.threads));
  rec.out_path = overrides.out.value_or(config.out.empty() ? default_out(config.kind) : config.out);

  if (config.kind == "simulate") {
    run_simulate(config, rec.seed, threads, rec.out_path, rec);
  } else if (config.kind == "moments") {
    run_moments(config, rec.seed, threads, rec.out_path, rec);
  } else if (config.kind == "cutoff") {
    run_cutoff(config, rec.seed, threads, rec.out_path, rec);
  } else if (config.kind == "divergence-sweep") {
    run_divergence_sweep(config, rec.seed, threads, rec.out_path, overrides.plot, rec);
  } else if (config.kind == "bound-sweep") {
    run_bound_sweep(config, rec.seed, threads, rec.out_path, overrides.plot, rec);
  } else if (config.kind == "mle-sweep") {
    run_mle_sweep(config, rec.seed, threads, rec.out_path, overrides.plot, rec);
  } else if (config.kind == "verify") {
    run_verify(config, rec.out_path, rec);
  } else {
    throw std::runtime_error("run_experiment: unknown kind " + config.kind);
  }

  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

namespace {

struct VerifyBuilder {
  std::vector<VerifyRow>& rows;

  void check(const std::string& name, double expected, double actual, double tol,
             const std::string& note = "") {
    VerifyRow r{name, "PASS", expected, actual, note};
    if (!(std::abs(expected - actual) <= tol * std::max(1.0, std::abs(expected))))
      r.status = "FAIL";
    rows.push_back(std::move(r));
  }
  void check_int(const std::string& name, int expected, int actual,
                 const std::string& note = "") {
    rows.push_back(VerifyRow{name, expected == actual ? "PASS" : "FAIL", double(expected),
                             double(actual), note});
  }
  void skip(const std::string& name, const std::string& why) {
    rows.push_back(VerifyRow{name, "SKIP", 0.0, 0.0, why});
  }
};

} // namespace

VerifyReport verify_examples(double b, double c, double a2, double b2) {
  VerifyReport report;
  VerifyBuilder vb{report.rows};

  // Triple with a zero coordinate, cyclic shifts, first two coordinates kept.
  {
    const auto G = FiniteGroup::cyclic_shift(3);
    Signal probe(3);
    probe << 1, 2, 3;
    Signal shifted = G->element(1).matrix * probe;
    Signal expect(3);
    expect << 3, 1, 2;
    vb.check("cyclic-shift-action", 0.0, (shifted - expect).norm(), 1e-15,
             "element 1 maps (1,2,3) to (3,1,2)");

    Signal x(3);
    x << 0, b, c;
    const GroupDistribution theta = uniform_distribution(G);
    const Projection P = Projection::coordinate(3, {0, 1});

    // Projected orbit must be {(0,b),(c,0),(b,c)} in element order.
    const auto orb = orbit(x, *G);
    double orb_err = 0.0;
    const double want[3][2] = {{0.0, b}, {c, 0.0}, {b, c}};
    for (int g = 0; g < 3; ++g) {
      const Signal v = P.matrix * orb[std::size_t(g)];
      orb_err = std::max(orb_err, std::max(std::abs(v[0] - want[g][0]),
                                           std::abs(v[1] - want[g][1])));
    }
    vb.check("ex1-projected-orbit", 0.0, orb_err, 1e-15);

    const MomentTensor m1 = exact_moment(x, theta, P, 1);
    const double m1_expect = (b + c) / 3.0;
    vb.check("ex1-m1", 0.0,
             std::max(std::abs(m1[0] - m1_expect), std::abs(m1[1] - m1_expect)), 1e-12,
             "both entries (b+c)/3");

    const MomentTensor m2 = exact_moment(x, theta, P, 2);
    const double diag = (b * b + c * c) / 3.0, off = b * c / 3.0;
    double m2_err = 0.0;
    {
      const int i00[2] = {0, 0}, i01[2] = {0, 1}, i10[2] = {1, 0}, i11[2] = {1, 1};
      m2_err = std::max({std::abs(m2.at(i00) - diag), std::abs(m2.at(i11) - diag),
                         std::abs(m2.at(i01) - off), std::abs(m2.at(i10) - off)});
    }
    vb.check("ex1-m2", 0.0, m2_err, 1e-12, "(1/3)[[b^2+c^2, bc],[bc, b^2+c^2]]");

    const bool degenerate =
        std::min({std::abs(b), std::abs(c), std::abs(b - c)}) <= 1e-9;
    if (degenerate) {
      vb.skip("ex1-m3-dist", "degenerate parameters (swap is orbit-equivalent)");
      vb.skip("ex1-k3", "degenerate parameters");
      vb.skip("ex1-aligned-dist", "degenerate parameters");
      vb.skip("ex1-cutoff-dbar", "degenerate parameters");
      vb.skip("ex1-bound-floor", "degenerate parameters");
    } else {
      Signal xs(3);
      xs << 0, c, b;
      const double mixed = b * b * c - c * c * b;
      const MomentTensor m3x = exact_moment(x, theta, P, 3);
      const MomentTensor m3s = exact_moment(xs, theta, P, 3);
      const double dist3 = tensor_sq_dist(m3x, m3s);
      vb.check("ex1-m3-dist", 2.0 / 3.0 * mixed * mixed, dist3, 1e-12,
               "third moments of the swapped candidate");
      const double k3 = dist3 / 6.0;
      vb.check("ex1-k3", mixed * mixed / 9.0, k3, 1e-12);

      const double aligned = best_alignment(xs, x, *G).sq_dist;
      const double dmin = std::min({b * b, c * c, (b - c) * (b - c)});
      vb.check("ex1-aligned-dist", 2.0 * dmin, aligned, 1e-12,
               "enumerated over the three shifts");

      CutoffSearchOptions copts;
      copts.max_order = 4;
      copts.seed = 17;
      ConstraintSet cons;
      cons.zero_indices = {0};
      cons.theta_fixed = true;
      const CutoffReport cut = cutoff_search(x, theta, P, cons, copts);
      vb.check_int("ex1-cutoff-dbar", 3, cut.d_bar,
                   cut.certified ? "certified witness" : "no witness found");

      // Bound floor at sigma = 2 with lambda tuned for a floor near 0.1.
      const double lambda_target = std::log1p(2.0 * dmin / 0.1) / k3;
      const double sigma_b = 2.0;
      const std::int64_t N = std::int64_t(std::llround(lambda_target * std::pow(sigma_b, 6.0)));
      const double lambda_actual = double(N) / std::pow(sigma_b, 6.0);
      const double floor_expect = 2.0 * dmin / std::expm1(lambda_actual * k3);
      const BoundReport bound = chapman_robbins_orbit(xs, theta, x, theta, P, sigma_b, N,
                                                      DivergenceMethod::leading_order);
      vb.check("ex1-bound-floor", floor_expect, bound.mse_lower, 1e-9,
               "small-noise form at the swapped witness");
    }
  }

  // Two-point scalar channel: x = (a2, b2), uniform swap, first coordinate.
  {
    const auto G2 = FiniteGroup::cyclic_shift(2);
    Signal x(2);
    x << a2, b2;
    const GroupDistribution theta = uniform_distribution(G2);
    const Projection P = Projection::coordinate(2, {0});

    const MomentTensor m1 = exact_moment(x, theta, P, 1);
    vb.check("ex2-m1", (a2 + b2) / 2.0, m1[0], 1e-12);
    const MomentTensor m2 = exact_moment(x, theta, P, 2);
    vb.check("ex2-m2", (a2 * a2 + b2 * b2) / 2.0, m2[0], 1e-12);

    const auto pair = mom_two_point((a2 + b2) / 2.0, (a2 * a2 + b2 * b2) / 2.0);
    const double inv_err = std::abs(pair.first - std::max(a2, b2)) +
                           std::abs(pair.second - std::min(a2, b2));
    vb.check("ex2-mom-inverse", 0.0, inv_err, 1e-12, "recovers {a, b} larger-first");

    Signal xt(2);
    xt << a2 + 1.0, b2 - 1.0;
    vb.check("ex2-q1", 0.0, directional_q(x, theta, xt, theta, P, 1), 1e-12,
             "mean is constant along the direction");
    vb.check("ex2-q2", (a2 - b2) * (a2 - b2) / 2.0, directional_q(x, theta, xt, theta, P, 2),
             1e-12);

    if (std::abs(a2 - b2) <= 1e-9) {
      vb.skip("ex2-cutoff-dbar", "degenerate parameters (a = b)");
      vb.skip("ex2-cr-limit", "degenerate parameters (a = b)");
    } else {
      CutoffSearchOptions copts;
      copts.max_order = 3;
      copts.seed = 17;
      const CutoffReport cut = cutoff_search(x, theta, P, ConstraintSet{}, copts);
      vb.check_int("ex2-cutoff-dbar", 2, cut.d_bar,
                   cut.certified ? "certified witness" : "no witness found");

      const double sigma_b = 2.0;
      const std::int64_t N = 80;
      const double lambda2 = double(N) / std::pow(sigma_b, 4.0);
      const double expect = 4.0 / (lambda2 * (a2 - b2) * (a2 - b2));
      const BoundReport lim = cr_limit_bound(x, theta, xt, theta, P, sigma_b, N);
      vb.check("ex2-cr-limit", expect, lim.mse_lower, 1e-9,
               "limiting bound along (a+1, b-1)");
    }
  }

  for (const VerifyRow& r : report.rows)
    if (r.status == "FAIL") report.all_pass = false;
  return report;
}

std::string VerifyReport::text() const {
  std::ostringstream os;
  os << "worked-example verification\n";
  std::size_t name_w = 4;
  for (const VerifyRow& r : rows) name_w = std::max(name_w, r.name.size());
  for (const VerifyRow& r : rows) {
    os << r.name;
    for (std::size_t i = r.name.size(); i < name_w + 2; ++i) os << ' ';
    os << r.status;
    for (std::size_t i = r.status.size(); i < 6; ++i) os << ' ';
    if (r.status != "SKIP")
      os << " expected=" << fmt_g17(r.expected) << " actual=" << fmt_g17(r.actual);
    if (!r.note.empty()) os << "  (" << r.note << ")";
    os << "\n";
  }
  int pass = 0, fail = 0, skip = 0;
  for (const VerifyRow& r : rows) {
    if (r.status == "PASS") ++pass;
    else if (r.status == "FAIL") ++fail;
    else ++skip;
  }
  os << pass << " pass, " << fail << " fail, " << skip << " skip\n";
  return os.str();
}

} // namespace gac
