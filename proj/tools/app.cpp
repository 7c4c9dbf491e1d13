#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shuffled/evolution.hpp"
#include "shuffled/mcoracle.hpp"
#include "shuffled/model.hpp"
#include "shuffled/recovery.hpp"
#include "shuffled/theory.hpp"
#include "table.hpp"

namespace cli {
namespace {

using namespace shuffled;
namespace th = shuffled::theory;

struct Options {
  int n = 500;
  int m = 100;
  std::optional<int> p;
  std::optional<int> h;
  std::optional<double> tau_h;
  std::optional<double> tau_p;
  std::optional<double> snr;
  std::optional<double> sigma;
  std::string spectrum = "scaled-identity";
  double lambda = 1.0;
  double block_low = 0.5;
  std::string design = "gauss";
  std::string mode = "oracle";
  std::string solver = "exact";
  int trials = 100;
  int repeats = 20;
  double epsilon = 1e-3;
  double lower = 0.0;
  double upper = 1.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string format = "csv";
  std::string out;
  bool timing = false;
  bool quiet = false;

  // find-threshold
  std::optional<double> synthetic_step;
  // sweep
  std::string variable = "snr";
  std::string grid;
  // verify
  std::string suite = "default";
  int verify_trials = 200000;
  int nonoracle_trials = 20000;
  double trace_scale = 1.0;
  double c_asym = 0.1;
  // de
  std::string recursion = "de";
  int population = 10000;
  int iters = 100;
  int probes = 10000;
  bool drift = false;
  int drift_samples = 100000;
  // mp
  int mp_iters = 2000;
  double damping = 0.3;
};

class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput(what);
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    require(!tok.empty(), "empty entry in list '" + text + "'");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw InvalidInput("not a number: '" + tok + "'");
    }
    require(used == tok.size(), "not a number: '" + tok + "'");
    out.push_back(v);
  }
  require(!out.empty(), "empty list");
  return out;
}

SignalSpec parse_signal(const Options& o) {
  const std::string& s = o.spectrum;
  if (s == "scaled-identity") return signal::ScaledIdentity{o.lambda};
  if (s == "identity") return signal::Identity{};
  if (s == "gaussian") return signal::GaussianIID{};
  if (s == "block-diagonal") return signal::BlockDiagonal{1.0, o.block_low};
  if (s.rfind("explicit:", 0) == 0) return signal::ExplicitSpectrum{parse_list(s.substr(9))};
  throw InvalidInput("unknown spectrum '" + s + "'");
}

Dimensions resolve_dims(const Options& o) {
  Dimensions d;
  d.n = o.n;
  d.m = o.m;
  if (o.p)
    d.p = *o.p;
  else if (o.tau_p)
    d.p = int(std::lround(*o.tau_p * o.n));
  else
    d.p = o.m;
  if (o.h)
    d.h = *o.h;
  else if (o.tau_h)
    d.h = int(std::lround(*o.tau_h * o.n));
  else
    d.h = o.n;
  d.validate();
  return d;
}

NoiseSpec resolve_noise(const Options& o) {
  require(!(o.snr && o.sigma), "--snr and --sigma are mutually exclusive");
  if (o.snr) return NoiseSpec::from_snr(*o.snr);
  if (o.sigma) return NoiseSpec::from_sigma(*o.sigma);
  return NoiseSpec::noiseless();
}

DesignDistribution resolve_design(const Options& o) {
  if (o.design == "gauss") return DesignDistribution::gaussian();
  if (o.design == "unif") return DesignDistribution::uniform();
  throw InvalidInput("unknown design '" + o.design + "'");
}

RecoveryMode resolve_mode(const std::string& mode) {
  if (mode == "oracle") return RecoveryMode::Oracle;
  if (mode == "nonoracle") return RecoveryMode::NonOracle;
  throw InvalidInput("unknown mode '" + mode + "' (expected oracle or nonoracle)");
}

Solver resolve_solver(const Options& o) {
  if (o.solver == "exact") return ExactSolver{};
  if (o.solver == "mp") {
    lap::MpParams prm;
    prm.max_iters = o.mp_iters;
    prm.damping = o.damping;
    prm.validate();
    return MpSolver{prm};
  }
  throw InvalidInput("unknown solver '" + o.solver + "'");
}

void check_common(const Options& o) {
  require(o.threads >= 1, "--threads must be >= 1");
  require(o.format == "csv" || o.format == "json", "--format must be csv or json");
}

/// Singular values of the configured signal (a random signal is drawn from
/// the master seed).
th::Spectrum signal_spectrum(const Options& o, const Dimensions& d) {
  Rng rng(derive_seed(o.seed, {0x5ULL}));
  return th::Spectrum::of_matrix(build_signal(parse_signal(o), d.p, d.m, rng));
}

Json base_config(const std::string& command, const Options& o) {
  Json c = Json::object();
  c["command"] = command;
  c["threads"] = o.threads;
  c["format"] = o.format;
  return c;
}

Json dims_json(const Dimensions& d) { return Json{{"n", d.n}, {"m", d.m}, {"p", d.p}, {"h", d.h}}; }

Cell opt_cell(const std::optional<double>& v) { return v ? Cell(*v) : Cell(); }
Cell icell(long long v) { return Cell(std::int64_t(v)); }

struct Emitter {
  const Options& o;
  std::ostream& out;

  void emit(const Json& config, const Table& t, std::optional<double> timing_ms) const {
    std::ofstream file;
    std::ostream* os = &out;
    if (!o.out.empty()) {
      file.open(o.out, std::ios::binary);
      if (!file) throw InvalidInput("cannot open output file '" + o.out + "'");
      os = &file;
    }
    if (o.format == "json")
      write_json(*os, config, t, o.timing ? timing_ms : std::nullopt, o.seed);
    else
      t.write_csv(*os);
  }
};

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- predict

int cmd_predict(const Options& o, std::ostream& out, std::ostream&) {
  check_common(o);
  Table t({"formula", "n", "m", "p", "h", "tau_p", "tau_h", "shape_factor", "threshold"});
  Json cfg = base_config("predict", o);
  cfg["mode"] = o.mode;
  const auto t0 = std::chrono::steady_clock::now();

  if (o.mode == "oracle" || o.mode == "oracle-gaussian") {
    Options q = o;
    if (!q.h) q.h = q.n;
    const Dimensions d = resolve_dims(q);
    const auto spec = signal_spectrum(o, d);
    const double F = spec.shape_factor();
    const double v = o.mode == "oracle" ? th::oracle_snr_threshold(d.n, d.m, F)
                                        : th::oracle_snr_threshold_gaussian(d.n, d.m, F);
    cfg["dims"] = dims_json(d);
    cfg["spectrum"] = o.spectrum;
    t.add({o.mode, icell(d.n), icell(d.m), icell(d.p), Cell(), Cell(), Cell(), F, v});
  } else if (o.mode == "nonoracle") {
    const Dimensions d = resolve_dims(o);
    const auto spec = signal_spectrum(o, d);
    const auto v = th::nonoracle_snr_threshold(d.n, d.m, d.p, d.h, spec);
    if (!v) throw th::NoFiniteThreshold("no finite threshold: criticality has no root in [1e-6, 1e6]");
    cfg["dims"] = dims_json(d);
    cfg["spectrum"] = o.spectrum;
    t.add({o.mode, icell(d.n), icell(d.m), icell(d.p), icell(d.h), d.tau_p(), d.tau_h(),
           spec.shape_factor(), *v});
  } else if (o.mode == "nonoracle-closed-form") {
    const double tp = o.tau_p ? *o.tau_p : (o.p ? double(*o.p) / o.n : 0.0);
    const double tau_h = o.tau_h ? *o.tau_h : (o.h ? double(*o.h) / o.n : 0.0);
    require(o.n >= 2, "--n must be >= 2");
    require(tp > 0.0, "nonoracle-closed-form needs --tau-p or --p");
    require(tau_h > 0.0 && tau_h < 1.0, "nonoracle-closed-form needs --tau-h (or --h) in (0, 1)");
    const double v = th::nonoracle_snr_closed_form(o.n, tp, tau_h);
    cfg["n"] = o.n;
    t.add({o.mode, icell(o.n), Cell(), Cell(), Cell(), tp, tau_h, Cell(), v});
  } else if (o.mode == "nonoracle-singularity") {
    const double tp = o.tau_p ? *o.tau_p : (o.p ? double(*o.p) / o.n : 0.0);
    require(o.n >= 2, "--n must be >= 2");
    require(tp > 0.0, "nonoracle-singularity needs --tau-p or --p");
    const auto v = th::tau_h_singularity(o.n, tp);
    cfg["n"] = o.n;
    t.add({o.mode, icell(o.n), Cell(), Cell(), Cell(), tp, opt_cell(v), Cell(), Cell()});
  } else {
    throw InvalidInput("unknown predict mode '" + o.mode + "'");
  }
  Emitter{o, out}.emit(cfg, t, elapsed_ms(t0));
  return kOk;
}

// ---------------------------------------------------------- find-threshold

RecoveryExperiment make_experiment(const Options& o) {
  RecoveryExperiment e;
  e.dims = resolve_dims(o);
  e.signal = parse_signal(o);
  e.noise = resolve_noise(o);
  e.design = resolve_design(o);
  e.mode = resolve_mode(o.mode);
  e.solver = resolve_solver(o);
  // fail early on shape errors (e.g. identity with p != m)
  Rng probe(0);
  (void)build_signal(e.signal, e.dims.p, e.dims.m, probe);
  return e;
}

int cmd_find_threshold(const Options& o, std::ostream& out, std::ostream& err) {
  check_common(o);
  ThresholdSearchConfig sc;
  sc.lower = o.lower;
  sc.upper = o.upper;
  sc.epsilon = o.epsilon;
  sc.trials_per_probe = o.trials;
  sc.repeats = o.repeats;
  require(o.lower >= 0.0, "--lower must be >= 0");
  sc.validate();

  Json cfg = base_config("find-threshold", o);
  cfg["lower"] = o.lower;
  cfg["upper"] = o.upper;
  cfg["epsilon"] = o.epsilon;
  cfg["trials"] = o.trials;
  cfg["repeats"] = o.repeats;

  std::function<double(double, ProbeIndex)> experiment;
  Dimensions d{};
  if (o.synthetic_step) {
    const double step = *o.synthetic_step;
    experiment = [step](double snr, ProbeIndex) { return snr < step ? 1.0 : 0.0; };
    cfg["synthetic_step"] = step;
  } else {
    RecoveryExperiment e = make_experiment(o);
    d = e.dims;
    cfg["dims"] = dims_json(d);
    cfg["spectrum"] = o.spectrum;
    cfg["mode"] = o.mode;
    cfg["solver"] = o.solver;
    cfg["design"] = o.design;
    auto inner = snr_error_rate_experiment(e, o.trials, o.seed, o.threads);
    experiment = [inner](double snr, ProbeIndex idx) mutable {
      if (!(snr > 0.0)) return 1.0;  // sigma -> infinity
      return inner(snr, idx);
    };
  }
  auto logged = [&](double snr, ProbeIndex idx) {
    const double rate = experiment(snr, idx);
    if (!o.quiet) {
      if (idx.repeat == ProbeIndex::kBracketRepeat)
        err << "bracket " << (idx.probe ? "upper" : "lower") << " snr=" << format_double(snr)
            << " error_rate=" << format_double(rate) << "\n";
      else
        err << "repeat " << idx.repeat << " probe " << idx.probe << " snr=" << format_double(snr)
            << " error_rate=" << format_double(rate) << "\n";
    }
    return rate;
  };

  Table t({"status", "n", "m", "p", "h", "mode", "solver", "spectrum", "trials", "repeats", "epsilon",
           "lower", "upper", "mean", "std", "per_repeat", "probes_used", "lower_rate", "upper_rate",
           "seed", "timing_ms"});
  auto dim_cells = [&]() -> std::vector<Cell> {
    if (o.synthetic_step) return {Cell(), Cell(), Cell(), Cell(), "synthetic", Cell(), Cell()};
    return {icell(d.n), icell(d.m), icell(d.p), icell(d.h), o.mode, o.solver, o.spectrum};
  };
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto est = find_threshold(sc, logged);
    const double ms = elapsed_ms(t0);
    std::vector<Cell> row{"ok"};
    for (auto& c : dim_cells()) row.push_back(c);
    for (Cell c : std::vector<Cell>{icell(o.trials), icell(o.repeats), o.epsilon, o.lower, o.upper, est.mean,
                                    est.std, est.per_repeat, icell(est.probes_used), est.lower_rate,
                                    est.upper_rate, o.seed, o.timing ? Cell(ms) : Cell()})
      row.push_back(c);
    t.add(row);
    Emitter{o, out}.emit(cfg, t, ms);
    return kOk;
  } catch (const BracketError& b) {
    const double ms = elapsed_ms(t0);
    err << "error: bracket failure: " << b.what() << " (lower_rate=" << format_double(b.lower_rate)
        << ", upper_rate=" << format_double(b.upper_rate) << ")\n";
    std::vector<Cell> row{"bracket_failure"};
    for (auto& c : dim_cells()) row.push_back(c);
    for (Cell c : std::vector<Cell>{icell(o.trials), icell(o.repeats), o.epsilon, o.lower, o.upper, Cell(),
                                    Cell(), Cell(), icell(0), b.lower_rate, b.upper_rate, o.seed,
                                    o.timing ? Cell(ms) : Cell()})
      row.push_back(c);
    t.add(row);
    Emitter{o, out}.emit(cfg, t, ms);
    return kCheckFailed;
  }
}

// ------------------------------------------------------------------ sweep

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  check_common(o);
  require(o.variable == "snr" || o.variable == "tau_h" || o.variable == "n",
          "--variable must be snr, tau_h or n");
  require(!o.grid.empty(), "--grid is required");
  require(o.trials >= 1, "--trials must be >= 1");
  const auto grid = parse_list(o.grid);

  // validate every grid point before any work starts
  std::vector<RecoveryExperiment> exps;
  for (double v : grid) {
    Options q = o;
    if (o.variable == "snr") {
      require(v > 0.0, "snr grid values must be positive");
      q.snr = v;
      q.sigma.reset();
    } else if (o.variable == "tau_h") {
      require(v >= 0.0 && v <= 1.0, "tau_h grid values must be in [0, 1]");
      q.tau_h = v;
      q.h.reset();
    } else {
      require(v >= 2.0 && v == std::floor(v), "n grid values must be integers >= 2");
      q.n = int(v);
    }
    exps.push_back(make_experiment(q));
  }

  Json cfg = base_config("sweep", o);
  cfg["variable"] = o.variable;
  cfg["grid"] = grid;
  cfg["trials"] = o.trials;
  cfg["mode"] = o.mode;
  cfg["solver"] = o.solver;
  cfg["spectrum"] = o.spectrum;

  Table t({"variable", "value", "n", "m", "p", "h", "error_rate", "trials", "seed"});
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto& e = exps[k];
    const std::uint64_t s = derive_seed(o.seed, {k});
    const double rate = full_recovery_error_rate(e, o.trials, s, o.threads);
    if (!o.quiet)
      err << "sweep " << o.variable << "=" << format_double(grid[k]) << " error_rate=" << format_double(rate)
          << "\n";
    t.add({o.variable, grid[k], icell(e.dims.n), icell(e.dims.m), icell(e.dims.p), icell(e.dims.h), rate,
           icell(o.trials), s});
  }
  Emitter{o, out}.emit(cfg, t, elapsed_ms(t0));
  return kOk;
}

// ----------------------------------------------------------------- verify

Matrix random_square(int p, Rng& rng) {
  Matrix M(p, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) M(i, j) = rng.normal();
  return M;
}

int cmd_verify(const Options& o, std::ostream& out, std::ostream& err) {
  check_common(o);
  const std::string& s = o.suite;
  require(s == "default" || s == "all" || s == "tables" || s == "identities" || s == "oracle" ||
              s == "nonoracle",
          "--suite must be default, all, tables, identities, oracle or nonoracle");
  const bool tables = s == "default" || s == "all" || s == "tables";
  const bool idents = s == "default" || s == "all" || s == "identities";
  const bool oracle = s == "default" || s == "all" || s == "oracle";
  const bool nonoracle = s == "all" || s == "nonoracle";
  if (idents) require(std::size_t(o.verify_trials) >= mc::kMinIdentityTrials, "--trials must be >= 100000");
  if (oracle) require(std::size_t(o.verify_trials) >= mc::kMinOracleTrials, "--trials must be >= 100000");
  if (nonoracle)
    require(std::size_t(o.nonoracle_trials) >= mc::kMinXiTermTrials, "--nonoracle-trials must be >= 10000");
  require(o.trace_scale > 0.0, "--trace-scale must be positive");

  std::vector<int> ps = {2, 5, 10};
  if (o.p) {
    require(*o.p >= 1, "--p must be >= 1");
    ps = {*o.p};
  }

  Json cfg = base_config("verify", o);
  cfg["suite"] = s;
  cfg["trials"] = o.verify_trials;

  Table t({"group", "name", "estimate", "standard_error", "reference", "z_score", "pass", "criterion", "note"});
  const auto t0 = std::chrono::steady_clock::now();
  bool all_pass = true;
  auto add_report = [&](const std::string& group, const mc::MomentCheckReport& r) {
    all_pass = all_pass && r.pass;
    t.add({group, r.name, r.mc_estimate, r.mc_standard_error, r.closed_form, r.z_score, r.pass, r.criterion,
           r.note});
  };

  if (tables) {
    for (const auto& checks : {mc::table1_checks(), mc::table2_checks()})
      for (const auto& c : checks) {
        all_pass = all_pass && c.pass;
        t.add({"tables", c.name, c.predicted, Cell(), c.printed, Cell(), c.pass,
               "abs<=" + format_double(c.tolerance), c.note});
      }
  }
  if (idents) {
    for (int p : ps) {
      if (!o.quiet) err << "identities p=" << p << "\n";
      Rng mrng(derive_seed(o.seed, {0x1ULL, std::uint64_t(p)}));
      const Matrix M = random_square(p, mrng);
      mc::IdentitySuiteOptions opt;
      opt.M2 = random_square(p, mrng);
      opt.trace_scale = o.trace_scale;
      opt.threads = o.threads;
      Rng rng(derive_seed(o.seed, {0x2ULL, std::uint64_t(p)}));
      for (const auto& r : mc::gaussian_identity_suite(p, M, o.verify_trials, rng, opt))
        add_report("identities", r);
    }
  }
  if (oracle) {
    if (!o.quiet) err << "oracle moments\n";
    Rng srng(derive_seed(o.seed, {0x3ULL}));
    std::vector<double> random_values;
    for (int k = 0; k < 4; ++k) random_values.push_back(srng.uniform(0.5, 2.0));
    const std::vector<std::pair<th::Spectrum, double>> cases = {
        {th::Spectrum({1.0, 2.0}), 0.5}, {th::Spectrum(random_values), 1.0}};
    for (std::size_t k = 0; k < cases.size(); ++k) {
      mc::OracleCheckOptions opt;
      opt.threads = o.threads;
      Rng rng(derive_seed(o.seed, {0x4ULL, k}));
      for (auto r : mc::oracle_moment_check(cases[k].first, cases[k].second, o.verify_trials, rng, opt)) {
        r.name = "spectrum" + std::to_string(k + 1) + " " + r.name;
        add_report("oracle", r);
      }
    }
  }
  if (nonoracle) {
    Options q = o;
    if (!q.p && !q.tau_p) q.p = 30;
    const Dimensions d = resolve_dims(q);
    const double sigma = o.sigma.value_or(1.0);
    if (!o.quiet) err << "non-oracle terms\n";
    // identity with p != m: unit singular values on the leading diagonal
    SignalSpec signal = parse_signal(o);
    if (std::holds_alternative<signal::Identity>(signal) && d.p != d.m)
      signal = signal::ExplicitSpectrum{std::vector<double>(std::size_t(std::min(d.p, d.m)), 1.0)};
    mc::XiTermOptions opt;
    opt.c_asym = o.c_asym;
    opt.threads = o.threads;
    Rng rng(derive_seed(o.seed, {0x6ULL}));
    for (const auto& r :
         mc::xi_term_moments_mc(d.n, d.m, d.p, d.h, signal, sigma, o.nonoracle_trials, rng, opt))
      add_report("nonoracle", r);
  }
  Emitter{o, out}.emit(cfg, t, elapsed_ms(t0));
  if (!all_pass) err << "verify: at least one check failed\n";
  return all_pass ? kOk : kCheckFailed;
}

// --------------------------------------------------------------------- de

int cmd_de(const Options& o, std::ostream& out, std::ostream& err) {
  check_common(o);
  require(o.recursion == "de" || o.recursion == "brw", "--recursion must be de or brw");
  require(o.population >= 1, "--population must be >= 1");
  require(o.iters >= 0, "--iters must be >= 0");
  require(o.probes >= 1, "--probes must be >= 1");
  if (o.drift) require(std::size_t(o.drift_samples) >= evolution::kMinDriftSamples, "--drift-samples must be >= 10000");
  const Dimensions d = resolve_dims(o);
  const NoiseSpec noise = resolve_noise(o);
  const RecoveryMode mode = resolve_mode(o.mode);

  Rng brng(derive_seed(o.seed, {0x5ULL}));
  const Matrix B = build_signal(parse_signal(o), d.p, d.m, brng);
  const double sigma = noise.resolve_sigma(B, d.m);
  const th::Spectrum spec = th::Spectrum::of_matrix(B);

  std::optional<evolution::EdgeWeightSampler> sampler;
  std::optional<evolution::OracleEdges> oracle_edges;
  if (mode == RecoveryMode::Oracle) {
    oracle_edges.emplace(spec, sigma);
    sampler.emplace(*oracle_edges);
  } else {
    sampler.emplace(evolution::NonOracleEmpirical(d, parse_signal(o), sigma, resolve_design(o)));
  }

  Json cfg = base_config("de", o);
  cfg["dims"] = dims_json(d);
  cfg["mode"] = o.mode;
  cfg["recursion"] = o.recursion;
  cfg["population"] = o.population;
  cfg["iters"] = o.iters;
  cfg["probes"] = o.probes;
  cfg["sigma"] = sigma;
  cfg["spectrum"] = o.spectrum;

  const auto t0 = std::chrono::steady_clock::now();
  Cell drift;
  if (o.drift) {
    std::vector<double> xi(std::size_t(o.drift_samples));
    if (oracle_edges) {
      xi = evolution::sample_xi_batch(*oracle_edges, xi.size(), derive_seed(o.seed, {0x7ULL}), o.threads);
    } else {
      Rng xr(derive_seed(o.seed, {0x7ULL}));
      for (auto& v : xi) v = sampler->sample_xi(xr);
    }
    drift = evolution::empirical_drift(xi, d.n);
  }

  Table t({"iter", "mean_h", "mean_increment", "recovery_probability", "drift"});
  evolution::Population pop = evolution::Population::zeros(std::size_t(o.population));
  Rng rng(derive_seed(o.seed, {0x8ULL}));
  double prev_mean = pop.mean();
  for (int it = 0; it <= o.iters; ++it) {
    if (it > 0) {
      pop = o.recursion == "de" ? evolution::de_iterate(std::move(pop), *sampler, d.n, 1, rng, o.threads)
                                : evolution::brw_iterate(std::move(pop), *sampler, d.n, 1, rng, o.threads);
    }
    const double mean = pop.mean();
    Cell prob;
    if (o.recursion == "de") {
      Rng prng(derive_seed(o.seed, {0x9ULL, std::uint64_t(it)}));
      prob = evolution::recovery_probability(pop, *sampler, o.probes, prng);
    }
    t.add({icell(it), mean, it > 0 ? Cell(mean - prev_mean) : Cell(), prob, drift});
    if (!o.quiet && it > 0) err << "iter " << it << " mean_h=" << format_double(mean) << "\n";
    prev_mean = mean;
  }
  Emitter{o, out}.emit(cfg, t, elapsed_ms(t0));
  return kOk;
}

// ----------------------------------------------------------------- wiring

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--n", o.n, "number of rows");
  sub->add_option("--m", o.m, "number of response columns");
  sub->add_option("--p", o.p, "number of covariates (default m)");
  sub->add_option("--h", o.h, "number of permuted rows (default n)");
  sub->add_option("--tau-h", o.tau_h, "h / n");
  sub->add_option("--tau-p", o.tau_p, "p / n");
  sub->add_option("--snr", o.snr, "signal-to-noise ratio ||B||^2 / (m sigma^2)");
  sub->add_option("--sigma", o.sigma, "noise standard deviation");
  sub->add_option("--spectrum", o.spectrum,
                  "scaled-identity | identity | gaussian | block-diagonal | explicit:l1,l2,...");
  sub->add_option("--lambda", o.lambda, "scale of scaled-identity");
  sub->add_option("--block-low", o.block_low, "lower level of block-diagonal (upper is 1)");
  sub->add_option("--design", o.design, "gauss | unif");
  sub->add_option("--solver", o.solver, "exact | mp");
  sub->add_option("--mp-iters", o.mp_iters, "message-passing iteration cap");
  sub->add_option("--damping", o.damping, "message-passing damping");
  sub->add_option("--trials", o.trials, "trials per probe / grid point");
  sub->add_option("--repeats", o.repeats, "bisection repeats");
  sub->add_option("--epsilon", o.epsilon, "bisection resolution");
  sub->add_option("--lower", o.lower, "lower snr bracket");
  sub->add_option("--upper", o.upper, "upper snr bracket");
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--threads", o.threads, "worker threads");
  sub->add_option("--format", o.format, "csv | json");
  sub->add_option("--out", o.out, "output file (default stdout)");
  sub->add_flag("--timing", o.timing, "record wall-clock time (breaks byte-determinism)");
  sub->add_flag("--quiet", o.quiet, "no progress on stderr");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Permutation recovery experiments for shuffled linear regression", "shuffled"};
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);

  auto* predict = app.add_subcommand("predict", "closed-form threshold predictions");
  add_common(predict, o);
  predict->add_option("--mode", o.mode,
                      "oracle | oracle-gaussian | nonoracle | nonoracle-closed-form | nonoracle-singularity");

  auto* find = app.add_subcommand("find-threshold", "bisection search for the recovery threshold");
  add_common(find, o);
  find->add_option("--mode", o.mode, "oracle | nonoracle");
  find->add_option("--synthetic-step", o.synthetic_step, "replace the experiment by a step at this snr")
      ->group("Testing");

  auto* sweep = app.add_subcommand("sweep", "error rate over a grid of one variable");
  add_common(sweep, o);
  sweep->add_option("--mode", o.mode, "oracle | nonoracle");
  sweep->add_option("--variable", o.variable, "snr | tau_h | n");
  sweep->add_option("--grid", o.grid, "comma-separated grid values");

  auto* verify = app.add_subcommand("verify", "Monte Carlo checks of the closed forms");
  add_common(verify, o);
  verify->remove_option(verify->get_option("--trials"));
  verify->add_option("--trials", o.verify_trials, "samples per exact check (>= 1e5)");
  verify->add_option("--suite", o.suite, "default | all | tables | identities | oracle | nonoracle");
  verify->add_option("--nonoracle-trials", o.nonoracle_trials, "fresh instances for the non-oracle group");
  verify->add_option("--c-asym", o.c_asym, "relative slack for asymptotic formulas");
  verify->add_option("--trace-scale", o.trace_scale, "multiply traces in the closed forms")->group("Testing");

  auto* de = app.add_subcommand("de", "density evolution by population dynamics");
  add_common(de, o);
  de->add_option("--mode", o.mode, "oracle | nonoracle");
  de->add_option("--recursion", o.recursion, "de | brw");
  de->add_option("--population", o.population, "population size");
  de->add_option("--iters", o.iters, "iterations");
  de->add_option("--probes", o.probes, "probes for the recovery probability");
  de->add_flag("--drift", o.drift, "estimate the drift from sampled Xi");
  de->add_option("--drift-samples", o.drift_samples, "Xi samples for --drift");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  }

  // verify's non-oracle group defaults to n=300, m=10, p=30, h=150, identity B
  if (verify->parsed()) {
    if (!verify->get_option("--n")->count()) o.n = 300;
    if (!verify->get_option("--m")->count()) o.m = 10;
    if (!o.h && !o.tau_h) o.h = 150;
    if (!verify->get_option("--spectrum")->count()) o.spectrum = "identity";
  }

  try {
    if (predict->parsed()) return cmd_predict(o, out, err);
    if (find->parsed()) return cmd_find_threshold(o, out, err);
    if (sweep->parsed()) return cmd_sweep(o, out, err);
    if (verify->parsed()) return cmd_verify(o, out, err);
    if (de->parsed()) return cmd_de(o, out, err);
  } catch (const th::NoFiniteThreshold& e) {
    err << "error: no finite threshold: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const InvalidInput& e) {
    err << "error: invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::invalid_argument& e) {
    err << "error: invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::domain_error& e) {
    err << "error: invalid input: " << e.what() << "\n";
    return kInvalidInput;
  }
  return kInvalidInput;
}

}  // namespace cli
