#include "anderson/runner.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "anderson/localization.hpp"
#include "anderson/msa.hpp"
#include "anderson/parallel.hpp"

namespace anderson {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_grid(double lo, double hi, double step) {
  return "[" + format_number(lo) + ";" + format_number(hi) + "] step " + format_number(step);
}

std::string format_interval(double lo, double hi) { return "[" + format_number(lo) + ";" + format_number(hi) + "]"; }

std::string config_text(const Config& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) s += (i ? " " : "") + std::to_string(c.flat()[i]);
  return s;
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v;
  for (int i = 0; i < count; ++i) v.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
  return v;
}

std::pair<double, double> interval_or(const json& v, std::pair<double, double> fallback) {
  if (v.is_null()) return fallback;
  return {v[0].get<double>(), v[1].get<double>()};
}

MonteCarloEstimate count_estimate(std::size_t hits, std::size_t trials, double bound_log10 = kNaN,
                                  std::string ref = "") {
  return MonteCarloEstimate::make(hits, std::max<std::size_t>(trials, 1), bound_log10, std::move(ref));
}

struct Ctx {
  const RunConfig& c;
  std::uint64_t seed;
  Sampling sampling;
  Outcome& out;
  bool emit;

  ResultRow row(std::string name, std::optional<std::int64_t> L, std::optional<int> k, std::string grid,
                MonteCarloEstimate e) const {
    ResultRow r;
    r.experiment = std::move(name);
    r.N = c.params.N;
    r.n = c.params.n;
    r.d = c.params.d;
    r.L = L;
    r.k = k;
    r.p = c.params.p;
    r.m = c.params.m;
    r.E_star = c.params.E_star;
    r.eps_or_grid = std::move(grid);
    r.estimate = std::move(e);
    r.seed = seed;
    return r;
  }
  void add(ResultRow r) { out.rows.push_back(std::move(r)); }
  void violate(const std::string& name, bool failed) {
    if (failed) out.violated.push_back(name);
  }
  const json& b(const char* key) const { return c.block.at(key); }
  int i(const char* key) const { return b(key).get<int>(); }
  double x(const char* key) const { return b(key).get<double>(); }
  bool flag(const char* key) const { return b(key).get<bool>(); }
  std::vector<int> ints(const char* key) const { return b(key).get<std::vector<int>>(); }
  std::vector<double> nums(const char* key) const { return b(key).get<std::vector<double>>(); }

  GridSpec grid() const {
    GridSpec g;
    const auto [lo, hi] = interval_or(b("grid"), {0.0, c.params.E_star});
    g.lo = lo;
    g.hi = hi;
    g.step = x("grid_step");
    g.augment = flag("augment");
    return g;
  }

  void predicate_report(const Rectangle& cube, double E, const ScaleLadder* ladder = nullptr) {
    if (!emit) return;
    const auto pot = sample_potential(c.ensemble, 0, cube);
    out.reports["predicates"] = evaluate_predicates(cube, pot, c.interaction, E, c.params, ladder);
    std::ostringstream csv;
    pot.write_csv(csv);
    out.tables["potential_r0.csv"] = csv.str();
  }
};

void run_geometry(Ctx& x) {
  const auto r = geometry_verify(x.ints("ns"), x.ints("Ls"), x.c.trials, x.seed);
  x.add(x.row("geometry-verify.cover", std::nullopt, std::nullopt, "", count_estimate(r.counterexamples, r.points_checked)));
  x.add(x.row("geometry-verify.implication", std::nullopt, std::nullopt, "",
              count_estimate(r.implication_violations, r.implication_instances)));
  x.out.details = {{"configurations", r.configurations},
                   {"points_checked", r.points_checked},
                   {"counterexamples", r.counterexamples},
                   {"implication_instances", r.implication_instances},
                   {"implication_violations", r.implication_violations}};
  x.violate("candidate-family-cover", r.counterexamples > 0);
  x.violate("pre-separability-implication", r.implication_violations > 0);
}

void run_wegner(Ctx& x) {
  WegnerPlan plan;
  plan.params = x.c.params;
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  std::tie(plan.a, plan.b) = separable_pair(x.c.params.n, x.c.params.d, x.i("L"), x.c.params.N, x.i("spacing"));
  plan.eps = x.nums("eps");
  plan.sampling = x.sampling;
  const auto r = wegner_experiment(plan);
  for (std::size_t q = 0; q < r.eps.size(); ++q)
    x.add(x.row("wegner", x.i("L"), std::nullopt, format_number(r.eps[q]), r.estimates[q]));
  x.out.details = {{"a", plan.a},
                   {"b", plan.b},
                   {"prefactor", r.prefactor},
                   {"loglog_slope", r.loglog.slope},
                   {"loglog_r2", r.loglog.r2},
                   {"ratio_spread", std::isfinite(r.ratio_spread) ? json(r.ratio_spread) : json(nullptr)},
                   {"bounds", r.bounds}};
  x.predicate_report(plan.a, 0.5 * x.c.params.E_star);
}

void run_cnr_pair(Ctx& x) {
  CnrPairPlan plan;
  plan.params = x.c.params;
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  std::tie(plan.a, plan.b) = separable_pair(x.c.params.n, x.c.params.d, x.i("L"), x.c.params.N, x.i("spacing"));
  plan.sampling = x.sampling;
  if (!x.b("window").is_null()) plan.window = interval_or(x.b("window"), {0, 0});
  plan.mirror = x.flag("mirror");
  plan.enumeration.exact = x.flag("exact");
  plan.enumeration.samples = static_cast<std::size_t>(x.i("samples"));
  plan.enumeration.seed = x.seed;
  plan.enumeration.budget = static_cast<std::size_t>(x.i("budget"));
  const auto r = cnr_pair_experiment(plan);
  const std::string grid = plan.window ? format_interval(plan.window->first, plan.window->second) : "R";
  x.add(x.row("cnr-pair", x.i("L"), std::nullopt, grid, r.estimate));
  x.out.details = {{"a", plan.a}, {"b", plan.b}, {"subcubes_per_cube", r.subcubes_per_cube}, {"mirror", plan.mirror}};
  x.predicate_report(plan.a, 0.5 * x.c.params.E_star);
}

void run_initial_scale(Ctx& x) {
  InitialScalePlan plan;
  plan.params = x.c.params;
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.sizes = x.ints("sizes");
  plan.C_const = x.x("C_const");
  plan.sampling = x.sampling;
  const auto pts = initial_scale_experiment(plan);
  json d = json::array();
  bool nonneg_u = true;
  for (double v : x.c.interaction.phi) nonneg_u = nonneg_u && v >= 0;
  std::size_t violations = 0;
  CsvTable t({"L0", "threshold", "median_E0", "minmax_violations"});
  for (const auto& p : pts) {
    x.add(x.row("initial-scale", p.L0, 0, format_number(p.threshold), p.estimate));
    d.push_back({{"L0", p.L0}, {"threshold", p.threshold}, {"median_E0", p.median_E0},
                 {"minmax_violations", p.minmax_violations}});
    t.row().add(p.L0).add(p.threshold).add(p.median_E0).add(p.minmax_violations);
    violations += p.minmax_violations;
  }
  x.out.details = {{"points", d}, {"C_const", plan.C_const}};
  x.out.tables["initial_scale.csv"] = t.str();
  if (nonneg_u) x.violate("tensor-lower-bound", violations > 0);
}

void run_initial_ds(Ctx& x) {
  InitialDsPlan plan;
  plan.params = x.c.params;
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.sampling = x.sampling;
  plan.scan_all = x.flag("scan_all");
  plan.grid_step = x.x("grid_step");
  plan.dense_threshold = x.i("dense_threshold");
  const auto r = initial_ds_check(plan);
  const double step = plan.grid_step > 0 ? plan.grid_step : r.E_star / 200.0;
  x.add(x.row("initial-ds", x.c.params.L0, 0, format_grid(0, r.E_star, step), count_estimate(r.failures, r.realizations)));
  if (r.singular_rate) x.add(x.row("initial-ds.singular", x.c.params.L0, 0, format_grid(0, r.E_star, step), *r.singular_rate));
  x.out.details = {{"m", r.m},
                   {"E_star", r.E_star},
                   {"C", r.C},
                   {"gap_threshold", r.gap_threshold},
                   {"gamma", r.gamma},
                   {"realizations", r.realizations},
                   {"premise", r.premise},
                   {"failures", r.failures},
                   {"ct_certified", r.ct_certified},
                   {"scanned", r.scanned},
                   {"singular_any", r.singular_any},
                   {"min_E0", r.min_E0},
                   {"median_E0", r.median_E0},
                   {"max_E0", r.max_E0}};
  x.violate("combes-thomas-certification", r.failures > 0);
}

void run_ds(Ctx& x) {
  DsPlan plan;
  plan.params = x.c.params;
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.levels = x.ints("levels");
  plan.spacing = x.i("spacing");
  plan.grid = x.grid();
  plan.sampling = x.sampling;
  plan.dense_threshold = x.i("dense_threshold");
  const auto levels = ds_estimate(plan);
  json d = json::array();
  for (const auto& lv : levels) {
    x.add(x.row("ds-estimate", lv.L, lv.k, format_grid(plan.grid.lo, plan.grid.hi, plan.grid.resolved_step()), lv.estimate));
    d.push_back({{"k", lv.k}, {"L", lv.L}, {"median_margin", lv.median_margin}});
  }
  x.out.details = {{"levels", d}, {"spacing", plan.spacing}};
  if (!levels.empty()) {
    const auto [a, b] = separable_pair(x.c.params.n, x.c.params.d, static_cast<int>(levels.front().L), x.c.params.N, plan.spacing);
    x.predicate_report(a, 0.5 * (plan.grid.lo + plan.grid.hi));
  }
}

ScaleLadder block_ladder(const Ctx& x) { return scale_ladder(x.c.params.L0, x.i("level"), x.c.params.relaxed); }

void run_tunnelling(Ctx& x) {
  TunnellingPlan plan;
  plan.params = x.c.params;
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.ladder = block_ladder(x);
  const auto L = plan.ladder.levels.back();
  // Last particle moved along the first axis so the cube is partially interactive.
  Config center(x.c.params.n, x.c.params.d);
  const int offset = x.b("offset").is_null()
                         ? x.c.params.n * (2 * static_cast<int>(L) + x.c.interaction.r0()) + 1
                         : x.i("offset");
  center.flat()[(x.c.params.n - 1) * x.c.params.d] = offset;
  plan.cube = Rectangle::cube(center, static_cast<int>(L));
  plan.grid = x.grid();
  for (const auto& w : x.b("wells")) {
    SiteBox sb{w["center"].get<std::vector<int>>(), w["radius"].get<int>()};
    if (static_cast<int>(sb.center.size()) != x.c.params.d) throw ConfigError("well center must have d coordinates");
    plan.wells.push_back(sb);
  }
  plan.options.budget = static_cast<std::size_t>(x.i("budget"));
  plan.sampling = x.sampling;
  const auto r = tunnelling_probability(plan);
  x.add(x.row("tunnelling", L, r.level, format_grid(plan.grid.lo, plan.grid.hi, plan.grid.resolved_step()), r.estimate));
  x.out.details = {{"cube", plan.cube}, {"ladder", plan.ladder}, {"separable_pairs", r.separable_pairs}};
  x.predicate_report(plan.cube, 0.5 * (plan.grid.lo + plan.grid.hi), &plan.ladder);
}

CountsPlan counts_plan(const Ctx& x) {
  CountsPlan plan;
  plan.params = x.c.params;
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.ladder = block_ladder(x);
  plan.cube = origin_cube(x.c.params.n, x.c.params.d, static_cast<int>(plan.ladder.levels.back()));
  plan.center_step = x.i("center_step");
  plan.grid = x.grid();
  plan.sampling = x.sampling;
  plan.ell = x.i("ell");
  return plan;
}

void run_counts(Ctx& x) {
  const auto plan = counts_plan(x);
  const auto r = count_statistics(plan);
  const auto L = plan.cube.radius();
  const int k = x.i("level") - 1;
  const auto grid = format_grid(plan.grid.lo, plan.grid.hi, plan.grid.resolved_step());
  x.add(x.row("counts.pi", L, k, grid, r.pi_event));
  x.add(x.row("counts.fi", L, k, grid, r.fi_event));
  CsvTable t({"realization", "M", "M_sep", "M_partial", "M_full", "exact"});
  for (std::size_t i = 0; i < r.per_trial.size(); ++i) {
    const auto& s = r.per_trial[i];
    t.row().add(i).add(s.M).add(s.M_sep).add(s.M_partial).add(s.M_full).add(static_cast<int>(s.exact));
  }
  x.out.tables["counts.csv"] = t.str();
  x.out.details = {{"L_k", r.L_k},
                   {"subcubes", r.subcubes},
                   {"inexact", r.inexact},
                   {"implication_failures", r.implication_failures},
                   {"kappa", kappa(x.c.params.n)}};
  x.violate("separable-pair-implication", r.implication_failures > 0);
  x.predicate_report(plan.cube, 0.5 * (plan.grid.lo + plan.grid.hi), &plan.ladder);
}

void run_audit(Ctx& x) {
  const auto plan = counts_plan(x);
  CnrEnumeration how;
  how.exact = x.flag("exact");
  how.samples = static_cast<std::size_t>(x.i("samples"));
  how.seed = x.seed;
  how.budget = static_cast<std::size_t>(x.i("budget"));
  const auto r = cnr_count_audit(plan, how);
  const bool strict = x.c.params.mode == ParamMode::paper && !x.c.params.relaxed;
  const auto grid = format_grid(plan.grid.lo, plan.grid.hi, plan.grid.resolved_step());
  x.add(x.row("lemma44-audit", plan.cube.radius(), x.i("level") - 1, grid, count_estimate(r.violations, r.checked)));
  json w = json::array();
  for (const auto& a : r.witnesses)
    w.push_back({{"realization", a.realization}, {"E", a.E}, {"M", a.M}, {"max_green", a.max_green}, {"threshold", a.threshold}});
  x.out.details = {{"evaluated", r.evaluated},
                   {"cnr_failed", r.cnr_failed},
                   {"count_exceeded", r.count_exceeded},
                   {"checked", r.checked},
                   {"violations", r.violations},
                   {"witnesses", w},
                   {"binding", strict}};
  // The implication is claimed only under the paper constants; elsewhere the
  // rate is a measurement.
  if (strict) x.violate("cnr-nonsingular-implication", r.violations > 0);
}

void run_edge(Ctx& x) {
  EdgeSweepPlan plan;
  plan.n = x.c.params.n;
  plan.d = x.c.params.d;
  plan.box_sizes = x.ints("box_sizes");
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.sampling = x.sampling;
  plan.eig.dense_threshold = x.i("dense_threshold");
  const auto r = spectral_edge_sweep(plan);
  CsvTable t({"L", "realization", "E0"});
  json d = json::array();
  for (const auto& lv : r.levels) {
    std::size_t negative = 0;
    for (std::size_t i = 0; i < lv.E0.size(); ++i) {
      t.row().add(lv.L).add(i).add(lv.E0[i]);
      if (lv.E0[i] < -1e-9) ++negative;
    }
    x.add(x.row("spectral-edge", lv.L, std::nullopt, "", count_estimate(negative, lv.E0.size())));
    d.push_back({{"L", lv.L}, {"dim", lv.dim}, {"median", lv.median}, {"min", lv.min}, {"max", lv.max}});
  }
  x.out.tables["edge_sweep.csv"] = t.str();
  x.out.details = {{"levels", d}, {"medians_decreasing", r.medians_decreasing}, {"nonnegative", r.nonnegative}};
  x.violate("nonnegativity", !r.nonnegative);
}

void run_weyl(Ctx& x) {
  const int n = x.c.params.n, d = x.c.params.d;
  std::vector<double> energies = x.b("energies").is_null() ? std::vector<double>{0.0, 2.0 * n * d, 4.0 * n * d}
                                                           : x.nums("energies");
  CsvTable t({"E", "m_well", "support_radius", "well_eps", "residual", "kinetic", "potential", "potential_bound"});
  json d_all = json::array();
  bool bound_ok = true;
  for (double E : energies) {
    WeylPlan plan;
    plan.N = x.c.params.N;
    plan.n = n;
    plan.d = d;
    plan.E = E;
    plan.m_wells = x.ints("m_wells");
    plan.k_E = x.i("k_E");
    if (!x.b("well_eps").is_null()) plan.well_eps = x.x("well_eps");
    plan.interaction = x.c.interaction;
    plan.seed = x.seed;
    const auto r = weyl_residual(plan);
    std::size_t steps = 0, decreasing = 0;
    for (std::size_t q = 0; q < r.points.size(); ++q) {
      const auto& p = r.points[q];
      t.row().add(E).add(p.m_well).add(p.support_radius).add(p.well_eps).add(p.residual).add(p.kinetic).add(p.potential).add(p.potential_bound);
      bound_ok = bound_ok && p.potential_ok;
      if (q > 0) {
        ++steps;
        if (p.residual < r.points[q - 1].residual) ++decreasing;
      }
    }
    x.add(x.row("weyl", std::nullopt, std::nullopt, format_number(E), count_estimate(decreasing, steps)));
    d_all.push_back({{"E", E}, {"decreasing", r.decreasing}, {"nonincreasing", r.nonincreasing}});
  }
  x.out.tables["weyl.csv"] = t.str();
  x.out.details = {{"energies", d_all}};
  x.violate("well-potential-bound", !bound_ok);
}

void run_decay(Ctx& x) {
  DecayPlan plan;
  plan.n = x.c.params.n;
  plan.d = x.c.params.d;
  plan.L = x.i("L");
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  if (!x.b("window").is_null()) plan.energy_window = interval_or(x.b("window"), {0, 0});
  plan.lowest_fraction = x.x("lowest_fraction");
  plan.sampling = x.sampling;
  const auto r = decay_spectrum(plan);
  CsvTable t({"realization", "eigenvalue", "center", "rate", "r2", "mass_tail", "shells", "fitted"});
  std::size_t positive = 0;
  for (const auto& row : r.rows) {
    const auto& f = row.fit;
    t.row().add(row.realization).add(f.eigenvalue).add(config_text(f.center)).add(f.rate).add(f.r2).add(f.mass_tail).add(f.shells).add(static_cast<int>(f.fitted));
    if (f.fitted && f.rate > 0) ++positive;
  }
  const std::string grid = plan.energy_window ? format_interval(plan.energy_window->first, plan.energy_window->second)
                                              : "lowest " + format_number(plan.lowest_fraction);
  x.add(x.row("decay", plan.L, std::nullopt, grid, count_estimate(positive, r.states)));
  x.out.tables["decay_fits.csv"] = t.str();
  x.out.details = {{"states", r.states},         {"fitted", r.fitted},       {"fraction_positive", r.fraction_positive},
                   {"median_rate", r.median_rate}, {"median_r2", r.median_r2}, {"q10_rate", r.q10_rate},
                   {"q90_rate", r.q90_rate}};
}

void run_dynamics(Ctx& x) {
  DynPlan plan;
  plan.params = x.c.params;
  plan.L = x.i("L");
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.s = x.x("s");
  plan.interval = interval_or(x.b("interval"), {0.0, x.c.params.E_star});
  const auto box = origin_cube(x.c.params.n, x.c.params.d, plan.L);
  for (const auto& cfg : box.configs())
    if (config_norm(cfg) <= x.i("K_radius")) plan.K.push_back(cfg);
  plan.times = linspace(x.x("t_min"), x.x("t_max"), x.i("t_count"));
  const double tol = x.x("bound_tolerance");
  const auto R = static_cast<std::size_t>(x.i("realizations"));
  std::vector<DynMoment> res(R);
  parallel_for(R, x.sampling.workers, [&](std::size_t r) {
    auto p = plan;
    p.realization = r;
    res[r] = dyn_moment(p);
  });
  CsvTable t({"realization", "t", "M", "B"});
  std::size_t exceed = 0, total = 0;
  json d = json::array();
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t q = 0; q < plan.times.size(); ++q) {
      t.row().add(r).add(plan.times[q]).add(res[r].values[q]).add(res[r].correlator_bound);
      ++total;
      if (!(res[r].values[q] <= res[r].correlator_bound * (1.0 + tol))) ++exceed;
    }
    d.push_back({{"realization", r},
                 {"correlator_bound", res[r].correlator_bound},
                 {"states_in_window", res[r].states_in_window},
                 {"worst_ratio", res[r].worst_ratio},
                 {"median_M", median(res[r].values)},
                 {"min_M", *std::min_element(res[r].values.begin(), res[r].values.end())},
                 {"max_M", *std::max_element(res[r].values.begin(), res[r].values.end())},
                 {"M0_direct", res[r].m0_direct}});
  }
  x.add(x.row("dynamics", plan.L, std::nullopt, format_interval(plan.interval.first, plan.interval.second),
              count_estimate(exceed, total)));
  x.out.tables["dynamics.csv"] = t.str();
  x.out.details = {{"s", plan.s}, {"s_star", x.c.params.s_star()}, {"K_size", plan.K.size()}, {"realizations", d}};
  x.violate("correlator-bound", exceed > 0);
}

void run_kernel(Ctx& x) {
  KernelPlan plan;
  plan.N = x.c.params.N;
  plan.n = x.c.params.n;
  plan.d = x.c.params.d;
  plan.L = x.i("L");
  plan.ensemble = x.c.ensemble;
  plan.interaction = x.c.interaction;
  plan.interval = interval_or(x.b("interval"), {0.0, x.c.params.E_star});
  plan.times = x.nums("times");
  plan.annulus_factor = x.x("annulus_factor");
  plan.ladder_L0 = x.i("ladder_L0");
  plan.ladder_relaxed = true;
  plan.sampling = {static_cast<std::size_t>(x.i("realizations")), x.sampling.workers};
  const auto r = kernel_decay(plan);
  const double tol = x.x("route_tolerance");
  CsvTable t({"realization", "x", "y", "distance", "annulus", "f", "t", "matrix_element", "hs_norm"});
  std::size_t gaps = 0;
  for (const auto& row : r.rows) {
    t.row().add(row.realization).add(config_text(row.x)).add(config_text(row.y)).add(row.distance).add(row.annulus)
        .add(std::string(row.identity ? "1" : "exp")).add(row.t).add(row.matrix_element).add(row.hs_norm);
    if (!(std::abs(row.matrix_element - row.hs_norm) <= tol)) ++gaps;
  }
  json a = json::array();
  for (const auto& q : r.annuli) a.push_back({{"j", q.j}, {"inner", q.inner}, {"outer", q.outer}, {"rows", q.rows}, {"median", q.median}});
  x.add(x.row("kernel-decay", plan.L, std::nullopt, format_interval(plan.interval.first, plan.interval.second),
              count_estimate(gaps, r.rows.size())));
  x.out.tables["kernel.csv"] = t.str();
  x.out.details = {{"annuli", a}, {"max_route_gap", r.max_route_gap}, {"medians_decreasing", r.medians_decreasing}};
  x.violate("kernel-two-route", gaps > 0);
}

void run_ct(Ctx& x) {
  const auto r = ct_check(x.c.trials, x.seed);
  x.add(x.row("ct-check", std::nullopt, std::nullopt, "", count_estimate(r.failures, r.instances)));
  x.out.details = {{"instances", r.instances}, {"failures", r.failures}, {"worst_ratio", r.worst}};
  x.violate("combes-thomas", r.failures > 0);
}

void run_stollmann(Ctx& x) {
  const auto r = stollmann_check(x.c.trials, x.nums("ts"), x.seed);
  x.add(x.row("stollmann-check", std::nullopt, std::nullopt, "", count_estimate(r.failures, r.instances)));
  x.out.details = {{"instances", r.instances}, {"failures", r.failures}, {"worst_slack", r.worst}};
  x.violate("diagonal-monotonicity", r.failures > 0);
}

std::string short_number(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.filename().string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt " + p.filename().string() + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& results_columns() {
  static const std::vector<std::string> cols{"experiment", "N",      "n",       "d",           "L",
                                             "k",          "p",      "m",       "E_star",      "eps_or_grid",
                                             "trials",     "hits",   "point",   "ci_low",      "ci_high",
                                             "bound_log10", "vacuous_flag", "seed"};
  return cols;
}

CsvTable& CsvTable::add(const std::string& s) {
  rows_.back().push_back(csv_escape(s));
  return *this;
}
CsvTable& CsvTable::add(double v) {
  rows_.back().push_back(format_number(v));
  return *this;
}
CsvTable& CsvTable::add(std::int64_t v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

std::string CsvTable::str() const {
  std::string s;
  for (std::size_t i = 0; i < header_.size(); ++i) s += (i ? "," : "") + header_[i];
  s += "\n";
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
    s += "\n";
  }
  return s;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  CsvTable t(results_columns());
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    t.row().add(r.experiment).add(r.N).add(r.n).add(r.d);
    r.L ? t.add(*r.L) : t.add(std::string());
    r.k ? t.add(*r.k) : t.add(std::string());
    t.add(r.p).add(r.m).add(r.E_star).add(r.eps_or_grid);
    t.add(static_cast<std::int64_t>(e.trials)).add(static_cast<std::int64_t>(e.hits)).add(e.point).add(e.ci_low).add(e.ci_high);
    if (std::isnan(e.bound_log10))
      t.add(std::string()).add(std::string());
    else
      t.add(e.bound_log10).add(static_cast<int>(e.vacuous));
    t.add(std::to_string(r.seed));
  }
  return t.str();
}

void to_json(json& j, const ResultRow& r) {
  j = {{"experiment", r.experiment}, {"N", r.N}, {"n", r.n}, {"d", r.d},
       {"L", r.L ? json(*r.L) : json(nullptr)}, {"k", r.k ? json(*r.k) : json(nullptr)},
       {"p", r.p}, {"m", r.m}, {"E_star", r.E_star}, {"eps_or_grid", r.eps_or_grid},
       {"estimate", r.estimate}, {"seed", r.seed}};
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Outcome execute(const RunConfig& c, bool emit_reports) {
  Outcome out;
  const std::uint64_t seed = c.seed.value_or(kDefaultSeed);
  RunConfig rc = c;
  rc.ensemble.seed_root = seed;
  Ctx x{rc, seed, Sampling{rc.trials, rc.workers}, out, emit_reports};
  try {
    switch (rc.experiment) {
      case Experiment::geometry_verify: run_geometry(x); break;
      case Experiment::wegner: run_wegner(x); break;
      case Experiment::cnr_pair: run_cnr_pair(x); break;
      case Experiment::initial_scale: run_initial_scale(x); break;
      case Experiment::initial_ds: run_initial_ds(x); break;
      case Experiment::ds_estimate: run_ds(x); break;
      case Experiment::tunnelling: run_tunnelling(x); break;
      case Experiment::counts: run_counts(x); break;
      case Experiment::lemma44_audit: run_audit(x); break;
      case Experiment::spectral_edge: run_edge(x); break;
      case Experiment::weyl: run_weyl(x); break;
      case Experiment::decay: run_decay(x); break;
      case Experiment::dynamics: run_dynamics(x); break;
      case Experiment::kernel_decay: run_kernel(x); break;
      case Experiment::ct_check: run_ct(x); break;
      case Experiment::stollmann_check: run_stollmann(x); break;
    }
  } catch (const InvariantViolation& v) {
    out.violated.push_back(v.invariant);
    out.details["invariant_message"] = v.what();
  }
  return out;
}

int run(RunConfig config, const RunOptions& o, std::ostream& log) {
  try {
    if (o.workers) {
      if (*o.workers < 1) throw ConfigError("--workers must be >= 1");
      config.workers = *o.workers;
    }
    if (o.out) config.output_dir = *o.out;
    config.seed = resolve_seed(o.seed, config, o.getenv_fn);
    const std::string resolved = serialize(config);
    // Neither the worker count nor the output location changes the numbers.
    RunConfig canonical = config;
    canonical.workers = 1;
    canonical.output_dir = "";
    const std::string hash = fnv1a_hex(serialize(canonical));
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);

    const auto start = iso_now();
    const auto outcome = execute(config, o.emit_reports);
    const auto end = iso_now();

    write_file(dir / "config.resolved.yaml", resolved);
    write_file(dir / "results.csv", results_csv(outcome.rows));
    std::vector<std::string> files{"results.csv", "summary.json", "config.resolved.yaml"};
    for (const auto& [name, text] : outcome.tables) {
      write_file(dir / name, text);
      files.push_back(name);
    }
    if (o.emit_reports) {
      fs::create_directories(dir / "reports");
      json rep = outcome.reports;
      rep["details"] = outcome.details;
      write_file(dir / "reports" / (to_string(config.experiment) + ".json"), rep.dump(2) + "\n");
      files.push_back("reports/" + to_string(config.experiment) + ".json");
    }
    const int code = outcome.violated.empty() ? kExitOk : kExitInvariant;
    json summary = {{"experiment", to_string(config.experiment)},
                    {"manifest", "manifest.json"},
                    {"config_hash", hash},
                    {"seed", *config.seed},
                    {"rows", outcome.rows},
                    {"details", outcome.details},
                    {"violated_invariants", outcome.violated},
                    {"exit_code", code}};
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    json manifest = {{"config_hash", hash},
                     {"config_file", "config.resolved.yaml"},
                     {"start", start},
                     {"end", end},
                     {"artifact_version", kArtifactVersion},
                     {"experiment", to_string(config.experiment)},
                     {"paper_claim", paper_claim(config.experiment)},
                     {"seed", *config.seed},
                     {"workers", config.workers},
                     {"files", files}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    for (const auto& v : outcome.violated) log << "invariant violated: " << v << "\n";
    return code;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitOperational;
  }
}

int report(const std::string& dir_name, std::ostream& out, std::ostream& err) {
  try {
    const fs::path dir(dir_name);
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir_name);
    if (fs::is_empty(dir)) throw std::runtime_error("empty results directory: " + dir_name);
    const auto manifest = read_json(dir / "manifest.json");
    const auto summary = read_json(dir / "summary.json");
    if (summary.value("config_hash", "") != manifest.value("config_hash", "?"))
      throw std::runtime_error("summary and manifest disagree on the config hash");
    out << "experiment : " << manifest.at("experiment").get<std::string>() << "\n";
    out << "claim      : " << manifest.at("paper_claim").get<std::string>() << "\n";
    out << "seed       : " << manifest.at("seed").get<std::uint64_t>() << "   config " << manifest.at("config_hash").get<std::string>()
        << "   version " << manifest.at("artifact_version").get<std::string>() << "\n\n";
    out << std::left << std::setw(30) << "row" << std::setw(8) << "L" << std::setw(5) << "k" << std::setw(28) << "eps/grid"
        << std::setw(14) << "hits/trials" << std::setw(12) << "estimate" << std::setw(26) << "95% CI"
        << "bound\n";
    const auto& rows = summary.at("rows");
    for (const auto& r : rows) {
      const auto& e = r.at("estimate");
      std::ostringstream ci, ht, bound;
      ci << "[" << short_number(e.at("ci_low").get<double>()) << ", " << short_number(e.at("ci_high").get<double>()) << "]";
      ht << e.at("hits").get<std::uint64_t>() << "/" << e.at("trials").get<std::uint64_t>();
      if (e.at("bound_log10").is_null()) {
        bound << "-";
      } else if (e.at("vacuous").get<bool>()) {
        bound << "10^" << short_number(e.at("bound_log10").get<double>()) << " (vacuous)";
      } else {
        bound << short_number(std::pow(10.0, e.at("bound_log10").get<double>()));
      }
      out << std::left << std::setw(30) << r.at("experiment").get<std::string>() << std::setw(8)
          << (r.at("L").is_null() ? "-" : std::to_string(r.at("L").get<std::int64_t>())) << std::setw(5)
          << (r.at("k").is_null() ? "-" : std::to_string(r.at("k").get<int>())) << std::setw(28)
          << r.at("eps_or_grid").get<std::string>() << std::setw(14) << ht.str() << std::setw(12)
          << short_number(e.at("point").get<double>()) << std::setw(26) << ci.str() << bound.str() << "\n";
    }
    // Trend between consecutive ladder levels.
    for (std::size_t q = 1; q < rows.size(); ++q) {
      const auto& a = rows[q - 1];
      const auto& b = rows[q];
      if (a.at("k").is_null() || b.at("k").is_null() || a.at("experiment") != b.at("experiment")) continue;
      if (a.at("experiment") != "ds-estimate") continue;
      const auto& ea = a.at("estimate");
      const auto& eb = b.at("estimate");
      const double pa = ea.at("point").get<double>(), pb = eb.at("point").get<double>();
      const char* arrow = pb < pa ? "v (down)" : pb > pa ? "^ (up)" : "= (flat)";
      const bool disjoint = eb.at("ci_high").get<double>() < ea.at("ci_low").get<double>() ||
                            ea.at("ci_high").get<double>() < eb.at("ci_low").get<double>();
      out << "\ntrend k=" << a.at("k").get<int>() << " -> k=" << b.at("k").get<int>() << ": " << arrow << ", 95% CIs "
          << (disjoint ? "disjoint" : "overlap") << "\n";
    }
    const auto& violated = summary.at("violated_invariants");
    if (!violated.empty()) {
      out << "\nviolated invariants:";
      for (const auto& v : violated) out << " " << v.get<std::string>();
      out << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "report: " << e.what() << "\n";
    return kExitOperational;
  }
}

}  // namespace anderson
