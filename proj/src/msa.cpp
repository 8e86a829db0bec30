#include "anderson/msa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "anderson/parallel.hpp"

namespace anderson {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PotentialSample sample_on(const DisorderEnsemble& e, std::uint64_t realization,
                          std::initializer_list<const Rectangle*> rects) {
  std::set<Site> window;
  for (const Rectangle* r : rects) {
    const auto p = full_projection(*r);
    window.insert(p.begin(), p.end());
  }
  return sample_potential(e, realization, window);
}

double min_spectral_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double best = std::numeric_limits<double>::infinity();
  Eigen::Index i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    best = std::min(best, std::abs(a[i] - b[j]));
    if (a[i] < b[j])
      ++i;
    else
      ++j;
  }
  return best;
}

double log10_sum(double la, double lb) {
  const double hi = std::max(la, lb);
  if (std::isinf(hi) && hi < 0) return hi;
  return hi + std::log10(std::pow(10.0, la - hi) + std::pow(10.0, lb - hi));
}

std::int64_t pow4(int e) { return std::int64_t{1} << (2 * e); }

double threshold_for(const OperatorMatrix& op, const ModelParams& params) {
  const int L = op.rectangle().radius();
  return std::exp(-gamma(params.m, L, op.rectangle().n(), params.N) * L);
}

Config translated(const Config& c, const Site& t) {
  Config out = c;
  for (int i = 0; i < c.n(); ++i)
    for (int a = 0; a < c.d(); ++a) out(i, a) += t[static_cast<std::size_t>(a)];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

double wegner_bound(const Rectangle& a, const Rectangle& b, const DisorderEnsemble& e, double eps) {
  std::size_t widest = 0;
  for (int i = 0; i < a.n(); ++i)
    widest = std::max({widest, a.particle_box(i).cardinality(), b.particle_box(i).cardinality()});
  return static_cast<double>(a.cardinality()) * static_cast<double>(b.cardinality()) * static_cast<double>(widest) *
         continuity_modulus(e, 2 * eps);
}

WegnerResult wegner_experiment(const WegnerPlan& plan) {
  if (plan.a.n() != plan.b.n()) throw std::invalid_argument("wegner: rectangles have different particle numbers");
  if (!is_separable(plan.a, plan.b, plan.params.N).pre_separable)
    throw std::invalid_argument("wegner: rectangles are not pre-separable");
  if (plan.eps.empty()) throw std::invalid_argument("wegner: empty eps list");

  const std::size_t T = plan.sampling.trials;
  std::vector<double> dist(T);
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    const auto pot = sample_on(plan.ensemble, i, {&plan.a, &plan.b});
    const auto ea = eig(assemble(plan.a, pot, plan.interaction), false).eigenvalues;
    const auto eb = eig(assemble(plan.b, pot, plan.interaction), false).eigenvalues;
    dist[i] = min_spectral_distance(ea, eb);
  });

  WegnerResult out;
  out.eps = plan.eps;
  std::size_t widest = 0;
  for (int i = 0; i < plan.a.n(); ++i)
    widest = std::max({widest, plan.a.particle_box(i).cardinality(), plan.b.particle_box(i).cardinality()});
  out.prefactor = static_cast<double>(plan.a.cardinality() * plan.b.cardinality() * widest);
  std::vector<double> lx, ly, ratios;
  for (double eps : plan.eps) {
    const auto hits = static_cast<std::uint64_t>(std::count_if(dist.begin(), dist.end(), [&](double v) { return v <= eps; }));
    const double bound = wegner_bound(plan.a, plan.b, plan.ensemble, eps);
    out.bounds.push_back(bound);
    out.estimates.push_back(MonteCarloEstimate::make(hits, T, std::log10(bound),
                                                     "P{dist(sigma, sigma') <= eps} <= |C'||C| max|Pi_i| s(F_V, 2eps)"));
    const double P = out.estimates.back().point;
    ratios.push_back(P / eps);
    if (hits > 0) {
      lx.push_back(std::log(eps));
      ly.push_back(std::log(P));
    }
  }
  if (lx.size() >= 2) out.loglog = least_squares(lx, ly);
  const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
  out.ratio_spread = *mn > 0 ? *mx / *mn : std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<double, double>> cnr_failure_set(const SubcubeSpectra& sub) {
  std::vector<std::pair<double, double>> iv;
  for (const auto& e : sub.entries()) {
    const double t = resonance_threshold(e.radius, sub.params().beta);
    for (Eigen::Index k = 0; k < e.eigenvalues.size(); ++k) iv.emplace_back(e.eigenvalues[k] - t, e.eigenvalues[k] + t);
  }
  std::sort(iv.begin(), iv.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& x : iv) {
    if (!merged.empty() && x.first < merged.back().second)
      merged.back().second = std::max(merged.back().second, x.second);
    else
      merged.push_back(x);
  }
  return merged;
}

bool interval_sets_meet(const std::vector<std::pair<double, double>>& a, const std::vector<std::pair<double, double>>& b,
                        double lo, double hi) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double l = std::max({a[i].first, b[j].first, lo});
    const double h = std::min({a[i].second, b[j].second, hi});
    if (l < h) return true;
    if (a[i].second < b[j].second)
      ++i;
    else
      ++j;
  }
  return false;
}

CnrPairResult cnr_pair_experiment(const CnrPairPlan& plan) {
  if (!is_separable(plan.a, plan.b, plan.params.N).separable)
    throw std::invalid_argument("cnr-pair: cubes are not separable");
  Site shift;
  if (plan.mirror) {
    if (plan.a.radii() != plan.b.radii()) throw std::invalid_argument("cnr-pair mirror: radii differ");
    shift = plan.b.center().particle(0);
    const Site base = plan.a.center().particle(0);
    for (std::size_t k = 0; k < shift.size(); ++k) shift[k] -= base[k];
    if (translated(plan.a.center(), shift) != plan.b.center())
      throw std::invalid_argument("cnr-pair mirror: second cube is not a translate of the first");
  }
  const double lo = plan.window ? plan.window->first : -std::numeric_limits<double>::infinity();
  const double hi = plan.window ? plan.window->second : std::numeric_limits<double>::infinity();

  const std::size_t T = plan.sampling.trials;
  std::vector<char> hit(T, 0);
  std::vector<std::size_t> subs(T, 0);
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    PotentialSample pot;
    if (plan.mirror) {
      pot = sample_potential(plan.ensemble, i, full_projection(plan.a));
      for (const auto& s : full_projection(plan.b)) {
        Site src = s;
        for (std::size_t k = 0; k < src.size(); ++k) src[k] -= shift[k];
        pot.values[s] = plan.ensemble.draw(i, src);
      }
    } else {
      pot = sample_on(plan.ensemble, i, {&plan.a, &plan.b});
    }
    const SubcubeSpectra sa(plan.a, pot, plan.interaction, plan.params, plan.enumeration);
    const SubcubeSpectra sb(plan.b, pot, plan.interaction, plan.params, plan.enumeration);
    subs[i] = sa.entries().size();
    hit[i] = interval_sets_meet(cnr_failure_set(sa), cnr_failure_set(sb), lo, hi);
  });
  CnrPairResult out;
  out.subcubes_per_cube = T ? subs[0] : 0;
  const auto hits = static_cast<std::uint64_t>(std::count(hit.begin(), hit.end(), 1));
  out.estimate = MonteCarloEstimate::make(hits, T, cnr_pair_bound_log10(plan.a.max_radius(), plan.params.N, plan.params.p),
                                          "P{exists E: neither cube is E-CNR} < L^{-4^N p}");
  return out;
}

// ---------------------------------------------------------------------------

Rectangle origin_cube(int n, int d, int L) { return Rectangle::cube(Config(n, d), L); }

std::vector<InitialScalePoint> initial_scale_experiment(const InitialScalePlan& plan) {
  const int n = plan.params.n, d = plan.params.d;
  std::vector<InitialScalePoint> out;
  for (int L0 : plan.sizes) {
    const auto cube = origin_cube(n, d, L0);
    const auto one = origin_cube(1, d, L0);
    InitialScalePoint pt;
    pt.L0 = L0;
    pt.threshold = 2.0 * plan.C_const / std::sqrt(static_cast<double>(L0));
    const std::size_t T = plan.sampling.trials;
    std::vector<double> E0(T);
    std::vector<char> violation(T, 0);
    parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
      const auto pot = sample_potential(plan.ensemble, i, cube);
      E0[i] = lowest_eigenvalue(assemble(cube, pot, plan.interaction));
      if (n > 1 || !plan.interaction.phi.empty()) {
        // All particles share the same box, so the tensor bound is n E_0^{(1)}.
        const double single = lowest_eigenvalue(assemble(one, pot, InteractionSpec::none()));
        violation[i] = E0[i] < n * single - 1e-9 * (1 + std::abs(E0[i]));
      }
    });
    const auto hits = static_cast<std::uint64_t>(std::count_if(E0.begin(), E0.end(), [&](double e) { return e <= pt.threshold; }));
    pt.estimate = MonteCarloEstimate::make(hits, T, kNaN, "P{E_0 <= 2C L0^{-1/2}} <= C_1 L0^d exp(-c L0^{1/4})");
    pt.median_E0 = median(E0);
    pt.minmax_violations = static_cast<std::size_t>(std::count(violation.begin(), violation.end(), 1));
    out.push_back(pt);
  }
  return out;
}

bool combes_thomas_certifies(double gap, int L, int n, int d, double gamma_value) {
  if (!(gap > 0)) return false;
  const double eta = std::min(1.0, gap);
  const double log_bound = std::log(2.0 / eta) - eta * L / (12.0 * n * d);
  return log_bound <= -gamma_value * L;
}

InitialDsReport initial_ds_check(const InitialDsPlan& plan) {
  const auto& P = plan.params;
  P.validate();
  InitialDsReport rep;
  rep.m = P.m;
  rep.E_star = P.E_star;
  rep.C = P.mode == ParamMode::paper ? paper_gap_constant(P.N, P.d) : kNaN;
  rep.gap_threshold = 2.0 * P.E_star;
  rep.gamma = gamma(P.m, P.L0, P.n, P.N);
  rep.realizations = plan.sampling.trials;

  const auto cube = origin_cube(P.n, P.d, P.L0);
  const double step = plan.grid_step > 0 ? plan.grid_step : P.E_star / 200.0;
  const auto grid = energy_grid(0.0, P.E_star, step);

  const std::size_t T = plan.sampling.trials;
  struct Row {
    double E0 = 0;
    bool premise = false, certified = false, scanned = false, singular = false;
  };
  std::vector<Row> rows(T);
  EigOptions eo;
  eo.dense_threshold = plan.dense_threshold;
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    const auto op = assemble(cube, sample_potential(plan.ensemble, i, cube), plan.interaction);
    Row& r = rows[i];
    r.E0 = lowest_eigenvalue(op, eo);
    r.premise = r.E0 > rep.gap_threshold;
    if (r.premise) {
      r.certified = std::all_of(grid.begin(), grid.end(), [&](double E) {
        return combes_thomas_certifies(r.E0 - E, P.L0, P.n, P.d, rep.gamma);
      });
    }
    if (r.premise || plan.scan_all) {
      r.scanned = true;
      r.singular = scan_singular(op, grid, P, plan.dense_threshold).any();
    }
  });
  std::vector<double> e0;
  for (const auto& r : rows) {
    e0.push_back(r.E0);
    rep.premise += r.premise;
    rep.ct_certified += r.certified;
    rep.failures += r.premise && r.singular;
    rep.scanned += r.scanned;
    rep.singular_any += r.scanned && r.singular;
  }
  rep.min_E0 = *std::min_element(e0.begin(), e0.end());
  rep.max_E0 = *std::max_element(e0.begin(), e0.end());
  rep.median_E0 = median(e0);
  if (plan.scan_all && T > 0)
    rep.singular_rate = MonteCarloEstimate::make(rep.singular_any, T, kNaN,
                                                 "P{exists E <= E*: C_{L0} is (E,m)-S} <= P{E_0 <= 2C L0^{-1/2}}");
  return rep;
}

// ---------------------------------------------------------------------------

std::pair<Rectangle, Rectangle> separable_pair(int n, int d, int L, int N, int spacing) {
  Config a(n, d);
  for (int i = 0; i < n; ++i) a(i, 0) = i * spacing * L;
  Site t(static_cast<std::size_t>(d), 0);
  t[0] = (n - 1) * spacing * L + 7 * N * L + 1;
  return {Rectangle::cube(a, L), Rectangle::cube(translated(a, t), L)};
}

PairScan scan_pair(const OperatorMatrix& a, const OperatorMatrix& b, const GridSpec& grid, const ModelParams& params,
                   Eigen::Index dense_threshold) {
  std::vector<double> extra;
  double half = 0.0;
  if (grid.augment) {
    for (const auto* op : {&a, &b}) {
      const auto ev = eigenvalues_up_to(*op, grid.hi, dense_threshold);
      for (Eigen::Index k = 0; k < ev.size(); ++k)
        if (ev[k] >= grid.lo) extra.push_back(ev[k]);
    }
    half = resonance_threshold(a.rectangle().min_radius(), params.beta) / 2;
  }
  const auto energies = energy_grid(grid.lo, grid.hi, grid.resolved_step(), extra, half);
  const auto sa = scan_singular(a, energies, params, dense_threshold);
  PairScan out;
  const double thr = threshold_for(a, params);
  out.margin_a = -std::numeric_limits<double>::infinity();
  std::vector<double> sub;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    if (!std::isnan(sa.max_green[i])) out.margin_a = std::max(out.margin_a, std::log(sa.max_green[i] / thr));
    if (sa.singular[i]) sub.push_back(energies[i]);
  }
  if (std::isinf(out.margin_a)) out.margin_a = kNaN;
  if (!sub.empty()) out.both = scan_singular(b, sub, params, dense_threshold).any();
  return out;
}

std::vector<DsLevel> ds_estimate(const DsPlan& plan) {
  const auto& P = plan.params;
  if (plan.levels.empty()) throw std::invalid_argument("ds-estimate: no ladder levels");
  const int K = *std::max_element(plan.levels.begin(), plan.levels.end());
  const auto ladder = scale_ladder(P.L0, K, P.relaxed);
  std::vector<DsLevel> out;
  for (int k : plan.levels) {
    const auto L = ladder.levels.at(static_cast<std::size_t>(k));
    const auto [a, b] = separable_pair(P.n, P.d, static_cast<int>(L), P.N, plan.spacing);
    if (!is_separable(a, b, P.N).separable) throw InvariantViolation("separable-pair", "generated cube pair is not separable");
    const std::size_t T = plan.sampling.trials;
    std::vector<char> hit(T, 0);
    std::vector<double> margin(T, kNaN);
    parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
      const auto pot = sample_on(plan.ensemble, i, {&a, &b});
      const auto s = scan_pair(assemble(a, pot, plan.interaction), assemble(b, pot, plan.interaction), plan.grid, P,
                               plan.dense_threshold);
      hit[i] = s.both;
      margin[i] = s.margin_a;
    });
    DsLevel lv;
    lv.k = k;
    lv.L = L;
    lv.estimate = MonteCarloEstimate::make(static_cast<std::uint64_t>(std::count(hit.begin(), hit.end(), 1)), T,
                                           ds_bound_log10(static_cast<double>(L), P.N, P.n, P.p),
                                           "P{exists E in I: both cubes (E,m)-S} <= L_k^{-2p 4^{N-n}}");
    std::vector<double> finite;
    for (double m : margin)
      if (!std::isnan(m)) finite.push_back(m);
    lv.median_margin = finite.empty() ? kNaN : median(finite);
    out.push_back(lv);
  }
  return out;
}

// ---------------------------------------------------------------------------

TunnellingResult tunnelling_probability(const TunnellingPlan& plan) {
  const auto& P = plan.params;
  const auto level = plan.ladder.level_of(plan.cube.radius());
  if (!level || *level < 1) throw std::invalid_argument("tunnelling: cube radius is not a ladder level >= 1");
  const auto energies = energy_grid(plan.grid.lo, plan.grid.hi, plan.grid.resolved_step());
  const std::size_t T = plan.sampling.trials;
  std::vector<char> hit(T, 0);
  std::vector<std::size_t> pairs(T, 0);
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    auto pot = sample_potential(plan.ensemble, i, plan.cube);
    for (auto& [site, v] : pot.values)
      for (const auto& w : plan.wells)
        if (w.contains(site)) v = 0.0;
    for (double E : energies) {
      const auto t = is_tunnelling(plan.cube, pot, plan.interaction, E, P.m, P, plan.ladder, plan.options);
      pairs[i] = t.separable_pairs;
      if (t.tunnelling()) {
        hit[i] = 1;
        break;
      }
      if (t.separable_pairs == 0) break;
    }
  });
  TunnellingResult out;
  out.level = *level;
  out.separable_pairs = T ? pairs[0] : 0;
  out.estimate = MonteCarloEstimate::make(static_cast<std::uint64_t>(std::count(hit.begin(), hit.end(), 1)), T,
                                          tunnelling_bound_log10(plan.cube.radius(), P.N, P.n, P.p),
                                          "P{exists E in I: cube is (E,m)-T} <= (1/2) L_{k+1}^{-4p 4^{N-n}}");
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Config> subcube_centers(const Rectangle& cube, int l, int step) {
  if (step < 1) throw std::invalid_argument("subcube_centers: step must be positive");
  const int L = cube.radius();
  if (l > L) throw std::invalid_argument("subcube_centers: sub-cube larger than host");
  const int w = L - l;
  std::vector<int> offs;
  for (int o = -w; o <= w; o += step) offs.push_back(o);
  if (offs.back() != w) offs.push_back(w);
  const auto dims = cube.center().size();
  std::vector<Config> out;
  std::vector<std::size_t> idx(dims, 0);
  for (;;) {
    Config c = cube.center();
    for (std::size_t k = 0; k < dims; ++k) c.flat()[k] += offs[idx[k]];
    out.push_back(c);
    std::size_t k = dims;
    while (k > 0) {
      --k;
      if (++idx[k] < offs.size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
    if (dims == 0) return out;
  }
}

namespace {

struct SubcubeScan {
  std::vector<Config> centers;
  std::vector<InteractivityVerdict> inter;
  std::int64_t L_k = 0;
  CountGeometry geometry;
};

SubcubeScan prepare_subcubes(const CountsPlan& plan) {
  const auto level = plan.ladder.level_of(plan.cube.radius());
  if (!level || *level < 1) throw std::invalid_argument("counts: cube radius is not a ladder level >= 1");
  SubcubeScan s;
  s.L_k = plan.ladder.levels[static_cast<std::size_t>(*level - 1)];
  s.centers = subcube_centers(plan.cube, static_cast<int>(s.L_k), plan.center_step);
  for (const auto& c : s.centers)
    s.inter.push_back(classify_interactivity(Rectangle::cube(c, static_cast<int>(s.L_k)), plan.interaction.r0()));
  s.geometry = count_geometry(s.centers, s.inter, static_cast<int>(s.L_k), plan.params.N);
  return s;
}

std::vector<SpectralResolvent> subcube_resolvents(const std::vector<OperatorMatrix>& ops,
                                                  const ModelParams& params) {
  std::vector<SpectralResolvent> out;
  out.reserve(ops.size());
  for (const auto& op : ops) out.emplace_back(op, params);
  return out;
}

std::vector<double> count_grid(const CountsPlan& plan, const std::vector<SpectralResolvent>& res, double half) {
  std::vector<double> extra;
  if (plan.grid.augment)
    for (const auto& r : res) {
      const auto& ev = r.spectrum().eigenvalues;
      for (Eigen::Index k = 0; k < ev.size(); ++k)
        if (ev[k] >= plan.grid.lo && ev[k] <= plan.grid.hi) extra.push_back(ev[k]);
    }
  return energy_grid(plan.grid.lo, plan.grid.hi, plan.grid.resolved_step(), extra, plan.grid.augment ? half : 0.0);
}

}  // namespace

CountsResult count_statistics(const CountsPlan& plan) {
  const auto& P = plan.params;
  const auto s = prepare_subcubes(plan);
  const int Lk = static_cast<int>(s.L_k);
  const std::size_t T = plan.sampling.trials;
  std::vector<SingularCounts> best(T);
  std::vector<char> fail(T, 0);
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    const auto pot = sample_potential(plan.ensemble, i, plan.cube);
    std::vector<OperatorMatrix> ops;
    for (const auto& c : s.centers) ops.push_back(assemble(Rectangle::cube(c, Lk), pot, plan.interaction));
    const auto res = subcube_resolvents(ops, P);
    const auto grid = count_grid(plan, res, resonance_threshold(Lk, P.beta) / 2);
    SingularCounts mx;
    for (double E : grid) {
      std::vector<bool> sing(res.size());
      for (std::size_t j = 0; j < res.size(); ++j) sing[j] = res[j].singular_at(E).singular;
      const auto c = count_singular(s.geometry, sing);
      mx.M = std::max(mx.M, c.M);
      mx.M_sep = std::max(mx.M_sep, c.M_sep);
      mx.M_partial = std::max(mx.M_partial, c.M_partial);
      mx.M_full = std::max(mx.M_full, c.M_full);
      mx.exact = mx.exact && c.exact;
      if (!c.lemma_sep_implication) {
        mx.lemma_sep_implication = false;
        fail[i] = 1;
      }
    }
    best[i] = mx;
  });
  CountsResult out;
  out.L_k = s.L_k;
  out.subcubes = s.centers.size();
  out.per_trial = best;
  const auto kap = kappa(P.n);
  std::uint64_t pi_hits = 0, fi_hits = 0;
  for (const auto& c : best) {
    pi_hits += c.M_partial >= kap + 2;
    fi_hits += c.M_full >= 2 * plan.ell;
    out.inexact += !c.exact;
  }
  out.implication_failures = static_cast<std::size_t>(std::count(fail.begin(), fail.end(), 1));
  const double Lk1 = plan.cube.radius();
  out.pi_event = MonteCarloEstimate::make(pi_hits, T, pi_count_bound_log10(Lk, Lk1, P.N, P.n, P.d, P.p),
                                          "P{M_PI >= kappa(n)+2} <= (3^{2nd}/2) L_{k+1}^{2nd}(L_k^{-4^N p} + L_k^{-4p 4^{N-n}})");
  out.fi_event = MonteCarloEstimate::make(fi_hits, T, fi_count_bound_log10(Lk, Lk1, P.N, P.n, P.d, P.p, plan.ell),
                                          "P{M_FI >= 2l} <= C(n,N,d,l) L_k^{2l dn alpha} L_k^{-2l p 4^{N-n}}");
  return out;
}

CnrCountAudit cnr_count_audit(const CountsPlan& plan, const CnrEnumeration& how) {
  const auto& P = plan.params;
  const auto s = prepare_subcubes(plan);
  const int Lk = static_cast<int>(s.L_k);
  const int J = static_cast<int>(kappa(P.n)) + 5;
  const std::size_t T = plan.sampling.trials;
  std::vector<CnrCountAudit> per(T);
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    const auto pot = sample_potential(plan.ensemble, i, plan.cube);
    std::vector<OperatorMatrix> ops;
    for (const auto& c : s.centers) ops.push_back(assemble(Rectangle::cube(c, Lk), pot, plan.interaction));
    const auto res = subcube_resolvents(ops, P);
    const SubcubeSpectra host_subs(plan.cube, pot, plan.interaction, P, how);
    const auto host_op = assemble(plan.cube, pot, plan.interaction);
    const SpectralResolvent host(host_op, P);
    auto grid = count_grid(plan, res, resonance_threshold(Lk, P.beta) / 2);
    CnrCountAudit& a = per[i];
    for (double E : grid) {
      ++a.evaluated;
      if (!is_e_cnr(host_subs, E).cnr) {
        ++a.cnr_failed;
        continue;
      }
      std::vector<bool> sing(res.size());
      for (std::size_t j = 0; j < res.size(); ++j) sing[j] = res[j].singular_at(E).singular;
      const int M = count_singular(s.geometry, sing).M;
      if (M > J) {
        ++a.count_exceeded;
        continue;
      }
      ++a.checked;
      const auto v = host.singular_at(E);
      if (v.singular) {
        ++a.violations;
        a.witnesses.push_back({i, E, M, v.max_green, v.threshold});
      }
    }
  });
  CnrCountAudit out;
  for (const auto& a : per) {
    out.evaluated += a.evaluated;
    out.cnr_failed += a.cnr_failed;
    out.count_exceeded += a.count_exceeded;
    out.checked += a.checked;
    out.violations += a.violations;
    for (const auto& w : a.witnesses)
      if (out.witnesses.size() < 100) out.witnesses.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------

GeometryVerifyReport geometry_verify(const std::vector<int>& ns, const std::vector<int>& Ls, std::size_t random_instances,
                                     std::uint64_t seed) {
  GeometryVerifyReport rep;
  for (int n : ns)
    for (int L : Ls) {
      std::vector<Config> bases;
      Config together(n, 1), adjacent(n, 1), spread(n, 1);
      for (int i = 0; i < n; ++i) {
        adjacent(i, 0) = i;
        spread(i, 0) = i * (2 * L + 1);
      }
      for (const auto& x : {together, adjacent, spread}) {
        const auto v = verify_candidate_centers(x, L, n, 10 * n * L);
        ++rep.configurations;
        rep.points_checked += v.points_checked;
        rep.counterexamples += v.counterexamples;
      }
    }
  std::mt19937_64 rng(seed);
  std::size_t attempts = 0;
  while (rep.implication_instances < random_instances && attempts < 1000 * random_instances + 1000) {
    ++attempts;
    const int n = ns[rng() % ns.size()];
    const int L = Ls[rng() % Ls.size()];
    Config x(n, 1), y(n, 1);
    const int reach = 20 * n * L;
    for (int i = 0; i < n; ++i) {
      x(i, 0) = static_cast<int>(rng() % static_cast<std::uint64_t>(4 * L + 1)) - 2 * L;
      y(i, 0) = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * reach + 1)) - reach;
    }
    if (!separable_from_B(x, y, L, n)) continue;
    ++rep.implication_instances;
    const auto cx = Rectangle::cube(x, L), cy = Rectangle::cube(y, L);
    const auto subsets = nonempty_subsets(n);
    if (std::none_of(subsets.begin(), subsets.end(), [&](const IndexSet& J) { return is_pre_separable_from(cx, cy, J); }))
      ++rep.implication_violations;
  }
  return rep;
}

SpectralCheckReport tensor_identity_check(std::size_t instances, std::uint64_t seed, double tol) {
  SpectralCheckReport rep;
  std::mt19937_64 rng(seed);
  const auto e = DisorderEnsemble::uniform01(seed);
  for (std::size_t t = 0; t < instances; ++t) {
    const int L1 = 1 + static_cast<int>(rng() % 4), L2 = 1 + static_cast<int>(rng() % 4);
    const int r0 = static_cast<int>(rng() % 3);
    InteractionSpec spec;
    for (int r = 0; r <= r0; ++r) spec.phi.push_back(std::uniform_real_distribution<double>(0.0, 2.0)(rng));
    const int gap = r0 + 1 + static_cast<int>(rng() % 4);
    const Rectangle rect(Config(2, 1, {0, L1 + L2 + gap}), {L1, L2});
    const auto pot = sample_potential(e, t, rect);
    const auto ts = tensor_split(rect, pot, spec, std::make_pair(IndexSet{0}, IndexSet{1}));
    const auto full = eig(assemble(rect, pot, spec), false).eigenvalues;
    const auto l = eig(ts.left, false).eigenvalues;
    const auto m = eig(ts.right, false).eigenvalues;
    std::vector<double> sums;
    for (Eigen::Index i = 0; i < l.size(); ++i)
      for (Eigen::Index j = 0; j < m.size(); ++j) sums.push_back(l[i] + m[j]);
    std::sort(sums.begin(), sums.end());
    double worst = 0.0;
    for (Eigen::Index k = 0; k < full.size(); ++k)
      worst = std::max(worst, std::abs(full[k] - sums[static_cast<std::size_t>(k)]) / std::max(std::abs(full[k]), 1e-12));
    ++rep.instances;
    rep.failures += !(worst <= tol);
    rep.worst = std::max(rep.worst, worst);
  }
  return rep;
}

SpectralCheckReport ct_check(std::size_t instances, std::uint64_t seed) {
  SpectralCheckReport rep;
  std::mt19937_64 rng(seed);
  const std::vector<InteractionSpec> specs{InteractionSpec::none(), InteractionSpec{{1.0}}, InteractionSpec{{2.0, 1.0}}};
  const std::vector<double> amplitudes{1.0, 5.0, 20.0};
  for (std::size_t t = 0; t < instances; ++t) {
    const int n = 1 + static_cast<int>(rng() % 2);
    const int L = n == 1 ? 2 + static_cast<int>(rng() % 6) : 2 + static_cast<int>(rng() % 3);
    Config c(n, 1);
    for (int i = 0; i < n; ++i) c(i, 0) = static_cast<int>(rng() % 7);
    const auto cube = Rectangle::cube(c, L);
    const auto e = DisorderEnsemble::scaled_uniform(amplitudes[rng() % amplitudes.size()], seed);
    const auto op = assemble(cube, sample_potential(e, t, cube), specs[rng() % specs.size()]);
    const auto ev = eig(op, false).eigenvalues;
    const double u = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    double E;
    if (rng() % 3 == 0) {
      E = ev[0] - u;
    } else {
      const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(ev.size() - 1));
      E = ev[k] + u * std::min(1.0, (ev[k + 1] - ev[k]) / 2);
    }
    if (dist_to_spectrum(ev, E) <= 0) continue;
    const auto r = combes_thomas_check(op, E);
    ++rep.instances;
    rep.failures += !r.holds;
    rep.worst = std::max(rep.worst, r.worst_ratio);
  }
  return rep;
}

SpectralCheckReport stollmann_check(std::size_t instances, const std::vector<double>& ts, std::uint64_t seed) {
  SpectralCheckReport rep;
  rep.worst = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  const auto e = DisorderEnsemble::uniform01(seed);
  for (std::size_t t = 0; t < instances; ++t) {
    const int n = 1 + static_cast<int>(rng() % 3);
    const int L = n == 1 ? 1 + static_cast<int>(rng() % 6) : n == 2 ? 1 + static_cast<int>(rng() % 3) : 1;
    Config c(n, 1);
    for (int i = 0; i < n; ++i) c(i, 0) = static_cast<int>(rng() % 5);
    const auto cube = Rectangle::cube(c, L);
    const InteractionSpec spec{{std::uniform_real_distribution<double>(0.0, 3.0)(rng), 0.5}};
    const auto pot = sample_potential(e, t, cube);
    const auto base = eig(assemble(cube, pot, spec), false).eigenvalues;
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    const auto sites = cube.particle_box(j).sites();
    bool ok = true;
    for (double lift : ts) {
      auto raised = pot;
      for (const auto& s : sites) raised.values[s] += lift;
      const auto up = eig(assemble(cube, raised, spec), false).eigenvalues;
      for (Eigen::Index k = 0; k < up.size(); ++k) {
        const double slack = up[k] - base[k] - lift;
        rep.worst = std::min(rep.worst, slack);
        if (slack < -1e-10) ok = false;
      }
    }
    ++rep.instances;
    rep.failures += !ok;
  }
  return rep;
}

// ---------------------------------------------------------------------------

double cnr_pair_bound_log10(double L, int N, double p) { return -static_cast<double>(pow4(N)) * p * std::log10(L); }

double ds_bound_log10(double L, int N, int n, double p) {
  return -2.0 * p * static_cast<double>(pow4(N - n)) * std::log10(L);
}

double tunnelling_bound_log10(double L, int N, int n, double p) {
  return std::log10(0.5) - 4.0 * p * static_cast<double>(pow4(N - n)) * std::log10(L);
}

double pi_count_bound_log10(double L_k, double L_k1, int N, int n, int d, double p) {
  const double nd2 = 2.0 * n * d;
  const double a = -static_cast<double>(pow4(N)) * p * std::log10(L_k);
  const double b = -4.0 * p * static_cast<double>(pow4(N - n)) * std::log10(L_k);
  return nd2 * std::log10(3.0) - std::log10(2.0) + nd2 * std::log10(L_k1) + log10_sum(a, b);
}

double fi_count_bound_log10(double L_k, double L_k1, int N, int n, int d, double p, int ell) {
  const double card = n * d * std::log10(2.0 * L_k1 + 1);
  const double fact = std::lgamma(2.0 * ell + 1) / std::log(10.0);
  return 2.0 * ell * card - fact - 2.0 * ell * p * static_cast<double>(pow4(N - n)) * std::log10(L_k);
}

}  // namespace anderson
