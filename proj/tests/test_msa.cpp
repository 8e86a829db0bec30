#include <doctest.h>

#include <cmath>
#include <random>

#include "anderson/msa.hpp"
#include "anderson/parallel.hpp"

using namespace anderson;

namespace {

Config c1(std::initializer_list<int> xs) { return Config(static_cast<int>(xs.size()), 1, std::vector<int>(xs)); }

// Binomial tail by direct summation; the interval endpoints solve
// P{X >= k | p} = a/2 and P{X <= k | p} = a/2.
double binom_cdf(int k, int n, double p) {
  double s = 0.0;
  for (int j = 0; j <= k; ++j) s += std::exp(std::lgamma(n + 1) - std::lgamma(j + 1) - std::lgamma(n - j + 1) +
                                             j * std::log(p) + (n - j) * std::log1p(-p));
  return s;
}

double bisect(auto f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

ModelParams calibrated(int N, int n, double m, double E_star, int L0 = 4) {
  return ModelParams::calibrated(N, n, 1, 13.0, L0, m, E_star);
}

}  // namespace

TEST_CASE("Clopper-Pearson against binomial tails") {
  for (auto [k, n] : std::vector<std::pair<int, int>>{{0, 10}, {3, 10}, {5, 10}, {10, 10}, {7, 200}, {0, 2000}}) {
    const auto [lo, hi] = clopper_pearson(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n));
    const double olo = k == 0 ? 0.0 : bisect([&](double p) { return 1 - binom_cdf(k - 1, n, p) >= 0.025; }, 0, 1);
    const double ohi = k == n ? 1.0 : bisect([&](double p) { return binom_cdf(k, n, p) <= 0.025; }, 0, 1);
    CHECK(lo == doctest::Approx(olo).epsilon(1e-7));
    CHECK(hi == doctest::Approx(ohi).epsilon(1e-7));
  }
  CHECK(clopper_pearson(0, 10).second == doctest::Approx(0.3084971).epsilon(1e-6));
  const auto e = MonteCarloEstimate::make(3, 40, -2.0, "x");
  CHECK(e.ci_low <= e.point);
  CHECK(e.point <= e.ci_high);
  CHECK_FALSE(e.vacuous);
  CHECK(MonteCarloEstimate::make(0, 5, 0.7, "").vacuous);
  CHECK(MonteCarloEstimate::make(0, 5, -400, "").vacuous);
  CHECK(MonteCarloEstimate::make(0, 5, std::nan(""), "").vacuous);
  CHECK_THROWS(clopper_pearson(1, 0));
}

TEST_CASE("fits and quantiles") {
  const auto f = least_squares({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(quantile({0, 10}, 0.1) == doctest::Approx(1.0));
}

TEST_CASE("parallel_for visits each index once and propagates errors") {
  std::vector<int> seen(1000, 0);
  parallel_for(seen.size(), 4, [&](std::size_t i) { seen[i] += 1; });
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
  CHECK_THROWS_AS(parallel_for(50, 3, [](std::size_t i) { if (i == 17) throw std::runtime_error("x"); }),
                  std::runtime_error);
}

TEST_CASE("Wegner experiment") {
  WegnerPlan plan;
  plan.params = calibrated(1, 1, 0.5, 1.0);
  plan.ensemble = DisorderEnsemble::uniform01(11);
  plan.a = Rectangle::cube(c1({0}), 1);
  plan.b = Rectangle::cube(c1({10}), 1);
  plan.eps = {1e-3, 1e-2, 1e-1};
  plan.sampling = {4000, 2};
  CHECK(wegner_bound(plan.a, plan.b, plan.ensemble, 0.01) == doctest::Approx(0.54));
  const auto r = wegner_experiment(plan);
  CHECK(r.prefactor == 27.0);
  for (std::size_t i = 0; i < r.eps.size(); ++i) CHECK(r.estimates[i].point <= r.bounds[i]);
  CHECK(r.estimates[2].vacuous);
  CHECK(r.loglog.slope == doctest::Approx(1.0).epsilon(0.25));

  // Same seed, different worker count: identical hit counts.
  plan.sampling.workers = 1;
  const auto again = wegner_experiment(plan);
  for (std::size_t i = 0; i < r.eps.size(); ++i) CHECK(again.estimates[i].hits == r.estimates[i].hits);

  plan.b = Rectangle::cube(c1({1}), 1);
  CHECK_THROWS(wegner_experiment(plan));
}

TEST_CASE("CNR failure sets") {
  std::mt19937 rng(4);
  for (int t = 0; t < 40; ++t) {
    std::vector<std::pair<double, double>> a, b;
    double x = 0;
    for (int i = 0; i < 5; ++i) {
      x += std::uniform_real_distribution<double>(0.1, 2)(rng);
      const double w = std::uniform_real_distribution<double>(0.05, 1)(rng);
      a.emplace_back(x, x + w);
      x += w;
    }
    x = std::uniform_real_distribution<double>(0, 1)(rng);
    for (int i = 0; i < 5; ++i) {
      x += std::uniform_real_distribution<double>(0.1, 2)(rng);
      const double w = std::uniform_real_distribution<double>(0.05, 1)(rng);
      b.emplace_back(x, x + w);
      x += w;
    }
    bool brute = false;
    for (double e = 0; e < 20; e += 1e-4) {
      auto in = [&](const auto& s) {
        return std::any_of(s.begin(), s.end(), [&](const auto& iv) { return iv.first < e && e < iv.second; });
      };
      if (e > 3 && e < 12 && in(a) && in(b)) brute = true;
    }
    CHECK(interval_sets_meet(a, b, 3, 12) == brute);
  }

  const auto params = calibrated(1, 1, 0.5, 1.0);
  const auto cube = Rectangle::cube(c1({0}), 9);
  const auto pot = sample_potential(DisorderEnsemble::scaled_uniform(10, 3), 0, cube);
  const SubcubeSpectra sub(cube, pot, InteractionSpec::none(), params);
  const auto fs = cnr_failure_set(sub);
  for (std::size_t i = 1; i < fs.size(); ++i) CHECK(fs[i - 1].second <= fs[i].first);
  for (double E = -1; E < 14; E += 0.0137) {
    const bool inside = std::any_of(fs.begin(), fs.end(), [&](const auto& iv) { return iv.first < E && E < iv.second; });
    CHECK(inside == !is_e_cnr(sub, E).cnr);
  }
}

TEST_CASE("CNR pair experiment") {
  CHECK(cnr_pair_bound_log10(9, 2, 13) == doctest::Approx(-208 * std::log10(9.0)));
  CnrPairPlan plan;
  plan.params = calibrated(1, 1, 0.5, 1.0);
  plan.ensemble = DisorderEnsemble::scaled_uniform(1000, 5);
  plan.a = Rectangle::cube(c1({0}), 2);
  plan.b = Rectangle::cube(c1({40}), 2);
  plan.sampling = {300, 2};
  const auto strong = cnr_pair_experiment(plan);
  CHECK(strong.subcubes_per_cube == 1u);
  CHECK(strong.estimate.point < 0.1);
  plan.mirror = true;
  const auto mirror = cnr_pair_experiment(plan);
  CHECK(mirror.estimate.hits == 300u);
  plan.b = Rectangle::cube(c1({3}), 2);
  CHECK_THROWS(cnr_pair_experiment(plan));
}

TEST_CASE("initial scale") {
  InitialScalePlan plan;
  plan.params = calibrated(2, 1, 0.5, 1.0);
  plan.ensemble = DisorderEnsemble::constant(0.0);
  plan.sizes = {25, 100};
  plan.sampling = {3, 1};
  auto pts = initial_scale_experiment(plan);
  CHECK(pts[1].threshold == doctest::Approx(0.2));
  for (const auto& p : pts) {
    CHECK(p.estimate.point == 1.0);
    CHECK(p.median_E0 == doctest::Approx(2 - 2 * std::cos(M_PI / (2 * p.L0 + 2))).epsilon(1e-8));
  }
  plan.params.n = 2;
  plan.ensemble = DisorderEnsemble::uniform01(2);
  plan.interaction = InteractionSpec{{1.0, 0.5}};
  plan.sizes = {6};
  plan.sampling = {20, 2};
  pts = initial_scale_experiment(plan);
  CHECK(pts[0].minmax_violations == 0u);
}

TEST_CASE("initial DS replay") {
  CHECK(combes_thomas_certifies(1.0, 1200, 1, 1, 0.05));
  CHECK_FALSE(combes_thomas_certifies(1.0, 100, 1, 1, 0.5));
  CHECK_FALSE(combes_thomas_certifies(0.0, 100, 1, 1, 0.0));
  // eta clamps at 1: a huge gap certifies no more than gap 1.
  CHECK(combes_thomas_certifies(50.0, 300, 1, 1, 0.05) == combes_thomas_certifies(1.0, 300, 1, 1, 0.05));

  InitialDsPlan plan;
  plan.params = ModelParams::paper(2, 1, 1, 13.0, 100);
  plan.ensemble = DisorderEnsemble::uniform01(7);
  plan.sampling = {10, 2};
  auto rep = initial_ds_check(plan);
  CHECK(rep.m == doctest::Approx(6.8));
  CHECK(rep.E_star == doctest::Approx(1305.6));
  CHECK(rep.C == doctest::Approx(13056));
  CHECK(rep.gap_threshold == doctest::Approx(2611.2));
  CHECK(rep.premise == 0u);
  CHECK(rep.failures == 0u);
  CHECK(rep.max_E0 < rep.gap_threshold);

  plan.params = calibrated(1, 1, 0.5, 1.0, 10);
  plan.ensemble = DisorderEnsemble::scaled_uniform(40, 7);
  plan.scan_all = true;
  plan.sampling = {30, 2};
  rep = initial_ds_check(plan);
  CHECK(rep.scanned == 30u);
  REQUIRE(rep.singular_rate);
  CHECK(rep.premise > 20u);
  CHECK(rep.failures == 0u);
}

TEST_CASE("separable pair layout") {
  for (int n = 1; n <= 3; ++n)
    for (int L : {2, 6, 15})
      for (int s : {0, 1, 3}) {
        const auto [a, b] = separable_pair(n, 1, L, 3, s);
        CHECK(is_separable(a, b, 3).separable);
        CHECK(a.radius() == L);
      }
}

TEST_CASE("pair scans agree with per-energy resolvents") {
  const auto params = calibrated(2, 2, 0.4, 5.0);
  const InteractionSpec spec{{1.0}};
  const auto [a, b] = separable_pair(2, 1, 3, 2, 1);
  GridSpec grid{0.0, 5.0, 0.25, false};
  for (int t = 0; t < 15; ++t) {
    const auto e = DisorderEnsemble::scaled_uniform(t % 3 == 0 ? 1.0 : 6.0, 9);
    std::set<Site> window = full_projection(a);
    for (const auto& s : full_projection(b)) window.insert(s);
    const auto pot = sample_potential(e, static_cast<std::uint64_t>(t), window);
    const auto oa = assemble(a, pot, spec), ob = assemble(b, pot, spec);
    const SpectralResolvent ra(oa, params), rb(ob, params);
    bool both = false;
    for (double E : energy_grid(0.0, 5.0, 0.25)) both = both || (ra.singular_at(E).singular && rb.singular_at(E).singular);
    CHECK(scan_pair(oa, ob, grid, params).both == both);
  }
}

TEST_CASE("DS estimate controls") {
  CHECK(ds_bound_log10(9, 2, 2, 13) == doctest::Approx(-26 * std::log10(9.0)));
  CHECK(std::pow(10.0, ds_bound_log10(9, 2, 2, 13)) == doctest::Approx(6.5e-25).epsilon(0.02));
  DsPlan plan;
  plan.params = calibrated(2, 2, 0.5, 4.0);
  plan.params.L0 = 2;
  plan.params.relaxed = true;
  plan.levels = {0, 1};
  plan.interaction = InteractionSpec{{1.0}};
  plan.grid = GridSpec{0.0, 4.0, 0.0, true};
  plan.sampling = {4, 2};
  plan.ensemble = DisorderEnsemble::constant(0.0);
  auto lv = ds_estimate(plan);
  REQUIRE(lv.size() == 2u);
  CHECK(lv[0].L == 2);
  CHECK(lv[1].L == 3);
  for (const auto& l : lv) CHECK(l.estimate.point == 1.0);
  plan.ensemble = DisorderEnsemble::constant(200.0);
  lv = ds_estimate(plan);
  for (const auto& l : lv) CHECK(l.estimate.hits == 0u);
}

TEST_CASE("tunnelling probability") {
  CHECK(tunnelling_bound_log10(15, 2, 2, 13) == doctest::Approx(std::log10(0.5) - 52 * std::log10(15.0)));
  TunnellingPlan plan;
  plan.params = calibrated(2, 2, 0.5, 1.0, 6);
  plan.ensemble = DisorderEnsemble::scaled_uniform(20, 1);
  plan.interaction = InteractionSpec{{1.0}};
  plan.ladder = scale_ladder(6, 1);
  plan.cube = Rectangle::cube(c1({0, 100}), 15);
  plan.grid = GridSpec{0.0, 1.0, 0.25, false};
  plan.sampling = {20, 2};
  auto r = tunnelling_probability(plan);
  CHECK(r.level == 1);
  CHECK(r.separable_pairs == 0u);
  CHECK(r.estimate.hits == 0u);

  plan.ladder = scale_ladder(64, 1);
  plan.cube = Rectangle::cube(c1({0, 5000}), 513);
  plan.ensemble = DisorderEnsemble::scaled_uniform(40, 1);
  plan.wells = {SiteBox{{-449}, 64}, SiteBox{{449}, 64}, SiteBox{{5000}, 513}};
  plan.options.budget = 64;
  plan.grid = GridSpec{0.0, 1.0, 0.5, false};
  plan.sampling = {2, 1};
  r = tunnelling_probability(plan);
  CHECK(r.separable_pairs > 0u);
  CHECK(r.estimate.hits == 2u);
}

TEST_CASE("singular counts") {
  CHECK(kappa(2) + 2 == 6);
  const auto cube = Rectangle::cube(c1({0, 30}), 9);
  const auto centers = subcube_centers(cube, 4, 2);
  CHECK(centers.size() == 36u);
  for (const auto& c : centers) CHECK(cube.contains_rectangle(Rectangle::cube(c, 4)));

  CountsPlan plan;
  plan.params = calibrated(2, 2, 0.5, 4.0);
  plan.interaction = InteractionSpec{{1.0}};
  plan.ladder = scale_ladder(4, 1);
  plan.cube = cube;
  plan.center_step = 2;
  plan.grid = GridSpec{0.0, 4.0, 0.5, false};
  plan.sampling = {3, 2};

  plan.ensemble = DisorderEnsemble::constant(100.0);
  auto r = count_statistics(plan);
  CHECK(r.L_k == 4);
  for (const auto& c : r.per_trial) {
    CHECK(c.M == 0);
    CHECK(c.M_sep == 0);
  }
  CHECK(r.pi_event.hits == 0u);

  plan.ensemble = DisorderEnsemble::constant(0.0);
  r = count_statistics(plan);
  std::vector<InteractivityVerdict> inter;
  for (const auto& c : centers) inter.push_back(classify_interactivity(Rectangle::cube(c, 4), 1));
  const auto saturated = count_singular(centers, std::vector<bool>(centers.size(), true), inter, 4, 2);
  for (const auto& c : r.per_trial) CHECK(c.M == saturated.M);
  CHECK(r.implication_failures == 0u);

  const double lk = 4, lk1 = 9;
  const double direct = std::log10(81.0 / 2 * std::pow(lk1, 4) * (std::pow(lk, -208.0) + std::pow(lk, -52.0)));
  CHECK(pi_count_bound_log10(lk, lk1, 2, 2, 1, 13) == doctest::Approx(direct));
  const double fi = std::log10(std::pow(19.0, 4) / 2 * std::pow(lk, -26.0));
  CHECK(fi_count_bound_log10(lk, lk1, 2, 2, 1, 13, 1) == doctest::Approx(fi));
}

TEST_CASE("CNR and count audit") {
  CountsPlan plan;
  plan.params = calibrated(2, 2, 0.5, 2.0);
  plan.interaction = InteractionSpec{{1.0}};
  plan.ladder = scale_ladder(4, 1);
  plan.cube = Rectangle::cube(c1({0, 30}), 9);
  plan.center_step = 5;
  plan.grid = GridSpec{0.0, 2.0, 0.5, true};
  plan.sampling = {2, 2};
  plan.ensemble = DisorderEnsemble::scaled_uniform(50.0, 2);
  const auto a = cnr_count_audit(plan);
  CHECK(a.evaluated > 0u);
  CHECK(a.evaluated == a.cnr_failed + a.count_exceeded + a.checked);
  CHECK(a.violations == 0u);
}

TEST_CASE("deterministic checks") {
  const auto g = geometry_verify({1, 2}, {1, 2}, 50, 3);
  CHECK(g.counterexamples == 0u);
  CHECK(g.configurations == 12u);
  CHECK(g.implication_instances == 50u);
  CHECK(g.implication_violations == 0u);
  const auto t = tensor_identity_check(10, 1);
  CHECK(t.failures == 0u);
  CHECK(t.worst <= 1e-9);
  const auto c = ct_check(10, 2);
  CHECK(c.failures == 0u);
  CHECK(c.worst < 1.0);
  const auto s = stollmann_check(10, {0.1, 1, 10}, 3);
  CHECK(s.failures == 0u);
  CHECK(s.worst >= -1e-10);
}
