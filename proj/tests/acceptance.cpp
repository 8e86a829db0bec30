// Acceptance suite: one PASS/FAIL line per criterion.  Optional arguments
// select criteria by number, e.g. `acceptance 5 7`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "anderson/config.hpp"
#include "anderson/localization.hpp"
#include "anderson/msa.hpp"
#include "anderson/runner.hpp"
#include "anderson/stats.hpp"

using namespace anderson;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240521;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v;
  for (int i = 0; i < count; ++i) v.push_back(lo + (hi - lo) * i / (count - 1));
  return v;
}

std::vector<Config> ball(const Rectangle& box, int radius) {
  std::vector<Config> K;
  for (const auto& x : box.configs())
    if (config_norm(x) <= radius) K.push_back(x);
  return K;
}

Verdict geometry() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = geometry_verify({1, 2, 3}, {1, 2, 3}, 200, kSeed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.counterexamples == 0 && r.implication_violations == 0 && r.implication_instances == 200 && secs < 300,
          fmt("%zu points, %zu counterexamples; %zu/%zu implication violations; %.1fs (limit 300s)", r.points_checked,
              r.counterexamples, r.implication_violations, r.implication_instances, secs)};
}

Verdict tensor() {
  const auto r = tensor_identity_check(50, kSeed, 1e-9);
  return {r.failures == 0 && r.instances == 50 && r.worst <= 1e-9,
          fmt("%zu instances, max relative error %.3g (tol 1e-9)", r.instances, r.worst)};
}

Verdict combes_thomas() {
  const auto r = ct_check(100, kSeed);
  return {r.failures == 0 && r.worst < 1.0, fmt("%zu instances, %zu violations, worst ratio %.4g", r.instances, r.failures, r.worst)};
}

Verdict stollmann() {
  const auto r = stollmann_check(100, {0.1, 1.0, 10.0}, kSeed);
  return {r.failures == 0, fmt("%zu instances, %zu failures, worst slack %.3g (tol -1e-10)", r.instances, r.failures, r.worst)};
}

Verdict wegner() {
  WegnerPlan plan;
  plan.params = ModelParams::calibrated(1, 1, 1, 13.0, 4, 0.5, 1.0);
  plan.ensemble = DisorderEnsemble::uniform01(kSeed);
  std::tie(plan.a, plan.b) = separable_pair(1, 1, 1, 1, 3);
  plan.eps = {1e-3, 1e-2, 1e-1};
  plan.sampling = {10000, 1};
  const auto r = wegner_experiment(plan);
  bool under = true;
  std::string pts;
  for (std::size_t q = 0; q < r.eps.size(); ++q) {
    under = under && r.estimates[q].point <= r.bounds[q];
    pts += fmt(" P(%g)=%.4f<=%.4f", r.eps[q], r.estimates[q].point, r.bounds[q]);
  }
  return {under && r.ratio_spread <= 3.0, fmt("%s; max/min P/eps = %.3f (limit 3)", pts.c_str() + 1, r.ratio_spread)};
}

Verdict initial_ds() {
  InitialDsPlan plan;
  plan.params = ModelParams::paper(2, 2, 1, 13.0, 100);
  plan.ensemble = DisorderEnsemble::uniform01(kSeed);
  plan.sampling = {500, 1};
  const auto r = initial_ds_check(plan);
  const bool consts = r.m == 6.8 && std::abs(r.E_star - 1305.6) < 1e-9;
  return {consts && r.failures == 0 && r.realizations == 500,
          fmt("m=%g E*=%g; %zu realizations, premise E0>%g held in %zu, failures %zu; E0 in [%.4f, %.4f]", r.m, r.E_star,
              r.realizations, r.gap_threshold, r.premise, r.failures, r.min_E0, r.max_E0)};
}

Verdict spectral_edge() {
  bool ok = true;
  std::string detail;
  for (int n : {1, 2}) {
    EdgeSweepPlan plan;
    plan.n = n;
    plan.box_sizes = n == 1 ? std::vector<int>{50, 100, 200} : std::vector<int>{10, 20, 30};
    plan.ensemble = DisorderEnsemble::uniform01(kSeed);
    plan.sampling = {200, 1};
    const auto r = spectral_edge_sweep(plan);
    ok = ok && r.medians_decreasing && r.nonnegative;
    detail += fmt("n=%d medians", n);
    for (const auto& lv : r.levels) detail += fmt(" %.5f", lv.median);
    detail += fmt(" min %.3g; ", r.levels.empty() ? 0.0 : std::min_element(r.levels.begin(), r.levels.end(),
                                                                             [](auto& a, auto& b) { return a.min < b.min; })->min);
  }
  for (double E : {0.0, 2.0, 4.0}) {
    WeylPlan plan;
    plan.n = 1;
    plan.E = E;
    plan.m_wells = {8, 16, 32};
    plan.seed = kSeed;
    const auto r = weyl_residual(plan);
    ok = ok && r.decreasing;
    detail += fmt("Weyl E=%g:", E);
    for (const auto& p : r.points) detail += fmt(" %.4f", p.residual);
    detail += "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Verdict decay() {
  const auto t0 = std::chrono::steady_clock::now();
  DecayPlan plan;
  plan.L = 200;
  plan.ensemble = DisorderEnsemble::scaled_uniform(10.0, kSeed);
  plan.lowest_fraction = 0.1;
  plan.sampling = {20, 1};
  const auto r = decay_spectrum(plan);
  plan.ensemble = DisorderEnsemble::constant(0.0);
  plan.sampling = {1, 1};
  const auto free = decay_spectrum(plan);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.fraction_positive >= 0.95 && r.median_r2 >= 0.8 && free.median_rate <= 0.01 && secs < 600,
          fmt("%zu states, positive %.3f (>=0.95), median rate %.3f, median r2 %.3f (>=0.8); free median rate %.2e "
              "(<=0.01); %.1fs",
              r.states, r.fraction_positive, r.median_rate, r.median_r2, free.median_rate, secs)};
}

Verdict dynamics() {
  const int L = 25;
  const auto box = origin_cube(2, 1, L);
  DynPlan plan;
  plan.params = ModelParams::calibrated(2, 2, 1, 13.0, 4, 0.5, 1.0);
  plan.L = L;
  plan.ensemble = DisorderEnsemble::scaled_uniform(50.0, kSeed);
  plan.interaction = InteractionSpec{{1.0}};
  plan.s = 2.0;
  plan.interval = {-1.0, 4.0 * 2 + 2 * 50.0 + 2.0};  // whole spectrum
  plan.K = ball(box, 1);
  plan.times = linspace(0.5, 10.0, 50);
  const auto dis = dyn_moment(plan);
  bool bound = true;
  for (double v : dis.values) bound = bound && v <= dis.correlator_bound * (1.0 + 1e-9);
  const double med = median_of(dis.values);
  const auto [lo, hi] = std::minmax_element(dis.values.begin(), dis.values.end());
  const bool flat = *hi <= 2.0 * med && *lo >= 0.5 * med;

  auto free_plan = plan;
  free_plan.ensemble = DisorderEnsemble::constant(0.0);
  const auto fr = dyn_moment(free_plan);
  const double growth = fr.values.back() / fr.values.front();

  KernelPlan kp;
  kp.N = 2;
  kp.n = 2;
  kp.d = 1;
  kp.L = L;
  kp.ensemble = plan.ensemble;
  kp.interaction = plan.interaction;
  kp.interval = {0.0, 10.0};
  kp.times = {1.0, 5.0};
  kp.sampling = {1, 1};
  const auto kr = kernel_decay(kp);

  return {bound && flat && growth > 10.0 && kr.max_route_gap <= 1e-10,
          fmt("max M/B %.4f; disordered M in [%.4g, %.4g] around median %.4g (2x band); free growth %.1fx (>10); "
              "kernel route gap %.2e over %zu rows (tol 1e-10)",
              dis.worst_ratio, *lo, *hi, med, growth, kr.max_route_gap, kr.rows.size())};
}

Verdict ds_trend() {
  DsPlan plan;
  plan.params = ModelParams::calibrated(2, 2, 1, 13.0, 6, 0.5, 1.0);
  plan.ensemble = DisorderEnsemble::scaled_uniform(20.0, kSeed);
  plan.interaction = InteractionSpec{{1.0}};
  plan.levels = {0, 1};
  plan.spacing = 3;
  plan.grid = GridSpec{0.0, 1.0, 0.0, true};
  plan.sampling = {2000, 1};
  const auto lv = ds_estimate(plan);
  const auto& a = lv[0].estimate;
  const auto& b = lv[1].estimate;
  const bool separated = b.point <= a.point && b.ci_high < a.ci_low;
  const bool both_small = a.ci_high < 0.02 && b.ci_high < 0.02;
  return {separated || both_small,
          fmt("L=%lld: %zu/%zu [%.4f, %.4f]; L=%lld: %zu/%zu [%.4f, %.4f]; %s", static_cast<long long>(lv[0].L),
              static_cast<std::size_t>(a.hits), static_cast<std::size_t>(a.trials), a.ci_low, a.ci_high,
              static_cast<long long>(lv[1].L), static_cast<std::size_t>(b.hits), static_cast<std::size_t>(b.trials),
              b.ci_low, b.ci_high, separated ? "CIs separated" : both_small ? "both upper bounds < 0.02" : "no trend")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Verdict determinism() {
  std::vector<RunConfig> configs;
  {
    auto c = RunConfig::defaults(Experiment::wegner);
    c.params.n = 1;
    c.trials = 500;
    configs.push_back(c);
  }
  {
    auto c = RunConfig::defaults(Experiment::spectral_edge);
    c.params.n = 1;
    c.block["box_sizes"] = {10, 20};
    c.trials = 40;
    configs.push_back(c);
  }
  {
    auto c = RunConfig::defaults(Experiment::dynamics);
    c.params.n = 1;
    c.ensemble = DisorderEnsemble::scaled_uniform(20.0, 0);
    c.block["L"] = 10;
    c.block["realizations"] = 4;
    c.block["interval"] = {-1.0, 50.0};
    configs.push_back(c);
  }
  {
    auto c = RunConfig::defaults(Experiment::decay);
    c.ensemble = DisorderEnsemble::scaled_uniform(10.0, 0);
    c.block["L"] = 40;
    c.trials = 6;
    configs.push_back(c);
  }
  std::size_t compared = 0, mismatched = 0;
  const auto root = fs::temp_directory_path() / "anderson_acceptance_determinism";
  for (const auto& c : configs) {
    std::vector<std::string> reference;
    for (int w : {1, 2, 4}) {
      const auto dir = root / (to_string(c.experiment) + "_w" + std::to_string(w));
      fs::remove_all(dir);
      RunOptions o;
      o.seed = kSeed;
      o.workers = w;
      o.out = dir.string();
      o.getenv_fn = [](const char*) -> const char* { return nullptr; };
      std::ostringstream log;
      if (run(c, o, log) != kExitOk) return {false, to_string(c.experiment) + " run failed: " + log.str()};
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") files.push_back(e.path().filename().string());
      std::sort(files.begin(), files.end());
      std::vector<std::string> contents;
      for (const auto& f : files) contents.push_back(f + "\n" + slurp(dir / f));
      if (w == 1) {
        reference = contents;
        continue;
      }
      ++compared;
      if (contents != reference) ++mismatched;
    }
  }
  fs::remove_all(root);
  return {mismatched == 0, fmt("%zu experiment runs at 2 and 4 workers compared with 1 worker, %zu differ", compared, mismatched)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"geometry oracle", geometry},
      {"tensor-sum spectral identity", tensor},
      {"Combes-Thomas bound", combes_thomas},
      {"diagonal monotonicity", stollmann},
      {"Wegner scaling", wegner},
      {"initial-scale implication replay", initial_ds},
      {"spectral edge and Weyl residual", spectral_edge},
      {"eigenfunction decay", decay},
      {"dynamics and kernel", dynamics},
      {"DS ladder trend", ds_trend},
      {"determinism across workers", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %-34s %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
