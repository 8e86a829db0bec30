#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>

#include "anderson/localization.hpp"
#include "anderson/stats.hpp"

using namespace anderson;

namespace {

Config c1(std::initializer_list<int> xs) { return Config(static_cast<int>(xs.size()), 1, std::vector<int>(xs)); }

Eigen::MatrixXd box_matrix(const Rectangle& box, const DisorderEnsemble& e, std::uint64_t r,
                           const InteractionSpec& spec = {}) {
  return assemble(box, sample_potential(e, r, box), spec).dense();
}

Eigen::MatrixXcd propagator(const Eigen::MatrixXd& H, double t) {
  const Eigen::MatrixXcd A = std::complex<double>(0.0, -t) * H.cast<std::complex<double>>();
  return A.exp();
}

std::vector<double> t_grid(double lo, double hi, int count) {
  std::vector<double> t;
  for (int i = 0; i < count; ++i) t.push_back(lo + (hi - lo) * i / (count - 1));
  return t;
}

}  // namespace

TEST_CASE("free Dirichlet ground states") {
  for (int L : {0, 1, 5, 40}) {
    // Analytic chain: eigenvalues 2 - 2cos(k pi / (2L + 2)), k = 1..2L+1.
    const double expect = 2.0 - 2.0 * std::cos(std::numbers::pi / (2 * L + 2));
    CHECK(free_chain_ground(L) == doctest::Approx(expect).epsilon(1e-14));
  }
  EdgeSweepPlan plan;
  plan.n = 1;
  plan.box_sizes = {5, 10, 20};
  plan.ensemble = DisorderEnsemble::constant(0.0);
  plan.sampling.trials = 2;
  const auto res = spectral_edge_sweep(plan);
  for (const auto& lvl : res.levels) {
    CHECK(lvl.median == doctest::Approx(free_chain_ground(lvl.L)).epsilon(1e-9));
    CHECK(lvl.dim == static_cast<std::size_t>(2 * lvl.L + 1));
  }
  CHECK(res.medians_decreasing);

  // Two free particles: the ground energy is twice the one-particle one.
  plan.n = 2;
  plan.box_sizes = {4, 8};
  plan.eig.dense_threshold = 50;
  const auto two = spectral_edge_sweep(plan);
  for (const auto& lvl : two.levels) CHECK(lvl.median == doctest::Approx(2 * free_chain_ground(lvl.L)).epsilon(1e-8));
}

TEST_CASE("edge sweep under disorder") {
  EdgeSweepPlan plan;
  plan.n = 1;
  plan.box_sizes = {25, 50, 100};
  plan.ensemble = DisorderEnsemble::uniform01(11);
  plan.sampling = {40, 2};
  const auto res = spectral_edge_sweep(plan);
  CHECK(res.nonnegative);
  CHECK(res.medians_decreasing);
  // Nested restrictions of one sample: E0 is nonincreasing per realization.
  for (std::size_t i = 0; i < plan.sampling.trials; ++i) {
    CHECK(res.levels[1].E0[i] <= res.levels[0].E0[i] + 1e-10);
    CHECK(res.levels[2].E0[i] <= res.levels[1].E0[i] + 1e-10);
  }
  // Worker count does not change the numbers.
  plan.sampling.workers = 1;
  const auto serial = spectral_edge_sweep(plan);
  for (std::size_t k = 0; k < res.levels.size(); ++k) CHECK(serial.levels[k].E0 == res.levels[k].E0);

  plan.box_sizes = {};
  CHECK_THROWS_AS(spectral_edge_sweep(plan), std::invalid_argument);
}

TEST_CASE("quasi-mode shape") {
  const Config c = c1({10});
  const auto flat = quasi_mode(c, 8, 0.0, 2.0);
  CHECK(flat.at(c1({10})) == doctest::Approx(1.0));
  CHECK(flat.at(c1({15})) == doctest::Approx(1.0));
  CHECK(flat.at(c1({18})) == doctest::Approx(0.5));
  CHECK(flat.count(c1({19})) == 0);
  const auto top = quasi_mode(c, 8, 4.0, 2.0);
  CHECK(top.at(c1({10})) == doctest::Approx(1.0));
  CHECK(top.at(c1({11})) == doctest::Approx(-1.0));
  CHECK(top.at(c1({12})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(quasi_mode(c, 8, 4.5, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(quasi_mode(c, 8, -0.1, 2.0), std::invalid_argument);
}

TEST_CASE("Weyl residuals shrink with the well") {
  for (int n : {1, 2}) {
    for (double frac : {0.0, 0.5, 1.0}) {
      WeylPlan plan;
      plan.N = 2;
      plan.n = n;
      plan.E = frac * 4.0 * n;
      plan.m_wells = {8, 16, 32};
      const auto res = weyl_residual(plan);
      REQUIRE(res.points.size() == 3);
      CHECK(res.decreasing);
      CHECK(res.nonincreasing);
      for (const auto& p : res.points) {
        CHECK(p.potential_ok);
        CHECK(p.potential <= n * p.well_eps + 1e-15);
        CHECK(p.well_eps == doctest::Approx(1.0 / p.m_well));
        // Triangle inequality between the two parts.
        CHECK(p.residual <= p.kinetic + p.potential + 1e-12);
        CHECK(p.residual >= std::abs(p.kinetic - p.potential) - 1e-12);
      }
    }
  }
  WeylPlan bad;
  bad.n = 1;
  bad.E = 4.01;
  bad.m_wells = {8};
  CHECK_THROWS_AS(weyl_residual(bad), std::invalid_argument);
}

TEST_CASE("quasi-mode kinetic residual against an assembled Laplacian") {
  // The free operator on the cube of radius R + 1 acts exactly on vectors
  // supported in radius R.
  for (int n : {1, 2}) {
    const Config c(n, 1, std::vector<int>(static_cast<std::size_t>(n), 0));
    const int R = 6;
    for (double E : {0.0, 1.3 * n, 4.0 * n}) {
      const auto phi = quasi_mode(c, R, E, 1.5);
      const auto big = Rectangle::cube(c, R + 1);
      const auto H = box_matrix(big, DisorderEnsemble::constant(0.0), 0);
      Eigen::VectorXd v = Eigen::VectorXd::Zero(H.rows());
      for (const auto& [x, val] : phi) v[static_cast<Eigen::Index>(big.index_of(x))] = val;
      const double oracle = (H * v - E * v).norm() / v.norm();

      PotentialSample zero;
      for (const auto& s : full_projection(big)) zero.values[s] = 0.0;
      auto hv = apply_ambient(phi, zero, {});
      for (const auto& [x, val] : phi) hv[x] -= E * val;
      CHECK(norm(hv) / norm(phi) == doctest::Approx(oracle).epsilon(1e-12));
    }
  }
}

TEST_CASE("decay fit on synthetic profiles") {
  const auto box = Rectangle::cube(c1({0}), 40);
  Eigen::VectorXd psi(box.cardinality());
  for (std::size_t k = 0; k < box.cardinality(); ++k) psi[static_cast<Eigen::Index>(k)] = std::exp(-0.7 * std::abs(box.config_at(k).flat()[0] - 5));
  const auto f = fit_decay(box, psi, 0.0);
  CHECK(f.fitted);
  CHECK(f.center == c1({5}));
  CHECK(f.rate == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
  // Shells down to 1e-13 of the peak: 0.7 r <= 13 ln 10.
  CHECK(f.shells == static_cast<int>(std::floor(13 * std::log(10.0) / 0.7)) + 1);
  double tot = 0, tail = 0;
  for (std::size_t k = 0; k < box.cardinality(); ++k) {
    const double a = psi[static_cast<Eigen::Index>(k)];
    tot += a * a;
    if (std::abs(box.config_at(k).flat()[0] - 5) > 20) tail += a * a;
  }
  CHECK(f.mass_tail == doctest::Approx(tail / tot));

  // A flat vector has zero rate.
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(psi.size(), 0.1);
  const auto g = fit_decay(box, flat, 0.0);
  CHECK(g.rate == doctest::Approx(0.0));
  CHECK_THROWS_AS(fit_decay(box, Eigen::VectorXd::Ones(3), 0.0), ShapeError);
}

TEST_CASE("decay spectrum contrast") {
  DecayPlan plan;
  plan.L = 80;
  plan.ensemble = DisorderEnsemble::scaled_uniform(10.0, 3);
  plan.sampling = {6, 2};
  const auto dis = decay_spectrum(plan);
  CHECK(dis.states == 6 * 16);
  CHECK(dis.fitted == dis.states);
  CHECK(dis.fraction_positive >= 0.95);
  CHECK(dis.median_r2 >= 0.8);
  CHECK(dis.median_rate > 0.3);

  plan.ensemble = DisorderEnsemble::constant(0.0);
  plan.sampling.trials = 1;
  const auto free = decay_spectrum(plan);
  CHECK(std::abs(free.median_rate) <= 0.01);

  // Energy window selection.
  plan.energy_window = std::make_pair(0.0, 0.99);
  const auto win = decay_spectrum(plan);
  for (const auto& r : win.rows) CHECK(r.fit.eigenvalue <= 0.99);
  // Free chain: 2 - 2cos(k pi / 162) <= 0.99 iff k <= 53.
  CHECK(win.states == 53);

  // n = 2 with a contact interaction: one fit per in-window state.
  DecayPlan two;
  two.n = 2;
  two.L = 8;
  two.ensemble = DisorderEnsemble::scaled_uniform(10.0, 4);
  two.interaction.phi = {1.0, 0.5};
  two.sampling.trials = 1;
  const auto smoke = decay_spectrum(two);
  CHECK(smoke.states == 289 / 10);
}

TEST_CASE("dynamics: moments against a matrix exponential") {
  const auto params = ModelParams::calibrated(2, 2, 1, 13.0, 6, 0.5, 1.0);
  const auto box = origin_cube(2, 1, 4);
  const auto e = DisorderEnsemble::scaled_uniform(5.0, 9);
  const Eigen::MatrixXd H = box_matrix(box, e, 0);
  const std::vector<Config> K{c1({0, 0}), c1({1, -1}), c1({2, 0})};
  const double s = 1.5;
  const auto times = t_grid(0.0, 3.0, 7);

  const auto sd = eig_dense(H, true);
  const auto m = dyn_moment(box, sd, s, {-1e9, 1e9}, K, times);
  CHECK(m.states_in_window == box.cardinality());
  for (std::size_t q = 0; q < times.size(); ++q) {
    const Eigen::MatrixXcd U = propagator(H, times[q]);
    double oracle = 0.0;
    for (const auto& k : K)
      for (std::size_t x = 0; x < box.cardinality(); ++x) {
        const Config cx = box.config_at(x);
        double w = 0.0;
        for (int v : cx.flat()) w = std::max(w, std::abs(static_cast<double>(v)));
        oracle += std::pow(w, s) * std::norm(U(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(box.index_of(k))));
      }
    CHECK(m.values[q] == doctest::Approx(oracle).epsilon(1e-9));
  }
  // Full window at t = 0: P_I = 1, so M(0) = sum_k |k|^s.
  CHECK(m.values[0] == doctest::Approx(std::pow(1.0, s) + std::pow(2.0, s)).epsilon(1e-10));
  CHECK(m.m0_direct == doctest::Approx(m.values[0]).epsilon(1e-10));
  CHECK(m.bound_holds);

  // Partial window: still dominated by the correlator bound.
  const double top = sd.eigenvalues[20];
  const auto part = dyn_moment(box, sd, s, {0.0, top}, K, t_grid(0.0, 20.0, 50));
  CHECK(part.states_in_window == static_cast<std::size_t>((sd.eigenvalues.array() <= top).count()));
  CHECK(part.bound_holds);
  CHECK(part.worst_ratio <= 1.0 + 1e-9);
  CHECK(part.m0_direct == doctest::Approx(part.values[0]).epsilon(1e-10));
  (void)params;
}

TEST_CASE("dynamics: spectral covariance under a potential shift") {
  // A contact interaction and a random potential keep the spectrum simple,
  // so the correlator bound does not depend on a basis choice.
  const auto box = origin_cube(2, 1, 4);
  InteractionSpec spec;
  spec.phi = {1.0, 0.5};
  const Eigen::MatrixXd H = box_matrix(box, DisorderEnsemble::uniform01(21), 0, spec);
  const double c = 1.0;
  const Eigen::MatrixXd Hc = H + 2.0 * c * Eigen::MatrixXd::Identity(H.rows(), H.cols());
  const std::vector<Config> K{c1({0, 0}), c1({1, 0})};
  const auto times = t_grid(0.0, 5.0, 11);
  const auto a = eig_dense(H, true);
  const auto b = eig_dense(Hc, true);
  const double hi = 0.5 * (a.eigenvalues[30] + a.eigenvalues[31]);
  const auto base = dyn_moment(box, a, 2.0, {0.0, hi}, K, times);
  const auto shifted = dyn_moment(box, b, 2.0, {2.0 * c, hi + 2.0 * c}, K, times);
  CHECK(base.states_in_window == 31);
  CHECK(shifted.states_in_window == 31);
  for (std::size_t q = 0; q < base.values.size(); ++q)
    CHECK(shifted.values[q] == doctest::Approx(base.values[q]).epsilon(1e-8));
  CHECK(shifted.correlator_bound == doctest::Approx(base.correlator_bound).epsilon(1e-8));
}

TEST_CASE("dynamics: s* and argument checks") {
  const auto paper = ModelParams::paper(2, 2, 1, 13.0, 100);
  CHECK(paper.s_star() == doctest::Approx(26.0 / 1.5 - 3.0));
  CHECK(paper.s_star() == doctest::Approx(14.3333333).epsilon(1e-7));
  DynPlan plan;
  plan.params = paper;
  plan.L = 2;
  plan.ensemble = DisorderEnsemble::uniform01(1);
  plan.K = {c1({0, 0})};
  plan.times = {0.0};
  plan.s = 15.0;
  CHECK_THROWS_AS(dyn_moment(plan), std::invalid_argument);
  plan.s = 2.0;
  CHECK(dyn_moment(plan).s_star == doctest::Approx(paper.s_star()));
  plan.K = {c1({0, 3})};
  CHECK_THROWS_AS(dyn_moment(plan), std::invalid_argument);
}

TEST_CASE("dynamics contrast: free spreading against strong disorder") {
  DynPlan plan;
  plan.params = ModelParams::calibrated(2, 1, 1, 13.0, 6, 0.5, 1.0);
  plan.L = 30;
  plan.s = 2.0;
  plan.interval = {-1.0, 1e3};
  plan.K = {c1({0})};
  plan.times = t_grid(0.5, 12.0, 30);
  plan.ensemble = DisorderEnsemble::constant(0.0);
  const auto free = dyn_moment(plan);
  CHECK(free.values.back() > 10.0 * free.values.front());
  plan.ensemble = DisorderEnsemble::scaled_uniform(50.0, 2);
  plan.K = {c1({-1}), c1({0}), c1({1})};
  const auto dis = dyn_moment(plan);
  const double med = median(dis.values);
  for (double v : dis.values) {
    CHECK(v <= 2.0 * med);
    CHECK(v >= 0.5 * med);
  }
  CHECK(free.bound_holds);
  CHECK(dis.bound_holds);
}

TEST_CASE("kernel routes and identities") {
  KernelPlan plan;
  plan.N = 2;
  plan.n = 2;
  plan.L = 4;
  plan.ensemble = DisorderEnsemble::scaled_uniform(20.0, 6);
  plan.interval = {0.0, 30.0};
  plan.times = {0.5, 2.0};
  plan.annulus_factor = 1.0;
  plan.sampling = {2, 1};
  const auto res = kernel_decay(plan);
  CHECK(res.rows.size() == 2 * 81 * 3);
  CHECK(res.max_route_gap <= 1e-10);

  const auto box = origin_cube(2, 1, 4);
  const auto H = box_matrix(box, plan.ensemble, 0);
  const auto sd = eig_dense(H, true);
  const auto iy = static_cast<Eigen::Index>(box.index_of(c1({0, 0})));
  for (const auto& r : res.rows) {
    if (r.realization != 0 || !r.identity) continue;
    const auto ix = static_cast<Eigen::Index>(box.index_of(r.x));
    double v = 0.0;
    for (Eigen::Index j = 0; j < sd.eigenvalues.size(); ++j)
      if (sd.eigenvalues[j] <= 30.0) v += (*sd.eigenvectors)(ix, j) * (*sd.eigenvectors)(iy, j);
    CHECK(r.matrix_element == doctest::Approx(std::abs(v)).epsilon(1e-10));
    if (r.x == r.y) {
      CHECK(r.matrix_element >= 0.0);
      CHECK(r.matrix_element <= 1.0 + 1e-12);
    }
    CHECK(r.distance == max_norm(r.x, r.y));
  }

  // Whole spectrum: f(H) P_I = e^{-itH}, against the matrix exponential.
  plan.interval = {-1.0, 1e4};
  plan.sampling.trials = 1;
  const auto full = kernel_decay(plan);
  const Eigen::MatrixXcd U = propagator(H, 2.0);
  for (const auto& r : full.rows) {
    const auto ix = static_cast<Eigen::Index>(box.index_of(r.x));
    if (r.identity) CHECK(r.matrix_element == doctest::Approx(r.x == r.y ? 1.0 : 0.0).epsilon(1e-10));
    if (!r.identity && r.t == 2.0) CHECK(r.matrix_element == doctest::Approx(std::abs(U(ix, iy))).epsilon(1e-9));
  }
}

TEST_CASE("kernel annuli under strong disorder") {
  KernelPlan plan;
  plan.N = 1;
  plan.n = 1;
  plan.L = 40;
  plan.ensemble = DisorderEnsemble::scaled_uniform(20.0, 8);
  plan.interval = {0.0, 25.0};
  plan.annulus_factor = 1.0;
  plan.sampling = {20, 2};
  const auto res = kernel_decay(plan);
  CHECK(res.max_route_gap <= 1e-10);
  REQUIRE(res.annuli.size() >= 3);
  CHECK(res.annuli.front().j == -1);
  CHECK(res.medians_decreasing);
  for (const auto& r : res.rows) {
    const double x = config_norm(r.x);
    const auto& a = *std::find_if(res.annuli.begin(), res.annuli.end(), [&](const KernelAnnulus& q) { return q.j == r.annulus; });
    CHECK(x <= a.outer);
    if (a.j >= 0) CHECK(x > a.inner);
  }
}
