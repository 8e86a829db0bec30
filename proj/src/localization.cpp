#include "anderson/localization.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>

#include "anderson/parallel.hpp"
#include "anderson/stats.hpp"

namespace anderson {

double free_chain_ground(int L) {
  return 2.0 - 2.0 * std::cos(std::numbers::pi / (2.0 * L + 2.0));
}

int config_norm(const Config& x) {
  int r = 0;
  for (int v : x.flat()) r = std::max(r, std::abs(v));
  return r;
}

// ---------------------------------------------------------------------------
// Spectral edge
// ---------------------------------------------------------------------------

EdgeSweepResult spectral_edge_sweep(const EdgeSweepPlan& plan) {
  if (plan.box_sizes.empty()) throw std::invalid_argument("spectral_edge_sweep: no box sizes");
  plan.interaction.validate();
  EdgeSweepResult res;
  const std::size_t T = plan.sampling.trials;
  for (int L : plan.box_sizes) {
    if (L < 0) throw std::invalid_argument("spectral_edge_sweep: negative box size");
    const auto box = origin_cube(plan.n, plan.d, L);
    EdgeSweepLevel lvl;
    lvl.L = L;
    lvl.dim = box.cardinality();
    lvl.E0.assign(T, 0.0);
    parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
      const auto op = assemble(box, sample_potential(plan.ensemble, i, box), plan.interaction);
      lvl.E0[i] = lowest_eigenvalue(op, plan.eig);
    });
    lvl.median = median(lvl.E0);
    lvl.min = *std::min_element(lvl.E0.begin(), lvl.E0.end());
    lvl.max = *std::max_element(lvl.E0.begin(), lvl.E0.end());
    res.levels.push_back(std::move(lvl));
  }
  res.medians_decreasing = res.medians_nonincreasing = true;
  res.nonnegative = true;
  for (std::size_t k = 0; k < res.levels.size(); ++k) {
    if (res.levels[k].min < -1e-9) res.nonnegative = false;
    if (k == 0) continue;
    if (!(res.levels[k].median < res.levels[k - 1].median)) res.medians_decreasing = false;
    if (res.levels[k].median > res.levels[k - 1].median) res.medians_nonincreasing = false;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Weyl quasi-modes
// ---------------------------------------------------------------------------

SparseState quasi_mode(const Config& center, int R, double E, double width) {
  const int n = center.n(), d = center.d();
  if (E < 0.0 || E > 4.0 * n * d) throw std::invalid_argument("quasi_mode: E outside [0, 4nd]");
  if (R < 1 || width <= 0.0) throw std::invalid_argument("quasi_mode: need R >= 1 and width > 0");
  const double c = std::clamp(1.0 - E / (2.0 * n * d), -1.0, 1.0);
  const double theta = std::acos(c);
  std::vector<double> profile(static_cast<std::size_t>(2 * R + 1));
  for (int t = -R; t <= R; ++t) {
    const double taper = std::clamp((R + 1 - std::abs(t)) / width, 0.0, 1.0);
    profile[static_cast<std::size_t>(t + R)] = std::cos(theta * t) * taper;
  }
  SparseState phi;
  const auto box = Rectangle::cube(center, R);
  for (std::size_t k = 0; k < box.cardinality(); ++k) {
    const Config x = box.config_at(k);
    double v = 1.0;
    for (std::size_t a = 0; a < x.size(); ++a) v *= profile[static_cast<std::size_t>(x.flat()[a] - center.flat()[a] + R)];
    if (v != 0.0) phi[x] = v;
  }
  return phi;
}

namespace {

SparseState minus_E(SparseState v, const SparseState& phi, double E) {
  for (const auto& [x, val] : phi) v[x] -= E * val;
  return v;
}

}  // namespace

WeylResult weyl_residual(const WeylPlan& plan) {
  if (plan.E < 0.0 || plan.E > 4.0 * plan.n * plan.d) throw std::invalid_argument("weyl_residual: E outside [0, 4nd]");
  if (plan.m_wells.empty()) throw std::invalid_argument("weyl_residual: empty m sweep");
  plan.interaction.validate();
  WeylResult res;
  res.E = plan.E;
  for (int m : plan.m_wells) {
    const auto probe = edge_probe(plan.N, plan.n, plan.d, plan.interaction.r0(), plan.k_E, m, 1);
    WeylPoint pt;
    pt.m_well = m;
    pt.center = probe.centers.front();
    pt.support_radius = plan.k_E * m;
    pt.well_eps = plan.well_eps.value_or(1.0 / (plan.k_E * static_cast<double>(m)));
    if (pt.well_eps < 0.0) throw std::invalid_argument("weyl_residual: negative well height");
    const auto phi = quasi_mode(pt.center, pt.support_radius, plan.E, std::max(1.0, m / 4.0));
    const double nphi = norm(phi);

    // Planted realization: small nonnegative values on the well, zero elsewhere.
    const auto well = Rectangle::cube(pt.center, pt.support_radius);
    PotentialSample planted, zero;
    for (const auto& s : full_projection(well)) {
      planted.values[s] = pt.well_eps * keyed_uniform(plan.seed, static_cast<std::uint64_t>(m), s);
      zero.values[s] = 0.0;
    }
    pt.residual = norm(minus_E(apply_ambient(phi, planted, plan.interaction), phi, plan.E)) / nphi;
    pt.kinetic = norm(minus_E(apply_ambient(phi, zero, plan.interaction), phi, plan.E)) / nphi;
    double vp = 0.0;
    for (const auto& [x, val] : phi) {
      double v = 0.0;
      for (int i = 0; i < x.n(); ++i) v += planted.at(x.particle(i));
      vp += v * v * val * val;
    }
    pt.potential = std::sqrt(vp) / nphi;
    pt.potential_bound = plan.n * pt.well_eps;
    pt.potential_ok = pt.potential <= pt.potential_bound * (1.0 + 1e-12);
    res.points.push_back(std::move(pt));
  }
  res.nonincreasing = res.decreasing = true;
  for (std::size_t k = 1; k < res.points.size(); ++k) {
    if (res.points[k].residual > 1.1 * res.points[k - 1].residual) res.nonincreasing = false;
    if (!(res.points[k].residual < res.points[k - 1].residual)) res.decreasing = false;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Eigenfunction decay
// ---------------------------------------------------------------------------

DecayFit fit_decay(const Rectangle& box, const Eigen::VectorXd& psi, double eigenvalue) {
  if (static_cast<std::size_t>(psi.size()) != box.cardinality()) throw ShapeError("fit_decay: vector size mismatch");
  DecayFit f;
  f.eigenvalue = eigenvalue;
  Eigen::Index peak = 0;
  psi.cwiseAbs().maxCoeff(&peak);
  f.center = box.config_at(static_cast<std::size_t>(peak));
  const double top = std::abs(psi[peak]);

  std::vector<double> shell_max;
  double total = 0.0, tail = 0.0;
  const double half = 0.5 * box.max_radius();
  for (Eigen::Index k = 0; k < psi.size(); ++k) {
    const int r = max_norm(box.config_at(static_cast<std::size_t>(k)), f.center);
    if (static_cast<std::size_t>(r) >= shell_max.size()) shell_max.resize(static_cast<std::size_t>(r) + 1, 0.0);
    const double a = std::abs(psi[k]);
    shell_max[static_cast<std::size_t>(r)] = std::max(shell_max[static_cast<std::size_t>(r)], a);
    total += a * a;
    if (r > half) tail += a * a;
  }
  f.mass_tail = total > 0.0 ? tail / total : 0.0;

  std::vector<double> xs, ys;
  for (std::size_t r = 0; r < shell_max.size(); ++r) {
    if (shell_max[r] < 1e-13 * top) continue;
    xs.push_back(static_cast<double>(r));
    ys.push_back(std::log(shell_max[r]));
  }
  f.shells = static_cast<int>(xs.size());
  if (xs.size() >= 2) {
    const auto fit = least_squares(xs, ys);
    f.rate = -fit.slope;
    f.r2 = fit.r2;
    f.fitted = true;
  }
  return f;
}

DecayResult decay_spectrum(const DecayPlan& plan) {
  plan.interaction.validate();
  if (plan.lowest_fraction <= 0.0 || plan.lowest_fraction > 1.0)
    throw std::invalid_argument("decay_spectrum: lowest_fraction must lie in (0, 1]");
  const auto box = origin_cube(plan.n, plan.d, plan.L);
  const std::size_t T = plan.sampling.trials;
  std::vector<std::vector<DecayFit>> per(T);
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    const auto op = assemble(box, sample_potential(plan.ensemble, i, box), plan.interaction);
    const auto sd = eig_dense(op.dense(), true);
    const auto& vals = sd.eigenvalues;
    const auto& vecs = *sd.eigenvectors;
    std::vector<Eigen::Index> pick;
    if (plan.energy_window) {
      for (Eigen::Index k = 0; k < vals.size(); ++k)
        if (vals[k] >= plan.energy_window->first && vals[k] <= plan.energy_window->second) pick.push_back(k);
    } else {
      const auto count = std::max<Eigen::Index>(
          1, static_cast<Eigen::Index>(std::floor(plan.lowest_fraction * static_cast<double>(vals.size()))));
      for (Eigen::Index k = 0; k < count; ++k) pick.push_back(k);
    }
    for (auto k : pick) per[i].push_back(fit_decay(box, vecs.col(k), vals[k]));
  });

  DecayResult res;
  std::vector<double> rates, r2s;
  std::size_t positive = 0;
  for (std::size_t i = 0; i < T; ++i)
    for (auto& f : per[i]) {
      ++res.states;
      if (f.fitted) {
        ++res.fitted;
        rates.push_back(f.rate);
        r2s.push_back(f.r2);
        if (f.rate > 0.0) ++positive;
      }
      res.rows.push_back({i, std::move(f)});
    }
  if (res.states > 0) res.fraction_positive = static_cast<double>(positive) / static_cast<double>(res.states);
  if (!rates.empty()) {
    res.median_rate = median(rates);
    res.median_r2 = median(r2s);
    res.q10_rate = quantile(rates, 0.1);
    res.q90_rate = quantile(rates, 0.9);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

DynMoment dyn_moment(const Rectangle& box, const SpectralData& spectrum, double s,
                     std::pair<double, double> interval, const std::vector<Config>& K,
                     const std::vector<double>& times) {
  if (!spectrum.eigenvectors) throw std::invalid_argument("dyn_moment: eigenvectors required");
  if (K.empty()) throw std::invalid_argument("dyn_moment: K is empty");
  for (const auto& k : K)
    if (!box.contains(k)) throw std::invalid_argument("dyn_moment: K outside the box: " + k.to_string());
  const auto& vals = spectrum.eigenvalues;
  const auto& vecs = *spectrum.eigenvectors;
  const auto D = static_cast<Eigen::Index>(box.cardinality());

  std::vector<Eigen::Index> window;
  for (Eigen::Index j = 0; j < vals.size(); ++j)
    if (vals[j] >= interval.first && vals[j] <= interval.second) window.push_back(j);
  const auto W = static_cast<Eigen::Index>(window.size());

  Eigen::VectorXd weight(D);
  for (Eigen::Index x = 0; x < D; ++x)
    weight[x] = std::pow(static_cast<double>(config_norm(box.config_at(static_cast<std::size_t>(x)))), s);
  std::vector<Eigen::Index> kidx;
  for (const auto& k : K) kidx.push_back(static_cast<Eigen::Index>(box.index_of(k)));

  Eigen::MatrixXd psi(D, W);
  Eigen::VectorXd lam(W);
  for (Eigen::Index c = 0; c < W; ++c) {
    psi.col(c) = vecs.col(window[static_cast<std::size_t>(c)]);
    lam[c] = vals[window[static_cast<std::size_t>(c)]];
  }
  // psi_K(c, k) = psi_c(k)
  Eigen::MatrixXd psiK(W, static_cast<Eigen::Index>(kidx.size()));
  for (std::size_t k = 0; k < kidx.size(); ++k) psiK.col(static_cast<Eigen::Index>(k)) = psi.row(kidx[k]).transpose();

  DynMoment m;
  m.s = s;
  m.interval = interval;
  m.K = K;
  m.times = times;
  m.states_in_window = window.size();

  const Eigen::VectorXd sqw = weight.cwiseSqrt();
  for (double t : times) {
    Eigen::MatrixXcd phase = psiK.cast<std::complex<double>>();
    for (Eigen::Index c = 0; c < W; ++c) phase.row(c) *= std::exp(std::complex<double>(0.0, -t * lam[c]));
    const Eigen::MatrixXcd cols = psi.cast<std::complex<double>>() * phase;
    m.values.push_back((sqw.asDiagonal() * cols).squaredNorm());
  }

  double b = 0.0;
  for (Eigen::Index c = 0; c < W; ++c) b += (sqw.cwiseProduct(psi.col(c))).norm() * psiK.row(c).norm();
  m.correlator_bound = b * b;

  // Direct M(0): projector columns P_I e_k as real matrix products.
  const Eigen::MatrixXd P = psi * psi.transpose();
  double direct = 0.0;
  for (auto k : kidx) direct += (sqw.cwiseProduct(P.col(k))).squaredNorm();
  m.m0_direct = direct;

  m.bound_holds = true;
  for (double v : m.values) {
    if (!std::isfinite(v) || v < 0.0 || v > m.correlator_bound * (1.0 + 1e-9)) m.bound_holds = false;
    if (m.correlator_bound > 0.0) m.worst_ratio = std::max(m.worst_ratio, v / m.correlator_bound);
  }
  return m;
}

DynMoment dyn_moment(const DynPlan& plan) {
  plan.params.validate();
  plan.interaction.validate();
  const double s_star = plan.params.s_star();
  if (plan.s <= 0.0) throw std::invalid_argument("dyn_moment: s must be positive");
  if (plan.params.mode == ParamMode::paper && plan.s >= s_star)
    throw std::invalid_argument("dyn_moment: paper mode needs s < s* = " + std::to_string(s_star));
  const auto box = origin_cube(plan.params.n, plan.params.d, plan.L);
  const auto op = assemble(box, sample_potential(plan.ensemble, plan.realization, box), plan.interaction);
  const auto sd = eig_dense(op.dense(), true);
  auto m = dyn_moment(box, sd, plan.s, plan.interval, plan.K, plan.times);
  m.s_star = s_star;
  return m;
}

// ---------------------------------------------------------------------------
// Kernel decay
// ---------------------------------------------------------------------------

KernelResult kernel_decay(const KernelPlan& plan) {
  plan.interaction.validate();
  const auto box = origin_cube(plan.n, plan.d, plan.L);
  auto ys = plan.ys.empty() ? std::vector<Config>{Config(plan.n, plan.d)} : plan.ys;
  auto xs = plan.xs.empty() ? box.configs() : plan.xs;
  for (const auto& c : ys)
    if (!box.contains(c)) throw std::invalid_argument("kernel_decay: y outside the box: " + c.to_string());
  for (const auto& c : xs)
    if (!box.contains(c)) throw std::invalid_argument("kernel_decay: x outside the box: " + c.to_string());

  const double factor = plan.annulus_factor > 0.0 ? plan.annulus_factor : 7.0 * plan.N + 1.0;
  // Ladder long enough to cover the box.
  std::vector<double> radii;
  {
    int K = 1;
    for (;; ++K) {
      const auto lad = scale_ladder(plan.ladder_L0, K, plan.ladder_relaxed);
      if (factor * static_cast<double>(lad.levels.back()) >= plan.L || K > 8) {
        for (auto v : lad.levels) radii.push_back(factor * static_cast<double>(v));
        break;
      }
    }
  }
  auto annulus_of = [&](const Config& x) {
    const double r = config_norm(x);
    int j = -1;
    for (std::size_t q = 0; q < radii.size(); ++q)
      if (r > radii[q]) j = static_cast<int>(q);
    return j;
  };

  std::vector<std::pair<bool, double>> family{{true, 0.0}};
  for (double t : plan.times) family.emplace_back(false, t);

  const std::size_t T = plan.sampling.trials;
  std::vector<std::vector<KernelRow>> per(T);
  std::vector<double> gaps(T, 0.0);
  parallel_for(T, plan.sampling.workers, [&](std::size_t i) {
    const auto op = assemble(box, sample_potential(plan.ensemble, i, box), plan.interaction);
    const auto sd = eig_dense(op.dense(), true);
    const auto& vals = sd.eigenvalues;
    const auto& vecs = *sd.eigenvectors;
    std::vector<Eigen::Index> window;
    for (Eigen::Index j = 0; j < vals.size(); ++j)
      if (vals[j] >= plan.interval.first && vals[j] <= plan.interval.second) window.push_back(j);
    const auto W = static_cast<Eigen::Index>(window.size());
    Eigen::MatrixXd psi(vecs.rows(), W);
    for (Eigen::Index c = 0; c < W; ++c) psi.col(c) = vecs.col(window[static_cast<std::size_t>(c)]);
    for (const auto& y : ys) {
      const auto iy = static_cast<Eigen::Index>(box.index_of(y));
      for (const auto& [identity, t] : family) {
        Eigen::VectorXcd fv(W);
        for (Eigen::Index c = 0; c < W; ++c)
          fv[c] = identity ? std::complex<double>(1.0)
                           : std::exp(std::complex<double>(0.0, -t * vals[window[static_cast<std::size_t>(c)]]));
        // Column f(H) P_I e_y; the HS norm of 1_x f(H) P_I 1_y is the norm of
        // its restriction to x.
        const Eigen::VectorXcd coeff = fv.cwiseProduct(psi.row(iy).transpose().cast<std::complex<double>>());
        const Eigen::VectorXcd column = psi.cast<std::complex<double>>() * coeff;
        for (const auto& x : xs) {
          const auto ix = static_cast<Eigen::Index>(box.index_of(x));
          // Matrix element <x, f(H) P_I y> as a spectral sum.
          std::complex<double> me = 0.0;
          for (Eigen::Index c = 0; c < W; ++c) me += fv[c] * psi(ix, c) * psi(iy, c);
          KernelRow row;
          row.realization = i;
          row.x = x;
          row.y = y;
          row.distance = max_norm(x, y);
          row.annulus = annulus_of(x);
          row.t = t;
          row.identity = identity;
          row.matrix_element = std::abs(me);
          row.hs_norm = Eigen::VectorXcd::Constant(1, column[ix]).norm();
          gaps[i] = std::max(gaps[i], std::abs(row.matrix_element - row.hs_norm));
          per[i].push_back(std::move(row));
        }
      }
    }
  });

  KernelResult res;
  for (std::size_t i = 0; i < T; ++i) {
    res.max_route_gap = std::max(res.max_route_gap, gaps[i]);
    for (auto& r : per[i]) res.rows.push_back(std::move(r));
  }
  std::map<int, std::vector<double>> by_j;
  for (const auto& r : res.rows)
    if (r.identity) by_j[r.annulus].push_back(r.matrix_element);
  for (auto& [j, v] : by_j) {
    KernelAnnulus a;
    a.j = j;
    a.inner = j < 0 ? 0.0 : radii[static_cast<std::size_t>(j)];
    a.outer = j + 1 < static_cast<int>(radii.size()) ? radii[static_cast<std::size_t>(j + 1)] : plan.L;
    a.rows = v.size();
    a.median = median(v);
    res.annuli.push_back(a);
  }
  res.medians_decreasing = res.annuli.size() >= 2;
  for (std::size_t q = 1; q < res.annuli.size(); ++q)
    if (!(res.annuli[q].median < res.annuli[q - 1].median)) res.medians_decreasing = false;
  return res;
}

void to_json(nlohmann::json& j, const DecayFit& f) {
  j = {{"eigenvalue", f.eigenvalue}, {"center", f.center}, {"rate", f.rate},     {"r2", f.r2},
       {"mass_tail", f.mass_tail},   {"shells", f.shells}, {"fitted", f.fitted}};
}

void to_json(nlohmann::json& j, const DynMoment& m) {
  j = {{"s", m.s},
       {"s_star", m.s_star},
       {"interval", {m.interval.first, m.interval.second}},
       {"K", m.K},
       {"times", m.times},
       {"values", m.values},
       {"correlator_bound", m.correlator_bound},
       {"states_in_window", m.states_in_window},
       {"worst_ratio", m.worst_ratio},
       {"bound_holds", m.bound_holds}};
}

}  // namespace anderson
