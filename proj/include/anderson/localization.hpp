#pragma once

// Finite-volume localization proxies: the bottom of the spectrum, Weyl
// quasi-modes, eigenfunction decay fits, position moments of the evolution
// and two-route kernel values.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "anderson/geometry.hpp"
#include "anderson/lattice_operator.hpp"
#include "anderson/msa.hpp"
#include "anderson/params.hpp"
#include "anderson/solver.hpp"

namespace anderson {

/// Lowest Dirichlet eigenvalue of the free chain on 2L+1 sites.
double free_chain_ground(int L);

/// Configuration norm |x| = max_i |x_i| (max over all coordinates).
int config_norm(const Config& x);

// ---------------------------------------------------------------------------
// Spectral edge
// ---------------------------------------------------------------------------

struct EdgeSweepPlan {
  int n = 1;
  int d = 1;
  std::vector<int> box_sizes;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  Sampling sampling;
  EigOptions eig;
};

struct EdgeSweepLevel {
  int L = 0;
  std::size_t dim = 0;
  std::vector<double> E0;  // by realization
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct EdgeSweepResult {
  std::vector<EdgeSweepLevel> levels;
  bool medians_decreasing = false;  // strictly, in the order of box_sizes
  bool medians_nonincreasing = false;
  bool nonnegative = false;  // every E0 >= -1e-9
};

/// Realization r uses the same potential sites for every box, so the boxes are
/// nested restrictions of one sample.
EdgeSweepResult spectral_edge_sweep(const EdgeSweepPlan& plan);

// ---------------------------------------------------------------------------
// Weyl quasi-modes
// ---------------------------------------------------------------------------

struct WeylPlan {
  int N = 2;
  int n = 1;
  int d = 1;
  double E = 0.0;
  std::vector<int> m_wells;
  int k_E = 1;
  /// Potential height on the well; 1/(k_E m) when unset.
  std::optional<double> well_eps;
  InteractionSpec interaction;
  std::uint64_t seed = 0xA11CE;
};

struct WeylPoint {
  int m_well = 0;
  Config center;
  int support_radius = 0;
  double well_eps = 0.0;
  double residual = 0.0;   // ||(H - E) phi|| / ||phi||
  double kinetic = 0.0;    // same with V = 0
  double potential = 0.0;  // ||V phi|| / ||phi||
  double potential_bound = 0.0;  // n * well_eps
  bool potential_ok = false;
};

struct WeylResult {
  double E = 0.0;
  std::vector<WeylPoint> points;
  /// Each residual is at most 1.1 times the previous one.
  bool nonincreasing = false;
  bool decreasing = false;
};

/// Real quasi-mode prod_c cos(theta t_c) tau(t_c) on the cube of radius R
/// around `center`, with 2nd(1 - cos theta) = E and a linear taper of the
/// given width at the faces.
SparseState quasi_mode(const Config& center, int R, double E, double width);

WeylResult weyl_residual(const WeylPlan& plan);

// ---------------------------------------------------------------------------
// Eigenfunction decay
// ---------------------------------------------------------------------------

struct DecayFit {
  double eigenvalue = 0.0;
  Config center;
  double rate = 0.0;
  double r2 = 0.0;
  double mass_tail = 0.0;
  int shells = 0;  // shells entering the fit
  bool fitted = false;
};

/// Least-squares fit of log shell maxima of |psi| against max-norm distance
/// from the argmax; shells below 1e-13 of the peak are dropped.
DecayFit fit_decay(const Rectangle& box, const Eigen::VectorXd& psi, double eigenvalue);

struct DecayPlan {
  int n = 1;
  int d = 1;
  int L = 50;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  /// Explicit window [lo, hi]; otherwise the lowest `lowest_fraction` of states.
  std::optional<std::pair<double, double>> energy_window;
  double lowest_fraction = 0.1;
  Sampling sampling;
};

struct DecayRow {
  std::uint64_t realization = 0;
  DecayFit fit;
};

struct DecayResult {
  std::vector<DecayRow> rows;
  std::size_t states = 0;
  std::size_t fitted = 0;
  double fraction_positive = 0.0;  // positive rate among all in-window states
  double median_rate = 0.0;
  double median_r2 = 0.0;
  double q10_rate = 0.0;
  double q90_rate = 0.0;
};

DecayResult decay_spectrum(const DecayPlan& plan);

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

struct DynPlan {
  ModelParams params;
  int L = 10;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  double s = 1.0;
  std::pair<double, double> interval{0.0, 1.0};
  std::vector<Config> K;
  std::vector<double> times;
  std::uint64_t realization = 0;
};

struct DynMoment {
  double s = 0.0;
  double s_star = 0.0;
  std::pair<double, double> interval;
  std::vector<Config> K;
  std::vector<double> times;
  std::vector<double> values;
  double correlator_bound = 0.0;
  std::size_t states_in_window = 0;
  double worst_ratio = 0.0;  // max_t M(t) / B
  bool bound_holds = false;
  /// M(0) from the real projector columns, compared with values at t = 0.
  double m0_direct = 0.0;
};

/// Moments for an operator whose eigendecomposition is already known.
DynMoment dyn_moment(const Rectangle& box, const SpectralData& spectrum, double s,
                     std::pair<double, double> interval, const std::vector<Config>& K,
                     const std::vector<double>& times);

DynMoment dyn_moment(const DynPlan& plan);

// ---------------------------------------------------------------------------
// Kernel decay
// ---------------------------------------------------------------------------

struct KernelPlan {
  int N = 2;
  int n = 2;
  int d = 1;
  int L = 10;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  std::pair<double, double> interval{0.0, 1.0};
  /// Sources; the origin when empty.
  std::vector<Config> ys;
  /// Targets; every configuration of the box when empty.
  std::vector<Config> xs;
  std::vector<double> times;  // f = e^{-itH}; f = 1 is always included
  /// Annuli M_j = C_{c L_{j+1}} \ C_{c L_j} on the ladder from L0.
  int ladder_L0 = 2;
  bool ladder_relaxed = true;
  double annulus_factor = 0.0;  // 7N + 1 when <= 0
  Sampling sampling;
};

struct KernelRow {
  std::uint64_t realization = 0;
  Config x, y;
  int distance = 0;
  int annulus = -1;  // -1 inside the innermost cube
  double t = 0.0;
  bool identity = true;  // f = 1
  double matrix_element = 0.0;
  double hs_norm = 0.0;
};

struct KernelAnnulus {
  int j = -1;
  double inner = 0.0;
  double outer = 0.0;
  std::size_t rows = 0;
  double median = 0.0;
};

struct KernelResult {
  std::vector<KernelRow> rows;
  std::vector<KernelAnnulus> annuli;  // f = 1 rows only
  double max_route_gap = 0.0;
  bool medians_decreasing = false;
};

KernelResult kernel_decay(const KernelPlan& plan);

void to_json(nlohmann::json& j, const DecayFit& f);
void to_json(nlohmann::json& j, const DynMoment& m);

}  // namespace anderson
