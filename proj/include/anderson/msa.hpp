#pragma once

// Monte Carlo experiments for the probabilistic bounds of the multi-scale
// analysis, and the deterministic audits that go with them.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "anderson/geometry.hpp"
#include "anderson/lattice_operator.hpp"
#include "anderson/params.hpp"
#include "anderson/solver.hpp"
#include "anderson/stats.hpp"

namespace anderson {

/// Raised when a deterministic invariant fails during an experiment.
class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(std::string name, const std::string& what)
      : std::runtime_error(name + ": " + what), invariant(std::move(name)) {}
  std::string invariant;
};

struct Sampling {
  std::size_t trials = 100;
  int workers = 1;
};

/// Energy grid over [lo, hi]: uniform step plus points around nearby
/// eigenvalues.  step <= 0 selects (hi - lo) / 200.
struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  double step = 0.0;
  bool augment = true;

  double resolved_step() const { return step > 0 ? step : (hi - lo) / 200.0; }
};

// ---------------------------------------------------------------------------
// Wegner
// ---------------------------------------------------------------------------

struct WegnerPlan {
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  Rectangle a, b;
  std::vector<double> eps;
  Sampling sampling;
};

struct WegnerResult {
  std::vector<double> eps;
  std::vector<MonteCarloEstimate> estimates;
  std::vector<double> bounds;
  double prefactor = 0.0;  // |C'| |C| max |Pi_i|
  LinearFit loglog;        // log P vs log eps over eps with P > 0
  double ratio_spread = 0.0;  // max(P/eps) / min(P/eps); inf when some P = 0
};

/// |C'| |C| max_i max(|Pi_i C|, |Pi_i C'|) s(F_V, 2 eps).
double wegner_bound(const Rectangle& a, const Rectangle& b, const DisorderEnsemble& e, double eps);

WegnerResult wegner_experiment(const WegnerPlan& plan);

// ---------------------------------------------------------------------------
// CNR pairs
// ---------------------------------------------------------------------------

struct CnrPairPlan {
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  Rectangle a, b;
  Sampling sampling;
  /// Restrict the energy to [lo, hi]; the whole line when unset.
  std::optional<std::pair<double, double>> window;
  /// Control: the potential around b is a translate of the one around a.
  bool mirror = false;
  CnrEnumeration enumeration;
};

struct CnrPairResult {
  MonteCarloEstimate estimate;
  std::size_t subcubes_per_cube = 0;
};

/// Set of energies at which a cube fails to be CNR, as sorted disjoint
/// open intervals.
std::vector<std::pair<double, double>> cnr_failure_set(const SubcubeSpectra& sub);

/// True when two interval unions meet inside [lo, hi].
bool interval_sets_meet(const std::vector<std::pair<double, double>>& a, const std::vector<std::pair<double, double>>& b,
                        double lo, double hi);

CnrPairResult cnr_pair_experiment(const CnrPairPlan& plan);

// ---------------------------------------------------------------------------
// Initial scale
// ---------------------------------------------------------------------------

struct InitialScalePlan {
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  std::vector<int> sizes;  // L_0 values
  double C_const = 1.0;
  Sampling sampling;
};

struct InitialScalePoint {
  int L0 = 0;
  double threshold = 0.0;  // 2 C L0^{-1/2}
  MonteCarloEstimate estimate;
  double median_E0 = 0.0;
  std::size_t minmax_violations = 0;  // E_0 < tensor lower bound
};

/// Cube of radius L centered at the origin configuration.
Rectangle origin_cube(int n, int d, int L);

std::vector<InitialScalePoint> initial_scale_experiment(const InitialScalePlan& plan);

struct InitialDsPlan {
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  Sampling sampling;
  /// Singularity scan on every realization, not only where the premise holds.
  bool scan_all = false;
  double grid_step = 0.0;  // default E*/200
  Eigen::Index dense_threshold = 3000;
};

struct InitialDsReport {
  double m = 0.0;
  double E_star = 0.0;
  double C = 0.0;              // 12Nd 2^{N+1}(14N^N + 6Nd), paper mode only
  double gap_threshold = 0.0;  // 2 E*
  double gamma = 0.0;
  std::size_t realizations = 0;
  std::size_t premise = 0;        // E_0 > gap threshold
  std::size_t failures = 0;       // premise and singular somewhere on the grid
  std::size_t ct_certified = 0;   // premise and the Combes-Thomas bound certifies every grid energy
  std::size_t scanned = 0;
  std::size_t singular_any = 0;   // scanned realizations singular at some grid energy
  double min_E0 = 0.0;
  double median_E0 = 0.0;
  double max_E0 = 0.0;
  std::optional<MonteCarloEstimate> singular_rate;
};

InitialDsReport initial_ds_check(const InitialDsPlan& plan);

/// 2/eta e^{-eta L / (12 n d)} <= e^{-gamma L} with eta = min(1, gap).
bool combes_thomas_certifies(double gap, int L, int n, int d, double gamma);

// ---------------------------------------------------------------------------
// DS(k, n, N)
// ---------------------------------------------------------------------------

/// n particles spaced `spacing` L apart; the second cube is translated far
/// enough that the pair is separable at radius L.
std::pair<Rectangle, Rectangle> separable_pair(int n, int d, int L, int N, int spacing);

struct DsPlan {
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  std::vector<int> levels;  // ladder indices k
  int spacing = 0;
  GridSpec grid;            // defaults to [0, E*]
  Sampling sampling;
  Eigen::Index dense_threshold = 3000;
};

struct DsLevel {
  int k = 0;
  std::int64_t L = 0;
  MonteCarloEstimate estimate;
  double median_margin = 0.0;  // median over trials of max log(max_green / threshold) on cube A
};

std::vector<DsLevel> ds_estimate(const DsPlan& plan);

/// Whether both cubes are (E,m)-singular at some grid energy.
struct PairScan {
  bool both = false;
  double margin_a = 0.0;
};
PairScan scan_pair(const OperatorMatrix& a, const OperatorMatrix& b, const GridSpec& grid, const ModelParams& params,
                   Eigen::Index dense_threshold = 3000);

// ---------------------------------------------------------------------------
// Tunnelling
// ---------------------------------------------------------------------------

struct TunnellingPlan {
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  Rectangle cube;
  ScaleLadder ladder;
  GridSpec grid;
  /// Sites where the potential is forced to zero (planted wells).
  std::vector<SiteBox> wells;
  TunnellingOptions options;
  Sampling sampling;
};

struct TunnellingResult {
  MonteCarloEstimate estimate;
  int level = 0;  // index of the cube radius on the ladder
  std::size_t separable_pairs = 0;
};

TunnellingResult tunnelling_probability(const TunnellingPlan& plan);

// ---------------------------------------------------------------------------
// Counts of singular sub-cubes
// ---------------------------------------------------------------------------

struct CountsPlan {
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  Rectangle cube;  // radius L_{k+1}
  ScaleLadder ladder;
  int center_step = 1;
  GridSpec grid;
  Sampling sampling;
  int ell = 1;  // M_FI >= 2 ell event
};

struct CountsResult {
  std::int64_t L_k = 0;
  std::size_t subcubes = 0;
  std::vector<SingularCounts> per_trial;  // maxima over the grid
  MonteCarloEstimate pi_event;            // M_PI >= kappa(n) + 2
  MonteCarloEstimate fi_event;            // M_FI >= 2 ell
  std::size_t inexact = 0;
  std::size_t implication_failures = 0;   // M >= kappa+2 without two separable cubes
};

/// Centers of radius-l sub-cubes of `cube` on a grid of the given step.
std::vector<Config> subcube_centers(const Rectangle& cube, int l, int step);

CountsResult count_statistics(const CountsPlan& plan);

struct AuditWitness {
  std::size_t realization = 0;
  double E = 0.0;
  int M = 0;
  double max_green = 0.0;
  double threshold = 0.0;
};

struct CnrCountAudit {
  std::size_t evaluated = 0;    // (realization, E) pairs
  std::size_t cnr_failed = 0;   // premise (i) fails: vacuous
  std::size_t count_exceeded = 0;  // CNR but M > kappa(n) + 5
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::vector<AuditWitness> witnesses;
};

CnrCountAudit cnr_count_audit(const CountsPlan& plan, const CnrEnumeration& how = {});

// ---------------------------------------------------------------------------
// Deterministic checks
// ---------------------------------------------------------------------------

struct GeometryVerifyReport {
  std::size_t configurations = 0;  // base points x
  std::size_t points_checked = 0;
  std::size_t counterexamples = 0;
  std::size_t implication_instances = 0;
  std::size_t implication_violations = 0;
};

/// Exhaustive candidate-family scan for every n in ns, L in Ls (d = 1, N = n),
/// plus random instances of the sufficient pre-separability condition.
GeometryVerifyReport geometry_verify(const std::vector<int>& ns, const std::vector<int>& Ls, std::size_t random_instances,
                                     std::uint64_t seed);

struct SpectralCheckReport {
  std::size_t instances = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // worst ratio or error, per check
};

/// Sorted spectrum of random PI rectangles against sorted pairwise sums of
/// the factor spectra; worst is the max relative error.
SpectralCheckReport tensor_identity_check(std::size_t instances, std::uint64_t seed, double tol = 1e-9);

/// Combes-Thomas bound on random disordered instances with eta in (0, 1].
SpectralCheckReport ct_check(std::size_t instances, std::uint64_t seed);

/// Raising the potential by t on one particle's projection lifts every
/// eigenvalue by at least t.  worst is the most negative slack.
SpectralCheckReport stollmann_check(std::size_t instances, const std::vector<double>& ts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bounds (log10)
// ---------------------------------------------------------------------------

double cnr_pair_bound_log10(double L, int N, double p);
double ds_bound_log10(double L, int N, int n, double p);
double tunnelling_bound_log10(double L, int N, int n, double p);
/// (3^{2nd}/2) L_{k+1}^{2nd} (L_k^{-4^N p} + L_k^{-4p 4^{N-n}}).
double pi_count_bound_log10(double L_k, double L_k1, int N, int n, int d, double p);
/// |C_{L_{k+1}}|^{2l}/(2l)! L_k^{-2 l p 4^{N-n}}.
double fi_count_bound_log10(double L_k, double L_k1, int N, int n, int d, double p, int ell);

}  // namespace anderson
