#pragma once

// Eigensolvers, resolvent columns and the multi-scale predicates evaluated on
// restricted operators.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "anderson/geometry.hpp"
#include "anderson/lattice_operator.hpp"
#include "anderson/params.hpp"

namespace anderson {

class ResonantEnergyError : public std::runtime_error {
 public:
  ResonantEnergyError(const std::string& what, double eta) : std::runtime_error(what), eta(eta) {}
  double eta;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual) : std::runtime_error(what), residual(residual) {}
  double residual;
};

struct SpectralData {
  Eigen::VectorXd eigenvalues;  // ascending
  std::optional<Eigen::MatrixXd> eigenvectors;
  double residual_bound = 0.0;
  /// True when only the lowest part of the spectrum was computed.
  bool partial = false;
};

struct EigOptions {
  Eigen::Index dense_threshold = 3000;
  /// Number of lowest pairs wanted from the iterative solver.
  int count = 1;
  double residual_tol = 1e-8;
  int max_krylov = 400;
};

SpectralData eig(const OperatorMatrix& op, bool want_vectors, const EigOptions& opt = {});
SpectralData eig_dense(const Eigen::MatrixXd& h, bool want_vectors);
/// Shift-invert Lanczos for the lowest `count` eigenpairs.
SpectralData eig_lowest(const Eigen::SparseMatrix<double>& h, int count, bool want_vectors, const EigOptions& opt = {});
double lowest_eigenvalue(const OperatorMatrix& op, const EigOptions& opt = {});

/// Distance from E to a sorted list of eigenvalues.
double dist_to_spectrum(const Eigen::VectorXd& sorted, double E);

struct GreenColumn {
  double E = 0.0;
  Config source;
  Eigen::VectorXd values;  // G(x, source; E) in the rectangle's index order
  double eta = 0.0;        // dist(E, spectrum); NaN when the spectrum was not computed
  double residual = 0.0;
};

GreenColumn green_column(const OperatorMatrix& op, double E, const Config& source,
                         const SpectralData* spectrum = nullptr);

// ---------------------------------------------------------------------------
// Resonance and CNR
// ---------------------------------------------------------------------------

double resonance_threshold(double L, double beta);

struct ResonanceVerdict {
  bool resonant = false;
  double dist = 0.0;
  double threshold = 0.0;
  double margin = 0.0;  // dist - threshold
};

/// L is the smallest radius of the rectangle the eigenvalues belong to.
ResonanceVerdict is_e_resonant(const Eigen::VectorXd& eigenvalues, int L, double E, const ModelParams& params);
ResonanceVerdict is_e_resonant(const OperatorMatrix& op, double E, const ModelParams& params);

/// Sub-cube radii l with l >= L^{1/alpha}, l <= L.
std::vector<int> cnr_radii(int L, double alpha);

struct CnrEnumeration {
  bool exact = true;
  std::size_t samples = 0;  // sampled mode: sub-cubes per radius
  std::uint64_t seed = 0;
  std::size_t budget = 1'000'000;
};

/// Spectra of the sub-cubes entering the CNR quantifier of one host cube.
class SubcubeSpectra {
 public:
  struct Entry {
    Rectangle rect;
    int radius = 0;
    Eigen::VectorXd eigenvalues;
  };

  SubcubeSpectra(const Rectangle& cube, const PotentialSample& pot, const InteractionSpec& spec,
                 const ModelParams& params, const CnrEnumeration& how = {});

  bool exact() const { return exact_; }
  std::size_t total() const { return total_; }
  const std::vector<Entry>& entries() const { return entries_; }
  const ModelParams& params() const { return params_; }

  /// First (in enumeration order) sub-cube that is E-resonant.
  std::optional<std::size_t> first_resonant(double E) const;

 private:
  bool exact_ = true;
  std::size_t total_ = 0;
  std::vector<Entry> entries_;
  ModelParams params_;
};

/// Number of sub-cubes entering the CNR quantifier.
std::size_t cnr_subcube_count(int L, int n, int d, double alpha);

struct CnrVerdict {
  bool cnr = true;
  bool exact = true;  // false: sampled, "cnr" is one-sided
  std::size_t tested = 0;
  std::size_t total = 0;
  std::optional<Rectangle> witness;
  double witness_dist = 0.0;
};

CnrVerdict is_e_cnr(const SubcubeSpectra& subcubes, double E);
CnrVerdict is_e_cnr(const Rectangle& cube, const PotentialSample& pot, const InteractionSpec& spec, double E,
                    const ModelParams& params, const CnrEnumeration& how = {});

// ---------------------------------------------------------------------------
// (E,m)-singularity
// ---------------------------------------------------------------------------

/// m (1 + L^{-1/8})^{N-n+1}.
double gamma(double m, int L, int n, int N);

struct SingularVerdict {
  bool singular = false;
  bool resonant = false;  // dist(E, spectrum) < 1e-12, decided without solving
  double max_green = 0.0;
  double threshold = 0.0;  // e^{-gamma L}
  double gamma = 0.0;
  double eta = 0.0;
};

SingularVerdict is_em_singular(const OperatorMatrix& cube, double E, const ModelParams& params,
                               const SpectralData* spectrum = nullptr);

/// Dense eigenbasis of one cube, reused across many energies.
class SpectralResolvent {
 public:
  SpectralResolvent(const OperatorMatrix& cube, const ModelParams& params);
  SpectralResolvent(const OperatorMatrix& cube, const ModelParams& params, SpectralData spectrum);

  const SpectralData& spectrum() const { return spectrum_; }
  const OperatorMatrix& op() const { return *op_; }
  double green(std::size_t x, std::size_t y, double E) const;
  /// Center-to-inner-boundary test at E.
  SingularVerdict singular_at(double E) const;
  double threshold() const { return threshold_; }

 private:
  void prepare();

  const OperatorMatrix* op_;
  ModelParams params_;
  SpectralData spectrum_;
  std::size_t center_ = 0;
  std::vector<std::size_t> boundary_;
  Eigen::MatrixXd boundary_rows_;  // eigenvectors restricted to the inner boundary
  Eigen::VectorXd center_row_;
  double gamma_ = 0.0;
  double threshold_ = 0.0;
};

struct SingularScan {
  std::vector<double> energies;
  std::vector<char> singular;
  std::vector<double> max_green;  // NaN where not evaluated (implied by monotonicity)
  std::string method;             // "monotone", "spectral" or "sparse"
  std::size_t solves = 0;
  bool below_spectrum = false;

  bool any() const;
};

/// (E,m)-singularity on a sorted energy grid.  When the whole grid lies below
/// the spectrum the resolvent is entrywise positive and increasing in E, so
/// the singular set is an up-set found by bisection.
SingularScan scan_singular(const OperatorMatrix& cube, const std::vector<double>& grid, const ModelParams& params,
                           Eigen::Index dense_threshold = 3000);

/// Sorted grid over [lo, hi] with step `step`, plus each extra point p in the
/// range and the points p +- half_width.
std::vector<double> energy_grid(double lo, double hi, double step, const std::vector<double>& extra_points = {},
                                double half_width = 0.0);

/// Eigenvalues of op not above E_hi; empty when H - E_hi is positive definite.
Eigen::VectorXd eigenvalues_up_to(const OperatorMatrix& op, double E_hi, Eigen::Index dense_threshold = 3000);

// ---------------------------------------------------------------------------
// Combes-Thomas
// ---------------------------------------------------------------------------

struct CombesThomasReport {
  bool holds = true;
  double worst_ratio = 0.0;
  double eta = 0.0;       // dist(E, spectrum)
  double eta_used = 0.0;  // min(eta, 1)
  std::size_t pairs = 0;
};

/// Checks |G(x,y;E)| <= 2/eta exp(-eta |x-y| / (12 nd)) for all pairs, or for
/// `sampled_pairs` random pairs.
CombesThomasReport combes_thomas_check(const OperatorMatrix& op, double E,
                                       std::optional<std::size_t> sampled_pairs = std::nullopt,
                                       std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// PI cubes: HNR, tunnelling and the tensor Green-function expansion
// ---------------------------------------------------------------------------

struct HnrVerdict {
  bool hnr = true;
  bool exact = true;
  bool witness_in_left = true;
  std::optional<Rectangle> witness_subcube;  // resonant sub-cube of one factor
  double shifted_energy = 0.0;
  /// E-resonant sub-rectangle of the PI cube built from the witness.
  std::optional<Rectangle> resonant_rectangle;
  bool resonant_rectangle_verified = false;
};

HnrVerdict is_hnr(const Rectangle& pi_cube, const PotentialSample& pot, const InteractionSpec& spec, double E,
                  const ModelParams& params, const CnrEnumeration& how = {});

struct TunnellingOptions {
  /// Sub-cube centers scanned exactly up to this many per factor.
  std::size_t budget = 4096;
};

struct TunnellingVerdict {
  bool left = false;
  bool right = false;
  int grid_step = 1;
  std::size_t subcubes = 0;
  std::size_t separable_pairs = 0;
  std::optional<std::pair<Config, Config>> witness;
  double witness_shift = 0.0;

  bool tunnelling() const { return left || right; }
};

TunnellingVerdict is_tunnelling(const Rectangle& pi_cube, const PotentialSample& pot, const InteractionSpec& spec,
                                double E, double m, const ModelParams& params, const ScaleLadder& ladder,
                                const TunnellingOptions& opt = {});

struct PiImplicationReport {
  bool hnr = false;
  bool tunnelling = false;
  bool singular = false;
  bool premise = false;
  bool implication_holds = true;
  double max_green = 0.0;
  double expansion_max_error = 0.0;  // |direct - expansion| relative to max(1, |direct|)
  bool expansion_bound_holds = true;
};

PiImplicationReport pi_implication_check(const Rectangle& pi_cube, const PotentialSample& pot,
                                        const InteractionSpec& spec, double E, double m, const ModelParams& params,
                                        const ScaleLadder& ladder, const CnrEnumeration& how = {});

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct PredicateReport {
  double E = 0.0;
  Rectangle cube;
  ResonanceVerdict resonance;
  CnrVerdict cnr;
  SingularVerdict singular;
  std::optional<InteractivityVerdict> interactivity;
  std::optional<bool> hnr;
  std::optional<bool> tunnelling;
};

PredicateReport evaluate_predicates(const Rectangle& cube, const PotentialSample& pot, const InteractionSpec& spec,
                                    double E, const ModelParams& params, const ScaleLadder* ladder = nullptr,
                                    const CnrEnumeration& how = {});

void to_json(nlohmann::json& j, const ResonanceVerdict& v);
void to_json(nlohmann::json& j, const CnrVerdict& v);
void to_json(nlohmann::json& j, const SingularVerdict& v);
void to_json(nlohmann::json& j, const PredicateReport& r);

}  // namespace anderson
