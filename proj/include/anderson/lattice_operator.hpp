#pragma once

// Random multi-particle Hamiltonian: disorder ensembles, interaction, sparse
// assembly on rectangles and the tensor factorisation of PI cubes.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "anderson/geometry.hpp"
#include "anderson/params.hpp"

namespace anderson {

/// Pair potential Phi on 0..r0; zero beyond.
struct InteractionSpec {
  std::vector<double> phi;

  static InteractionSpec none() { return InteractionSpec{}; }
  int r0() const { return phi.empty() ? 0 : static_cast<int>(phi.size()) - 1; }
  double at(int r) const { return r >= 0 && r < static_cast<int>(phi.size()) ? phi[static_cast<std::size_t>(r)] : 0.0; }
  void validate() const;
};

double interaction_energy(const Config& x, const InteractionSpec& spec);

enum class EnsembleKind { uniform01, scaled_uniform, smoothed_log_holder, constant };

std::string to_string(EnsembleKind k);
EnsembleKind ensemble_kind_from_string(const std::string& s);

struct DisorderEnsemble {
  EnsembleKind kind = EnsembleKind::uniform01;
  double a = 1.0;      // scaled_uniform: support [0, a]
  double C = 1.0;      // smoothed_log_holder constants
  double A = 1.0;
  double value = 0.0;  // constant
  std::uint64_t seed_root = 0xA11CE;

  static DisorderEnsemble uniform01(std::uint64_t seed);
  static DisorderEnsemble scaled_uniform(double a, std::uint64_t seed);
  static DisorderEnsemble smoothed_log_holder(double C, double A, std::uint64_t seed);
  static DisorderEnsemble constant(double c);

  /// Single-site value as a pure function of (seed_root, realization, site).
  double draw(std::uint64_t realization, const Site& site) const;
  void validate() const;
};

/// Uniform number in [0, 1) keyed by (seed, realization, site).
double keyed_uniform(std::uint64_t seed, std::uint64_t realization, const Site& site);

struct PotentialSample {
  std::map<Site, double> values;

  double at(const Site& s) const;
  bool covers(const std::set<Site>& window) const;
  void write_csv(std::ostream& os) const;
};

PotentialSample sample_potential(const DisorderEnsemble& e, std::uint64_t realization, const std::set<Site>& window);
/// Samples on the full projection of r.
PotentialSample sample_potential(const DisorderEnsemble& e, std::uint64_t realization, const Rectangle& r);

/// s(F_V, eps) = sup_a (F(a+eps) - F(a)).
double continuity_modulus(const DisorderEnsemble& e, double eps);

struct AssumptionPLevel {
  std::int64_t L = 0;
  double eps = 0.0;      // e^{-L^beta}
  double modulus = 0.0;  // s(F, eps)
  double bound = 0.0;    // C L^{-A}
  bool holds = false;
};

struct AssumptionPReport {
  double A_required = 0.0;  // 1.5 * 4^N p + 9Nd
  double A_used = 0.0;
  double C_used = 1.0;
  bool inequality_met = false;
  /// Lipschitz ensembles meet the bound for L large enough whatever A is.
  bool satisfied_asymptotically = false;
  std::string verdict;
  std::vector<AssumptionPLevel> levels;
};

AssumptionPReport assumption_P_check(const DisorderEnsemble& e, const ModelParams& params, int K = 3);

/// Largest dimension converted to a dense matrix.
inline constexpr Eigen::Index kMaxDenseDim = 10000;

class OperatorMatrix {
 public:
  OperatorMatrix() = default;
  OperatorMatrix(Rectangle r, Eigen::SparseMatrix<double> h) : rect_(std::move(r)), h_(std::move(h)) {}

  const Rectangle& rectangle() const { return rect_; }
  const Eigen::SparseMatrix<double>& matrix() const { return h_; }
  Eigen::Index dim() const { return h_.rows(); }
  /// Throws std::length_error above kMaxDenseDim.
  Eigen::MatrixXd dense() const;
  Eigen::VectorXd diagonal() const { return h_.diagonal(); }

  std::size_t index_of(const Config& x) const { return rect_.index_of(x); }
  Config config_at(std::size_t k) const { return rect_.config_at(k); }

 private:
  Rectangle rect_;
  Eigen::SparseMatrix<double> h_;
};

/// Restriction of H = -Delta + sum_j V(x_j) + U(x) to r with simple boundary
/// conditions.  Throws std::invalid_argument when pot misses a site of r.
OperatorMatrix assemble(const Rectangle& r, const PotentialSample& pot, const InteractionSpec& spec);

/// Diagonal of the restricted operator, used when only the potential changes.
Eigen::VectorXd assemble_diagonal(const Rectangle& r, const PotentialSample& pot, const InteractionSpec& spec);

struct TensorSplit {
  IndexSet J, Jc;
  OperatorMatrix left;   // particles J
  OperatorMatrix right;  // particles J^c
};

/// Factors of a PI rectangle.  Without an explicit split the cube is
/// classified and its interactivity split used; FI cubes are rejected.
TensorSplit tensor_split(const Rectangle& r, const PotentialSample& pot, const InteractionSpec& spec,
                         const std::optional<std::pair<IndexSet, IndexSet>>& split = std::nullopt);

/// Finitely supported vector on (Z^d)^n.
using SparseState = std::map<Config, double>;

/// Applies the unrestricted operator to a finitely supported vector.
SparseState apply_ambient(const SparseState& v, const PotentialSample& pot, const InteractionSpec& spec);

double norm(const SparseState& v);

}  // namespace anderson
