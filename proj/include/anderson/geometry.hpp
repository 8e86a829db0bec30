#pragma once

// Multi-particle lattice geometry: configurations, rectangles, boundaries,
// projections, separability and the interactivity split of cubes.
//
// Conventions used throughout the library:
//   * a configuration of n particles in Z^d is stored particle-major, so
//     coordinate (i, a) lives at flat position i*d + a;
//   * distances between configurations are max-norm distances;
//   * particle indices are 0-based in code and in JSON dumps.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace anderson {

/// A single-particle lattice site in Z^d.
using Site = std::vector<int>;

/// Index subset of {0..n-1}, kept sorted.
using IndexSet = std::vector<int>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Config {
 public:
  Config() = default;
  Config(int n, int d);
  Config(int n, int d, std::vector<int> flat);
  static Config from_particles(const std::vector<Site>& particles);

  int n() const { return n_; }
  int d() const { return d_; }
  std::size_t size() const { return coords_.size(); }

  int operator()(int particle, int axis) const { return coords_[static_cast<std::size_t>(particle * d_ + axis)]; }
  int& operator()(int particle, int axis) { return coords_[static_cast<std::size_t>(particle * d_ + axis)]; }

  Site particle(int i) const;
  void set_particle(int i, const Site& s);
  std::span<const int> flat() const { return coords_; }
  std::span<int> flat() { return coords_; }

  /// Configuration of the particles listed in `subset`, in that order.
  Config restrict_to(const IndexSet& subset) const;

  std::string to_string() const;

  friend bool operator==(const Config&, const Config&) = default;
  friend auto operator<=>(const Config& a, const Config& b) {
    if (auto c = a.n_ <=> b.n_; c != 0) return c;
    if (auto c = a.d_ <=> b.d_; c != 0) return c;
    return a.coords_ <=> b.coords_;
  }

 private:
  int n_ = 0;
  int d_ = 0;
  std::vector<int> coords_;
};

int max_norm(const Config& x, const Config& y);
int l1_norm(const Config& x, const Config& y);
int max_norm(const Site& x, const Site& y);

/// Max-norm diameter of the particle cloud, max_{i != j} |x_i - x_j|.
int particle_diameter(const Config& x);

/// A one-particle cube C_L(c) in Z^d.
struct SiteBox {
  Site center;
  int radius = 0;

  bool contains(const Site& s) const;
  std::size_t cardinality() const;
  std::vector<Site> sites() const;
};

bool boxes_intersect(const SiteBox& a, const SiteBox& b);
/// Max-norm distance between the site sets of two boxes (0 when they overlap).
int box_distance(const SiteBox& a, const SiteBox& b);

/// An n-particle rectangle prod_i C_{L_i}(u_i).  The flat index map is
/// row-major over the n*d coordinates with the last coordinate fastest.
class Rectangle {
 public:
  Rectangle() = default;
  Rectangle(Config center, std::vector<int> radii);
  static Rectangle cube(Config center, int radius);

  const Config& center() const { return center_; }
  const std::vector<int>& radii() const { return radii_; }
  int n() const { return center_.n(); }
  int d() const { return center_.d(); }

  bool is_cube() const;
  int min_radius() const;
  int max_radius() const;
  /// Common radius of a cube; throws for non-cubes.
  int radius() const;

  std::size_t cardinality() const { return card_; }
  bool contains(const Config& x) const;
  std::size_t index_of(const Config& x) const;
  Config config_at(std::size_t index) const;

  int lo(int particle, int axis) const { return center_(particle, axis) - radii_[static_cast<std::size_t>(particle)]; }
  int hi(int particle, int axis) const { return center_(particle, axis) + radii_[static_cast<std::size_t>(particle)]; }
  int side(int particle) const { return 2 * radii_[static_cast<std::size_t>(particle)] + 1; }
  std::size_t stride(int flat_coord) const { return strides_[static_cast<std::size_t>(flat_coord)]; }

  SiteBox particle_box(int i) const;
  /// Sub-rectangle formed by the particles in `subset`.
  Rectangle restrict_to(const IndexSet& subset) const;
  /// True when `inner` lies entirely inside this rectangle.
  bool contains_rectangle(const Rectangle& inner) const;

  std::vector<Config> configs() const;

  friend bool operator==(const Rectangle& a, const Rectangle& b) {
    return a.center_ == b.center_ && a.radii_ == b.radii_;
  }

 private:
  Config center_;
  std::vector<int> radii_;
  std::vector<std::size_t> strides_;
  std::size_t card_ = 0;
};

struct Boundaries {
  std::vector<std::pair<Config, Config>> pairs;  // (inside, outside)
  std::vector<Config> inner;
  std::vector<Config> outer;
};

/// Boundary pairs, inner and outer boundary of a rectangle, all sorted.
Boundaries boundaries(const Rectangle& r);

/// Flat indices of the inner boundary (sites with a neighbour outside r).
std::vector<std::size_t> inner_boundary_indices(const Rectangle& r);

/// Union of the one-particle cubes of the particles in J, as an explicit set.
std::set<Site> projection(const Rectangle& r, const IndexSet& J);
std::set<Site> full_projection(const Rectangle& r);

/// All nonempty subsets of {0..n-1} in lexicographic order.
std::vector<IndexSet> nonempty_subsets(int n);

/// True when `a` is J pre-separable from `b`: the J-projection of `a` misses
/// both the complementary projection of `a` and the full projection of `b`.
bool is_pre_separable_from(const Rectangle& a, const Rectangle& b, const IndexSet& J);

struct SeparabilityVerdict {
  bool separable = false;
  bool pre_separable = false;
  std::optional<IndexSet> witness_subset;
  /// True when the witness makes the first argument pre-separable from the second.
  bool witness_from_first = true;
  int distance = 0;
  int threshold = 0;  // 7 N L
};

SeparabilityVerdict is_separable(const Rectangle& a, const Rectangle& b, int N);

struct CandidateFamily {
  std::vector<Config> centers;
  int radius = 0;  // 2 n L
  bool covers(const Config& y) const;
};

/// The n^n configurations whose particles are drawn from the particles of x,
/// with cube radius 2nL.
CandidateFamily candidate_centers(const Config& x, int L);

struct CandidateVerification {
  std::size_t points_scanned = 0;
  std::size_t points_checked = 0;  // far from x and outside the family
  std::size_t counterexamples = 0;
  std::optional<Config> first_counterexample;
};

/// Scans every y with |y - x| <= half_width and checks that each y which is
/// farther than 7NL from x and outside the candidate family gives a separable
/// pair of radius-L cubes.
CandidateVerification verify_candidate_centers(const Config& x, int L, int N, int half_width);

/// Sufficient condition |y - x| > diam(y) + 3NL.
bool separable_from_B(const Config& x, const Config& y, int L, int N);

enum class Interactivity { FI, PI };

struct InteractivityVerdict {
  Interactivity kind = Interactivity::FI;
  int diameter = 0;
  std::optional<std::pair<IndexSet, IndexSet>> split;
  int split_distance = 0;  // dist(Pi_J, Pi_Jc) for PI cubes
};

InteractivityVerdict classify_interactivity(const Rectangle& cube, int r0);

struct DisjointnessReport {
  bool preconditions_met = false;
  std::string violated;
  bool disjoint = false;
};

DisjointnessReport fi_projection_disjointness(const Config& u, const Config& v, int L, int r0);

struct SingularCounts {
  int M = 0;
  int M_sep = 0;
  int M_partial = 0;
  int M_full = 0;
  bool exact = true;
  bool lemma_sep_implication = true;  // M >= kappa(n)+2 implies M_sep >= 2
};

inline constexpr std::size_t kExactCountLimit = 12;

/// Maximal counts of singular cubes among `centers` (all of radius L_k):
/// pairwise > 7NL_k apart (M, restricted to PI / FI), and pairwise separable.
SingularCounts count_singular(const std::vector<Config>& centers, const std::vector<bool>& singular,
                              const std::vector<InteractivityVerdict>& interactivity, int L_k, int N);

/// Pair relations of a fixed family of cubes, reusable across energies.
struct CountGeometry {
  std::size_t size = 0;
  int n = 0;
  std::vector<char> pi;        // per cube
  std::vector<char> distant;   // size*size, > 7NL_k apart
  std::vector<char> separable; // size*size
};

CountGeometry count_geometry(const std::vector<Config>& centers,
                             const std::vector<InteractivityVerdict>& interactivity, int L_k, int N);
SingularCounts count_singular(const CountGeometry& g, const std::vector<bool>& singular);

std::int64_t kappa(int n);

struct ScaleLadder {
  int L0 = 0;
  double alpha = 1.5;
  bool relaxed = false;
  std::vector<std::int64_t> levels;

  /// Index k with levels[k] == L, if any.
  std::optional<int> level_of(std::int64_t L) const;
};

/// L_{k+1} = floor(L_k^{3/2}) + 1, computed in exact integer arithmetic.
ScaleLadder scale_ladder(int L0, int K, bool relaxed = false);

struct EdgeProbe {
  int k = 0;
  int m_well = 0;
  int n = 0;
  int d = 0;
  std::int64_t C_km = 0;
  std::vector<Config> centers;
  bool projections_disjoint = false;
  bool centers_spread = false;  // every center has min_{i != j}|x_i - x_j| > r0 + 2km
};

EdgeProbe edge_probe(int N, int n, int d, int r0, int k, int m_well, int num_centers);

struct AnnulusSpec {
  Config u;
  int k = 0;
  int R_u = 0;
  double b_k = 0.0;
  double b_k1 = 0.0;
  double b = 0.0;
  double inner_radius = 0.0;  // b_k L_k
  double outer_radius = 0.0;  // b b_{k+1} L_{k+1}
  int N = 0;
  std::int64_t L_k = 0;
  bool candidates_inside = false;

  bool contains(const Config& x) const;
};

AnnulusSpec annulus(const Config& u, const ScaleLadder& ladder, int k, double b, int N);

void to_json(nlohmann::json& j, const Config& c);
void to_json(nlohmann::json& j, const Rectangle& r);
void to_json(nlohmann::json& j, const SeparabilityVerdict& v);
void to_json(nlohmann::json& j, const InteractivityVerdict& v);
void to_json(nlohmann::json& j, const ScaleLadder& s);
void to_json(nlohmann::json& j, const EdgeProbe& p);
void to_json(nlohmann::json& j, const AnnulusSpec& a);

}  // namespace anderson
