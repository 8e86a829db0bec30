#include "anderson/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>

namespace anderson {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

Config::Config(int n, int d) : n_(n), d_(d), coords_(static_cast<std::size_t>(n * d), 0) {
  if (n < 0 || d < 1) throw ShapeError("Config: need n >= 0 and d >= 1");
}

Config::Config(int n, int d, std::vector<int> flat) : n_(n), d_(d), coords_(std::move(flat)) {
  if (n < 0 || d < 1) throw ShapeError("Config: need n >= 0 and d >= 1");
  if (coords_.size() != static_cast<std::size_t>(n * d))
    throw ShapeError("Config: expected " + std::to_string(n * d) + " coordinates, got " +
                     std::to_string(coords_.size()));
}

Config Config::from_particles(const std::vector<Site>& particles) {
  if (particles.empty()) throw ShapeError("Config: no particles");
  const int d = static_cast<int>(particles.front().size());
  std::vector<int> flat;
  flat.reserve(particles.size() * static_cast<std::size_t>(d));
  for (const auto& p : particles) {
    if (static_cast<int>(p.size()) != d) throw ShapeError("Config: particles of different dimension");
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return Config(static_cast<int>(particles.size()), d, std::move(flat));
}

Site Config::particle(int i) const {
  auto first = coords_.begin() + i * d_;
  return Site(first, first + d_);
}

void Config::set_particle(int i, const Site& s) {
  if (static_cast<int>(s.size()) != d_) throw ShapeError("Config::set_particle: dimension mismatch");
  std::copy(s.begin(), s.end(), coords_.begin() + i * d_);
}

Config Config::restrict_to(const IndexSet& subset) const {
  std::vector<int> flat;
  flat.reserve(subset.size() * static_cast<std::size_t>(d_));
  for (int i : subset) {
    if (i < 0 || i >= n_) throw ShapeError("Config::restrict_to: particle index out of range");
    for (int a = 0; a < d_; ++a) flat.push_back((*this)(i, a));
  }
  return Config(static_cast<int>(subset.size()), d_, std::move(flat));
}

std::string Config::to_string() const {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < n_; ++i) {
    if (i) os << ", ";
    if (d_ > 1) os << '(';
    for (int a = 0; a < d_; ++a) {
      if (a) os << ',';
      os << (*this)(i, a);
    }
    if (d_ > 1) os << ')';
  }
  os << ')';
  return os.str();
}

namespace {

void check_same_shape(const Config& x, const Config& y) {
  if (x.n() != y.n() || x.d() != y.d())
    throw ShapeError("configurations of different shape: " + x.to_string() + " vs " + y.to_string());
}

}  // namespace

int max_norm(const Config& x, const Config& y) {
  check_same_shape(x, y);
  int best = 0;
  auto a = x.flat();
  auto b = y.flat();
  for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a[i] - b[i]));
  return best;
}

int l1_norm(const Config& x, const Config& y) {
  check_same_shape(x, y);
  int sum = 0;
  auto a = x.flat();
  auto b = y.flat();
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum;
}

int max_norm(const Site& x, const Site& y) {
  if (x.size() != y.size()) throw ShapeError("sites of different dimension");
  int best = 0;
  for (std::size_t i = 0; i < x.size(); ++i) best = std::max(best, std::abs(x[i] - y[i]));
  return best;
}

namespace {

int particle_distance(const Config& x, int i, int j) {
  int best = 0;
  for (int a = 0; a < x.d(); ++a) best = std::max(best, std::abs(x(i, a) - x(j, a)));
  return best;
}

int cross_distance(const Config& x, int i, const Config& y, int j) {
  int best = 0;
  for (int a = 0; a < x.d(); ++a) best = std::max(best, std::abs(x(i, a) - y(j, a)));
  return best;
}

}  // namespace

int particle_diameter(const Config& x) {
  int best = 0;
  for (int i = 0; i < x.n(); ++i)
    for (int j = i + 1; j < x.n(); ++j) best = std::max(best, particle_distance(x, i, j));
  return best;
}

// ---------------------------------------------------------------------------
// SiteBox
// ---------------------------------------------------------------------------

bool SiteBox::contains(const Site& s) const {
  if (s.size() != center.size()) throw ShapeError("SiteBox::contains: dimension mismatch");
  for (std::size_t a = 0; a < s.size(); ++a)
    if (std::abs(s[a] - center[a]) > radius) return false;
  return true;
}

std::size_t SiteBox::cardinality() const {
  std::size_t card = 1;
  for (std::size_t a = 0; a < center.size(); ++a) card *= static_cast<std::size_t>(2 * radius + 1);
  return card;
}

std::vector<Site> SiteBox::sites() const {
  std::vector<Site> out;
  out.reserve(cardinality());
  Site s(center.size());
  for (std::size_t a = 0; a < s.size(); ++a) s[a] = center[a] - radius;
  while (true) {
    out.push_back(s);
    std::size_t a = s.size();
    for (; a > 0; --a) {
      if (s[a - 1] < center[a - 1] + radius) {
        ++s[a - 1];
        break;
      }
      s[a - 1] = center[a - 1] - radius;
    }
    if (a == 0) return out;
  }
}

bool boxes_intersect(const SiteBox& a, const SiteBox& b) {
  return max_norm(a.center, b.center) <= a.radius + b.radius;
}

int box_distance(const SiteBox& a, const SiteBox& b) {
  return std::max(0, max_norm(a.center, b.center) - a.radius - b.radius);
}

// ---------------------------------------------------------------------------
// Rectangle
// ---------------------------------------------------------------------------

Rectangle::Rectangle(Config center, std::vector<int> radii) : center_(std::move(center)), radii_(std::move(radii)) {
  if (static_cast<int>(radii_.size()) != center_.n())
    throw ShapeError("Rectangle: need one radius per particle");
  for (int r : radii_)
    if (r < 0) throw ShapeError("Rectangle: negative radius");
  const int nd = center_.n() * center_.d();
  strides_.assign(static_cast<std::size_t>(nd), 1);
  card_ = 1;
  for (int c = nd - 1; c >= 0; --c) {
    strides_[static_cast<std::size_t>(c)] = card_;
    card_ *= static_cast<std::size_t>(side(c / center_.d()));
  }
}

Rectangle Rectangle::cube(Config center, int radius) {
  const int n = center.n();
  return Rectangle(std::move(center), std::vector<int>(static_cast<std::size_t>(n), radius));
}

bool Rectangle::is_cube() const {
  return std::adjacent_find(radii_.begin(), radii_.end(), std::not_equal_to<>()) == radii_.end();
}

int Rectangle::min_radius() const { return *std::min_element(radii_.begin(), radii_.end()); }
int Rectangle::max_radius() const { return *std::max_element(radii_.begin(), radii_.end()); }

int Rectangle::radius() const {
  if (!is_cube()) throw ShapeError("Rectangle::radius: not a cube");
  return radii_.front();
}

bool Rectangle::contains(const Config& x) const {
  check_same_shape(center_, x);
  for (int i = 0; i < n(); ++i)
    for (int a = 0; a < d(); ++a)
      if (std::abs(x(i, a) - center_(i, a)) > radii_[static_cast<std::size_t>(i)]) return false;
  return true;
}

std::size_t Rectangle::index_of(const Config& x) const {
  if (!contains(x)) throw ShapeError("Rectangle::index_of: " + x.to_string() + " outside rectangle");
  std::size_t idx = 0;
  for (int i = 0; i < n(); ++i)
    for (int a = 0; a < d(); ++a) {
      const int c = i * d() + a;
      idx += static_cast<std::size_t>(x(i, a) - lo(i, a)) * strides_[static_cast<std::size_t>(c)];
    }
  return idx;
}

Config Rectangle::config_at(std::size_t index) const {
  if (index >= card_) throw ShapeError("Rectangle::config_at: index out of range");
  Config x(n(), d());
  for (int i = 0; i < n(); ++i)
    for (int a = 0; a < d(); ++a) {
      const auto s = strides_[static_cast<std::size_t>(i * d() + a)];
      x(i, a) = lo(i, a) + static_cast<int>(index / s);
      index %= s;
    }
  return x;
}

SiteBox Rectangle::particle_box(int i) const { return SiteBox{center_.particle(i), radii_[static_cast<std::size_t>(i)]}; }

Rectangle Rectangle::restrict_to(const IndexSet& subset) const {
  std::vector<int> radii;
  for (int i : subset) radii.push_back(radii_.at(static_cast<std::size_t>(i)));
  return Rectangle(center_.restrict_to(subset), std::move(radii));
}

bool Rectangle::contains_rectangle(const Rectangle& inner) const {
  check_same_shape(center_, inner.center());
  for (int i = 0; i < n(); ++i)
    for (int a = 0; a < d(); ++a)
      if (inner.lo(i, a) < lo(i, a) || inner.hi(i, a) > hi(i, a)) return false;
  return true;
}

std::vector<Config> Rectangle::configs() const {
  std::vector<Config> out;
  out.reserve(card_);
  for (std::size_t k = 0; k < card_; ++k) out.push_back(config_at(k));
  return out;
}

// ---------------------------------------------------------------------------
// Boundaries and projections
// ---------------------------------------------------------------------------

Boundaries boundaries(const Rectangle& r) {
  Boundaries b;
  std::set<Config> inner, outer;
  for (std::size_t k = 0; k < r.cardinality(); ++k) {
    const Config x = r.config_at(k);
    for (std::size_t c = 0; c < x.size(); ++c)
      for (int step : {-1, 1}) {
        Config y = x;
        y.flat()[c] += step;
        if (!r.contains(y)) {
          b.pairs.emplace_back(x, y);
          inner.insert(x);
          outer.insert(y);
        }
      }
  }
  std::sort(b.pairs.begin(), b.pairs.end());
  b.inner.assign(inner.begin(), inner.end());
  b.outer.assign(outer.begin(), outer.end());
  return b;
}

std::vector<std::size_t> inner_boundary_indices(const Rectangle& r) {
  std::vector<std::size_t> out;
  const int nd = r.n() * r.d();
  std::vector<int> offset(static_cast<std::size_t>(nd), 0);  // coordinate minus its lower end
  for (std::size_t k = 0; k < r.cardinality(); ++k) {
    bool on_face = false;
    for (int c = 0; c < nd && !on_face; ++c) {
      const int o = offset[static_cast<std::size_t>(c)];
      if (o == 0 || o == r.side(c / r.d()) - 1) on_face = true;
    }
    if (on_face) out.push_back(k);
    for (int c = nd - 1; c >= 0; --c) {
      auto& o = offset[static_cast<std::size_t>(c)];
      if (++o < r.side(c / r.d())) break;
      o = 0;
    }
  }
  return out;
}

std::set<Site> projection(const Rectangle& r, const IndexSet& J) {
  if (J.empty()) throw std::invalid_argument("projection: empty index subset");
  std::set<Site> out;
  for (int j : J) {
    if (j < 0 || j >= r.n()) throw std::invalid_argument("projection: particle index out of range");
    for (auto& s : r.particle_box(j).sites()) out.insert(std::move(s));
  }
  return out;
}

std::set<Site> full_projection(const Rectangle& r) {
  IndexSet all(static_cast<std::size_t>(r.n()));
  std::iota(all.begin(), all.end(), 0);
  return projection(r, all);
}

// ---------------------------------------------------------------------------
// Separability
// ---------------------------------------------------------------------------

namespace {

void lex_subsets(int n, int start, IndexSet& cur, std::vector<IndexSet>& out) {
  for (int i = start; i < n; ++i) {
    cur.push_back(i);
    out.push_back(cur);
    lex_subsets(n, i + 1, cur, out);
    cur.pop_back();
  }
}

unsigned mask_of(const IndexSet& J) {
  unsigned m = 0;
  for (int j : J) m |= 1u << j;
  return m;
}

// Pairwise intersection pattern of the one-particle cubes of two rectangles.
struct OverlapTable {
  int n = 0;
  std::vector<unsigned> self;   // self[i]: particles k of a whose cube meets cube i of a
  std::vector<unsigned> cross;  // cross[i]: particles j of b whose cube meets cube i of a
};

OverlapTable overlaps(const Rectangle& a, const Rectangle& b) {
  OverlapTable t;
  t.n = a.n();
  t.self.assign(static_cast<std::size_t>(t.n), 0);
  t.cross.assign(static_cast<std::size_t>(t.n), 0);
  for (int i = 0; i < t.n; ++i) {
    const int ri = a.radii()[static_cast<std::size_t>(i)];
    for (int k = 0; k < t.n; ++k)
      if (cross_distance(a.center(), i, a.center(), k) <= ri + a.radii()[static_cast<std::size_t>(k)])
        t.self[static_cast<std::size_t>(i)] |= 1u << k;
    for (int j = 0; j < b.n(); ++j)
      if (cross_distance(a.center(), i, b.center(), j) <= ri + b.radii()[static_cast<std::size_t>(j)])
        t.cross[static_cast<std::size_t>(i)] |= 1u << j;
  }
  return t;
}

bool pre_separable_mask(const OverlapTable& t, unsigned J) {
  const unsigned complement = ~J & ((1u << t.n) - 1u);
  for (int i = 0; i < t.n; ++i) {
    if (!(J & (1u << i))) continue;
    if (t.cross[static_cast<std::size_t>(i)] != 0) return false;
    if (t.self[static_cast<std::size_t>(i)] & complement) return false;
  }
  return true;
}

const std::vector<IndexSet>& cached_subsets(int n) {
  static thread_local std::vector<std::vector<IndexSet>> cache;
  if (static_cast<int>(cache.size()) <= n) cache.resize(static_cast<std::size_t>(n) + 1);
  auto& slot = cache[static_cast<std::size_t>(n)];
  if (slot.empty()) slot = nonempty_subsets(n);
  return slot;
}

}  // namespace

std::vector<IndexSet> nonempty_subsets(int n) {
  std::vector<IndexSet> out;
  IndexSet cur;
  lex_subsets(n, 0, cur, out);
  return out;
}

bool is_pre_separable_from(const Rectangle& a, const Rectangle& b, const IndexSet& J) {
  check_same_shape(a.center(), b.center());
  if (J.empty()) return false;
  return pre_separable_mask(overlaps(a, b), mask_of(J));
}

SeparabilityVerdict is_separable(const Rectangle& a, const Rectangle& b, int N) {
  check_same_shape(a.center(), b.center());
  if (a.n() > 30) throw ShapeError("is_separable: too many particles");
  SeparabilityVerdict v;
  v.distance = max_norm(a.center(), b.center());
  v.threshold = 7 * N * std::max(a.max_radius(), b.max_radius());
  const auto& subsets = cached_subsets(a.n());
  const OverlapTable ab = overlaps(a, b);
  for (const auto& J : subsets)
    if (pre_separable_mask(ab, mask_of(J))) {
      v.witness_subset = J;
      v.witness_from_first = true;
      break;
    }
  if (!v.witness_subset) {
    const OverlapTable ba = overlaps(b, a);
    for (const auto& J : subsets)
      if (pre_separable_mask(ba, mask_of(J))) {
        v.witness_subset = J;
        v.witness_from_first = false;
        break;
      }
  }
  v.pre_separable = v.witness_subset.has_value();
  v.separable = v.pre_separable && v.distance > v.threshold;
  return v;
}

// ---------------------------------------------------------------------------
// Candidate centers and the brute-force verifier
// ---------------------------------------------------------------------------

bool CandidateFamily::covers(const Config& y) const {
  for (const auto& c : centers)
    if (max_norm(c, y) <= radius) return true;
  return false;
}

CandidateFamily candidate_centers(const Config& x, int L) {
  const int n = x.n();
  if (n < 1) throw ShapeError("candidate_centers: need at least one particle");
  CandidateFamily fam;
  fam.radius = 2 * n * L;
  std::vector<int> choice(static_cast<std::size_t>(n), 0);
  while (true) {
    Config c(n, x.d());
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < x.d(); ++a) c(i, a) = x(choice[static_cast<std::size_t>(i)], a);
    fam.centers.push_back(std::move(c));
    int pos = n - 1;
    while (pos >= 0 && ++choice[static_cast<std::size_t>(pos)] == n) choice[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  return fam;
}

CandidateVerification verify_candidate_centers(const Config& x, int L, int N, int half_width) {
  CandidateVerification out;
  const CandidateFamily fam = candidate_centers(x, L);
  const int n = x.n();
  const int d = x.d();
  const int nd = n * d;
  const int far = 7 * N * L;
  const unsigned full = (1u << n) - 1u;
  std::vector<unsigned> masks;
  for (const auto& J : nonempty_subsets(n)) masks.push_back(mask_of(J));

  // Cube self-overlaps of x do not depend on y.
  std::vector<unsigned> x_self(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      if (particle_distance(x, i, k) <= 2 * L) x_self[static_cast<std::size_t>(i)] |= 1u << k;

  Config y = x;
  for (int c = 0; c < nd; ++c) y.flat()[static_cast<std::size_t>(c)] -= half_width;
  std::vector<unsigned> y_self(static_cast<std::size_t>(n)), xy(static_cast<std::size_t>(n)),
      yx(static_cast<std::size_t>(n));

  while (true) {
    ++out.points_scanned;
    if (max_norm(x, y) > far && !fam.covers(y)) {
      ++out.points_checked;
      for (int i = 0; i < n; ++i) {
        y_self[static_cast<std::size_t>(i)] = 0;
        xy[static_cast<std::size_t>(i)] = 0;
        yx[static_cast<std::size_t>(i)] = 0;
      }
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
          if (particle_distance(y, i, k) <= 2 * L) y_self[static_cast<std::size_t>(i)] |= 1u << k;
          if (cross_distance(x, i, y, k) <= 2 * L) {
            xy[static_cast<std::size_t>(i)] |= 1u << k;
            yx[static_cast<std::size_t>(k)] |= 1u << i;
          }
        }
      auto pre_sep = [&](const std::vector<unsigned>& self, const std::vector<unsigned>& cross) {
        for (unsigned J : masks) {
          const unsigned comp = ~J & full;
          bool ok = true;
          for (int i = 0; i < n && ok; ++i)
            if ((J >> i) & 1u)
              ok = cross[static_cast<std::size_t>(i)] == 0 && (self[static_cast<std::size_t>(i)] & comp) == 0;
          if (ok) return true;
        }
        return false;
      };
      if (!pre_sep(x_self, xy) && !pre_sep(y_self, yx)) {
        ++out.counterexamples;
        if (!out.first_counterexample) out.first_counterexample = y;
      }
    }
    int c = nd - 1;
    for (; c >= 0; --c) {
      auto& v = y.flat()[static_cast<std::size_t>(c)];
      if (v < x.flat()[static_cast<std::size_t>(c)] + half_width) {
        ++v;
        break;
      }
      v = x.flat()[static_cast<std::size_t>(c)] - half_width;
    }
    if (c < 0) break;
  }
  return out;
}

bool separable_from_B(const Config& x, const Config& y, int L, int N) {
  return max_norm(x, y) > particle_diameter(y) + 3 * N * L;
}

// ---------------------------------------------------------------------------
// Interactivity
// ---------------------------------------------------------------------------

InteractivityVerdict classify_interactivity(const Rectangle& cube, int r0) {
  const int L = cube.radius();
  const Config& u = cube.center();
  const int n = u.n();
  InteractivityVerdict v;
  v.diameter = particle_diameter(u);
  if (v.diameter <= n * (2 * L + r0)) {
    v.kind = Interactivity::FI;
    return v;
  }
  v.kind = Interactivity::PI;

  // Single-linkage clustering of the particle centers at threshold 2L + r0.
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    return i;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (particle_distance(u, i, j) <= 2 * L + r0) parent[static_cast<std::size_t>(find(i))] = find(j);

  IndexSet J, Jc;
  const int root = find(0);
  for (int i = 0; i < n; ++i) (find(i) == root ? J : Jc).push_back(i);
  if (Jc.empty()) throw std::logic_error("classify_interactivity: PI cube with a single cluster");

  int dist = std::numeric_limits<int>::max();
  for (int j : J)
    for (int k : Jc) dist = std::min(dist, box_distance(cube.particle_box(j), cube.particle_box(k)));
  v.split = std::make_pair(std::move(J), std::move(Jc));
  v.split_distance = dist;
  return v;
}

DisjointnessReport fi_projection_disjointness(const Config& u, const Config& v, int L, int r0) {
  DisjointnessReport rep;
  const auto cu = Rectangle::cube(u, L);
  const auto cv = Rectangle::cube(v, L);
  if (classify_interactivity(cu, r0).kind != Interactivity::FI)
    rep.violated = "first cube is not FI";
  else if (classify_interactivity(cv, r0).kind != Interactivity::FI)
    rep.violated = "second cube is not FI";
  else if (max_norm(u, v) <= 7 * u.n() * L)
    rep.violated = "|u - v| <= 7nL";
  else if (L <= 2 * r0)
    rep.violated = "L <= 2 r0";
  rep.preconditions_met = rep.violated.empty();

  const auto pu = full_projection(cu);
  const auto pv = full_projection(cv);
  rep.disjoint = std::none_of(pu.begin(), pu.end(), [&](const Site& s) { return pv.count(s) > 0; });
  return rep;
}

// ---------------------------------------------------------------------------
// Counting singular cubes
// ---------------------------------------------------------------------------

namespace {

// Largest subset of `items` that is pairwise compatible.
template <class Compatible>
int max_compatible(const std::vector<int>& items, Compatible&& ok, bool& exact) {
  const std::size_t s = items.size();
  if (s == 0) return 0;
  if (s <= kExactCountLimit) {
    std::vector<unsigned> adj(s, 0);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = i + 1; j < s; ++j)
        if (ok(items[i], items[j])) {
          adj[i] |= 1u << j;
          adj[j] |= 1u << i;
        }
    int best = 0;
    for (unsigned m = 1; m < (1u << s); ++m) {
      const int pc = std::popcount(m);
      if (pc <= best) continue;
      bool clique = true;
      for (std::size_t i = 0; i < s && clique; ++i)
        if ((m >> i) & 1u) clique = (m & ~adj[i] & ~(1u << i)) == 0;
      if (clique) best = pc;
    }
    return best;
  }
  exact = false;
  std::vector<int> chosen;
  for (int it : items)
    if (std::all_of(chosen.begin(), chosen.end(), [&](int c) { return ok(c, it); })) chosen.push_back(it);
  return static_cast<int>(chosen.size());
}

}  // namespace

CountGeometry count_geometry(const std::vector<Config>& centers,
                             const std::vector<InteractivityVerdict>& interactivity, int L_k, int N) {
  if (centers.size() != interactivity.size())
    throw std::invalid_argument("count_singular: lists of different length");
  CountGeometry g;
  g.size = centers.size();
  g.n = centers.empty() ? 0 : centers.front().n();
  g.pi.resize(g.size);
  g.distant.assign(g.size * g.size, 0);
  g.separable.assign(g.size * g.size, 0);
  const int far = 7 * N * L_k;
  for (std::size_t i = 0; i < g.size; ++i) {
    g.pi[i] = interactivity[i].kind == Interactivity::PI;
    const auto ci = Rectangle::cube(centers[i], L_k);
    for (std::size_t j = i + 1; j < g.size; ++j) {
      const char dist = max_norm(centers[i], centers[j]) > far;
      const char sep = is_separable(ci, Rectangle::cube(centers[j], L_k), N).separable;
      g.distant[i * g.size + j] = g.distant[j * g.size + i] = dist;
      g.separable[i * g.size + j] = g.separable[j * g.size + i] = sep;
    }
  }
  return g;
}

SingularCounts count_singular(const CountGeometry& g, const std::vector<bool>& singular) {
  if (singular.size() != g.size) throw std::invalid_argument("count_singular: lists of different length");
  SingularCounts out;
  std::vector<int> all, pi, fi;
  for (std::size_t i = 0; i < g.size; ++i) {
    if (!singular[i]) continue;
    all.push_back(static_cast<int>(i));
    (g.pi[i] ? pi : fi).push_back(static_cast<int>(i));
  }
  auto distant = [&](int a, int b) { return g.distant[static_cast<std::size_t>(a) * g.size + b] != 0; };
  auto separable = [&](int a, int b) { return g.separable[static_cast<std::size_t>(a) * g.size + b] != 0; };
  out.M = max_compatible(all, distant, out.exact);
  out.M_partial = max_compatible(pi, distant, out.exact);
  out.M_full = max_compatible(fi, distant, out.exact);
  out.M_sep = max_compatible(all, separable, out.exact);

  // Whether a separable pair exists is decided exactly regardless of size.
  bool has_pair = false;
  for (std::size_t i = 0; i < all.size() && !has_pair; ++i)
    for (std::size_t j = i + 1; j < all.size() && !has_pair; ++j) has_pair = separable(all[i], all[j]);
  if (has_pair) out.M_sep = std::max(out.M_sep, 2);
  if (g.size > 0 && out.M >= kappa(g.n) + 2) out.lemma_sep_implication = has_pair;
  return out;
}

SingularCounts count_singular(const std::vector<Config>& centers, const std::vector<bool>& singular,
                              const std::vector<InteractivityVerdict>& interactivity, int L_k, int N) {
  if (centers.size() != singular.size() || centers.size() != interactivity.size())
    throw std::invalid_argument("count_singular: lists of different length");
  return count_singular(count_geometry(centers, interactivity, L_k, N), singular);
}

std::int64_t kappa(int n) {
  std::int64_t k = 1;
  for (int i = 0; i < n; ++i) k *= n;
  return k;
}

// ---------------------------------------------------------------------------
// Scale ladder
// ---------------------------------------------------------------------------

namespace {

using u128 = unsigned __int128;

u128 isqrt128(u128 v) {
  u128 r = static_cast<u128>(std::sqrt(static_cast<long double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

}  // namespace

std::optional<int> ScaleLadder::level_of(std::int64_t L) const {
  for (std::size_t k = 0; k < levels.size(); ++k)
    if (levels[k] == L) return static_cast<int>(k);
  return std::nullopt;
}

ScaleLadder scale_ladder(int L0, int K, bool relaxed) {
  if (K < 0) throw std::invalid_argument("scale_ladder: K must be >= 0");
  if (relaxed ? L0 < 2 : L0 <= 3)
    throw std::invalid_argument(relaxed ? "scale_ladder: relaxed mode needs L0 >= 2"
                                        : "scale_ladder: need L0 > 3 (use relaxed mode for smaller L0)");
  ScaleLadder s;
  s.L0 = L0;
  s.relaxed = relaxed;
  s.levels.push_back(L0);
  for (int k = 0; k < K; ++k) {
    const auto L = static_cast<u128>(s.levels.back());
    if (L > (static_cast<u128>(1) << 40)) throw std::overflow_error("scale_ladder: level overflows 64 bits");
    const u128 next = isqrt128(L * L * L) + 1;
    if (next > static_cast<u128>(std::numeric_limits<std::int64_t>::max()))
      throw std::overflow_error("scale_ladder: level overflows 64 bits");
    s.levels.push_back(static_cast<std::int64_t>(next));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Spectral-edge probes and annuli
// ---------------------------------------------------------------------------

EdgeProbe edge_probe(int N, int n, int d, int r0, int k, int m_well, int num_centers) {
  if (N < 1 || n < 1 || n > N || d < 1 || r0 < 0 || k < 1 || m_well < 1 || num_centers < 1)
    throw std::invalid_argument("edge_probe: arguments must be positive with n <= N");
  EdgeProbe p;
  p.k = k;
  p.m_well = m_well;
  p.n = n;
  p.d = d;
  p.C_km = static_cast<std::int64_t>(r0) + 2LL * k * m_well + static_cast<std::int64_t>(N) * d + 1;
  const std::int64_t C = p.C_km;
  for (int ell = 1; ell <= num_centers; ++ell) {
    std::vector<int> flat;
    for (int c = 0; c < n * d; ++c) {
      const std::int64_t v = C * (C * ell + c + 1);
      if (v > std::numeric_limits<int>::max()) throw std::overflow_error("edge_probe: coordinate overflow");
      flat.push_back(static_cast<int>(v));
    }
    p.centers.emplace_back(n, d, std::move(flat));
  }
  const int km = k * m_well;
  p.projections_disjoint = true;
  for (std::size_t a = 0; a < p.centers.size(); ++a)
    for (std::size_t b = a + 1; b < p.centers.size(); ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (cross_distance(p.centers[a], i, p.centers[b], j) <= 2 * km) p.projections_disjoint = false;
  p.centers_spread = true;
  for (const auto& x : p.centers)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (particle_distance(x, i, j) <= r0 + 2 * km) p.centers_spread = false;
  return p;
}

bool AnnulusSpec::contains(const Config& x) const {
  const double r = max_norm(x, u);
  return r > inner_radius && r <= outer_radius;
}

AnnulusSpec annulus(const Config& u, const ScaleLadder& ladder, int k, double b, int N) {
  if (k < 0 || static_cast<std::size_t>(k + 1) >= ladder.levels.size())
    throw std::invalid_argument("annulus: ladder has no level k+1");
  if (b <= 1.0) throw std::invalid_argument("annulus: need b > 1");
  AnnulusSpec a;
  a.u = u;
  a.k = k;
  a.b = b;
  a.N = N;
  a.L_k = ladder.levels[static_cast<std::size_t>(k)];
  const auto L_k1 = ladder.levels[static_cast<std::size_t>(k + 1)];
  const auto fam = candidate_centers(u, static_cast<int>(a.L_k));
  for (const auto& c : fam.centers) a.R_u = std::max(a.R_u, max_norm(u, c));
  a.b_k = 7.0 * N + static_cast<double>(a.R_u) / static_cast<double>(a.L_k);
  a.b_k1 = 7.0 * N + static_cast<double>(a.R_u) / static_cast<double>(L_k1);
  a.inner_radius = 7.0 * N * static_cast<double>(a.L_k) + a.R_u;
  a.outer_radius = b * (7.0 * N * static_cast<double>(L_k1) + a.R_u);
  // The farthest point of C_{7NL_k}(c) from u sits at |c - u| + 7NL_k.
  a.candidates_inside = std::all_of(fam.centers.begin(), fam.centers.end(), [&](const Config& c) {
    return max_norm(u, c) + 7.0 * N * static_cast<double>(a.L_k) <= a.inner_radius;
  });
  return a;
}

// ---------------------------------------------------------------------------
// JSON dumps
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const Config& c) {
  nlohmann::json coords = nlohmann::json::array();
  for (int i = 0; i < c.n(); ++i) coords.push_back(c.particle(i));
  j = nlohmann::json{{"coords", coords}, {"n", c.n()}, {"d", c.d()}};
}

void to_json(nlohmann::json& j, const Rectangle& r) { j = nlohmann::json{{"center", r.center()}, {"radii", r.radii()}}; }

void to_json(nlohmann::json& j, const SeparabilityVerdict& v) {
  j = nlohmann::json{{"separable", v.separable}, {"pre_separable", v.pre_separable}, {"distance", v.distance},
                     {"threshold", v.threshold}};
  j["witness_subset"] = v.witness_subset ? nlohmann::json(*v.witness_subset) : nlohmann::json(nullptr);
  j["witness_from_first"] = v.witness_from_first;
}

void to_json(nlohmann::json& j, const InteractivityVerdict& v) {
  j = nlohmann::json{{"kind", v.kind == Interactivity::FI ? "FI" : "PI"}, {"diameter", v.diameter}};
  if (v.split) {
    j["split"] = nlohmann::json::array({v.split->first, v.split->second});
    j["split_distance"] = v.split_distance;
  } else {
    j["split"] = nullptr;
  }
}

void to_json(nlohmann::json& j, const ScaleLadder& s) {
  j = nlohmann::json{{"L0", s.L0}, {"alpha", s.alpha}, {"levels", s.levels}, {"relaxed", s.relaxed}};
}

void to_json(nlohmann::json& j, const EdgeProbe& p) {
  j = nlohmann::json{{"k", p.k},          {"m_well", p.m_well},
                     {"C_km", p.C_km},    {"centers", p.centers},
                     {"projections_disjoint", p.projections_disjoint}};
}

void to_json(nlohmann::json& j, const AnnulusSpec& a) {
  j = nlohmann::json{{"u", a.u},   {"k", a.k},
                     {"R_u", a.R_u}, {"b_k", a.b_k},
                     {"b", a.b},   {"inner_radius", a.inner_radius},
                     {"outer_radius", a.outer_radius}};
}

}  // namespace anderson
