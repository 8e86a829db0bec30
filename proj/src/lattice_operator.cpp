#include "anderson/lattice_operator.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace anderson {

void InteractionSpec::validate() const {
  for (double v : phi)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("interaction table entries must be finite and >= 0");
}

double interaction_energy(const Config& x, const InteractionSpec& spec) {
  if (spec.phi.empty()) return 0.0;
  double u = 0.0;
  for (int i = 0; i < x.n(); ++i)
    for (int j = i + 1; j < x.n(); ++j) {
      int r = 0;
      for (int a = 0; a < x.d(); ++a) r = std::max(r, std::abs(x(i, a) - x(j, a)));
      u += spec.at(r);
    }
  return u;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

std::string to_string(EnsembleKind k) {
  switch (k) {
    case EnsembleKind::uniform01: return "uniform01";
    case EnsembleKind::scaled_uniform: return "scaled_uniform";
    case EnsembleKind::smoothed_log_holder: return "smoothed_log_holder";
    case EnsembleKind::constant: return "constant";
  }
  return "?";
}

EnsembleKind ensemble_kind_from_string(const std::string& s) {
  if (s == "uniform01") return EnsembleKind::uniform01;
  if (s == "scaled_uniform") return EnsembleKind::scaled_uniform;
  if (s == "smoothed_log_holder") return EnsembleKind::smoothed_log_holder;
  if (s == "constant") return EnsembleKind::constant;
  throw std::invalid_argument("unknown ensemble kind '" + s + "'");
}

DisorderEnsemble DisorderEnsemble::uniform01(std::uint64_t seed) {
  DisorderEnsemble e;
  e.seed_root = seed;
  return e;
}

DisorderEnsemble DisorderEnsemble::scaled_uniform(double a, std::uint64_t seed) {
  DisorderEnsemble e;
  e.kind = EnsembleKind::scaled_uniform;
  e.a = a;
  e.seed_root = seed;
  e.validate();
  return e;
}

DisorderEnsemble DisorderEnsemble::smoothed_log_holder(double C, double A, std::uint64_t seed) {
  DisorderEnsemble e;
  e.kind = EnsembleKind::smoothed_log_holder;
  e.C = C;
  e.A = A;
  e.seed_root = seed;
  e.validate();
  return e;
}

DisorderEnsemble DisorderEnsemble::constant(double c) {
  DisorderEnsemble e;
  e.kind = EnsembleKind::constant;
  e.value = c;
  e.validate();
  return e;
}

void DisorderEnsemble::validate() const {
  if (kind == EnsembleKind::scaled_uniform && !(a > 0)) throw std::invalid_argument("scaled_uniform needs a > 0");
  if (kind == EnsembleKind::smoothed_log_holder && (!(C > 0) || !(A > 0)))
    throw std::invalid_argument("smoothed_log_holder needs C > 0 and A > 0");
  if (kind == EnsembleKind::constant && !(value >= 0)) throw std::invalid_argument("constant potential must be >= 0");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double keyed_uniform(std::uint64_t seed, std::uint64_t realization, const Site& site) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ realization);
  for (int c : site) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(c)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double DisorderEnsemble::draw(std::uint64_t realization, const Site& site) const {
  switch (kind) {
    case EnsembleKind::uniform01: return keyed_uniform(seed_root, realization, site);
    case EnsembleKind::scaled_uniform: return a * keyed_uniform(seed_root, realization, site);
    case EnsembleKind::smoothed_log_holder: {
      const double u = keyed_uniform(seed_root, realization, site);
      return u == 0.0 ? 0.0 : std::exp(-std::pow(u, -1.0 / (2.0 * A)));
    }
    case EnsembleKind::constant: return value;
  }
  return 0.0;
}

double PotentialSample::at(const Site& s) const {
  auto it = values.find(s);
  if (it == values.end()) {
    std::string msg = "potential sample has no value at site (";
    for (std::size_t a = 0; a < s.size(); ++a) msg += (a ? "," : "") + std::to_string(s[a]);
    throw std::invalid_argument(msg + ")");
  }
  return it->second;
}

bool PotentialSample::covers(const std::set<Site>& window) const {
  for (const auto& s : window)
    if (!values.count(s)) return false;
  return true;
}

Eigen::MatrixXd OperatorMatrix::dense() const {
  if (dim() > kMaxDenseDim)
    throw std::length_error("dimension " + std::to_string(dim()) + " exceeds the dense limit " +
                            std::to_string(kMaxDenseDim) + "; reduce L or n");
  return Eigen::MatrixXd(h_);
}

void PotentialSample::write_csv(std::ostream& os) const {
  const std::size_t d = values.empty() ? 1 : values.begin()->first.size();
  for (std::size_t a = 0; a < d; ++a) os << "x" << a << ',';
  os << "value\n";
  os << std::setprecision(17);
  for (const auto& [s, v] : values) {
    for (int c : s) os << c << ',';
    os << v << '\n';
  }
}

PotentialSample sample_potential(const DisorderEnsemble& e, std::uint64_t realization, const std::set<Site>& window) {
  PotentialSample p;
  for (const auto& s : window) p.values.emplace_hint(p.values.end(), s, e.draw(realization, s));
  return p;
}

PotentialSample sample_potential(const DisorderEnsemble& e, std::uint64_t realization, const Rectangle& r) {
  return sample_potential(e, realization, full_projection(r));
}

double continuity_modulus(const DisorderEnsemble& e, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("continuity_modulus: eps must be > 0");
  switch (e.kind) {
    case EnsembleKind::uniform01: return std::min(eps, 1.0);
    case EnsembleKind::scaled_uniform: return std::min(eps / e.a, 1.0);
    case EnsembleKind::smoothed_log_holder:
      if (eps >= 1.0) return 1.0;
      return std::min(e.C / std::pow(std::abs(std::log(eps)), 2.0 * e.A), 1.0);
    case EnsembleKind::constant: return 1.0;
  }
  return 1.0;
}

AssumptionPReport assumption_P_check(const DisorderEnsemble& e, const ModelParams& params, int K) {
  AssumptionPReport rep;
  rep.A_required = 1.5 * std::pow(4.0, params.N) * params.p + 9.0 * params.N * params.d;
  switch (e.kind) {
    case EnsembleKind::smoothed_log_holder:
      rep.A_used = e.A;
      rep.C_used = e.C;
      rep.inequality_met = e.A > rep.A_required;
      rep.verdict = rep.inequality_met ? "satisfied" : "A below the required exponent";
      break;
    case EnsembleKind::uniform01:
    case EnsembleKind::scaled_uniform:
      rep.A_used = rep.A_required;
      rep.C_used = 1.0;
      rep.inequality_met = true;
      rep.satisfied_asymptotically = true;
      rep.verdict = "satisfied asymptotically";
      break;
    case EnsembleKind::constant:
      rep.A_used = rep.A_required;
      rep.verdict = "not continuous";
      break;
  }
  const auto ladder = scale_ladder(params.L0, K, true);
  for (auto L : ladder.levels) {
    AssumptionPLevel lv;
    lv.L = L;
    lv.eps = std::exp(-std::pow(static_cast<double>(L), params.beta));
    lv.modulus = continuity_modulus(e, lv.eps);
    const double log_bound = std::log(rep.C_used) - rep.A_used * std::log(static_cast<double>(L));
    lv.bound = std::exp(log_bound);
    lv.holds = std::log(lv.modulus) <= log_bound;
    rep.levels.push_back(lv);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

namespace {

// Potential values of each particle's box, in the box's own row-major order.
std::vector<std::vector<double>> particle_tables(const Rectangle& r, const PotentialSample& pot) {
  std::vector<std::vector<double>> tables;
  for (int i = 0; i < r.n(); ++i) {
    std::vector<double> t;
    for (const auto& s : r.particle_box(i).sites()) t.push_back(pot.at(s));
    tables.push_back(std::move(t));
  }
  return tables;
}

}  // namespace

Eigen::VectorXd assemble_diagonal(const Rectangle& r, const PotentialSample& pot, const InteractionSpec& spec) {
  const int n = r.n(), d = r.d(), nd = n * d;
  const auto tables = particle_tables(r, pot);
  Eigen::VectorXd diag(static_cast<Eigen::Index>(r.cardinality()));
  std::vector<int> offset(static_cast<std::size_t>(nd), 0);
  Config x = r.config_at(0);
  const double base = 2.0 * d * n;
  for (std::size_t k = 0; k < r.cardinality(); ++k) {
    double v = base;
    for (int i = 0; i < n; ++i) {
      std::size_t local = 0;
      for (int a = 0; a < d; ++a) local = local * static_cast<std::size_t>(r.side(i)) + static_cast<std::size_t>(offset[static_cast<std::size_t>(i * d + a)]);
      v += tables[static_cast<std::size_t>(i)][local];
    }
    v += interaction_energy(x, spec);
    diag[static_cast<Eigen::Index>(k)] = v;
    for (int c = nd - 1; c >= 0; --c) {
      auto& o = offset[static_cast<std::size_t>(c)];
      const int i = c / d, a = c % d;
      if (++o < r.side(i)) {
        ++x(i, a);
        break;
      }
      o = 0;
      x(i, a) = r.lo(i, a);
    }
  }
  return diag;
}

OperatorMatrix assemble(const Rectangle& r, const PotentialSample& pot, const InteractionSpec& spec) {
  const int n = r.n(), d = r.d(), nd = n * d;
  const auto dim = static_cast<Eigen::Index>(r.cardinality());
  const Eigen::VectorXd diag = assemble_diagonal(r, pot, spec);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(dim) * static_cast<std::size_t>(2 * nd + 1));
  std::vector<int> offset(static_cast<std::size_t>(nd), 0);
  for (Eigen::Index k = 0; k < dim; ++k) {
    trip.emplace_back(k, k, diag[k]);
    for (int c = 0; c < nd; ++c) {
      const auto s = static_cast<Eigen::Index>(r.stride(c));
      const int o = offset[static_cast<std::size_t>(c)];
      if (o > 0) trip.emplace_back(k, k - s, -1.0);
      if (o + 1 < r.side(c / d)) trip.emplace_back(k, k + s, -1.0);
    }
    for (int c = nd - 1; c >= 0; --c) {
      auto& o = offset[static_cast<std::size_t>(c)];
      if (++o < r.side(c / d)) break;
      o = 0;
    }
  }
  Eigen::SparseMatrix<double> h(dim, dim);
  h.setFromTriplets(trip.begin(), trip.end());
  h.makeCompressed();
  return OperatorMatrix(r, std::move(h));
}

TensorSplit tensor_split(const Rectangle& r, const PotentialSample& pot, const InteractionSpec& spec,
                         const std::optional<std::pair<IndexSet, IndexSet>>& split) {
  std::pair<IndexSet, IndexSet> parts;
  if (split) {
    parts = *split;
  } else {
    const auto v = classify_interactivity(r, spec.r0());
    if (v.kind != Interactivity::PI) throw std::invalid_argument("tensor_split: cube is fully interactive");
    parts = *v.split;
  }
  auto& [J, Jc] = parts;
  if (J.empty() || Jc.empty() || static_cast<int>(J.size() + Jc.size()) != r.n())
    throw std::invalid_argument("tensor_split: split is not a partition into two nonempty parts");
  std::vector<bool> seen(static_cast<std::size_t>(r.n()), false);
  for (int i : J) seen.at(static_cast<std::size_t>(i)) = true;
  for (int i : Jc) {
    if (seen.at(static_cast<std::size_t>(i))) throw std::invalid_argument("tensor_split: parts overlap");
    seen[static_cast<std::size_t>(i)] = true;
  }
  if (!spec.phi.empty())
    for (int j : J)
      for (int k : Jc)
        if (box_distance(r.particle_box(j), r.particle_box(k)) <= spec.r0())
          throw std::invalid_argument("tensor_split: factors interact (projection distance <= r0)");
  TensorSplit t;
  t.J = J;
  t.Jc = Jc;
  t.left = assemble(r.restrict_to(J), pot, spec);
  t.right = assemble(r.restrict_to(Jc), pot, spec);
  return t;
}

SparseState apply_ambient(const SparseState& v, const PotentialSample& pot, const InteractionSpec& spec) {
  SparseState out;
  for (const auto& [x, val] : v) {
    double diag = 2.0 * x.d() * x.n() + interaction_energy(x, spec);
    for (int i = 0; i < x.n(); ++i) diag += pot.at(x.particle(i));
    out[x] += diag * val;
    Config y = x;
    for (std::size_t c = 0; c < y.size(); ++c) {
      y.flat()[c] -= 1;
      out[y] -= val;
      y.flat()[c] += 2;
      out[y] -= val;
      y.flat()[c] -= 1;
    }
  }
  return out;
}

double norm(const SparseState& v) {
  double s = 0.0;
  for (const auto& [x, val] : v) s += val * val;
  return std::sqrt(s);
}

}  // namespace anderson
