#include "anderson/solver.hpp"

#include <lapacke.h>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

extern "C" void openblas_set_num_threads(int);

namespace anderson {

namespace {

// Trial-level parallelism owns the cores; BLAS stays sequential.
const bool kBlasSequential = [] {
  openblas_set_num_threads(1);
  return true;
}();

constexpr double kResonantEta = 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// Eigensolvers
// ---------------------------------------------------------------------------

SpectralData eig_dense(const Eigen::MatrixXd& h, bool want_vectors) {
  (void)kBlasSequential;
  const auto n = static_cast<lapack_int>(h.rows());
  if (n < 1) throw std::invalid_argument("eig: empty matrix");
  Eigen::MatrixXd a = h;
  Eigen::VectorXd w(n);
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', 'U', n, a.data(), n, w.data());
  if (info != 0) throw ConvergenceError("dsyevd failed with info " + std::to_string(info), NAN);
  SpectralData s;
  s.eigenvalues = std::move(w);
  const double scale = std::max(1.0, h.cwiseAbs().rowwise().sum().maxCoeff());
  s.residual_bound = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;
  if (want_vectors) s.eigenvectors = std::move(a);
  return s;
}

namespace {

double gershgorin_lower(const Eigen::SparseMatrix<double>& h) {
  double lower = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < h.outerSize(); ++k) {
    double diag = 0.0, off = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(h, k); it; ++it) {
      if (it.row() == it.col())
        diag += it.value();
      else
        off += std::abs(it.value());
    }
    lower = std::min(lower, diag - off);
  }
  return lower;
}

double max_column_residual(const Eigen::SparseMatrix<double>& h, const Eigen::MatrixXd& v, const Eigen::VectorXd& w) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < v.cols(); ++k)
    worst = std::max(worst, (h * v.col(k) - w[k] * v.col(k)).norm());
  return worst;
}

}  // namespace

SpectralData eig_lowest(const Eigen::SparseMatrix<double>& h, int count, bool want_vectors, const EigOptions& opt) {
  const Eigen::Index n = h.rows();
  if (count < 1 || count > n) throw std::invalid_argument("eig_lowest: bad eigenpair count");
  const double sigma = gershgorin_lower(h) - 1e-2;
  Eigen::SparseMatrix<double> shifted = h;
  for (Eigen::Index k = 0; k < n; ++k) shifted.coeffRef(k, k) -= sigma;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw ConvergenceError("eig_lowest: factorisation failed", NAN);

  // Positive start vector: the ground state of a matrix with nonpositive
  // off-diagonal entries is positive, so the overlap never vanishes.
  Eigen::VectorXd q = Eigen::VectorXd::Ones(n);
  if (count > 1)
    for (Eigen::Index k = 0; k < n; ++k) q[k] += 0.5 * std::sin(1.0 + 7.31 * static_cast<double>(k));
  q.normalize();

  const Eigen::Index kmax = std::min<Eigen::Index>(n, opt.max_krylov);
  Eigen::MatrixXd Q(n, kmax);
  std::vector<double> alpha, beta;
  double last_residual = NAN;
  for (Eigen::Index j = 0; j < kmax; ++j) {
    Q.col(j) = q;
    Eigen::VectorXd w = ldlt.solve(q);
    const double a = q.dot(w);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    const double b = w.norm();

    const Eigen::Index m = j + 1;
    const bool check = m >= count && (m % 5 == 0 || m == kmax || b < 1e-14);
    if (check) {
      Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1)) : Eigen::VectorXd();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
      tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      // Largest Ritz values of the inverse are the lowest eigenvalues of h.
      bool estimates_ok = true;
      for (int c = 0; c < count; ++c) {
        const Eigen::Index idx = m - 1 - c;
        const double theta = tri.eigenvalues()[idx];
        if (std::abs(b * tri.eigenvectors()(m - 1, idx)) > 1e-10 * std::abs(theta)) estimates_ok = false;
      }
      if (estimates_ok || m == kmax || b < 1e-14) {
        SpectralData s;
        s.partial = count < n;
        s.eigenvalues.resize(count);
        Eigen::MatrixXd vecs(n, count);
        for (int c = 0; c < count; ++c) {
          const Eigen::Index idx = m - 1 - c;
          s.eigenvalues[c] = sigma + 1.0 / tri.eigenvalues()[idx];
          vecs.col(c) = (Q.leftCols(m) * tri.eigenvectors().col(idx)).normalized();
        }
        last_residual = max_column_residual(h, vecs, s.eigenvalues);
        if (last_residual <= opt.residual_tol * std::max(1.0, std::abs(s.eigenvalues.maxCoeff()))) {
          s.residual_bound = last_residual;
          if (want_vectors) s.eigenvectors = std::move(vecs);
          return s;
        }
      }
    }
    if (b < 1e-14) break;
    beta.push_back(b);
    q = w / b;
  }
  throw ConvergenceError("eig_lowest: no convergence, residual " + std::to_string(last_residual), last_residual);
}

SpectralData eig(const OperatorMatrix& op, bool want_vectors, const EigOptions& opt) {
  if (op.dim() < 1) throw std::invalid_argument("eig: empty operator");
  if (op.dim() <= opt.dense_threshold) {
    SpectralData s = eig_dense(op.dense(), want_vectors);
    if (want_vectors) s.residual_bound = std::max(s.residual_bound, max_column_residual(op.matrix(), *s.eigenvectors, s.eigenvalues));
    return s;
  }
  return eig_lowest(op.matrix(), opt.count, want_vectors, opt);
}

double lowest_eigenvalue(const OperatorMatrix& op, const EigOptions& opt) {
  EigOptions o = opt;
  o.count = 1;
  return eig(op, false, o).eigenvalues[0];
}

double dist_to_spectrum(const Eigen::VectorXd& sorted, double E) {
  if (sorted.size() == 0) return std::numeric_limits<double>::infinity();
  const double* b = sorted.data();
  const double* e = b + sorted.size();
  const double* it = std::lower_bound(b, e, E);
  double best = std::numeric_limits<double>::infinity();
  if (it != e) best = *it - E;
  if (it != b) best = std::min(best, E - *(it - 1));
  return best;
}

// ---------------------------------------------------------------------------
// Green columns
// ---------------------------------------------------------------------------

namespace {

Eigen::SparseMatrix<double> shifted_matrix(const OperatorMatrix& op, double E) {
  Eigen::SparseMatrix<double> a = op.matrix();
  for (Eigen::Index k = 0; k < a.rows(); ++k) a.coeffRef(k, k) -= E;
  return a;
}

}  // namespace

GreenColumn green_column(const OperatorMatrix& op, double E, const Config& source, const SpectralData* spectrum) {
  GreenColumn g;
  g.E = E;
  g.source = source;
  const auto src = static_cast<Eigen::Index>(op.index_of(source));
  if (spectrum) {
    g.eta = dist_to_spectrum(spectrum->eigenvalues, E);
  } else if (op.dim() <= 3000) {
    g.eta = dist_to_spectrum(eig_dense(op.dense(), false).eigenvalues, E);
  } else {
    g.eta = NAN;
  }
  if (g.eta < kResonantEta) throw ResonantEnergyError("green_column: E is within 1e-12 of the spectrum", g.eta);

  const Eigen::SparseMatrix<double> a = shifted_matrix(op, E);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw ResonantEnergyError("green_column: singular system", 0.0);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(op.dim());
  rhs[src] = 1.0;
  g.values = lu.solve(rhs);
  g.residual = (a * g.values - rhs).norm();
  if (!(g.residual <= 1e-8 * (1.0 + g.values.norm())))
    throw ResonantEnergyError("green_column: residual " + std::to_string(g.residual) + " above tolerance", g.eta);
  return g;
}

// ---------------------------------------------------------------------------
// Resonance and CNR
// ---------------------------------------------------------------------------

double resonance_threshold(double L, double beta) { return std::exp(-std::pow(L, beta)); }

ResonanceVerdict is_e_resonant(const Eigen::VectorXd& eigenvalues, int L, double E, const ModelParams& params) {
  ResonanceVerdict v;
  v.dist = dist_to_spectrum(eigenvalues, E);
  v.threshold = resonance_threshold(L, params.beta);
  v.margin = v.dist - v.threshold;
  v.resonant = v.dist < v.threshold;
  return v;
}

ResonanceVerdict is_e_resonant(const OperatorMatrix& op, double E, const ModelParams& params) {
  return is_e_resonant(eig_dense(op.dense(), false).eigenvalues, op.rectangle().min_radius(), E, params);
}

std::vector<int> cnr_radii(int L, double alpha) {
  if (L < 1) throw std::invalid_argument("cnr_radii: L must be >= 1");
  int lo = 1;
  if (alpha == 1.5) {
    const auto L2 = static_cast<std::int64_t>(L) * L;
    while (static_cast<std::int64_t>(lo) * lo * lo < L2) ++lo;
  } else {
    while (std::pow(static_cast<double>(lo), alpha) < static_cast<double>(L) * (1.0 - 1e-12)) ++lo;
  }
  std::vector<int> out;
  for (int l = lo; l <= L; ++l) out.push_back(l);
  return out;
}

std::size_t cnr_subcube_count(int L, int n, int d, double alpha) {
  std::size_t total = 0;
  for (int l : cnr_radii(L, alpha)) {
    std::size_t c = 1;
    for (int i = 0; i < n * d; ++i) c *= static_cast<std::size_t>(2 * (L - l) + 1);
    total += c;
  }
  return total;
}

namespace {

// All offsets in [-w, w]^k in lexicographic order.
std::vector<std::vector<int>> offsets(int k, int w, int step = 1) {
  std::vector<int> axis;
  for (int v = -w; v <= w; v += step) axis.push_back(v);
  if (axis.back() != w) axis.push_back(w);
  std::vector<std::vector<int>> out;
  std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
  while (true) {
    std::vector<int> o(static_cast<std::size_t>(k));
    for (int a = 0; a < k; ++a) o[static_cast<std::size_t>(a)] = axis[idx[static_cast<std::size_t>(a)]];
    out.push_back(std::move(o));
    int a = k - 1;
    for (; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] < axis.size()) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
    if (a < 0) break;
  }
  return out;
}

Config shifted(const Config& c, const std::vector<int>& off) {
  Config x = c;
  for (std::size_t i = 0; i < off.size(); ++i) x.flat()[i] += off[i];
  return x;
}

}  // namespace

SubcubeSpectra::SubcubeSpectra(const Rectangle& cube, const PotentialSample& pot, const InteractionSpec& spec,
                               const ModelParams& params, const CnrEnumeration& how)
    : exact_(how.exact), params_(params) {
  const int L = cube.radius();
  const int nd = cube.n() * cube.d();
  total_ = cnr_subcube_count(L, cube.n(), cube.d(), params.alpha);
  if (how.exact && total_ > how.budget)
    throw std::invalid_argument("is_e_cnr: " + std::to_string(total_) + " sub-cubes exceed the exact budget of " +
                                std::to_string(how.budget) + "; use sampled enumeration");
  for (int l : cnr_radii(L, params.alpha)) {
    auto offs = offsets(nd, L - l);
    if (!how.exact && how.samples < offs.size()) {
      std::mt19937_64 rng(how.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(l + 1)));
      std::shuffle(offs.begin(), offs.end(), rng);
      offs.resize(how.samples);
      std::sort(offs.begin(), offs.end());
    }
    for (const auto& o : offs) {
      Entry e;
      e.rect = Rectangle::cube(shifted(cube.center(), o), l);
      e.radius = l;
      e.eigenvalues = eig_dense(assemble(e.rect, pot, spec).dense(), false).eigenvalues;
      entries_.push_back(std::move(e));
    }
  }
  if (entries_.size() == total_) exact_ = true;
}

std::optional<std::size_t> SubcubeSpectra::first_resonant(double E) const {
  for (std::size_t k = 0; k < entries_.size(); ++k)
    if (dist_to_spectrum(entries_[k].eigenvalues, E) < resonance_threshold(entries_[k].radius, params_.beta)) return k;
  return std::nullopt;
}

CnrVerdict is_e_cnr(const SubcubeSpectra& subcubes, double E) {
  CnrVerdict v;
  v.exact = subcubes.exact();
  v.total = subcubes.total();
  v.tested = subcubes.entries().size();
  if (auto k = subcubes.first_resonant(E)) {
    v.cnr = false;
    v.witness = subcubes.entries()[*k].rect;
    v.witness_dist = dist_to_spectrum(subcubes.entries()[*k].eigenvalues, E);
  }
  return v;
}

CnrVerdict is_e_cnr(const Rectangle& cube, const PotentialSample& pot, const InteractionSpec& spec, double E,
                    const ModelParams& params, const CnrEnumeration& how) {
  if (cube.radius() < 2) throw std::invalid_argument("is_e_cnr: need L >= 2");
  return is_e_cnr(SubcubeSpectra(cube, pot, spec, params, how), E);
}

// ---------------------------------------------------------------------------
// Singularity
// ---------------------------------------------------------------------------

double gamma(double m, int L, int n, int N) {
  if (L < 1 || n < 1 || n > N || !(m > 0)) throw std::invalid_argument("gamma: need L >= 1, 1 <= n <= N, m > 0");
  return m * std::pow(1.0 + std::pow(static_cast<double>(L), -0.125), N - n + 1);
}

namespace {

struct CubeGeometry {
  std::size_t center;
  std::vector<std::size_t> boundary;
  double gamma;
  double threshold;
};

CubeGeometry cube_geometry(const OperatorMatrix& cube, const ModelParams& params) {
  const auto& r = cube.rectangle();
  CubeGeometry g;
  g.center = r.index_of(r.center());
  g.boundary = inner_boundary_indices(r);
  g.gamma = gamma(params.m, r.radius(), r.n(), params.N);
  g.threshold = std::exp(-g.gamma * r.radius());
  return g;
}

double boundary_max(const Eigen::VectorXd& column, const std::vector<std::size_t>& boundary) {
  double best = 0.0;
  for (auto k : boundary) best = std::max(best, std::abs(column[static_cast<Eigen::Index>(k)]));
  return best;
}

}  // namespace

SingularVerdict is_em_singular(const OperatorMatrix& cube, double E, const ModelParams& params,
                               const SpectralData* spectrum) {
  const auto geo = cube_geometry(cube, params);
  SingularVerdict v;
  v.gamma = geo.gamma;
  v.threshold = geo.threshold;
  SpectralData local;
  if (!spectrum && cube.dim() <= 3000) {
    local = eig_dense(cube.dense(), false);
    spectrum = &local;
  }
  v.eta = spectrum ? dist_to_spectrum(spectrum->eigenvalues, E) : NAN;
  if (v.eta < kResonantEta) {
    v.singular = v.resonant = true;
    v.max_green = std::numeric_limits<double>::infinity();
    return v;
  }
  try {
    const auto col = green_column(cube, E, cube.rectangle().center(), spectrum);
    v.max_green = boundary_max(col.values, geo.boundary);
  } catch (const ResonantEnergyError&) {
    v.singular = v.resonant = true;
    v.max_green = std::numeric_limits<double>::infinity();
    return v;
  }
  v.singular = v.max_green > v.threshold;
  return v;
}

SpectralResolvent::SpectralResolvent(const OperatorMatrix& cube, const ModelParams& params)
    : op_(&cube), params_(params), spectrum_(eig_dense(cube.dense(), true)) {
  prepare();
}

SpectralResolvent::SpectralResolvent(const OperatorMatrix& cube, const ModelParams& params, SpectralData spectrum)
    : op_(&cube), params_(params), spectrum_(std::move(spectrum)) {
  if (!spectrum_.eigenvectors || spectrum_.partial) throw std::invalid_argument("SpectralResolvent: need a full eigenbasis");
  prepare();
}

void SpectralResolvent::prepare() {
  const auto geo = cube_geometry(*op_, params_);
  center_ = geo.center;
  boundary_ = geo.boundary;
  gamma_ = geo.gamma;
  threshold_ = geo.threshold;
  const auto& V = *spectrum_.eigenvectors;
  boundary_rows_.resize(static_cast<Eigen::Index>(boundary_.size()), V.cols());
  for (std::size_t b = 0; b < boundary_.size(); ++b)
    boundary_rows_.row(static_cast<Eigen::Index>(b)) = V.row(static_cast<Eigen::Index>(boundary_[b]));
  center_row_ = V.row(static_cast<Eigen::Index>(center_)).transpose();
}

double SpectralResolvent::green(std::size_t x, std::size_t y, double E) const {
  const auto& V = *spectrum_.eigenvectors;
  const auto& lam = spectrum_.eigenvalues;
  double g = 0.0;
  for (Eigen::Index k = 0; k < lam.size(); ++k)
    g += V(static_cast<Eigen::Index>(x), k) * V(static_cast<Eigen::Index>(y), k) / (lam[k] - E);
  return g;
}

SingularVerdict SpectralResolvent::singular_at(double E) const {
  SingularVerdict v;
  v.gamma = gamma_;
  v.threshold = threshold_;
  v.eta = dist_to_spectrum(spectrum_.eigenvalues, E);
  if (v.eta < kResonantEta) {
    v.singular = v.resonant = true;
    v.max_green = std::numeric_limits<double>::infinity();
    return v;
  }
  const Eigen::VectorXd w = center_row_.cwiseQuotient((spectrum_.eigenvalues.array() - E).matrix());
  v.max_green = (boundary_rows_ * w).cwiseAbs().maxCoeff();
  v.singular = v.max_green > v.threshold;
  return v;
}

bool SingularScan::any() const { return std::any_of(singular.begin(), singular.end(), [](char c) { return c != 0; }); }

namespace {

bool positive_definite_below(const Eigen::SparseMatrix<double>& a) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  return ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0).all();
}

}  // namespace

SingularScan scan_singular(const OperatorMatrix& cube, const std::vector<double>& grid, const ModelParams& params,
                           Eigen::Index dense_threshold) {
  SingularScan scan;
  scan.energies = grid;
  const std::size_t G = grid.size();
  scan.singular.assign(G, 0);
  scan.max_green.assign(G, NAN);
  if (G == 0) return scan;
  const auto geo = cube_geometry(cube, params);

  if (positive_definite_below(shifted_matrix(cube, grid.back()))) {
    scan.method = "monotone";
    scan.below_spectrum = true;
    const Eigen::SparseMatrix<double> h = cube.matrix();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.analyzePattern(h);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cube.dim());
    rhs[static_cast<Eigen::Index>(geo.center)] = 1.0;
    auto eval = [&](std::size_t i) {
      ldlt.factorize(shifted_matrix(cube, grid[i]));
      const Eigen::VectorXd g = ldlt.solve(rhs);
      ++scan.solves;
      scan.max_green[i] = boundary_max(g, geo.boundary);
      return scan.max_green[i] > geo.threshold;
    };
    if (!eval(G - 1)) return scan;
    std::size_t lo = 0, hi = G - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (eval(mid))
        hi = mid;
      else
        lo = mid + 1;
    }
    for (std::size_t i = hi; i < G; ++i) scan.singular[i] = 1;
    return scan;
  }

  if (cube.dim() <= dense_threshold) {
    scan.method = "spectral";
    const SpectralResolvent res(cube, params);
    for (std::size_t i = 0; i < G; ++i) {
      const auto v = res.singular_at(grid[i]);
      scan.singular[i] = v.singular;
      scan.max_green[i] = v.max_green;
    }
    return scan;
  }

  scan.method = "sparse";
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(cube.matrix());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cube.dim());
  rhs[static_cast<Eigen::Index>(geo.center)] = 1.0;
  for (std::size_t i = 0; i < G; ++i) {
    const auto a = shifted_matrix(cube, grid[i]);
    lu.factorize(a);
    ++scan.solves;
    if (lu.info() != Eigen::Success) {
      scan.singular[i] = 1;
      scan.max_green[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    const Eigen::VectorXd g = lu.solve(rhs);
    if (!((a * g - rhs).norm() <= 1e-8 * (1.0 + g.norm()))) {
      scan.singular[i] = 1;
      scan.max_green[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    scan.max_green[i] = boundary_max(g, geo.boundary);
    scan.singular[i] = scan.max_green[i] > geo.threshold;
  }
  return scan;
}

std::vector<double> energy_grid(double lo, double hi, double step, const std::vector<double>& extra_points,
                                double half_width) {
  if (!(hi >= lo)) throw std::invalid_argument("energy_grid: need hi >= lo");
  if (!(step > 0)) throw std::invalid_argument("energy_grid: step must be > 0");
  std::vector<double> g;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t k = 0; k <= count; ++k) g.push_back(lo + static_cast<double>(k) * step);
  if (g.back() < hi) g.push_back(hi);
  for (double p : extra_points)
    for (double q : {p - half_width, p, p + half_width})
      if (q >= lo && q <= hi) g.push_back(q);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

Eigen::VectorXd eigenvalues_up_to(const OperatorMatrix& op, double E_hi, Eigen::Index dense_threshold) {
  if (positive_definite_below(shifted_matrix(op, E_hi))) return Eigen::VectorXd();
  Eigen::VectorXd all;
  if (op.dim() <= dense_threshold) {
    all = eig_dense(op.dense(), false).eigenvalues;
  } else {
    EigOptions o;
    for (int count = 8;; count *= 2) {
      o.count = std::min<int>(count, static_cast<int>(op.dim()));
      all = eig_lowest(op.matrix(), o.count, false, o).eigenvalues;
      if (all[all.size() - 1] > E_hi || o.count == op.dim()) break;
      if (count > 1024) throw ConvergenceError("eigenvalues_up_to: too many eigenvalues below E_hi", NAN);
    }
  }
  Eigen::Index k = 0;
  while (k < all.size() && all[k] <= E_hi) ++k;
  return all.head(k);
}

// ---------------------------------------------------------------------------
// Combes-Thomas
// ---------------------------------------------------------------------------

CombesThomasReport combes_thomas_check(const OperatorMatrix& op, double E, std::optional<std::size_t> sampled_pairs,
                                       std::uint64_t seed) {
  const auto s = eig_dense(op.dense(), true);
  CombesThomasReport rep;
  rep.eta = dist_to_spectrum(s.eigenvalues, E);
  if (!(rep.eta > 0)) throw std::invalid_argument("combes_thomas_check: eta = 0");
  rep.eta_used = std::min(rep.eta, 1.0);
  const auto& V = *s.eigenvectors;
  const Eigen::MatrixXd G = V * (s.eigenvalues.array() - E).inverse().matrix().asDiagonal() * V.transpose();
  const auto& r = op.rectangle();
  const double nu = static_cast<double>(r.n() * r.d());
  const auto n = static_cast<std::size_t>(op.dim());
  std::vector<Config> configs = r.configs();
  auto visit = [&](std::size_t x, std::size_t y) {
    const double bound = 2.0 / rep.eta_used * std::exp(-rep.eta_used * max_norm(configs[x], configs[y]) / (12.0 * nu));
    const double ratio = std::abs(G(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y))) / bound;
    rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    ++rep.pairs;
  };
  if (sampled_pairs) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> U(0, n - 1);
    for (std::size_t k = 0; k < *sampled_pairs; ++k) visit(U(rng), U(rng));
  } else {
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = x; y < n; ++y) visit(x, y);
  }
  rep.holds = rep.worst_ratio <= 1.0;
  return rep;
}

// ---------------------------------------------------------------------------
// PI cubes
// ---------------------------------------------------------------------------

namespace {

std::pair<IndexSet, IndexSet> pi_split(const Rectangle& cube, const InteractionSpec& spec) {
  const auto v = classify_interactivity(cube, spec.r0());
  if (v.kind != Interactivity::PI) throw std::invalid_argument("cube is fully interactive; a PI cube is required");
  return *v.split;
}

}  // namespace

HnrVerdict is_hnr(const Rectangle& pi_cube, const PotentialSample& pot, const InteractionSpec& spec, double E,
                  const ModelParams& params, const CnrEnumeration& how) {
  const auto split = pi_split(pi_cube, spec);
  const auto ts = tensor_split(pi_cube, pot, spec, split);
  const auto lam = eig_dense(ts.left.dense(), false).eigenvalues;
  const auto mu = eig_dense(ts.right.dense(), false).eigenvalues;
  const Rectangle left_cube = pi_cube.restrict_to(split.first);
  const Rectangle right_cube = pi_cube.restrict_to(split.second);
  const SubcubeSpectra left_sub(left_cube, pot, spec, params, how);
  const SubcubeSpectra right_sub(right_cube, pot, spec, params, how);

  HnrVerdict v;
  v.exact = left_sub.exact() && right_sub.exact();
  std::optional<std::size_t> hit;
  for (Eigen::Index j = 0; j < mu.size() && !hit; ++j)
    if ((hit = left_sub.first_resonant(E - mu[j]))) {
      v.witness_in_left = true;
      v.shifted_energy = E - mu[j];
      v.witness_subcube = left_sub.entries()[*hit].rect;
    }
  for (Eigen::Index i = 0; i < lam.size() && !hit; ++i)
    if ((hit = right_sub.first_resonant(E - lam[i]))) {
      v.witness_in_left = false;
      v.shifted_energy = E - lam[i];
      v.witness_subcube = right_sub.entries()[*hit].rect;
    }
  if (!hit) return v;
  v.hnr = false;

  // The witness times the full other factor is an E-resonant sub-rectangle.
  const Rectangle& w = *v.witness_subcube;
  Config center(pi_cube.n(), pi_cube.d());
  std::vector<int> radii(static_cast<std::size_t>(pi_cube.n()));
  const IndexSet& wj = v.witness_in_left ? split.first : split.second;
  const IndexSet& oj = v.witness_in_left ? split.second : split.first;
  for (std::size_t k = 0; k < wj.size(); ++k) {
    center.set_particle(wj[k], w.center().particle(static_cast<int>(k)));
    radii[static_cast<std::size_t>(wj[k])] = w.radii()[k];
  }
  for (int j : oj) {
    center.set_particle(j, pi_cube.center().particle(j));
    radii[static_cast<std::size_t>(j)] = pi_cube.radii()[static_cast<std::size_t>(j)];
  }
  v.resonant_rectangle = Rectangle(center, radii);
  v.resonant_rectangle_verified = pi_cube.contains_rectangle(*v.resonant_rectangle) &&
                       is_e_resonant(assemble(*v.resonant_rectangle, pot, spec), E, params).resonant;
  return v;
}

TunnellingVerdict is_tunnelling(const Rectangle& pi_cube, const PotentialSample& pot, const InteractionSpec& spec,
                                double E, double m, const ModelParams& params, const ScaleLadder& ladder,
                                const TunnellingOptions& opt) {
  const int L = pi_cube.radius();
  const auto level = ladder.level_of(L);
  if (!level || *level == 0) throw std::invalid_argument("is_tunnelling: cube radius is not a ladder level L_{k+1}");
  const int l = static_cast<int>(ladder.levels[static_cast<std::size_t>(*level - 1)]);
  const auto split = pi_split(pi_cube, spec);
  ModelParams sub_params = params;
  sub_params.m = m;

  TunnellingVerdict v;
  const std::size_t per_axis = static_cast<std::size_t>(2 * (L - l) + 1);
  for (int side = 0; side < 2; ++side) {
    const IndexSet& mine = side == 0 ? split.first : split.second;
    const IndexSet& other = side == 0 ? split.second : split.first;
    const Rectangle factor = pi_cube.restrict_to(mine);
    const int k = factor.n() * factor.d();
    std::size_t count = 1;
    for (int a = 0; a < k; ++a) count *= per_axis;
    const int step = count <= opt.budget ? 1 : std::max(1, l / 4);
    v.grid_step = std::max(v.grid_step, step);

    std::vector<Rectangle> subs;
    for (const auto& o : offsets(k, L - l, step)) subs.push_back(Rectangle::cube(shifted(factor.center(), o), l));
    v.subcubes += subs.size();

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < subs.size(); ++a)
      for (std::size_t b = a + 1; b < subs.size(); ++b)
        if (is_separable(subs[a], subs[b], params.N).separable) pairs.emplace_back(a, b);
    v.separable_pairs += pairs.size();
    if (pairs.empty()) continue;

    const auto shifts = eig_dense(assemble(pi_cube.restrict_to(other), pot, spec).dense(), false).eigenvalues;
    std::vector<OperatorMatrix> ops;
    std::vector<SpectralResolvent> res;
    ops.reserve(subs.size());
    res.reserve(subs.size());
    for (const auto& s : subs) ops.push_back(assemble(s, pot, spec));
    for (const auto& o : ops) res.emplace_back(o, sub_params);
    bool found = false;
    for (Eigen::Index j = 0; j < shifts.size() && !found; ++j) {
      const double e = E - shifts[j];
      std::vector<char> sing(subs.size());
      for (std::size_t a = 0; a < subs.size(); ++a) sing[a] = res[a].singular_at(e).singular;
      for (const auto& [a, b] : pairs)
        if (sing[a] && sing[b]) {
          found = true;
          v.witness = std::make_pair(subs[a].center(), subs[b].center());
          v.witness_shift = shifts[j];
          break;
        }
    }
    (side == 0 ? v.left : v.right) = found;
  }
  return v;
}

PiImplicationReport pi_implication_check(const Rectangle& pi_cube, const PotentialSample& pot,
                                        const InteractionSpec& spec, double E, double m, const ModelParams& params,
                                        const ScaleLadder& ladder, const CnrEnumeration& how) {
  const auto split = pi_split(pi_cube, spec);
  ModelParams p = params;
  p.m = m;
  PiImplicationReport rep;
  rep.hnr = is_hnr(pi_cube, pot, spec, E, p, how).hnr;
  rep.tunnelling = is_tunnelling(pi_cube, pot, spec, E, m, p, ladder).tunnelling();
  const auto full = assemble(pi_cube, pot, spec);
  const auto sv = is_em_singular(full, E, p);
  rep.singular = sv.singular;
  rep.max_green = sv.max_green;
  rep.premise = rep.hnr && !rep.tunnelling;
  rep.implication_holds = !rep.premise || !rep.singular;

  // G(u,v;E) = sum_i phi_i(u') phi_i(v') G''(u'',v''; E - lambda_i).
  const auto ts = tensor_split(pi_cube, pot, spec, split);
  const auto left = eig_dense(ts.left.dense(), true);
  const auto right = eig_dense(ts.right.dense(), true);
  const auto& phi = *left.eigenvectors;
  const auto& psi = *right.eigenvectors;
  const Rectangle& lr = ts.left.rectangle();
  const Rectangle& rr = ts.right.rectangle();
  const Config& u = pi_cube.center();
  const auto ul = static_cast<Eigen::Index>(lr.index_of(u.restrict_to(split.first)));
  const auto ur = static_cast<Eigen::Index>(rr.index_of(u.restrict_to(split.second)));
  if (sv.resonant) return rep;
  const auto col = green_column(full, E, u);
  for (auto k : inner_boundary_indices(pi_cube)) {
    const Config v = pi_cube.config_at(k);
    const auto vl = static_cast<Eigen::Index>(lr.index_of(v.restrict_to(split.first)));
    const auto vr = static_cast<Eigen::Index>(rr.index_of(v.restrict_to(split.second)));
    double expansion = 0.0, majorant = 0.0;
    for (Eigen::Index i = 0; i < left.eigenvalues.size(); ++i) {
      double g2 = 0.0;
      for (Eigen::Index j = 0; j < right.eigenvalues.size(); ++j)
        g2 += psi(ur, j) * psi(vr, j) / (right.eigenvalues[j] - (E - left.eigenvalues[i]));
      const double w = phi(ul, i) * phi(vl, i);
      expansion += w * g2;
      majorant += std::abs(w) * std::abs(g2);
    }
    const double direct = col.values[static_cast<Eigen::Index>(k)];
    rep.expansion_max_error = std::max(rep.expansion_max_error, std::abs(direct - expansion) / std::max(1.0, std::abs(direct)));
    if (std::abs(direct) > majorant * (1.0 + 1e-9) + 1e-14) rep.expansion_bound_holds = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

PredicateReport evaluate_predicates(const Rectangle& cube, const PotentialSample& pot, const InteractionSpec& spec,
                                    double E, const ModelParams& params, const ScaleLadder* ladder,
                                    const CnrEnumeration& how) {
  PredicateReport rep;
  rep.E = E;
  rep.cube = cube;
  const auto op = assemble(cube, pot, spec);
  const auto s = eig(op, false);
  rep.resonance = is_e_resonant(s.eigenvalues, cube.min_radius(), E, params);
  if (cube.radius() >= 2) rep.cnr = is_e_cnr(cube, pot, spec, E, params, how);
  rep.singular = is_em_singular(op, E, params, &s);
  if (cube.n() >= 2) {
    rep.interactivity = classify_interactivity(cube, spec.r0());
    if (rep.interactivity->kind == Interactivity::PI) {
      rep.hnr = is_hnr(cube, pot, spec, E, params, how).hnr;
      if (ladder && ladder->level_of(cube.radius()).value_or(0) > 0)
        rep.tunnelling = is_tunnelling(cube, pot, spec, E, params.m, params, *ladder).tunnelling();
    }
  }
  return rep;
}

void to_json(nlohmann::json& j, const ResonanceVerdict& v) {
  j = nlohmann::json{{"resonant", v.resonant}, {"dist", v.dist}, {"threshold", v.threshold}, {"margin", v.margin}};
}

void to_json(nlohmann::json& j, const CnrVerdict& v) {
  j = nlohmann::json{{"cnr", v.cnr}, {"exact", v.exact}, {"tested", v.tested}, {"total", v.total}};
  j["witness"] = v.witness ? nlohmann::json(*v.witness) : nlohmann::json(nullptr);
  if (v.witness) j["witness_dist"] = v.witness_dist;
}

void to_json(nlohmann::json& j, const SingularVerdict& v) {
  j = nlohmann::json{{"singular", v.singular}, {"resonant", v.resonant}, {"threshold", v.threshold},
                     {"gamma", v.gamma}};
  j["max_green"] = std::isfinite(v.max_green) ? nlohmann::json(v.max_green) : nlohmann::json("inf");
  j["eta"] = std::isfinite(v.eta) ? nlohmann::json(v.eta) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const PredicateReport& r) {
  j = nlohmann::json{{"E", r.E},
                     {"cube", r.cube},
                     {"e_resonant", r.resonance},
                     {"e_cnr", r.cnr},
                     {"em_singular", r.singular}};
  j["interactivity"] = r.interactivity ? nlohmann::json(*r.interactivity) : nlohmann::json(nullptr);
  j["hnr"] = r.hnr ? nlohmann::json(*r.hnr) : nlohmann::json(nullptr);
  j["tunnelling"] = r.tunnelling ? nlohmann::json(*r.tunnelling) : nlohmann::json(nullptr);
}

}  // namespace anderson
