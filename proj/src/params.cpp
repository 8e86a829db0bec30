#include "anderson/params.hpp"

#include <cmath>
#include <stdexcept>

namespace anderson {

namespace {

double ipow(double b, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

}  // namespace

double paper_mass(int N, int d, int L0) {
  return (14.0 * ipow(N, N) + 6.0 * N * d) / std::sqrt(static_cast<double>(L0));
}

double paper_energy_cutoff(int N, int d, double m) { return 12.0 * N * d * ipow(2.0, N + 1) * m; }

double paper_gap_constant(int N, int d) { return 12.0 * N * d * ipow(2.0, N + 1) * (14.0 * ipow(N, N) + 6.0 * N * d); }

ModelParams ModelParams::paper(int N, int n, int d, double p, int L0, bool relaxed) {
  ModelParams mp;
  mp.N = N;
  mp.n = n;
  mp.d = d;
  mp.p = p;
  mp.L0 = L0;
  mp.relaxed = relaxed;
  mp.mode = ParamMode::paper;
  mp.m = paper_mass(N, d, L0);
  mp.E_star = paper_energy_cutoff(N, d, mp.m);
  mp.validate();
  return mp;
}

ModelParams ModelParams::calibrated(int N, int n, int d, double p, int L0, double m, double E_star) {
  ModelParams mp;
  mp.N = N;
  mp.n = n;
  mp.d = d;
  mp.p = p;
  mp.L0 = L0;
  mp.m = m;
  mp.E_star = E_star;
  mp.mode = ParamMode::calibrated;
  mp.validate();
  return mp;
}

void ModelParams::validate() const {
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  if (n < 1 || n > N) throw std::invalid_argument("n must satisfy 1 <= n <= N");
  if (d < 1) throw std::invalid_argument("d must be >= 1");
  if (!(m > 0)) throw std::invalid_argument("m must be > 0");
  if (!(E_star > 0)) throw std::invalid_argument("E_star must be > 0");
  if (relaxed ? L0 < 2 : L0 <= 3) throw std::invalid_argument(relaxed ? "L0 must be >= 2" : "L0 must be > 3");
  if (mode == ParamMode::paper && !relaxed && !(p > 6.0 * N * d))
    throw std::invalid_argument("paper mode requires p > 6Nd (6Nd = " + std::to_string(6 * N * d) + ")");
  if (!(p > 0)) throw std::invalid_argument("p must be > 0");
}

double ModelParams::s_star() const { return 2.0 * p / alpha - N * d - 1.0; }

std::string to_string(ParamMode mode) { return mode == ParamMode::paper ? "paper" : "calibrated"; }

ParamMode param_mode_from_string(const std::string& s) {
  if (s == "paper") return ParamMode::paper;
  if (s == "calibrated") return ParamMode::calibrated;
  throw std::invalid_argument("unknown parameter mode '" + s + "'");
}

void to_json(nlohmann::json& j, const ModelParams& p) {
  j = nlohmann::json{{"N", p.N},         {"n", p.n},       {"d", p.d},       {"p", p.p},
                     {"alpha", p.alpha}, {"beta", p.beta}, {"L0", p.L0},     {"m", p.m},
                     {"E_star", p.E_star}, {"mode", to_string(p.mode)}, {"relaxed", p.relaxed}};
}

}  // namespace anderson
