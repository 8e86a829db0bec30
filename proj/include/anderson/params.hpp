#pragma once

// Model parameter record shared by the predicates and the experiments.

#include <string>

#include <json.hpp>

namespace anderson {

enum class ParamMode { paper, calibrated };

struct ModelParams {
  int N = 2;
  int n = 2;
  int d = 1;
  double p = 13.0;
  double alpha = 1.5;
  double beta = 0.5;
  int L0 = 6;
  double m = 0.5;
  double E_star = 1.0;
  ParamMode mode = ParamMode::calibrated;
  /// Permits p <= 6Nd and L0 in {2, 3}; reported with every result.
  bool relaxed = false;

  /// Paper-constant mode: m and E* follow from N, d and L0.
  static ModelParams paper(int N, int n, int d, double p, int L0, bool relaxed = false);
  static ModelParams calibrated(int N, int n, int d, double p, int L0, double m, double E_star);

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  /// s* = 2p/alpha - Nd - 1.
  double s_star() const;
};

/// (14 N^N + 6Nd) L0^{-1/2}.
double paper_mass(int N, int d, int L0);
/// 12Nd 2^{N+1} m.
double paper_energy_cutoff(int N, int d, double m);
/// 12Nd 2^{N+1} (14 N^N + 6Nd).
double paper_gap_constant(int N, int d);

std::string to_string(ParamMode mode);
ParamMode param_mode_from_string(const std::string& s);

void to_json(nlohmann::json& j, const ModelParams& p);

}  // namespace anderson
