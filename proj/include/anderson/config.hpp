#pragma once

// Run configuration: a versioned YAML document naming one experiment, the
// model parameters, the disorder ensemble, the interaction and an optional
// experiment block.  Unknown keys are rejected with their line number.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "anderson/lattice_operator.hpp"
#include "anderson/params.hpp"

namespace anderson {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint64_t kDefaultSeed = 0xA11CE;

enum class Experiment {
  geometry_verify,
  wegner,
  cnr_pair,
  initial_scale,
  initial_ds,
  ds_estimate,
  tunnelling,
  counts,
  lemma44_audit,
  spectral_edge,
  weyl,
  decay,
  dynamics,
  kernel_decay,
  ct_check,
  stollmann_check
};

const std::vector<Experiment>& all_experiments();
std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);
/// The statement an experiment exercises, attached to its manifest.
std::string paper_claim(Experiment e);

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
  int line;
};

enum class FieldType { integer, number, boolean, integer_list, number_list, interval, boxes };

struct FieldSpec {
  std::string key;
  FieldType type;
  nlohmann::json fallback;  // null: optional without default
};

/// Model parameters used when the config has no params block.
ModelParams default_params(Experiment e);

/// Trial count used when the config does not set one.
std::size_t default_trials(Experiment e);

/// Keys accepted in the block of an experiment, with their defaults.
const std::vector<FieldSpec>& block_schema(Experiment e);

struct RunConfig {
  int schema_version = kSchemaVersion;
  Experiment experiment = Experiment::geometry_verify;
  ModelParams params;
  DisorderEnsemble ensemble;
  InteractionSpec interaction;
  nlohmann::json block = nlohmann::json::object();  // every schema key present
  std::size_t trials = 100;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string output_dir = "results";

  /// Default configuration of an experiment.
  static RunConfig defaults(Experiment e);

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

RunConfig parse_config_string(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize(const RunConfig& c);

/// Seed precedence: explicit flag, then the config file, then ANDERSON_SEED,
/// then the fixed default.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& c,
                           const std::function<const char*(const char*)>& getenv_fn);

/// Shortest round-trip decimal form with '.' as separator.
std::string format_number(double v);

}  // namespace anderson
