#pragma once

// Experiment runner: executes a resolved configuration, writes the results
// table, the JSON summary, the manifest and the resolved config, and renders
// stored results as a text report.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "anderson/config.hpp"
#include "anderson/stats.hpp"

namespace anderson {

inline constexpr const char* kArtifactVersion = "1.0.0";

enum ExitCode { kExitOk = 0, kExitOperational = 1, kExitInvariant = 2 };

/// One row of results.csv.
struct ResultRow {
  std::string experiment;
  int N = 0, n = 0, d = 0;
  std::optional<std::int64_t> L;
  std::optional<int> k;
  double p = 0.0, m = 0.0, E_star = 0.0;
  std::string eps_or_grid;
  MonteCarloEstimate estimate;
  std::uint64_t seed = 0;
};

const std::vector<std::string>& results_columns();
std::string results_csv(const std::vector<ResultRow>& rows);
void to_json(nlohmann::json& j, const ResultRow& r);

/// Plain CSV builder with the fixed number format.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& add(const std::string& s);
  CsvTable& add(double v);
  CsvTable& add(std::int64_t v);
  CsvTable& add(int v) { return add(static_cast<std::int64_t>(v)); }
  CsvTable& add(std::size_t v) { return add(static_cast<std::int64_t>(v)); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Outcome {
  std::vector<ResultRow> rows;
  nlohmann::json details = nlohmann::json::object();
  std::map<std::string, std::string> tables;  // file name -> CSV text
  std::vector<std::string> violated;           // names of failed deterministic invariants
  nlohmann::json reports = nlohmann::json::object();
};

/// Runs the experiment of a configuration whose seed is already resolved.
/// Deterministic invariants that fail are listed in `violated`; library
/// InvariantViolation exceptions are caught and listed the same way.
Outcome execute(const RunConfig& resolved, bool emit_reports = false);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  bool emit_reports = false;
  std::function<const char*(const char*)> getenv_fn;
};

/// Applies the overrides, executes and writes the output directory.
/// Returns an ExitCode; messages go to `log`.
int run(RunConfig config, const RunOptions& options, std::ostream& log);

/// Prints a per-experiment table from a results directory; returns an ExitCode.
int report(const std::string& dir, std::ostream& out, std::ostream& err);

/// FNV-1a 64 of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& s);

}  // namespace anderson
