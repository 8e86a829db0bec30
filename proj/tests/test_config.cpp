#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "anderson/config.hpp"
#include "anderson/runner.hpp"

using namespace anderson;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("anderson_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* no_env(const char*) { return nullptr; }

std::string error_of(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config takes block defaults") {
  const auto c = parse_config_string("schema_version: 1\nexperiment: wegner\n");
  CHECK(c.experiment == Experiment::wegner);
  CHECK(c.block["L"] == 1);
  CHECK(c.block["eps"].size() == 3);
  CHECK_FALSE(c.seed.has_value());
  CHECK(c.trials == 100);
}

TEST_CASE("paper mode demands p > 6Nd") {
  const std::string text =
      "schema_version: 1\nexperiment: wegner\nparams:\n  mode: paper\n  N: 2\n  n: 2\n  d: 1\n  p: 10\n  L0: 100\n";
  const auto msg = error_of(text);
  CHECK(msg.find("p > 6Nd") != std::string::npos);
  CHECK(msg.find("line 8") != std::string::npos);

  const auto ok = parse_config_string(
      "schema_version: 1\nexperiment: wegner\nparams:\n  mode: paper\n  N: 2\n  n: 2\n  d: 1\n  p: 13\n  L0: 100\n");
  CHECK(ok.params.m == doctest::Approx(6.8));
  CHECK(ok.params.E_star == doctest::Approx(1305.6));
}

TEST_CASE("unknown keys are reported with their line") {
  CHECK(error_of("schema_version: 1\nexperiment: wegner\nfrobnicate: 3\n").find("line 3") != std::string::npos);
  const auto msg = error_of("schema_version: 1\nexperiment: wegner\nwegner:\n  L: 1\n  epsilon: [0.1]\n");
  CHECK(msg.find("line 5") != std::string::npos);
  CHECK(msg.find("epsilon") != std::string::npos);
  CHECK(error_of("schema_version: 1\nexperiment: decay\nwegner:\n  L: 1\n") != "");
}

TEST_CASE("type and value errors") {
  CHECK(error_of("schema_version: 1\nexperiment: wegner\nwegner:\n  L: one\n").find("line 4") != std::string::npos);
  CHECK(error_of("schema_version: 1\nexperiment: wegner\ntrials: 0\n") != "");
  CHECK(error_of("schema_version: 2\nexperiment: wegner\n") != "");
  CHECK(error_of("experiment: wegner\n") != "");
  CHECK(error_of("schema_version: 1\nexperiment: nothing\n") != "");
  CHECK(error_of("schema_version: 1\nexperiment: wegner\nwegner:\n  eps: [0.1, -1]\n") != "");
  CHECK(error_of("schema_version: 1\nexperiment: dynamics\ndynamics:\n  t_count: 1\n") != "");
  CHECK(error_of("schema_version: 1\nexperiment: decay\nensemble:\n  kind: constant\n  a: 3\n") != "");
  CHECK(error_of("schema_version: 1\nexperiment: decay\nparams:\n  beta: 1.5\n") != "");
}

TEST_CASE("serialize and parse round trip for every experiment") {
  for (Experiment e : all_experiments()) {
    CAPTURE(to_string(e));
    auto c = RunConfig::defaults(e);
    c.seed = 12345;
    c.trials = 7;
    const auto back = parse_config_string(serialize(c));
    CHECK(back == c);
    CHECK(serialize(back) == serialize(c));
  }
  auto c = RunConfig::defaults(Experiment::decay);
  c.ensemble.kind = EnsembleKind::scaled_uniform;
  c.ensemble.a = 10;
  c.interaction.phi = {1.0, 0.25};
  c.block["window"] = {0.0, 0.75};
  CHECK(parse_config_string(serialize(c)) == c);
}

TEST_CASE("seed precedence") {
  auto c = RunConfig::defaults(Experiment::ct_check);
  auto env = [](const char* k) -> const char* { return std::string(k) == "ANDERSON_SEED" ? "0x10" : nullptr; };
  CHECK(resolve_seed(std::nullopt, c, no_env) == kDefaultSeed);
  CHECK(resolve_seed(std::nullopt, c, env) == 16);
  c.seed = 5;
  CHECK(resolve_seed(std::nullopt, c, env) == 5);
  CHECK(resolve_seed(9, c, env) == 9);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("runner writes the artifact set and exits 0") {
  const auto dir = scratch("geometry");
  auto c = RunConfig::defaults(Experiment::geometry_verify);
  c.block["ns"] = {1, 2};
  c.block["Ls"] = {1, 2};
  c.trials = 10;
  RunOptions o;
  o.out = dir.string();
  o.getenv_fn = no_env;
  std::ostringstream log;
  CHECK(run(c, o, log) == kExitOk);
  for (const char* f : {"results.csv", "summary.json", "manifest.json", "config.resolved.yaml"})
    CHECK(fs::exists(dir / f));
  const auto header = slurp(dir / "results.csv").substr(0, slurp(dir / "results.csv").find('\n'));
  CHECK(header == "experiment,N,n,d,L,k,p,m,E_star,eps_or_grid,trials,hits,point,ci_low,ci_high,bound_log10,vacuous_flag,seed");
  const auto reparsed = parse_config_file((dir / "config.resolved.yaml").string());
  CHECK(reparsed.seed == kDefaultSeed);
  std::ostringstream out, err;
  CHECK(report(dir.string(), out, err) == kExitOk);
  CHECK(out.str().find("geometry-verify.cover") != std::string::npos);
}

TEST_CASE("a violated invariant exits 2 and is named") {
  const auto dir = scratch("dyn");
  auto c = RunConfig::defaults(Experiment::dynamics);
  c.params.n = 1;
  c.ensemble.kind = EnsembleKind::scaled_uniform;
  c.ensemble.a = 20;
  c.block["L"] = 8;
  c.block["t_count"] = 5;
  c.block["interval"] = {0.0, 200.0};
  c.block["bound_tolerance"] = -0.999;  // demands M <= B/1000
  RunOptions o;
  o.out = dir.string();
  o.getenv_fn = no_env;
  std::ostringstream log;
  CHECK(run(c, o, log) == kExitInvariant);
  CHECK(log.str().find("correlator-bound") != std::string::npos);
  CHECK(slurp(dir / "summary.json").find("\"correlator-bound\"") != std::string::npos);

  c.block["bound_tolerance"] = 1e-9;
  CHECK(run(c, o, log) == kExitOk);
}

TEST_CASE("operational failures exit 1") {
  const auto dir = scratch("empty");
  fs::create_directories(dir);
  std::ostringstream out, err;
  CHECK(report(dir.string(), out, err) == kExitOperational);
  CHECK(report((dir / "missing").string(), out, err) == kExitOperational);
  std::ofstream(dir / "manifest.json") << "{ not json";
  std::ofstream(dir / "summary.json") << "{}";
  CHECK(report(dir.string(), out, err) == kExitOperational);

  auto c = RunConfig::defaults(Experiment::tunnelling);
  c.params.n = 1;  // a one-particle cube is never partially interactive
  RunOptions o;
  o.out = scratch("tun").string();
  o.getenv_fn = no_env;
  std::ostringstream log;
  CHECK(run(c, o, log) == kExitOperational);
}

TEST_CASE("results do not depend on the worker count") {
  auto c = RunConfig::defaults(Experiment::wegner);
  c.params.n = 1;
  c.trials = 200;
  std::string first_csv, first_hash;
  for (int w : {1, 2, 4}) {
    const auto dir = scratch("workers" + std::to_string(w));
    RunOptions o;
    o.out = dir.string();
    o.workers = w;
    o.getenv_fn = no_env;
    std::ostringstream log;
    REQUIRE(run(c, o, log) == kExitOk);
    const auto csv = slurp(dir / "results.csv");
    const auto summary = slurp(dir / "summary.json");
    const auto hash = summary.substr(summary.find("config_hash"), 40);
    if (w == 1) {
      first_csv = csv;
      first_hash = hash;
    }
    CHECK(csv == first_csv);
    CHECK(hash == first_hash);
  }
}

TEST_CASE("shipped sample configs parse") {
  std::size_t seen = 0;
  for (const auto& e : fs::directory_iterator(ANDERSON_CONFIG_DIR)) {
    if (e.path().extension() != ".yaml") continue;
    CAPTURE(e.path().string());
    const auto c = parse_config_file(e.path().string());
    CHECK(parse_config_string(serialize(c)) == c);
    ++seen;
  }
  CHECK(seen >= 5);
}
