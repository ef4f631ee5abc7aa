#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "commands.hpp"
#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tsm::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tsm_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(slurp(p));
  for (std::string line; std::getline(is, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Config small_variance_config() {
  return parse_config(json::parse(R"({
    "seed": 3,
    "variance_study": {"targets": ["unit_gaussian", "gentle_mixture"], "n_outer": 300, "n_inner": 40, "grid_points": 6}
  })"));
}

}  // namespace

TEST_CASE("empty config equals defaults and round-trips") {
  const Config c = parse_config(json::object());
  CHECK(c.seed == 0);
  CHECK(c.train.hidden == std::vector<std::size_t>{128, 128, 128});
  const json j = to_json(c);
  CHECK(to_json(parse_config(j)) == j);
}

TEST_CASE("shipped default config matches the built-in defaults") {
  const Config c = load_config(TSM_SOURCE_DIR "/configs/default.json");
  CHECK(to_json(c) == to_json(parse_config(json::object())));
}

TEST_CASE("invalid configs report every offending field") {
  const json bad = json::parse(R"({
    "mixtures": {"mine": {"weights": [0.5, 0.5], "means": [0, 1], "scales": [1, -0.2]}},
    "so2": {"noise_scale": -1, "anglez": 3}
  })");
  try {
    parse_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("mixtures.mine.scales[1]") != std::string::npos);
    CHECK(msg.find("so2.noise_scale") != std::string::npos);
    CHECK(msg.find("so2.anglez") != std::string::npos);
    CHECK(e.problems().size() == 3);
  }
  CHECK_THROWS_AS(parse_config(json::parse(R"({"variance_study": {"targets": ["nope"]}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"seed": -4})")), ConfigError);
}

TEST_CASE("user mixtures are addressable by name") {
  const Config c = parse_config(json::parse(R"({
    "mixtures": {"pair": {"weights": [0.25, 0.75], "means": [[0, 1], [2, 0]], "scales": [0.5, 1]}},
    "weights": {"targets": ["pair"]}
  })"));
  const auto m = c.target("pair");
  CHECK(m.dim == 2);
  CHECK(m.weights[1] == 0.75);
}

TEST_CASE("variance-study: kappa has zero variance on the unit Gaussian, reruns are byte-identical") {
  const Config cfg = small_variance_config();
  const fs::path a = scratch("vs_a"), b = scratch("vs_b");
  REQUIRE(run_command("variance-study", cfg, RunOptions{a, 1}) == 0);
  REQUIRE(run_command("variance-study", cfg, RunOptions{b, 2}) == 0);
  CHECK(slurp(a / "variance_study.csv") == slurp(b / "variance_study.csv"));

  const auto rows = read_csv(a / "variance_study.csv");
  REQUIRE(rows.size() == 1 + 2 * 6 * 4);
  std::size_t kappa_rows = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] == "unit_gaussian" && rows[i][2] == "kappa") {
      CHECK(std::stod(rows[i][3]) <= 1e-12);
      ++kappa_rows;
    }
  }
  CHECK(kappa_rows == 6);

  const json manifest = json::parse(slurp(a / "variance-study.manifest.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["outputs"] == json::array({"variance_study.csv"}));
  CHECK(manifest["config_hash"].get<std::string>().rfind("fnv1a64:", 0) == 0);
}

TEST_CASE("train then sample-eval on a tiny network") {
  const Config cfg = parse_config(json::parse(R"({
    "seed": 9,
    "train": {"kinds": ["kappa_bar"], "iterations": 6, "batch_size": 32, "embed_dim": 4, "hidden": [8],
              "checkpoint_every": 3},
    "sample_eval": {"n_samples": 50, "steps": 20}
  })"));
  const fs::path out = scratch("train");
  REQUIRE(run_command("train", cfg, RunOptions{out, 1}) == 0);
  for (const char* f : {"kappa_bar_0000000.bin", "kappa_bar_0000003.bin", "kappa_bar_0000006.bin"}) {
    CHECK(fs::exists(out / "checkpoints" / f));
  }
  CHECK(read_csv(out / "loss_total.csv").size() == 1 + 6);  // one row per iteration
  REQUIRE(run_command("sample-eval", cfg, RunOptions{out, 1}) == 0);
  const auto mmd = read_csv(out / "mmd.csv");
  REQUIRE(mmd.size() == 1 + 3);
  CHECK(mmd[1][1] == "0");
  CHECK(mmd[3][1] == "6");
}

TEST_CASE("verify passes on the default config") {
  const fs::path out = scratch("verify");
  CHECK(run_command("verify", load_config(TSM_SOURCE_DIR "/configs/default.json"), RunOptions{out, 0}) == 0);
  const auto rows = read_csv(out / "verify.csv");
  std::size_t passed = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) passed += rows[i][1] == "true";
  CHECK(passed >= 12);
  CHECK(passed == rows.size() - 1);
}

TEST_CASE("unknown command is rejected") {
  CHECK_THROWS(run_command("nope", parse_config(json::object()), RunOptions{scratch("nope"), 1}));
}
