#include "doctest.h"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hdiv/cli.hpp"
#include "hdiv/csv.hpp"
#include "hdiv/parallel.hpp"

using namespace hdiv;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = HDIV_SOURCE_DIR;
const fs::path kData = kSource / "tests" / "data";

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hdiv_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream out;
  write_csv_matrix(out, m);
  return out.str();
}

// The fixture is trial 0 of this configuration.
StudyConfig fixture_config() {
  StudyConfig cfg;
  cfg.n = 30;
  cfg.px = 3;
  cfg.pz = 5;
  cfg.sb = 1;
  cfg.sa = 2;
  cfg.cs_band = 2;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("simulate writes metrics, trial files and a manifest") {
  const fs::path dir = scratch("simulate");
  const Outcome r = invoke({"simulate", "--config", (kSource / "configs" / "smoke.json").string(), "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = split_csv(slurp(dir / "metrics.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == split_csv(std::string(cli::kMetricsHeader))[0]);
  CHECK(rows[1][0] == "40");
  CHECK(rows[1][5] == "CS");
  CHECK(rows[1][9] == "3");
  CHECK(rows[1][10] == "7");
  for (int k : {6, 7, 8}) {
    std::size_t used = 0;
    std::stod(rows[1][static_cast<std::size_t>(k)], &used);
    CHECK(used == rows[1][static_cast<std::size_t>(k)].size());
  }
  CHECK(r.out == slurp(dir / "metrics.csv"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["version"] == cli::kVersion);
  std::multiset<std::string> listed;
  for (const auto& o : manifest["outputs"]) listed.insert(o["path"].get<std::string>());
  std::multiset<std::string> written;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      written.insert(fs::relative(e.path(), dir).generic_string());
  CHECK(listed == written);
  CHECK(listed.count("metrics.csv") == 1);

  // the same run again gives the same bytes
  const fs::path again = scratch("simulate_again");
  REQUIRE(invoke({"simulate", "--config", (kSource / "configs" / "smoke.json").string(), "--out", again.string()}).code == 0);
  CHECK(slurp(again / "metrics.csv") == slurp(dir / "metrics.csv"));
  CHECK(slurp(again / "trials" / "config_000.csv") == slurp(dir / "trials" / "config_000.csv"));
}

TEST_CASE("seed override changes only the seed") {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  const std::string cfg = (kSource / "configs" / "smoke.json").string();
  REQUIRE(invoke({"simulate", "--config", cfg, "--out", a.string(), "trials=1"}).code == 0);
  REQUIRE(invoke({"simulate", "--config", cfg, "--out", b.string(), "trials=1", "--seed", "42"}).code == 0);
  auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  CHECK(mb["seed"] == 42);
  CHECK(mb["config"]["seed"] == 42);
  for (auto* m : {&ma, &mb}) {
    m->erase("seed");
    m->erase("started_at");
    m->erase("finished_at");
    (*m)["config"].erase("seed");
  }
  CHECK(ma == mb);
  CHECK(split_csv(slurp(a / "metrics.csv"))[0] == split_csv(slurp(b / "metrics.csv"))[0]);
}

TEST_CASE("full table grid expands to eighteen configurations") {
  const cli::StudyGrid grid = cli::load_grid_file((kSource / "configs" / "table_full.json").string());
  CHECK(grid.configs.size() == 18);
  const Outcome r = invoke({"simulate", "--config", (kSource / "configs" / "table_full.json").string(), "--out",
                            scratch("dry").string(), "--dry-run"});
  CHECK(r.code == 0);
  CHECK(split_csv(r.out).size() == 19);
}

TEST_CASE("configuration errors exit with 2") {
  const fs::path dir = scratch("bad");
  spit(dir / "empty.json", R"({"sizes": [], "sparsities": [[3,5]], "structures": ["CS"]})");
  Outcome r = invoke({"simulate", "--config", (dir / "empty.json").string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("no configurations") != std::string::npos);

  spit(dir / "unknown.json", R"({"sizes": [[40,12,16]], "sparsities": [[2,3]], "structures": ["CS"], "colour": 1})");
  CHECK(invoke({"simulate", "--config", (dir / "unknown.json").string(), "--out", dir.string()}).code == 2);
  spit(dir / "broken.json", "{ not json");
  CHECK(invoke({"simulate", "--config", (dir / "broken.json").string(), "--out", dir.string()}).code == 2);
  spit(dir / "shape.json", R"({"sizes": [[40,20,16]], "sparsities": [[2,3]], "structures": ["CS"]})");
  r = invoke({"simulate", "--config", (dir / "shape.json").string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("p_x") != std::string::npos);
  const std::string smoke = (kSource / "configs" / "smoke.json").string();
  CHECK(invoke({"simulate", "--config", smoke, "--out", dir.string(), "--alpha", "1.5"}).code == 2);
  CHECK(invoke({"simulate", "--config", smoke, "--out", dir.string(), "--se-mode", "sandwich"}).code == 2);
  CHECK(invoke({"simulate", "--config", smoke, "--out", dir.string(), "structures=[\"XX\"]"}).code == 2);
  CHECK(invoke({"simulate", "--config", (dir / "missing.json").string(), "--out", dir.string()}).code == 2);
  CHECK(invoke({"simulate", "--config", smoke}).code == 2);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({"fit", "--help"}).code == 0);
}

TEST_CASE("study failures exit with 1") {
  const fs::path dir = scratch("fail");
  // Colliding single-instrument supports make A^T Sigma_z A singular, so the
  // remainder diagnostics fail in every trial.
  spit(dir / "singular.json",
       R"({"sizes": [[40,12,12]], "sparsities": [[2,1]], "structures": ["CS"], "cs_band": 2, "trials": 2})");
  const Outcome r = invoke({"simulate", "--config", (dir / "singular.json").string(), "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("StudyFailed") != std::string::npos);
}

TEST_CASE("fixture data come from the simulator") {
  const StudyConfig cfg = fixture_config();
  const IvModel model = make_model(cfg);
  Rng rng = trial_stream(cfg.seed, 0).split(0);
  const TrialData d = draw_trial_data(model, cfg.n, rng);
  CHECK(slurp(kData / "fit_y.csv") == matrix_csv(Matrix(d.y)));
  CHECK(slurp(kData / "fit_x.csv") == matrix_csv(d.X));
  CHECK(slurp(kData / "fit_z.csv") == matrix_csv(d.Z));
}

TEST_CASE("fit matches the library and the golden record") {
  const std::vector<std::string> files = {"--y", (kData / "fit_y.csv").string(), "--x", (kData / "fit_x.csv").string(),
                                          "--z", (kData / "fit_z.csv").string()};
  const Outcome r = invoke([&] {
    std::vector<std::string> a{"fit"};
    a.insert(a.end(), files.begin(), files.end());
    return a;
  }());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out == slurp(kData / "fit_golden.csv"));

  const Vector y = read_csv_matrix((kData / "fit_y.csv").string()).col(0);
  const Matrix X = read_csv_matrix((kData / "fit_x.csv").string());
  const Matrix Z = read_csv_matrix((kData / "fit_z.csv").string());
  CHECK(r.out == cli::fit_table(y, X, Z, {}));

  // alpha defaults to 0.05
  std::vector<std::string> explicit_alpha{"fit", "--alpha", "0.05"};
  explicit_alpha.insert(explicit_alpha.end(), files.begin(), files.end());
  CHECK(invoke(explicit_alpha).out == r.out);
  std::vector<std::string> other_alpha{"fit", "--alpha", "0.1"};
  other_alpha.insert(other_alpha.end(), files.begin(), files.end());
  CHECK(invoke(other_alpha).out != r.out);

  // written to a file
  const fs::path dir = scratch("fit");
  std::vector<std::string> to_file{"fit", "--out", (dir / "table.csv").string()};
  to_file.insert(to_file.end(), files.begin(), files.end());
  CHECK(invoke(to_file).code == 0);
  CHECK(slurp(dir / "table.csv") == r.out);
}

TEST_CASE("fit input errors exit with 2") {
  const fs::path dir = scratch("fit_bad");
  const std::string y = (kData / "fit_y.csv").string();
  const std::string x = (kData / "fit_x.csv").string();
  const std::string z = (kData / "fit_z.csv").string();
  // X with more columns than Z
  CHECK(invoke({"fit", "--y", y, "--x", z, "--z", x}).code == 2);
  spit(dir / "ragged.csv", "1,2\n3\n");
  const Outcome ragged = invoke({"fit", "--y", y, "--x", (dir / "ragged.csv").string(), "--z", z});
  CHECK(ragged.code == 2);
  CHECK(ragged.err.find("ragged.csv:2") != std::string::npos);
  spit(dir / "short.csv", "1\n2\n3\n");
  CHECK(invoke({"fit", "--y", (dir / "short.csv").string(), "--x", x, "--z", z}).code == 2);
  CHECK(invoke({"fit", "--y", x, "--x", x, "--z", z}).code == 2);
  CHECK(invoke({"fit", "--y", y, "--x", x, "--z", z, "--se-mode", "bogus"}).code == 2);
  CHECK(invoke({"fit", "--y", y, "--x", x, "--z", z, "--alpha", "0"}).code == 2);
  CHECK(invoke({"fit", "--y", y, "--x", x}).code == 2);
}

TEST_CASE("diagnose reports the remainder terms") {
  const std::string cfg = (kSource / "configs" / "smoke.json").string();
  Outcome r = invoke({"diagnose", "--config", cfg});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto doc = nlohmann::json::parse(r.out);
  CHECK(doc["reconstruction_gap"].get<double>() <= 1e-8);
  for (const char* k : {"main_term_inf", "rem1_inf", "rem2_inf", "rem3_inf", "rem4_inf", "scaled_error_inf"})
    CHECK(doc.contains(k));
  CHECK(doc["rem2_inf"].get<double>() > 0.0);

  r = invoke({"diagnose", "--config", cfg, "--oracle-first-stage"});
  REQUIRE(r.code == 0);
  doc = nlohmann::json::parse(r.out);
  CHECK(doc["oracle_first_stage"] == true);
  CHECK(doc["rem2_inf"].get<double>() <= 1e-12);
  CHECK(doc["reconstruction_gap"].get<double>() <= 1e-8);

  CHECK(invoke({"diagnose", "--config", cfg, "--index", "5"}).code == 2);
}

TEST_CASE("thread count falls back to HDIV_THREADS") {
  ::setenv("HDIV_THREADS", "3", 1);
  CHECK(resolve_threads(0) == 3);
  CHECK(resolve_threads(2) == 2);
  ::unsetenv("HDIV_THREADS");
  CHECK(resolve_threads(0) == 1);
}
