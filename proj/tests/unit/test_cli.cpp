#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "nits/checkpoint.hpp"
#include "nits/data.hpp"
#include "nits/error.hpp"
#include "nits/model.hpp"
#include "nits/rng.hpp"

using namespace nits;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nits_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

// A perturbed model saved to disk, with a data-unit transform.
std::string saved_model(std::size_t dims) {
  ModelConfig cfg;
  cfg.hidden_dim = 8;
  cfg.residual_blocks = 1;
  std::vector<Bounds> bounds(dims, Bounds{-3.0, 3.0});
  AffineMap map{std::vector<double>(dims, 1.0), std::vector<double>(dims, 2.0)};
  NitsModel m(cfg, bounds, 3, map);
  WeightModel& wm = m.weight_model();
  std::vector<double> phi(wm.params().begin(), wm.params().end());
  Rng rng = make_stream(3, 5);
  for (std::size_t k = 0; k < phi.size(); ++k) phi[k] += 0.2 * standard_normal(rng) * wm.param_mask()[k];
  wm.set_params(phi);
  const auto path = scratch("model" + std::to_string(dims) + ".nits");
  checkpoint::save(m, path);
  return path.string();
}

std::vector<std::vector<double>> read_rows(const std::string& path) {
  std::ifstream in(path);
  const Matrix m = data::read_csv(in, {true, ','});
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"train", "--synthetic", "gmm2"}).code == cli::kUsage);
  CHECK(run({"fly"}).code == cli::kUsage);
  const Run r = run({"train", "--synthetic", "gmm2", "--out", "x", "--lernrate", "0.1"});
  CHECK(r.code == cli::kUsage);
  const Run typo = run({"train", "--synthetic", "gmm2", "--out", "x", "--batch-sise=3"});
  CHECK(typo.code == cli::kUsage);
  CHECK(typo.err.find("did you mean --batch-size") != std::string::npos);
  CHECK(run({"train", "--synthetic", "gmm3", "--out", "x"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("exit codes through the installed binary") {
  CHECK(std::system(NITS_TOOL " --help > /dev/null") == 0);
  const int status = std::system(NITS_TOOL " sample --n 3 > /dev/null 2>&1");
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("suggestions and config merging") {
  CHECK(cli::suggest("--lr", {"--lr", "--n"}) == "--lr");
  CHECK(cli::suggest("--paitence", {"--patience", "--dropout"}) == "--patience");
  CHECK(cli::suggest("--zzzzzzzzzzzz", {"--n"}).empty());

  const auto merged = cli::merge_config({"train", "--lr", "0.5"},
                                        "# comment\nlr = 0.1\n\nbatch-size=64\n");
  CHECK(merged == std::vector<std::string>{"train", "--lr", "0.5", "--batch-size=64"});
  CHECK_THROWS_AS(cli::merge_config({}, "novalue\n"), UsageError);
}

TEST_CASE("density grid: row counts, values and dims checks") {
  const std::string model = saved_model(2);
  const std::string out = scratch("grid.csv").string();
  REQUIRE(run({"density-grid", "--model", model, "--resolution", "2", "--out", out}).code == 0);
  auto rows = read_rows(out);
  REQUIRE(rows.size() == 2);
  // Endpoints are the data-unit bounds: 1 + 2 * (-3) and 1 + 2 * 3.
  CHECK(rows[0][0] == -5.0);
  CHECK(rows[1][0] == 7.0);

  REQUIRE(run({"density-grid", "--model", model, "--resolution", "5", "--dims", "2,1", "--at",
               "0.5,-1", "--out", out})
              .code == 0);
  rows = read_rows(out);
  REQUIRE(rows.size() == 25);
  const NitsModel m = checkpoint::load(model);
  for (const auto& r : rows) CHECK(r[2] == m.log_likelihood(std::vector<double>{r[1], r[0]}));

  CHECK(run({"density-grid", "--model", model, "--dims", "3", "--out", out}).code == cli::kUsage);
  CHECK(run({"density-grid", "--model", model, "--dims", "1,1", "--out", out}).code == cli::kUsage);
  CHECK(run({"density-grid", "--model", model, "--resolution", "1", "--out", out}).code ==
        cli::kUsage);
}

TEST_CASE("1D density grid integrates to one") {
  const std::string model = saved_model(1);
  const std::string out = scratch("grid1.csv").string();
  REQUIRE(run({"density-grid", "--model", model, "--resolution", "10000", "--out", out}).code == 0);
  const auto rows = read_rows(out);
  double mass = 0.0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    mass += 0.5 * (rows[k][0] - rows[k - 1][0]) * (std::exp(rows[k][1]) + std::exp(rows[k - 1][1]));
  }
  CHECK(std::abs(mass - 1.0) < 1e-3);
}

TEST_CASE("train, nll and sample end to end") {
  const std::string model = scratch("trained.nits").string();
  const Run t = run({"--seed", "4", "train", "--synthetic", "gmm2", "--n", "300", "--out", model,
                     "--max-epochs", "2", "--batch-size", "50", "--lr", "1e-2"});
  REQUIRE(t.code == 0);
  CHECK(t.out.find("best val NLL:") != std::string::npos);
  CHECK(fs::exists(model + ".report.jsonl"));

  const Run n = run({"--seed", "4", "nll", "--model", model, "--synthetic", "gmm2", "--n", "300"});
  CHECK(n.code == 0);
  CHECK(n.out.starts_with("mean NLL: "));
  CHECK(n.out.find("bits/dim: ") != std::string::npos);
  CHECK(n.out.find("rows used: 30\n") != std::string::npos);

  const std::string samples = scratch("samples.csv").string();
  const Run s = run({"--seed", "9", "sample", "--model", model, "--n", "20", "--out", samples});
  CHECK(s.code == 0);
  std::ifstream in(samples);
  CHECK(data::read_csv(in).rows() == 20);

  CHECK(run({"nll", "--model", scratch("missing.nits").string(), "--synthetic", "gmm2"}).code ==
        cli::kFailure);
}

TEST_CASE("verify runs a chosen subset") {
  const Run r = run({"verify", "--only", "2,9"});
  CHECK(r.code == 0);
  CHECK(r.out.find("[PASS]  2") != std::string::npos);
  CHECK(r.out.find("[PASS]  9") != std::string::npos);
  CHECK(r.out.find("2/2 checks passed") != std::string::npos);
  CHECK(run({"verify", "--quick", "--full"}).code == cli::kUsage);
}
