#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kBin = PIPCFR_BIN;

int run(const std::string& args) {
  const std::string cmd = kBin + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub) const { return (path / sub).string(); }
};

}  // namespace

TEST_CASE("generate: split arithmetic and determinism") {
  TempDir dir("pipcfr_cli_gen");
  const std::string common =
      "generate --kind example1 --n 1000 --seed 7 --out ";
  REQUIRE(run(common + dir.str("a")) == 0);
  REQUIRE(run(common + dir.str("b")) == 0);

  auto lines = [&](const std::string& p) {
    std::ifstream f(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(f, line)) ++n;
    return n;
  };
  CHECK(lines(dir.str("a/train.csv")) == 601);  // header + 600
  CHECK(lines(dir.str("a/val.csv")) == 201);
  CHECK(lines(dir.str("a/test.csv")) == 201);

  // byte-identical reruns; resolved configs differ only in out.dir
  CHECK(slurp(dir.str("a/train.csv")) == slurp(dir.str("b/train.csv")));
  CHECK(slurp(dir.str("a/val.csv")) == slurp(dir.str("b/val.csv")));
  CHECK(slurp(dir.str("a/test.csv")) == slurp(dir.str("b/test.csv")));
  auto strip_out = [](std::string text) {
    const std::size_t pos = text.find("out.dir");
    if (pos != std::string::npos) text.erase(pos, text.find('\n', pos) - pos);
    return text;
  };
  CHECK(strip_out(slurp(dir.str("a/resolved.cfg"))) ==
        strip_out(slurp(dir.str("b/resolved.cfg"))));
}

TEST_CASE("train/eval pipeline with checkpoint reuse") {
  TempDir dir("pipcfr_cli_train");
  REQUIRE(run("generate --kind example1 --n 400 --seed 3 --out " + dir.str("data")) == 0);
  const std::string train_cmd =
      "train --train-data " + dir.str("data/train.csv") + " --val-data " +
      dir.str("data/val.csv") +
      " --method PIPCFR_MMD --epochs 3 --batch-size 80 --seed 5 --out ";
  REQUIRE(run(train_cmd + dir.str("runA")) == 0);
  REQUIRE(run(train_cmd + dir.str("runB")) == 0);
  CHECK(slurp(dir.str("runA/checkpoint.json")) == slurp(dir.str("runB/checkpoint.json")));

  REQUIRE(run("eval --checkpoint " + dir.str("runA/checkpoint.json") + " --test-data " +
              dir.str("data/test.csv") + " --out " + dir.str("ev")) == 0);
  const std::string metrics = slurp(dir.str("ev/metrics.json"));
  CHECK(metrics.find("pehe_out") != std::string::npos);
}

TEST_CASE("eval: checkpoint/data dimension mismatch fails with a clear error") {
  TempDir dir("pipcfr_cli_dim");
  REQUIRE(run("generate --kind example1 --n 300 --seed 4 --out " + dir.str("d1")) == 0);
  REQUIRE(run("generate --kind temporal --n 300 --K 5 --feat-dim 3 --seed 4 --out " +
              dir.str("d2")) == 0);
  REQUIRE(run("train --train-data " + dir.str("d1/train.csv") + " --val-data " +
              dir.str("d1/val.csv") + " --method TARNET --epochs 2 --batch-size 60 --out " +
              dir.str("run")) == 0);
  CHECK(run("eval --checkpoint " + dir.str("run/checkpoint.json") + " --test-data " +
            dir.str("d2/test.csv") + " --out " + dir.str("ev")) == 2);
}

TEST_CASE("exit codes: usage and runtime errors") {
  CHECK(run("definitely-not-a-subcommand") == 1);
  CHECK(run("train") == 2);          // missing required paths
  CHECK(run("generate --kind nope") == 2);
  TempDir dir("pipcfr_cli_oracle");
  CHECK(run("oracle --n-mc 10 --out " + dir.str("o")) == 2);  // n_mc below floor
}

TEST_CASE("sweep and report run end to end") {
  TempDir dir("pipcfr_cli_sweep");
  REQUIRE(run("sweep --kind temporal --n 200 --K 4 --feat-dim 2 --methods TARNET "
              "--seeds 1,2 --epochs 2 --batch-size 60 --patience 0 --out " +
              dir.str("sw")) == 0);
  CHECK(fs::exists(dir.str("sw/aggregate.csv")));
  REQUIRE(run("report --dir " + dir.str("sw") + " --out " + dir.str("report.txt")) == 0);
  const std::string rep = slurp(dir.str("report.txt"));
  CHECK(rep.find("TARNET") != std::string::npos);
  CHECK(rep.find("+-") != std::string::npos);
}

TEST_CASE("config file values are overridden by flags") {
  TempDir dir("pipcfr_cli_cfg");
  {
    std::ofstream f(dir.str("base.cfg"));
    f << "data.kind = example1\ndata.n = 250\ndata.seed = 11\n";
  }
  REQUIRE(run("--config " + dir.str("base.cfg") + " generate --n 300 --out " +
              dir.str("g")) == 0);
  const std::string resolved = slurp(dir.str("g/resolved.cfg"));
  CHECK(resolved.find("data.n = 300") != std::string::npos);
  CHECK(resolved.find("data.seed = 11") != std::string::npos);
}
