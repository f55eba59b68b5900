#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

#include "bima/report.hpp"

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(BIMA_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST_CASE("itr subcommand") {
  CHECK(cli("itr --acc 1 --classes 12 --window 1").out == "215.10\n");
  CHECK(cli("itr --acc 0.7866 --classes 12 --window 0.75").out == "167.90\n");
  CHECK(cli("itr --acc 0.05 --classes 12 --window 1").out == "0.00\n");
  CHECK(cli("itr --acc 1 --classes 2 --window 0.5 --gaze 0.5").out == "60.00\n");
  CHECK(cli("itr --acc 1.5 --classes 12 --window 1").code == 2);
  CHECK(cli("itr --acc 0.5 --classes 1 --window 1").code == 2);
  CHECK(cli("itr --acc 0.5 --classes 12").code == 2);
}

TEST_CASE("help and usage errors") {
  CHECK(cli("--help").code == 0);
  CHECK(cli("loso --help").code == 0);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("itr --acc abc --classes 12 --window 1").code == 2);
  CHECK(cli("--backend sse9 itr --acc 1 --classes 2 --window 1").code != 0);
}

TEST_CASE("verify subcommand passes and catches an injected fault") {
  const auto ok = cli("verify");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("all checks passed") != std::string::npos);
  const auto bad = cli("verify --inject-softmax-fault");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  CHECK(cli("--backend scalar verify").code == 0);
}

TEST_CASE("synth, train, eval and loso end to end") {
  const auto dir = std::filesystem::temp_directory_path() / "bima_test_cli";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string d = dir.string();
  {
    std::ofstream(dir / "cfg.json") << R"({"spectral": {"resolution_hz": 0.5, "band_low_hz": 8, "band_high_hz": 32},
                                          "train": {"batch_size": 4}})";
  }
  REQUIRE(cli("synth --out " + d + "/data --subjects 3 --classes 9,11,13 --trials-per-class 2 --fs 128 --channels 4 "
              "--seed 5")
              .code == 0);
  CHECK(std::filesystem::exists(dir / "data" / "subject_3.eegb"));
  CHECK(cli("synth --out " + d + "/bad --classes 9,80 --fs 128").code == 2);

  const std::string common = " --config " + d + "/cfg.json --data " + d + "/data --epochs 2 --seed 1";
  REQUIRE(cli("train" + common + " --out " + d + "/m.ckpt --log " + d + "/train.jsonl").code == 0);
  std::ifstream log(dir / "train.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 2);

  const auto ev = cli("eval --model " + d + "/m.ckpt --data " + d + "/data --report " + d + "/eval.json");
  CHECK(ev.code == 0);
  CHECK(bima::eval::read_report(dir / "eval.json").folds.size() == 3);

  CHECK(cli("loso" + common + " --jobs 1 --report " + d + "/a.json").code == 0);
  CHECK(cli("loso" + common + " --jobs 3 --report " + d + "/b.json").code == 0);
  CHECK(bima::eval::read_report(dir / "a.json") == bima::eval::read_report(dir / "b.json"));
  CHECK(cli("ablate" + common + " --disable pe,mask --report " + d + "/c.csv").code == 0);
  CHECK(std::filesystem::exists(dir / "c.csv"));
  CHECK(cli("ablate" + common + " --disable sa,na").code == 1);
  CHECK(cli("loso" + common + " --disable bogus").code != 0);
  std::filesystem::remove_all(dir);
}
