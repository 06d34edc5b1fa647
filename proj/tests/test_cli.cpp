#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "sst_test_cli";

int sst(const std::string& args) {
  const std::string cmd = std::string(SST_CLI_PATH) + " " + args + " > " + (kTmp / "stdout.txt").string() +
                          " 2> " + (kTmp / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Scratch {
  Scratch() {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Scratch, "usage errors exit 1") {
  CHECK(sst("") == 1);
  CHECK(sst("frobnicate") == 1);
  CHECK(sst("run --mode telepathy") == 1);
  CHECK(sst("run --fragment-size 0") == 1);
  CHECK(sst("run --dataset " + (kTmp / "missing").string()) == 1);
  CHECK(sst("eval --pred " + (kTmp / "missing.ply").string()) == 1);
  CHECK(sst("--help") == 0);
}

TEST_CASE_FIXTURE(Scratch, "zero frames report an empty sequence") {
  CHECK(sst("run --mode classical --frames 0") == 1);
  CHECK(slurp(kTmp / "stderr.txt").find("empty sequence") != std::string::npos);
}

TEST_CASE_FIXTURE(Scratch, "synth-gen, run and eval round trip") {
  const fs::path ds = kTmp / "ds", out = kTmp / "out";
  REQUIRE(sst("synth-gen --frames 10 --out " + ds.string()) == 0);
  CHECK(fs::exists(ds / "intrinsics.txt"));
  CHECK(fs::exists(ds / "scene.json"));

  const fs::path cfg = kTmp / "cfg.json";
  std::ofstream(cfg) << R"({"mode": "classical", "fragment_size": 9})";
  REQUIRE(sst("run --config " + cfg.string() + " --dataset " + ds.string() + " --out " + out.string()) == 0);
  for (const char* f : {"mesh.ply", "volume_l0.sstv", "volume_l1.sstv", "volume_l2.sstv", "timing.json"})
    CHECK(fs::exists(out / f));
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report.at("fragments").size() == 2);

  const fs::path metrics = kTmp / "metrics.json";
  REQUIRE(sst("eval --pred " + (out / "mesh.ply").string() + " --dataset " + ds.string() + " --tau 0.04 --out " +
              metrics.string()) == 0);
  const auto m = nlohmann::json::parse(slurp(metrics));
  CHECK(m.at("fscore").get<double>() >= 0.9);
  CHECK(m.at("per_view").size() == 10);

  REQUIRE(sst("eval --pred " + (out / "mesh.ply").string() + " --gt " + (out / "mesh.ply").string()) == 0);
  CHECK(nlohmann::json::parse(slurp(kTmp / "stdout.txt")).at("fscore").get<double>() > 0.99);

  // A pose file one line short no longer matches the frame count.
  std::string poses = slurp(ds / "poses.txt");
  poses.erase(poses.rfind('\n', poses.size() - 2) + 1);
  std::ofstream(ds / "poses.txt") << poses;
  CHECK(sst("run --mode classical --dataset " + ds.string()) == 1);
  CHECK(slurp(kTmp / "stderr.txt").find("mismatch") != std::string::npos);
}

TEST_CASE_FIXTURE(Scratch, "bad config and weights are input errors") {
  const fs::path cfg = kTmp / "bad.json";
  std::ofstream(cfg) << "{not json";
  CHECK(sst("run --config " + cfg.string()) == 1);
  const fs::path w = kTmp / "w.sstw";
  std::ofstream(w) << "SSTW garbage";
  CHECK(sst("run --frames 2 --downsample 2 --weights " + w.string()) == 1);
}

TEST_CASE_FIXTURE(Scratch, "learned run and bench") {
  const fs::path w = kTmp / "w.sstw", out = kTmp / "learned";
  REQUIRE(sst("run --frames 2 --downsample 2 --seed 3 --save-weights " + w.string() + " --out " + out.string()) ==
          0);
  CHECK(fs::exists(w));
  CHECK(fs::exists(out / "volume_l0.sstv"));
  REQUIRE(sst("run --frames 2 --downsample 2 --weights " + w.string()) == 0);
  const int code = sst("bench --mode classical --frames 3 --repeats 1 --scales 1,1.26 --out " +
                       (kTmp / "bench.json").string());
  CHECK((code == 0 || code == 2));
  const auto b = nlohmann::json::parse(slurp(kTmp / "bench.json"));
  CHECK(b.at("rows").size() == 2);
  CHECK(b.at("within_bound").get<bool>() == (code == 0));
}
