#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "rfl/evalbench.hpp"
#include "rfl/geometry.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "rfl_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RFL_CLI_PATH) + " " + args + " > " + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t count = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++count;
    const auto other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
  }
  std::size_t other_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other_count += e.is_regular_file();
  return count > 0 && count == other_count;
}

struct Workspace {
  Workspace() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
};

const Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("synth is deterministic") {
  workspace();
  REQUIRE(run_cli("synth --out " + (kRoot / "s1").string() + " --n 2 --seed 5 --length 6") == 0);
  REQUIRE(run_cli("synth --out " + (kRoot / "s2").string() + " --n 2 --seed 5 --length 6") == 0);
  CHECK(same_tree(kRoot / "s1", kRoot / "s2"));
  const auto seqs = rfl::load_otb_dataset((kRoot / "s1").string());
  REQUIRE(seqs.size() == 2);
  CHECK(seqs[0].size() == 6);
}

TEST_CASE("eval scores ground-truth results as an oracle") {
  workspace();
  const auto data = kRoot / "oracle";
  REQUIRE(run_cli("synth --out " + data.string() + " --n 3 --seed 9 --length 5") == 0);
  const auto results = kRoot / "oracle_results";
  fs::create_directories(results);
  for (const auto& s : rfl::load_otb_dataset(data.string()))
    fs::copy_file(data / s.name / "groundtruth_rect.txt", results / (s.name + ".txt"));
  const auto out = kRoot / "oracle_eval";
  REQUIRE(run_cli("eval --dataset " + data.string() + " --results " + results.string() + " --out " + out.string()) == 0);
  const auto summary = rfl::parse_summary_json(slurp(out / "summary.json"));
  CHECK(summary.auc == doctest::Approx(100.0 / 101.0).epsilon(1e-12));
  CHECK(summary.frac_iou_ge_half == 1.0);
  CHECK(fs::exists(out / "curve.csv"));
}

TEST_CASE("train, inspect and track") {
  workspace();
  const auto run = kRoot / "run";
  REQUIRE(run_cli("train --synth-n 1 --synth-length 6 --widths desk --hidden 8 --iters 1 --batch-size 1 --clip-len 2 --out " +
              run.string()) == 0);
  REQUIRE(fs::exists(run / "model.rfl"));
  CHECK(fs::exists(run / "loss.csv"));
  CHECK(run_cli("inspect --ckpt " + (run / "model.rfl").string()) == 0);
  CHECK(slurp(kRoot / "last.log").find("parameters") != std::string::npos);

  const auto data = kRoot / "trk";
  REQUIRE(run_cli("synth --out " + data.string() + " --n 1 --seed 3 --length 4") == 0);
  const auto seq = rfl::load_otb_dataset(data.string()).at(0);
  const auto boxes = kRoot / "boxes.txt";
  REQUIRE(run_cli("track --seq " + (data / seq.name).string() + " --ckpt " + (run / "model.rfl").string() + " --out " +
              boxes.string()) == 0);
  const auto tracked = rfl::read_box_file(boxes.string());
  CHECK(tracked.size() == seq.size());
  CHECK(rfl::iou(*tracked[0], *seq.boxes[0]) == doctest::Approx(1.0));
}

TEST_CASE("exit codes") {
  workspace();
  CHECK(run_cli("") == 1);
  CHECK(run_cli("bogus") == 1);
  CHECK(run_cli("train --iters 3") == 1);
  CHECK(run_cli("track --seq /nonexistent --ckpt /nonexistent") == 1);
  const auto junk = kRoot / "junk.rfl";
  std::ofstream(junk) << "not a checkpoint";
  CHECK(run_cli("inspect --ckpt " + junk.string()) == 2);
  const auto empty = kRoot / "empty_dataset";
  fs::create_directories(empty);
  CHECK(run_cli("eval --dataset " + empty.string() + " --results " + empty.string()) == 2);
}
