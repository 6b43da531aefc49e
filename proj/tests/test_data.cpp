#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "rfl/data.hpp"
#include "rfl/error.hpp"
#include "rfl/supervision.hpp"

using namespace rfl;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.frame_width = 160;
  c.frame_height = 128;
  c.min_target = 20;
  c.max_target = 30;
  return c;
}

ImagePatch random_patch(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  ImagePatch p(side, side);
  for (auto& v : p.data) v = u(rng);
  return p;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("color jitter with zero deltas is the identity") {
  const auto p = random_patch(31, 1);
  std::mt19937_64 rng(2);
  CHECK(augment_color(p, ColorJitter::none(), rng) == p);
}

TEST_CASE("color jitter stays in range and is deterministic") {
  const auto p = random_patch(31, 3);
  ColorJitter strong{0.5, 0.9, 0.9, 0.5};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    const auto x = augment_color(p, strong, a);
    const auto y = augment_color(p, strong, b);
    CHECK(x == y);
    for (float v : x.data) CHECK((v >= 0.f && v <= 1.f));
  }
  std::mt19937_64 a(7), b(8);
  CHECK_FALSE(augment_color(p, ColorJitter{}, a) == augment_color(p, ColorJitter{}, b));
}

TEST_CASE("brightness alone shifts every channel equally before clamping") {
  ImagePatch p(4, 4, 0.5f);
  ColorJitter j = ColorJitter::none();
  j.brightness = 0.1;
  std::mt19937_64 rng(9);
  const auto out = augment_color(p, j, rng);
  const float d = out.data[0] - 0.5f;
  CHECK(std::abs(d) <= 0.1f + 1e-6f);
  for (float v : out.data) CHECK(v == doctest::Approx(0.5f + d));
}

TEST_CASE("first exemplar of a clip is never augmented") {
  const auto seq = synth_sequence(small_config(), 12, 4);
  const Image frame = seq.frame(0);
  const BBox box = *seq.boxes[0];
  const auto plain = extract_patch(frame, crop_region(box, kExemplarContext));
  AugmentConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const auto a = augment_geometry(frame, box, PatchRole::Exemplar, true, cfg, rng);
    CHECK(a.patch == plain);
  }
  std::mt19937_64 rng(1);
  const auto clip = sample_clip(seq, ClipOptions{}, rng);
  CHECK(clip.exemplars[0] == extract_patch(seq.frame(clip.frame_indices[0]),
                                           crop_region(*seq.boxes[clip.frame_indices[0]], kExemplarContext)));
}

TEST_CASE("search translation never exceeds 4 px") {
  const auto seq = synth_sequence(small_config(), 3, 5);
  const Image frame = seq.frame(1);
  const BBox box = *seq.boxes[1];
  std::mt19937_64 rng(6);
  AugmentConfig cfg;
  cfg.color = ColorJitter::none();
  double worst = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto a = augment_geometry(frame, box, PatchRole::Search, false, cfg, rng);
    const double d = std::hypot(a.target_in_patch.cx - kSearchSize / 2.0, a.target_in_patch.cy - kSearchSize / 2.0);
    worst = std::max(worst, d);
    CHECK(a.window.width == doctest::Approx(crop_side(box, kSearchContext)).epsilon(0.05 + 1e-9));
  }
  CHECK(worst <= 4.0);
  CHECK(worst > 3.0);
}

TEST_CASE("exemplar target stays inside the patch over 10k draws") {
  const auto seq = synth_sequence(small_config(), 3, 7);
  const Image frame = seq.frame(2);
  const BBox box = *seq.boxes[2];
  std::mt19937_64 rng(8);
  AugmentConfig cfg;
  cfg.color = ColorJitter::none();
  int inside = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = augment_geometry(frame, box, PatchRole::Exemplar, false, cfg, rng);
    const BBox& t = a.target_in_patch;
    const double eps = 1e-9;
    inside += t.x() >= -eps && t.y() >= -eps && t.right() <= kExemplarSize + eps && t.bottom() <= kExemplarSize + eps;
  }
  CHECK(inside == 10000);
}

TEST_CASE("clip sampling") {
  const auto seq11 = synth_sequence(small_config(), 11, 9);
  ClipOptions opts;
  std::mt19937_64 rng(10);
  const auto all = sample_clip(seq11, opts, rng);
  REQUIRE(all.frame_indices.size() == 11);
  for (std::size_t i = 0; i < 11; ++i) CHECK(all.frame_indices[i] == i);

  const auto seq = synth_sequence(small_config(), 100, 11);
  std::mt19937_64 a(12), b(12);
  const auto c1 = sample_clip(seq, opts, a);
  const auto c2 = sample_clip(seq, opts, b);
  CHECK(c1.frame_indices == c2.frame_indices);
  CHECK(c1.exemplars == c2.exemplars);
  CHECK(c1.searches == c2.searches);
  CHECK(c1.exemplars.size() == 10);
  CHECK(c1.searches.size() == 10);
  CHECK(c1.label_boxes.size() == 10);
  CHECK(std::is_sorted(c1.frame_indices.begin(), c1.frame_indices.end()));
  CHECK(std::adjacent_find(c1.frame_indices.begin(), c1.frame_indices.end()) == c1.frame_indices.end());
  for (const auto& p : c1.exemplars) CHECK((p.width == 127 && p.height == 127));
  for (const auto& p : c1.searches) CHECK((p.width == 255 && p.height == 255));

  opts.length = 11;
  CHECK_THROWS(sample_clip(seq11, opts, rng));
}

TEST_CASE("exemplar k and search k come from consecutive sampled frames") {
  const auto seq = synth_sequence(small_config(), 40, 13);
  ClipOptions opts;
  opts.length = 5;
  opts.augment.enabled = false;
  std::mt19937_64 rng(14);
  const auto clip = sample_clip(seq, opts, rng);
  for (int k = 0; k < 5; ++k) {
    const auto ei = clip.frame_indices[k];
    const auto si = clip.frame_indices[k + 1];
    CHECK(clip.exemplars[k] == extract_patch(seq.frame(ei), crop_region(*seq.boxes[ei], kExemplarContext)));
    CHECK(clip.searches[k] == extract_patch(seq.frame(si), crop_region(*seq.boxes[si], kSearchContext)));
  }
}

TEST_CASE("stored label boxes reproduce the label maps") {
  const auto seq = synth_sequence(small_config(), 40, 15);
  std::mt19937_64 rng(16);
  const auto clip = sample_clip(seq, ClipOptions{}, rng);
  for (int k = 0; k < 10; ++k) {
    const BBox& gt = *seq.boxes[clip.frame_indices[k + 1]];
    const BBox again = clip.search_windows[k].box_to_patch(gt);
    CHECK(groundtruth_map(again) == groundtruth_map(clip.label_boxes[k]));
    CHECK(groundtruth_map(clip.label_boxes[k]).positives() >= 1);
  }
}

TEST_CASE("evenly spaced sampling") {
  const auto seq = synth_sequence(small_config(), 21, 17);
  ClipOptions opts;
  opts.evenly_spaced = true;
  opts.augment.enabled = false;
  std::mt19937_64 rng(18);
  const auto clip = sample_clip(seq, opts, rng);
  for (std::size_t k = 0; k < 11; ++k) CHECK(clip.frame_indices[k] == 2 * k);
}

TEST_CASE("synthetic sequences") {
  const auto cfg = small_config();
  const auto a = synth_sequence(cfg, 30, 21);
  const auto b = synth_sequence(cfg, 30, 21);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(*a.boxes[i] == *b.boxes[i]);
    const BBox& box = *a.boxes[i];
    CHECK(box.x() >= 0);
    CHECK(box.y() >= 0);
    CHECK(box.right() <= cfg.frame_width);
    CHECK(box.bottom() <= cfg.frame_height);
  }
  CHECK(a.frame(17) == b.frame(17));
  CHECK_FALSE(synth_sequence(cfg, 30, 22).frame(0) == a.frame(0));
  CHECK_THROWS(synth_sequence(cfg, 1, 1));

  auto still = cfg;
  still.static_target = true;
  const auto s = synth_sequence(still, 20, 23);
  for (std::size_t i = 1; i < 20; ++i) CHECK(*s.boxes[i] == *s.boxes[0]);

  const auto set = synth_dataset(cfg, 3, 5);
  REQUIRE(set.size() == 3);
  CHECK(set[0].name == "synth_000");
  CHECK(set[2].name == "synth_002");
  CHECK_FALSE(*set[0].boxes[0] == *set[1].boxes[0]);
}

TEST_CASE("hue drift recolours the target and leaves geometry valid") {
  auto cfg = small_config();
  cfg.clutter = 0;
  cfg.background_contrast = 0.0;
  cfg.static_target = true;
  const auto plain = synth_sequence(cfg, 40, 3);
  cfg.static_target = false;
  cfg.max_speed = 0.0;
  cfg.acceleration = 0.0;
  cfg.scale_sigma = 0.0;
  cfg.brightness_drift = 0.0;
  cfg.hue_drift = 0.05;
  const auto drift = synth_sequence(cfg, 40, 3);
  // Same first frame: drift starts at zero.
  CHECK(drift.frame(0) == plain.frame(0));
  const auto b = *drift.boxes[39];
  CHECK(b == *drift.boxes[0]);
  const Image f0 = drift.frame(0), f1 = drift.frame(39);
  const int x = static_cast<int>(b.cx), y = static_cast<int>(b.cy);
  double diff = 0;
  for (int c = 0; c < 3; ++c) diff += std::abs(f0.at(x, y, c) - f1.at(x, y, c));
  CHECK(diff > 1e-3);
  // Background untouched.
  for (int c = 0; c < 3; ++c) CHECK(f0.at(1, 1, c) == f1.at(1, 1, c));
}

TEST_CASE("generator settings round-trip through key-value text") {
  auto cfg = small_config();
  cfg.max_speed = 4.25;
  cfg.static_target = true;
  cfg.hue_drift = 0.0125;
  const auto dir = fresh_dir("rfl_kv_test");
  write_kv_file((dir / "synth.cfg").string(), cfg.to_kv());
  const auto back = SynthConfig::from_kv(read_kv_file((dir / "synth.cfg").string()));
  CHECK(back.to_kv() == cfg.to_kv());
  fs::remove_all(dir);
}

TEST_CASE("OTB sequence ingestion") {
  const auto dir = fresh_dir("rfl_otb_test");
  const auto seq = synth_sequence(small_config(), 3, 31);
  write_otb_sequence(seq, (dir / "seqA").string());
  const auto back = load_otb_sequence((dir / "seqA").string());
  REQUIRE(back.size() == 3);
  CHECK(back.name == "seqA");
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.boxes[i]->cx == doctest::Approx(seq.boxes[i]->cx));
    CHECK(back.boxes[i]->w == doctest::Approx(seq.boxes[i]->w));
  }
  CHECK(back.frame(1).width == 160);

  SUBCASE("tab-separated boxes") {
    std::ofstream(dir / "seqA" / "groundtruth_rect.txt") << "1\t2\t30\t40\n5\t6\t30\t40\n7\t8\t30\t40\n";
    const auto t = load_otb_sequence((dir / "seqA").string());
    CHECK(*t.boxes[1] == BBox::from_corner(5, 6, 30, 40));
  }
  SUBCASE("count mismatch") {
    std::ofstream(dir / "seqA" / "groundtruth_rect.txt") << "1,2,30,40\n5,6,30,40\n";
    CHECK_THROWS_AS(load_otb_sequence((dir / "seqA").string()), FormatError);
  }
  SUBCASE("malformed line") {
    std::ofstream(dir / "seqA" / "groundtruth_rect.txt") << "1,2,30,40\n5,6,abc,40\n7,8,30,40\n";
    CHECK_THROWS_AS(load_otb_sequence((dir / "seqA").string()), FormatError);
  }
  SUBCASE("missing files") {
    CHECK_THROWS_AS(load_otb_sequence((dir / "nope").string()), IoError);
  }
  SUBCASE("dataset scan") {
    write_otb_sequence(seq, (dir / "seqB").string());
    fs::create_directories(dir / "not_a_sequence");
    const auto all = load_otb_dataset(dir.string());
    REQUIRE(all.size() == 2);
    CHECK(all[0].name == "seqA");
    CHECK(all[1].name == "seqB");
  }
  fs::remove_all(dir);
}
