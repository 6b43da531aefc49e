#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rfl/geometry.hpp"
#include "rfl/image.hpp"

namespace rfl {

class SynthScene;

// One video: frames on disk or rendered from a synthetic scene, plus per-frame ground truth.
// Frames without an annotation carry nullopt.
struct SequenceRecord {
  std::string name;
  std::vector<std::string> frame_paths;
  std::shared_ptr<const SynthScene> synthetic;
  std::vector<std::optional<BBox>> boxes;
  std::vector<std::string> attributes;

  std::size_t size() const { return boxes.size(); }
  Image frame(std::size_t index) const;
};

// Appearance and motion ranges of the synthetic sequence generator. Serialized as
// "key = value" lines.
struct SynthConfig {
  int frame_width = 256;
  int frame_height = 256;
  int length = 100;
  double min_target = 28.0;       // target side range, pixels
  double max_target = 44.0;
  double max_aspect = 1.5;        // long side / short side
  double max_speed = 3.0;         // pixels per frame
  double acceleration = 0.5;      // velocity random-walk step, pixels per frame^2
  double scale_sigma = 0.005;     // per-frame log-scale random walk
  double min_scale = 0.85;
  double max_scale = 1.2;
  double brightness_drift = 0.01; // per-frame target brightness random walk
  double hue_drift = 0.0;         // per-frame target hue random walk, turns
  int clutter = 6;                // static distractor shapes
  double background_contrast = 0.25;
  bool static_target = false;

  std::map<std::string, std::string> to_kv() const;
  static SynthConfig from_kv(const std::map<std::string, std::string>& kv);
};

std::map<std::string, std::string> read_kv_file(const std::string& path);
void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv);

SequenceRecord synth_sequence(const SynthConfig& cfg, int length, std::uint64_t seed);

// `count` sequences named synth_000, synth_001, ... with seeds derived from `seed`.
std::vector<SequenceRecord> synth_dataset(const SynthConfig& cfg, int count, std::uint64_t seed);

// <dir>/img/*.{jpg,png} + <dir>/groundtruth_rect.txt.
SequenceRecord load_otb_sequence(const std::string& dir);
// Every subdirectory that contains groundtruth_rect.txt, sorted by name.
std::vector<SequenceRecord> load_otb_dataset(const std::string& root);
// Writes img/0001.png ... and groundtruth_rect.txt under dir.
void write_otb_sequence(const SequenceRecord& seq, const std::string& dir);

struct ColorJitter {
  double brightness = 32.0 / 255.0;  // additive, +/-
  double contrast = 0.5;             // factor in [1 - c, 1 + c]
  double saturation = 0.5;           // factor in [1 - s, 1 + s]
  double hue = 0.05;                 // hue rotation in turns, +/-

  static ColorJitter none() { return {0, 0, 0, 0}; }
};

struct AugmentConfig {
  bool enabled = true;
  ColorJitter color;
  double search_shift = 4.0;      // patch pixels
  double search_stretch = 0.05;   // fraction of target size
  double exemplar_stretch = 0.5;
};

// Applies brightness, contrast, saturation and hue (YIQ rotation) jitter in random order, then
// clamps to [0, 1].
ImagePatch augment_color(const ImagePatch& patch, const ColorJitter& jitter, std::mt19937_64& rng);

enum class PatchRole { Exemplar, Search };

struct AugmentedPatch {
  ImagePatch patch;
  CropWindow window;
  BBox target_in_patch;
};

// Crops the exemplar (context 2, 127 px) or search (context 4, 255 px) patch around `target`
// with random translation and stretch. The first exemplar of a clip is returned unaugmented.
AugmentedPatch augment_geometry(const Image& frame, const BBox& target, PatchRole role, bool first_in_clip,
                                const AugmentConfig& cfg, std::mt19937_64& rng);

struct Clip {
  std::vector<ImagePatch> exemplars;   // frames 1..N
  std::vector<ImagePatch> searches;    // frames 2..N+1
  std::vector<BBox> label_boxes;       // target in search-patch coordinates
  std::vector<CropWindow> search_windows;
  std::vector<std::size_t> frame_indices;  // N + 1 ascending indices
};

struct ClipOptions {
  int length = 10;
  bool evenly_spaced = false;
  AugmentConfig augment;
};

// Samples length + 1 annotated frames (uniformly without replacement, sorted) and crops the
// exemplar/search pairs. Throws when the sequence has fewer than length + 1 annotated frames.
Clip sample_clip(const SequenceRecord& seq, const ClipOptions& opts, std::mt19937_64& rng);

}  // namespace rfl
