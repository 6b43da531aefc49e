#include "rfl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "rfl/error.hpp"
#include "synth_scene.hpp"

namespace fs = std::filesystem;

namespace rfl {

Image SequenceRecord::frame(std::size_t index) const {
  if (index >= size()) throw Error("frame index " + std::to_string(index) + " out of range");
  if (synthetic) return synthetic->render(index);
  return load_image(frame_paths.at(index));
}

SequenceRecord load_otb_sequence(const std::string& dir) {
  const fs::path root(dir);
  const fs::path img_dir = root / "img";
  const fs::path gt_path = root / "groundtruth_rect.txt";
  if (!fs::is_directory(img_dir)) throw IoError("missing image folder " + img_dir.string());
  if (!fs::is_regular_file(gt_path)) throw IoError("missing ground truth " + gt_path.string());

  SequenceRecord rec;
  rec.name = root.filename().string();
  if (rec.name.empty()) rec.name = root.parent_path().filename().string();
  for (const auto& entry : fs::directory_iterator(img_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp") {
      rec.frame_paths.push_back(entry.path().string());
    }
  }
  std::sort(rec.frame_paths.begin(), rec.frame_paths.end());
  rec.boxes = read_box_file(gt_path.string());
  if (rec.boxes.size() != rec.frame_paths.size()) {
    throw FormatError(rec.name + ": " + std::to_string(rec.frame_paths.size()) + " frames but " +
                      std::to_string(rec.boxes.size()) + " ground-truth lines");
  }
  return rec;
}

std::vector<SequenceRecord> load_otb_dataset(const std::string& root) {
  if (!fs::is_directory(root)) throw IoError("dataset directory not found: " + root);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "groundtruth_rect.txt")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<SequenceRecord> out;
  for (const auto& d : dirs) out.push_back(load_otb_sequence(d.string()));
  return out;
}

void write_otb_sequence(const SequenceRecord& seq, const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "img", ec);
  if (ec) throw IoError("cannot create " + (root / "img").string() + ": " + ec.message());
  std::vector<BBox> boxes;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", i + 1);
    save_image((root / "img" / name).string(), seq.frame(i));
    if (!seq.boxes[i]) throw Error("write_otb_sequence: frame without annotation");
    boxes.push_back(*seq.boxes[i]);
  }
  write_box_file((root / "groundtruth_rect.txt").string(), boxes);
}

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    }
  }
  return r;
}

std::array<double, 3> mat_apply(const Mat3& m, const std::array<double, 3>& v) {
  std::array<double, 3> r{};
  for (int i = 0; i < 3; ++i) r[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
  return r;
}

// Hue rotation by `turns` about the luma axis in YIQ space.
Mat3 hue_rotation(double turns) {
  const Mat3 to_yiq{{{0.299, 0.587, 0.114}, {0.596, -0.274, -0.322}, {0.211, -0.523, 0.312}}};
  const Mat3 from_yiq{{{1.0, 0.956, 0.621}, {1.0, -0.272, -0.647}, {1.0, -1.106, 1.703}}};
  const double c = std::cos(2 * M_PI * turns);
  const double s = std::sin(2 * M_PI * turns);
  const Mat3 rot{{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
  return mul(from_yiq, mul(rot, to_yiq));
}

}  // namespace

// Every jitter is affine in RGB, so the randomly ordered chain collapses to one map
// x -> m x + b applied once, followed by the clamp.
ImagePatch augment_color(const ImagePatch& patch, const ColorJitter& jitter, std::mt19937_64& rng) {
  Mat3 m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  std::array<double, 3> b{0, 0, 0};
  std::array<double, 3> mean0{};
  {
    const auto mf = patch.channel_means();
    for (int c = 0; c < 3; ++c) mean0[c] = mf[c];
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::shuffle(order.begin(), order.end(), rng);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  for (int op : order) {
    switch (op) {
      case 0: {
        if (jitter.brightness <= 0) break;
        const double delta = uniform(-jitter.brightness, jitter.brightness);
        for (auto& v : b) v += delta;
        break;
      }
      case 1: {
        if (jitter.contrast <= 0) break;
        const double f = uniform(1 - jitter.contrast, 1 + jitter.contrast);
        auto mu = mat_apply(m, mean0);
        for (int i = 0; i < 3; ++i) {
          mu[i] += b[i];
          for (int j = 0; j < 3; ++j) m[i][j] *= f;
          b[i] = f * b[i] + (1 - f) * mu[i];
        }
        break;
      }
      case 2: {
        if (jitter.saturation <= 0) break;
        const double f = uniform(1 - jitter.saturation, 1 + jitter.saturation);
        const std::array<double, 3> luma{0.299, 0.587, 0.114};
        Mat3 sat{};
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) sat[i][j] = (i == j ? f : 0.0) + (1 - f) * luma[j];
        }
        m = mul(sat, m);
        b = mat_apply(sat, b);
        break;
      }
      default: {
        if (jitter.hue <= 0) break;
        const Mat3 h = hue_rotation(uniform(-jitter.hue, jitter.hue));
        m = mul(h, m);
        b = mat_apply(h, b);
        break;
      }
    }
  }
  ImagePatch out = patch;
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  float mf[3][3], bf[3];
  for (int i = 0; i < 3; ++i) {
    bf[i] = static_cast<float>(b[i]);
    for (int j = 0; j < 3; ++j) mf[i][j] = static_cast<float>(m[i][j]);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const float* src = &patch.data[k * 3];
    float* dst = &out.data[k * 3];
    for (int i = 0; i < 3; ++i) {
      dst[i] = std::clamp(mf[i][0] * src[0] + mf[i][1] * src[1] + mf[i][2] * src[2] + bf[i], 0.f, 1.f);
    }
  }
  return out;
}

AugmentedPatch augment_geometry(const Image& frame, const BBox& target, PatchRole role, bool first_in_clip,
                                const AugmentConfig& cfg, std::mt19937_64& rng) {
  const bool exemplar = role == PatchRole::Exemplar;
  const CropSpec base = crop_region(target, exemplar ? kExemplarContext : kSearchContext);
  const double out = base.out_size;
  CropWindow win = CropWindow::from(base);
  const bool jitter = cfg.enabled && !(exemplar && first_in_clip);
  auto uniform = [&](double lo, double hi) {
    return hi > lo ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;
  };

  if (jitter) {
    if (exemplar) {
      // Stretch each axis, then translate anywhere that keeps the target inside the patch.
      const double lo_x = std::max(-cfg.exemplar_stretch, target.w / base.side - 1.0);
      const double lo_y = std::max(-cfg.exemplar_stretch, target.h / base.side - 1.0);
      win.width = base.side * (1.0 + uniform(lo_x, std::max(lo_x, cfg.exemplar_stretch)));
      win.height = base.side * (1.0 + uniform(lo_y, std::max(lo_y, cfg.exemplar_stretch)));
      const double slack_x = std::max(0.0, (out - out * target.w / win.width) / 2.0);
      const double slack_y = std::max(0.0, (out - out * target.h / win.height) / 2.0);
      const double dx = uniform(-slack_x, slack_x);
      const double dy = uniform(-slack_y, slack_y);
      win.center = {target.cx - dx * win.width / out, target.cy - dy * win.height / out};
    } else {
      win.width = base.side * (1.0 + uniform(-cfg.search_stretch, cfg.search_stretch));
      win.height = base.side * (1.0 + uniform(-cfg.search_stretch, cfg.search_stretch));
      // Uniform over the disc of radius search_shift.
      const double r = cfg.search_shift * std::sqrt(uniform(0.0, 1.0));
      const double a = uniform(0.0, 2 * M_PI);
      const double dx = r * std::cos(a);
      const double dy = r * std::sin(a);
      win.center = {target.cx - dx * win.width / out, target.cy - dy * win.height / out};
    }
  }

  AugmentedPatch result;
  result.window = win;
  result.patch = extract_patch(frame, win);
  result.target_in_patch = win.box_to_patch(target);
  if (jitter) result.patch = augment_color(result.patch, cfg.color, rng);
  return result;
}

Clip sample_clip(const SequenceRecord& seq, const ClipOptions& opts, std::mt19937_64& rng) {
  if (opts.length < 1) throw Error("sample_clip: clip length must be positive");
  std::vector<std::size_t> annotated;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.boxes[i]) annotated.push_back(i);
  }
  const std::size_t need = static_cast<std::size_t>(opts.length) + 1;
  if (annotated.size() < need) {
    throw Error("sample_clip: sequence '" + seq.name + "' has " + std::to_string(annotated.size()) +
                " annotated frames, clip needs " + std::to_string(need));
  }
  Clip clip;
  if (opts.evenly_spaced) {
    const double step = static_cast<double>(annotated.size() - 1) / opts.length;
    for (std::size_t k = 0; k < need; ++k) {
      clip.frame_indices.push_back(annotated[static_cast<std::size_t>(std::lround(k * step))]);
    }
  } else {
    std::sample(annotated.begin(), annotated.end(), std::back_inserter(clip.frame_indices), need, rng);
  }

  std::vector<Image> frames;
  frames.reserve(need);
  for (auto idx : clip.frame_indices) frames.push_back(seq.frame(idx));

  for (int k = 0; k < opts.length; ++k) {
    const BBox& ex_box = *seq.boxes[clip.frame_indices[k]];
    const BBox& s_box = *seq.boxes[clip.frame_indices[k + 1]];
    auto ex = augment_geometry(frames[k], ex_box, PatchRole::Exemplar, k == 0, opts.augment, rng);
    auto se = augment_geometry(frames[k + 1], s_box, PatchRole::Search, false, opts.augment, rng);
    clip.exemplars.push_back(std::move(ex.patch));
    clip.searches.push_back(std::move(se.patch));
    clip.label_boxes.push_back(se.target_in_patch);
    clip.search_windows.push_back(se.window);
  }
  return clip;
}

}  // namespace rfl
