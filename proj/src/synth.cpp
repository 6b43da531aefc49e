#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rfl/error.hpp"
#include "synth_scene.hpp"

namespace rfl {

namespace {

std::array<float, 3> random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  return {u(rng), u(rng), u(rng)};
}

float color_distance(const std::array<float, 3>& a, const std::array<float, 3>& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

ShapeAppearance random_appearance(std::mt19937_64& rng) {
  ShapeAppearance a;
  a.kind = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? ShapeAppearance::Kind::Rectangle
                                                               : ShapeAppearance::Kind::Ellipse;
  a.texture = static_cast<ShapeAppearance::Texture>(std::uniform_int_distribution<int>(0, 4)(rng));
  a.primary = random_color(rng);
  do {
    a.secondary = random_color(rng);
  } while (color_distance(a.primary, a.secondary) < 0.45f);
  const double periods[3] = {0.25, 1.0 / 3.0, 0.5};
  a.period = periods[std::uniform_int_distribution<int>(0, 2)(rng)];
  return a;
}

// Deterministic per-pixel noise in [-1, 1].
float hash_noise(std::uint64_t seed, int x, int y) {
  std::uint64_t h = seed ^ (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ull) ^
                    (static_cast<std::uint64_t>(y) * 0xC2B2AE3D27D4EB4Full);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ull;
  h ^= h >> 33;
  return static_cast<float>((h >> 11) * (1.0 / 9007199254740992.0)) * 2.f - 1.f;
}

Image make_background(const SynthConfig& cfg, std::mt19937_64& rng) {
  Image bg(cfg.frame_width, cfg.frame_height);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto base = random_color(rng);
  std::array<std::array<double, 4>, 3> waves{};  // per channel: fx, fy, phase, amplitude
  for (auto& w : waves) {
    w = {u01(rng) * 3.0 + 0.5, u01(rng) * 3.0 + 0.5, u01(rng) * 2 * M_PI, cfg.background_contrast * u01(rng)};
  }
  const double gx = (u01(rng) - 0.5) * cfg.background_contrast;
  const double gy = (u01(rng) - 0.5) * cfg.background_contrast;
  const std::uint64_t noise_seed = rng();
  for (int y = 0; y < bg.height; ++y) {
    const double ny = static_cast<double>(y) / bg.height;
    for (int x = 0; x < bg.width; ++x) {
      const double nx = static_cast<double>(x) / bg.width;
      const float noise = 0.03f * hash_noise(noise_seed, x, y);
      for (int c = 0; c < 3; ++c) {
        const auto& w = waves[c];
        const double v = base[c] + gx * (nx - 0.5) + gy * (ny - 0.5) +
                         w[3] * std::sin(2 * M_PI * (w[0] * nx + w[1] * ny) + w[2]);
        bg.at(x, y, c) = std::clamp(static_cast<float>(v) + noise, 0.f, 1.f);
      }
    }
  }
  std::uniform_real_distribution<double> size(cfg.min_target * 0.6, cfg.max_target * 1.4);
  for (int i = 0; i < cfg.clutter; ++i) {
    const double w = size(rng);
    const double h = size(rng);
    const BBox box{u01(rng) * cfg.frame_width, u01(rng) * cfg.frame_height, w, h};
    draw_shape(bg, box, random_appearance(rng), 1.f);
  }
  return bg;
}

// Rotates a colour about the grey axis in YIQ space.
std::array<float, 3> rotate_hue(const std::array<float, 3>& rgb, double turns) {
  const double y = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
  const double i = 0.596 * rgb[0] - 0.274 * rgb[1] - 0.322 * rgb[2];
  const double q = 0.211 * rgb[0] - 0.523 * rgb[1] + 0.312 * rgb[2];
  const double c = std::cos(2 * M_PI * turns), s = std::sin(2 * M_PI * turns);
  const double i2 = c * i - s * q, q2 = s * i + c * q;
  return {std::clamp(static_cast<float>(y + 0.956 * i2 + 0.621 * q2), 0.f, 1.f),
          std::clamp(static_cast<float>(y - 0.272 * i2 - 0.647 * q2), 0.f, 1.f),
          std::clamp(static_cast<float>(y - 1.106 * i2 + 1.703 * q2), 0.f, 1.f)};
}

}  // namespace

void draw_shape(Image& image, const BBox& box, const ShapeAppearance& look, float brightness) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x())));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y())));
  const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(box.right())));
  const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(box.bottom())));
  for (int y = y0; y <= y1; ++y) {
    const double v = (y + 0.5 - box.y()) / box.h;
    if (v < 0 || v >= 1) continue;
    for (int x = x0; x <= x1; ++x) {
      const double u = (x + 0.5 - box.x()) / box.w;
      if (u < 0 || u >= 1) continue;
      if (look.kind == ShapeAppearance::Kind::Ellipse) {
        const double du = 2 * u - 1;
        const double dv = 2 * v - 1;
        if (du * du + dv * dv > 1.0) continue;
      }
      bool alt = false;
      switch (look.texture) {
        case ShapeAppearance::Texture::Border:
          alt = std::min({u, 1 - u, v, 1 - v}) < 0.15;
          break;
        case ShapeAppearance::Texture::HorizontalStripes:
          alt = static_cast<int>(std::floor(v / look.period)) % 2 == 1;
          break;
        case ShapeAppearance::Texture::VerticalStripes:
          alt = static_cast<int>(std::floor(u / look.period)) % 2 == 1;
          break;
        case ShapeAppearance::Texture::Diagonal:
          alt = static_cast<int>(std::floor((u + v) / look.period)) % 2 == 1;
          break;
        case ShapeAppearance::Texture::Checker:
          alt = (static_cast<int>(std::floor(u / look.period)) + static_cast<int>(std::floor(v / look.period))) % 2 == 1;
          break;
      }
      const auto& col = alt ? look.secondary : look.primary;
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = std::clamp(col[c] * brightness, 0.f, 1.f);
    }
  }
}

Image SynthScene::render(std::size_t index) const {
  if (index >= boxes.size()) throw Error("synthetic frame index out of range");
  Image frame = background;
  ShapeAppearance look = target;
  if (!hue.empty() && hue[index] != 0.f) {
    look.primary = rotate_hue(target.primary, hue[index]);
    look.secondary = rotate_hue(target.secondary, hue[index]);
  }
  draw_shape(frame, boxes[index], look, brightness[index]);
  return frame;
}

SequenceRecord synth_sequence(const SynthConfig& cfg, int length, std::uint64_t seed) {
  if (length < 2) throw Error("synth_sequence: length must be at least 2");
  if (cfg.min_target <= 0 || cfg.max_target < cfg.min_target) throw Error("synth_sequence: bad target size range");
  if (cfg.max_target * cfg.max_scale * cfg.max_aspect >= std::min(cfg.frame_width, cfg.frame_height)) {
    throw Error("synth_sequence: target does not fit the frame");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto scene = std::make_shared<SynthScene>();
  scene->cfg = cfg;
  scene->background = make_background(cfg, rng);
  scene->target = random_appearance(rng);

  const double base = cfg.min_target + u01(rng) * (cfg.max_target - cfg.min_target);
  const double aspect = std::exp((u01(rng) * 2 - 1) * std::log(cfg.max_aspect));
  const double w0 = base * std::sqrt(aspect);
  const double h0 = base / std::sqrt(aspect);
  const double margin = cfg.max_target * cfg.max_scale * cfg.max_aspect / 2.0 + 1.0;
  double cx = margin + u01(rng) * (cfg.frame_width - 2 * margin);
  double cy = margin + u01(rng) * (cfg.frame_height - 2 * margin);
  const double angle = u01(rng) * 2 * M_PI;
  const double speed = cfg.static_target ? 0.0 : u01(rng) * cfg.max_speed;
  double vx = speed * std::cos(angle);
  double vy = speed * std::sin(angle);
  double log_scale = 0.0;
  double light = 1.0;
  double hue = 0.0;

  for (int t = 0; t < length; ++t) {
    if (t > 0 && !cfg.static_target) {
      vx += cfg.acceleration * normal(rng);
      vy += cfg.acceleration * normal(rng);
      const double s = std::hypot(vx, vy);
      if (s > cfg.max_speed) {
        vx *= cfg.max_speed / s;
        vy *= cfg.max_speed / s;
      }
      cx += vx;
      cy += vy;
      log_scale = std::clamp(log_scale + cfg.scale_sigma * normal(rng), std::log(cfg.min_scale),
                             std::log(cfg.max_scale));
      light = std::clamp(light + cfg.brightness_drift * normal(rng), 0.8, 1.2);
      if (cfg.hue_drift > 0) hue += cfg.hue_drift * normal(rng);
    }
    const double w = w0 * std::exp(log_scale);
    const double h = h0 * std::exp(log_scale);
    if (cx - w / 2 < 0) {
      cx = w / 2;
      vx = std::abs(vx);
    }
    if (cx + w / 2 > cfg.frame_width) {
      cx = cfg.frame_width - w / 2;
      vx = -std::abs(vx);
    }
    if (cy - h / 2 < 0) {
      cy = h / 2;
      vy = std::abs(vy);
    }
    if (cy + h / 2 > cfg.frame_height) {
      cy = cfg.frame_height - h / 2;
      vy = -std::abs(vy);
    }
    scene->boxes.push_back({cx, cy, w, h});
    scene->brightness.push_back(static_cast<float>(light));
    scene->hue.push_back(static_cast<float>(hue));
  }

  SequenceRecord rec;
  rec.name = "synth";
  rec.boxes.assign(scene->boxes.begin(), scene->boxes.end());
  rec.attributes = {"synthetic"};
  rec.synthetic = std::move(scene);
  return rec;
}

std::vector<SequenceRecord> synth_dataset(const SynthConfig& cfg, int count, std::uint64_t seed) {
  std::vector<SequenceRecord> out;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(std::max(count, 0)));
  std::mt19937_64 rng(seq);
  for (auto& s : seeds) s = rng();
  for (int i = 0; i < count; ++i) {
    auto rec = synth_sequence(cfg, cfg.length, seeds[i]);
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%03d", i);
    rec.name = name;
    out.push_back(std::move(rec));
  }
  return out;
}

std::map<std::string, std::string> SynthConfig::to_kv() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"frame_width", std::to_string(frame_width)},
      {"frame_height", std::to_string(frame_height)},
      {"length", std::to_string(length)},
      {"min_target", num(min_target)},
      {"max_target", num(max_target)},
      {"max_aspect", num(max_aspect)},
      {"max_speed", num(max_speed)},
      {"acceleration", num(acceleration)},
      {"scale_sigma", num(scale_sigma)},
      {"min_scale", num(min_scale)},
      {"max_scale", num(max_scale)},
      {"brightness_drift", num(brightness_drift)},
      {"hue_drift", num(hue_drift)},
      {"clutter", std::to_string(clutter)},
      {"background_contrast", num(background_contrast)},
      {"static_target", static_target ? "true" : "false"},
  };
}

SynthConfig SynthConfig::from_kv(const std::map<std::string, std::string>& kv) {
  SynthConfig c;
  auto get_d = [&](const char* k, double& dst) {
    if (auto it = kv.find(k); it != kv.end()) {
      try {
        dst = std::stod(it->second);
      } catch (const std::exception&) {
        throw FormatError(std::string("synth config: bad value for ") + k);
      }
    }
  };
  auto get_i = [&](const char* k, int& dst) {
    if (auto it = kv.find(k); it != kv.end()) {
      try {
        dst = std::stoi(it->second);
      } catch (const std::exception&) {
        throw FormatError(std::string("synth config: bad value for ") + k);
      }
    }
  };
  get_i("frame_width", c.frame_width);
  get_i("frame_height", c.frame_height);
  get_i("length", c.length);
  get_d("min_target", c.min_target);
  get_d("max_target", c.max_target);
  get_d("max_aspect", c.max_aspect);
  get_d("max_speed", c.max_speed);
  get_d("acceleration", c.acceleration);
  get_d("scale_sigma", c.scale_sigma);
  get_d("min_scale", c.min_scale);
  get_d("max_scale", c.max_scale);
  get_d("brightness_drift", c.brightness_drift);
  get_d("hue_drift", c.hue_drift);
  get_i("clutter", c.clutter);
  get_d("background_contrast", c.background_contrast);
  if (auto it = kv.find("static_target"); it != kv.end()) {
    c.static_target = it->second == "true" || it->second == "1";
  }
  return c;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace rfl
