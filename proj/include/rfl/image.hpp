#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "rfl/geometry.hpp"
#include "rfl/tensor.hpp"

namespace rfl {

// Interleaved RGB image with values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, float fill = 0.f) : width(w), height(h), data(std::size_t(w) * h * 3, fill) {}

  bool empty() const { return data.empty(); }
  float& at(int x, int y, int c) { return data[(std::size_t(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return data[(std::size_t(y) * width + x) * 3 + c]; }

  std::array<float, 3> channel_means() const;

  friend bool operator==(const Image&, const Image&) = default;
};

using ImagePatch = Image;

// Resamples the crop window to an out_size x out_size patch (bilinear). Samples outside the
// image take the image's per-channel mean.
ImagePatch extract_patch(const Image& image, const CropWindow& window);
inline ImagePatch extract_patch(const Image& image, const CropSpec& spec) {
  return extract_patch(image, CropWindow::from(spec));
}

// Fixed per-channel standardization applied before the backbones.
struct PixelNorm {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

template <typename T>
Tensor<T> to_input_tensor(const ImagePatch& patch, const PixelNorm& norm);

Image load_image(const std::string& path);
void save_image(const std::string& path, const Image& image);

// Draws a 1-2 px rectangle outline (used for evaluation overlays).
void draw_box(Image& image, const BBox& box, std::array<float, 3> color, int thickness = 2);

}  // namespace rfl
