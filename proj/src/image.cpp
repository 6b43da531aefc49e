#include "rfl/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "rfl/error.hpp"

namespace rfl {

std::array<float, 3> Image::channel_means() const {
  std::array<double, 3> acc{0, 0, 0};
  const std::size_t n = std::size_t(width) * height;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) acc[c] += data[i * 3 + c];
  }
  std::array<float, 3> m{};
  for (int c = 0; c < 3; ++c) m[c] = n ? static_cast<float>(acc[c] / n) : 0.f;
  return m;
}

ImagePatch extract_patch(const Image& image, const CropWindow& win) {
  if (image.empty()) throw Error("extract_patch: empty image");
  if (win.out_size <= 0 || !(win.width > 0) || !(win.height > 0)) {
    throw Error("extract_patch: invalid crop window");
  }
  const auto mean = image.channel_means();
  const int n = win.out_size;
  ImagePatch out(n, n);
  const double sx = win.width / n;
  const double sy = win.height / n;

  auto pixel = [&](int x, int y, int c) -> float {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) return mean[c];
    return image.at(x, y, c);
  };

  for (int v = 0; v < n; ++v) {
    // Pixel-center sampling; continuous coordinate minus 0.5 gives the pixel index space.
    const double py = win.center.y + (v + 0.5 - n / 2.0) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(py));
    const float fy = static_cast<float>(py - y0);
    for (int u = 0; u < n; ++u) {
      const double px = win.center.x + (u + 0.5 - n / 2.0) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(px));
      const float fx = static_cast<float>(px - x0);
      for (int c = 0; c < 3; ++c) {
        const float top = pixel(x0, y0, c) * (1 - fx) + pixel(x0 + 1, y0, c) * fx;
        const float bot = pixel(x0, y0 + 1, c) * (1 - fx) + pixel(x0 + 1, y0 + 1, c) * fx;
        out.at(u, v, c) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> to_input_tensor(const ImagePatch& patch, const PixelNorm& norm) {
  Tensor<T> t(3, patch.height, patch.width);
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        t(c, y, x) = static_cast<T>((patch.at(x, y, c) - norm.mean[c]) / norm.stddev[c]);
      }
    }
  }
  return t;
}

template Tensor<float> to_input_tensor<float>(const ImagePatch&, const PixelNorm&);
template Tensor<double> to_input_tensor<double>(const ImagePatch&, const PixelNorm&);

Image load_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path);
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(x, y, 0) = row[x][2] / 255.f;
      img.at(x, y, 1) = row[x][1] / 255.f;
      img.at(x, y, 2) = row[x][0] / 255.f;
    }
  }
  return img;
}

void save_image(const std::string& path, const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  auto to_byte = [](float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
  };
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x] = cv::Vec3b(to_byte(img.at(x, y, 2)), to_byte(img.at(x, y, 1)), to_byte(img.at(x, y, 0)));
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path, bgr);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image " + path + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write image " + path);
}

void draw_box(Image& image, const BBox& box, std::array<float, 3> color, int thickness) {
  const int x0 = static_cast<int>(std::floor(box.x()));
  const int y0 = static_cast<int>(std::floor(box.y()));
  const int x1 = static_cast<int>(std::ceil(box.right())) - 1;
  const int y1 = static_cast<int>(std::ceil(box.bottom())) - 1;
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) return;
    for (int c = 0; c < 3; ++c) image.at(x, y, c) = color[c];
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = x0; x <= x1; ++x) {
      put(x, y0 + t);
      put(x, y1 - t);
    }
    for (int y = y0; y <= y1; ++y) {
      put(x0 + t, y);
      put(x1 - t, y);
    }
  }
}

}  // namespace rfl
