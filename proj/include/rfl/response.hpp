#pragma once

#include <array>

#include <Eigen/Core>

#include "rfl/geometry.hpp"
#include "rfl/tensor.hpp"

namespace rfl {

// Valid cross-correlation of a C x k x k filter with a C x H x W feature map, summed over
// channels: a 1 x (H-k+1) x (W-k+1) response.
template <typename T>
Tensor<T> correlate(const Tensor<T>& filter, const Tensor<T>& search);

// Accumulates into grad_filter / grad_search when non-null (they must be pre-shaped or empty).
template <typename T>
void correlate_backward(const Tensor<T>& filter, const Tensor<T>& search, const Tensor<T>& grad_response,
                        Tensor<T>* grad_filter, Tensor<T>* grad_search);

// Raw 17 x 17 logits for one pyramid scale (-1, 0, +1). Row index is y.
struct ResponseMap {
  Eigen::MatrixXd scores;
  int scale_index = 0;
};

template <typename T>
ResponseMap to_response_map(const Tensor<T>& response, int scale_index = 0);

// Upsampled score map on (cells - 1) * factor + 1 samples per side; coarse cell k sits at
// fine index k * factor.
struct UpsampledMap {
  Eigen::MatrixXd scores;
  int factor = 16;
  int scale_index = 0;
};

inline constexpr int kUpsampleFactor = 16;

// Bicubic (Keys, a = -0.5) interpolation through the coarse samples, clamped at the borders.
UpsampledMap upsample(const ResponseMap& map, int factor = kUpsampleFactor);

// Outer product of two 1-D Hann windows, normalized to sum 1.
Eigen::MatrixXd hann_window(int rows, int cols);

// Min-shift and sum-normalize the map, then blend with the Hann window:
// (1 - w) * normalized + w * hann. Constant maps normalize to the uniform map.
UpsampledMap apply_window(const UpsampledMap& map, double window_weight);

// Multiplies the peak scores of scales -1 and +1 (entries 0 and 2) by gamma.
std::array<double, 3> scale_penalty(const std::array<double, 3>& peak_scores, double gamma);

// Mean (row, col) of the k largest entries; ties resolved in row-major order.
struct MapPosition {
  double row = 0.0;
  double col = 0.0;
};
MapPosition top_k_mean(const Eigen::MatrixXd& scores, int k);

}  // namespace rfl
