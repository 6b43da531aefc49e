#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "rfl/tensor.hpp"

namespace rfl {

// 2-D convolution (cross-correlation) via im2col + GEMM. Weights are stored
// out x (in * k * k), row-major, input-channel-major within a row.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int pad = 0);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }
  int out_extent(int in_extent) const { return (in_extent + 2 * pad_ - k_) / stride_ + 1; }
  int fan_in() const { return in_ * k_ * k_; }

  Tensor<T> forward(const Tensor<T>& x) const;
  // Accumulates weight and bias gradients; writes the input gradient when dx is non-null.
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx);

  // Normal(0, gain / sqrt(fan_in)) kernels, constant bias.
  void init(std::mt19937_64& rng, double gain, T bias_value = T(0));

  Param<T> weight;
  Param<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  int k_ = 1;
  int stride_ = 1;
  int pad_ = 0;
};

// Per-channel batch normalization over (batch, height, width).
template <typename T>
class BatchNorm {
 public:
  struct Cache {
    std::vector<T> inv_std;
    std::vector<Tensor<T>> normalized;
  };

  BatchNorm() = default;
  explicit BatchNorm(int channels);

  int channels() const { return static_cast<int>(running_mean.size()); }

  // In-place on the batch. Batch statistics; optionally folds them into the running averages.
  void forward_train(std::vector<Tensor<T>>& batch, Cache* cache, bool update_running);
  // In-place using running statistics.
  void forward_infer(Tensor<T>& x) const;
  // In-place: dy -> dx. Accumulates scale/offset gradients.
  void backward(const Cache& cache, std::vector<Tensor<T>>& grads);

  Param<T> scale;
  Param<T> offset;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);
};

template <typename T>
void relu_inplace(Tensor<T>& x);

// Zeroes grad where the rectified output was not positive.
template <typename T>
void relu_backward_inplace(const Tensor<T>& output, Tensor<T>& grad);

// k x k max pooling, given stride, no padding. argmax holds flat input indices.
template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int kernel, int stride, std::vector<std::int32_t>* argmax);

template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& dy, const std::vector<std::int32_t>& argmax, int in_c,
                            int in_h, int in_w);

}  // namespace rfl
