#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "rfl/layers.hpp"

namespace rfl {

enum class Mode { Train, Infer };

// Output channels of conv1..conv5. Kernel sizes and strides are fixed:
// conv1 11x11/2, pool 3x3/2, conv2 5x5, pool 3x3/2, conv3..conv5 3x3, all unpadded.
struct BackboneSpec {
  std::array<int, 5> channels{96, 256, 384, 384, 256};
  int feature_channels() const { return channels[4]; }
  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

inline constexpr std::array<int, 5> kBackboneKernels{11, 5, 3, 3, 3};
inline constexpr int kBackboneStride = 8;

// Spatial extent of the feature map for a square input of side `input`.
int backbone_output_extent(int input);

// Five-layer feature extractor: conv -> batch norm -> ReLU (not after conv5), with max
// pooling after conv1 and conv2.
template <typename T>
class Backbone {
 public:
  struct Cache {
    std::array<std::vector<Tensor<T>>, 5> inputs;
    std::array<typename BatchNorm<T>::Cache, 5> bn;
    std::array<std::vector<Tensor<T>>, 2> pre_pool;
    std::array<std::vector<std::vector<std::int32_t>>, 2> argmax;
  };

  Backbone() = default;
  Backbone(const BackboneSpec& spec, std::mt19937_64& rng);

  const BackboneSpec& spec() const { return spec_; }

  // Train mode normalizes with statistics over the whole batch; pass a cache to allow
  // backward(). update_running folds batch statistics into the running averages.
  std::vector<Tensor<T>> forward(std::vector<Tensor<T>> batch, Mode mode, Cache* cache = nullptr,
                                 bool update_running = true);
  Tensor<T> forward_infer(const Tensor<T>& input) const;

  // Accumulates parameter gradients for the batch cached by forward().
  void backward(const Cache& cache, std::vector<Tensor<T>> grad_out);

  std::array<Conv2d<T>, 5> conv;
  std::array<BatchNorm<T>, 5> bn;

 private:
  BackboneSpec spec_;
};

}  // namespace rfl
