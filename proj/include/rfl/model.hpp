#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfl/backbone.hpp"
#include "rfl/filtergen.hpp"
#include "rfl/image.hpp"

namespace rfl {

// Network shape and architecture-variant switches.
struct NetConfig {
  BackboneSpec backbone;
  int hidden_channels = 1024;
  int gate_kernel = 3;
  bool zero_init = false;
  bool shared_backbone = false;

  // Full-size network: 96/256/384/384/256 backbone channels, 1024 memory channels.
  static NetConfig full() { return {}; }
  // Same topology with every width divided by 8; used for CPU-scale training runs.
  static NetConfig desk() { return NetConfig{BackboneSpec{{12, 32, 48, 48, 32}}, 128}; }

  int feature_channels() const { return backbone.feature_channels(); }
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

inline constexpr int kExemplarFeatureExtent = 6;
inline constexpr int kSearchFeatureExtent = 22;
inline constexpr int kResponseExtent = 17;

// Named view of one parameter (or buffer) blob.
template <typename T>
struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::span<T> value;
  std::span<T> grad;  // empty for non-trainable buffers (batch-norm running statistics)
  bool trainable() const { return !grad.empty(); }
};

// E-CNN, S-CNN and the filter generator, plus pixel standardization constants.
template <typename T>
class RflModel {
 public:
  RflModel() = default;
  RflModel(const NetConfig& cfg, std::uint64_t seed);

  const NetConfig& config() const { return cfg_; }

  Backbone<T>& exemplar_net() { return ecnn; }
  const Backbone<T>& exemplar_net() const { return ecnn; }
  Backbone<T>& search_net() { return cfg_.shared_backbone ? ecnn : scnn; }
  const Backbone<T>& search_net() const { return cfg_.shared_backbone ? ecnn : scnn; }

  // Stable order; names follow ecnn/convK/..., scnn/convK/..., lstm/{Wf,Wi,We,Wo,Wl}/...,
  // init/{h,c}/....
  std::vector<ParamRef<T>> parameters();
  std::vector<ParamRef<const T>> parameters() const;

  void zero_grad();
  std::size_t trainable_count() const;
  // FNV-1a over every parameter and buffer value.
  std::uint64_t checksum() const;

  // Copies values by name from a model of the same configuration.
  template <typename U>
  void copy_from(const RflModel<U>& other);

  PixelNorm norm;
  Backbone<T> ecnn;
  Backbone<T> scnn;
  FilterGenerator<T> lstm;

 private:
  NetConfig cfg_;
};

// 127x127 patch -> 6x6xC exemplar features.
template <typename T>
Tensor<T> extract_exemplar_features(RflModel<T>& model, const ImagePatch& patch, Mode mode = Mode::Infer);

// Batch of 255x255 patches -> 22x22xC search features, order preserved.
template <typename T>
std::vector<Tensor<T>> extract_search_features(RflModel<T>& model, const std::vector<ImagePatch>& patches,
                                               Mode mode = Mode::Infer);

// Const inference-only variants.
template <typename T>
Tensor<T> exemplar_features(const RflModel<T>& model, const ImagePatch& patch);
template <typename T>
std::vector<Tensor<T>> search_features(const RflModel<T>& model, const std::vector<ImagePatch>& patches);

}  // namespace rfl
