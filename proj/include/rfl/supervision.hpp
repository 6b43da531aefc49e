#pragma once

#include <cstdint>
#include <vector>

#include "rfl/geometry.hpp"
#include "rfl/tensor.hpp"

namespace rfl {

inline constexpr double kLabelIouThreshold = 0.7;

// Binary ground-truth response; labels stored row-major (y * cells + x).
struct LabelMap {
  int cells = 0;
  double alpha = kLabelIouThreshold;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * cells + x]; }
  int positives() const;
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

// Cell i is positive iff a box of gt's size centered on the cell overlaps gt with IoU > alpha.
// gt is given in search-patch pixel coordinates.
LabelMap groundtruth_map(const BBox& gt, const GridSpec& grid = {}, double alpha = kLabelIouThreshold);

struct LossOptions {
  // Reweight positives and negatives to equal total mass.
  bool balanced = false;
};

// Sum of element-wise sigmoid cross-entropies over one 1 x n x n logit map, evaluated in the
// overflow-free form max(x, 0) - x * y + log(1 + exp(-|x|)). When grad is non-null it
// receives d loss / d logits (= sigmoid(x) - y when unbalanced), scaled by grad_scale.
template <typename T>
double response_loss(const Tensor<T>& logits, const LabelMap& labels, const LossOptions& opts = {},
                     Tensor<T>* grad = nullptr, double grad_scale = 1.0);

}  // namespace rfl
