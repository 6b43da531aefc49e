#include "rfl/supervision.hpp"

#include <algorithm>
#include <cmath>

#include "rfl/error.hpp"

namespace rfl {

int LabelMap::positives() const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

LabelMap groundtruth_map(const BBox& gt, const GridSpec& grid, double alpha) {
  require_valid(gt, "groundtruth_map");
  validate(grid);
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("groundtruth_map: alpha must lie in (0, 1)");
  LabelMap m;
  m.cells = grid.cells;
  m.alpha = alpha;
  m.labels.assign(static_cast<std::size_t>(grid.cells) * grid.cells, 0);
  for (int y = 0; y < grid.cells; ++y) {
    for (int x = 0; x < grid.cells; ++x) {
      const Point c = grid.cell_center({x, y});
      const BBox candidate{c.x, c.y, gt.w, gt.h};
      m.labels[static_cast<std::size_t>(y) * grid.cells + x] = iou(candidate, gt) > alpha ? 1 : 0;
    }
  }
  return m;
}

template <typename T>
double response_loss(const Tensor<T>& logits, const LabelMap& labels, const LossOptions& opts,
                     Tensor<T>* grad, double grad_scale) {
  require_shape(logits, 1, labels.cells, labels.cells, "response_loss");
  const std::size_t n = logits.size();
  for (auto y : labels.labels) {
    if (y > 1) throw Error("response_loss: labels must be binary");
  }
  double w_pos = 1.0;
  double w_neg = 1.0;
  if (opts.balanced) {
    const double pos = labels.positives();
    const double neg = static_cast<double>(n) - pos;
    w_pos = pos > 0 ? n / (2.0 * pos) : 0.0;
    w_neg = neg > 0 ? n / (2.0 * neg) : 0.0;
  }
  if (grad) *grad = Tensor<T>(1, labels.cells, labels.cells);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(logits[k]);
    const double y = labels.labels[k];
    const double w = y > 0 ? w_pos : w_neg;
    total += w * (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))));
    if (grad) {
      const double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      (*grad)[k] = static_cast<T>(grad_scale * w * (p - y));
    }
  }
  return total;
}

template double response_loss<float>(const Tensor<float>&, const LabelMap&, const LossOptions&,
                                     Tensor<float>*, double);
template double response_loss<double>(const Tensor<double>&, const LabelMap&, const LossOptions&,
                                      Tensor<double>*, double);

}  // namespace rfl
