#include "rfl/response.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rfl/error.hpp"

namespace rfl {

template <typename T>
Tensor<T> correlate(const Tensor<T>& filter, const Tensor<T>& search) {
  if (filter.channels() != search.channels()) {
    throw ShapeError("correlate: filter has " + std::to_string(filter.channels()) +
                     " channels, search features have " + std::to_string(search.channels()));
  }
  const int kh = filter.height();
  const int kw = filter.width();
  const int oh = search.height() - kh + 1;
  const int ow = search.width() - kw + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("correlate: search map smaller than filter");
  Tensor<T> out(1, oh, ow);
  T* r = out.data();
  const int sw = search.width();
  for (int c = 0; c < filter.channels(); ++c) {
    const T* s = search.channel(c);
    const T* f = filter.channel(c);
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T w = f[i * kw + j];
        for (int y = 0; y < oh; ++y) {
          const T* srow = s + (y + i) * sw + j;
          T* rrow = r + y * ow;
          for (int x = 0; x < ow; ++x) rrow[x] += w * srow[x];
        }
      }
    }
  }
  return out;
}

template <typename T>
void correlate_backward(const Tensor<T>& filter, const Tensor<T>& search, const Tensor<T>& grad,
                        Tensor<T>* grad_filter, Tensor<T>* grad_search) {
  const int kh = filter.height();
  const int kw = filter.width();
  const int oh = grad.height();
  const int ow = grad.width();
  const int sw = search.width();
  if (grad_filter && grad_filter->empty()) {
    *grad_filter = Tensor<T>(filter.channels(), kh, kw);
  }
  if (grad_search && grad_search->empty()) {
    *grad_search = Tensor<T>(search.channels(), search.height(), search.width());
  }
  const T* g = grad.data();
  for (int c = 0; c < filter.channels(); ++c) {
    const T* s = search.channel(c);
    const T* f = filter.channel(c);
    T* df = grad_filter ? grad_filter->channel(c) : nullptr;
    T* ds = grad_search ? grad_search->channel(c) : nullptr;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T w = f[i * kw + j];
        T acc = 0;
        for (int y = 0; y < oh; ++y) {
          const T* srow = s + (y + i) * sw + j;
          const T* grow = g + y * ow;
          if (df) {
            for (int x = 0; x < ow; ++x) acc += grow[x] * srow[x];
          }
          if (ds) {
            T* dsrow = ds + (y + i) * sw + j;
            for (int x = 0; x < ow; ++x) dsrow[x] += grow[x] * w;
          }
        }
        if (df) df[i * kw + j] += acc;
      }
    }
  }
}

template <typename T>
ResponseMap to_response_map(const Tensor<T>& response, int scale_index) {
  if (response.channels() != 1) throw ShapeError("response map must have one channel");
  ResponseMap m;
  m.scale_index = scale_index;
  m.scores.resize(response.height(), response.width());
  for (int y = 0; y < response.height(); ++y) {
    for (int x = 0; x < response.width(); ++x) m.scores(y, x) = static_cast<double>(response(0, y, x));
  }
  return m;
}

namespace {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2.0) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0.0;
}

// Interpolation matrix mapping n coarse samples to (n - 1) * factor + 1 fine samples.
Eigen::MatrixXd cubic_operator(int n, int factor) {
  const int m = (n - 1) * factor + 1;
  Eigen::MatrixXd op = Eigen::MatrixXd::Zero(m, n);
  for (int u = 0; u < m; ++u) {
    const double t = static_cast<double>(u) / factor;
    const int base = static_cast<int>(std::floor(t));
    for (int k = base - 1; k <= base + 2; ++k) {
      const double w = cubic_weight(t - k);
      if (w == 0.0) continue;
      op(u, std::clamp(k, 0, n - 1)) += w;
    }
  }
  return op;
}

}  // namespace

UpsampledMap upsample(const ResponseMap& map, int factor) {
  if (factor < 1) throw Error("upsample: factor must be >= 1");
  const Eigen::MatrixXd rows_op = cubic_operator(static_cast<int>(map.scores.rows()), factor);
  const Eigen::MatrixXd cols_op = cubic_operator(static_cast<int>(map.scores.cols()), factor);
  UpsampledMap out;
  out.factor = factor;
  out.scale_index = map.scale_index;
  out.scores = rows_op * map.scores * cols_op.transpose();
  return out;
}

Eigen::MatrixXd hann_window(int rows, int cols) {
  auto hann = [](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = n > 1 ? 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1)) : 1.0;
    return v;
  };
  Eigen::MatrixXd w = hann(rows) * hann(cols).transpose();
  return w / w.sum();
}

UpsampledMap apply_window(const UpsampledMap& map, double window_weight) {
  if (!(window_weight >= 0.0 && window_weight <= 1.0)) throw Error("apply_window: weight outside [0, 1]");
  UpsampledMap out = map;
  const double lo = map.scores.minCoeff();
  Eigen::MatrixXd shifted = map.scores.array() - lo;
  const double total = shifted.sum();
  if (!(total > 0.0)) {
    shifted.setConstant(1.0 / static_cast<double>(shifted.size()));
  } else {
    shifted /= total;
  }
  out.scores = (1.0 - window_weight) * shifted +
               window_weight * hann_window(static_cast<int>(map.scores.rows()), static_cast<int>(map.scores.cols()));
  return out;
}

std::array<double, 3> scale_penalty(const std::array<double, 3>& peaks, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("scale_penalty: gamma outside (0, 1]");
  return {peaks[0] * gamma, peaks[1], peaks[2] * gamma};
}

MapPosition top_k_mean(const Eigen::MatrixXd& scores, int k) {
  const int rows = static_cast<int>(scores.rows());
  const int cols = static_cast<int>(scores.cols());
  const int n = rows * cols;
  if (n == 0) throw Error("top_k_mean: empty map");
  k = std::clamp(k, 1, n);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto value = [&](int i) { return scores(i / cols, i % cols); };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    const double va = value(a);
    const double vb = value(b);
    return va > vb || (va == vb && a < b);
  });
  MapPosition p;
  for (int j = 0; j < k; ++j) {
    p.row += idx[j] / cols;
    p.col += idx[j] % cols;
  }
  p.row /= k;
  p.col /= k;
  return p;
}

template Tensor<float> correlate<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> correlate<double>(const Tensor<double>&, const Tensor<double>&);
template void correlate_backward<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                        Tensor<float>*, Tensor<float>*);
template void correlate_backward<double>(const Tensor<double>&, const Tensor<double>&,
                                         const Tensor<double>&, Tensor<double>*, Tensor<double>*);
template ResponseMap to_response_map<float>(const Tensor<float>&, int);
template ResponseMap to_response_map<double>(const Tensor<double>&, int);

}  // namespace rfl
