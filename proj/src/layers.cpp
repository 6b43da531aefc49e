#include "rfl/layers.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include <Eigen/Core>

#include "conv_kernels.hpp"

namespace rfl {

std::string shape_string(int c, int h, int w) {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta,
          T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<Mat> cm(c, m, n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (beta == T(0)) {
      cm.noalias() = alpha * (lhs * rhs);
    } else {
      if (beta != T(1)) cm *= beta;
      cm.noalias() += alpha * (lhs * rhs);
    }
  };
  const bool ta = trans_a;
  const bool tb = trans_b;
  if (!ta && !tb) {
    run(Eigen::Map<const Mat>(a, m, k), Eigen::Map<const Mat>(b, k, n));
  } else if (ta && !tb) {
    run(Eigen::Map<const Mat>(a, k, m).transpose(), Eigen::Map<const Mat>(b, k, n));
  } else if (!ta && tb) {
    run(Eigen::Map<const Mat>(a, m, k), Eigen::Map<const Mat>(b, n, k).transpose());
  } else {
    run(Eigen::Map<const Mat>(a, k, m).transpose(), Eigen::Map<const Mat>(b, n, k).transpose());
  }
}

template void gemm<float>(bool, bool, int, int, int, float, const float*, const float*, float, float*);
template void gemm<double>(bool, bool, int, int, int, double, const double*, const double*, double,
                           double*);

namespace {

template <typename T, int Slot = 0>
std::vector<T>& workspace() {
  thread_local std::vector<T> buf;
  return buf;
}

// Columns for output rows [oy0, oy1): (in * k * k) x ((oy1 - oy0) * ow).
template <typename T>
void im2col(const Tensor<T>& x, int k, int stride, int pad, int oy0, int oy1, int ow, T* col) {
  const int h = x.height();
  const int w = x.width();
  const int rows = oy1 - oy0;
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.channel(c);
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* dst = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * rows * ow;
        // valid ox range: 0 <= ox * stride - pad + kj < w
        const int lo = std::clamp((pad - kj + stride - 1) / stride, 0, ow);
        const int hi = std::clamp((w - 1 + pad - kj) / stride + 1, lo, ow);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* row = dst + (oy - oy0) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + ow, T(0));
            continue;
          }
          std::fill(row, row + lo, T(0));
          std::fill(row + hi, row + ow, T(0));
          const T* s = src + iy * w + lo * stride - pad + kj;
          if (stride == 1) {
            std::copy(s, s + (hi - lo), row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox, s += stride) row[ox] = *s;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int k, int stride, int pad, int oy0, int oy1, int ow, Tensor<T>& dx) {
  const int h = dx.height();
  const int w = dx.width();
  const int rows = oy1 - oy0;
  for (int c = 0; c < dx.channels(); ++c) {
    T* dst = dx.channel(c);
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* src = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * rows * ow;
        const int lo = std::clamp((pad - kj + stride - 1) / stride, 0, ow);
        const int hi = std::clamp((w - 1 + pad - kj) / stride + 1, lo, ow);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const T* srow = src + (oy - oy0) * ow;
          T* d = dst + iy * w + lo * stride - pad + kj;
          for (int ox = lo; ox < hi; ++ox, d += stride) *d += srow[ox];
        }
      }
    }
  }
}

// Output rows per tile so that one column tile stays around 256 KiB.
template <typename T>
int tile_rows(int fan_in, int ow, int oh) {
  const std::size_t per_row = static_cast<std::size_t>(fan_in) * ow * sizeof(T);
  return std::clamp(static_cast<int>((256u << 10) / std::max<std::size_t>(per_row, 1)), 1, oh);
}

// Unpadded convolutions run on stride phases: for stride s, plane (c, pi, pj) holds
// x[c][s*a + pi][s*b + pj]. Tap (ki, kj) then reads phase (ki % s, kj % s) shifted by
// (ki / s, kj / s) with unit stride. Outputs are computed on a "wide" grid whose row pitch is
// the phase width, which makes every column row a single contiguous run; the extra columns
// are discarded.
struct PhaseLayout {
  int s = 1;
  int hp = 0;  // phase plane height
  int wp = 0;  // phase plane width = wide row pitch
  int plane() const { return hp * wp; }
};

template <typename T>
PhaseLayout phase_layout(const Tensor<T>& x, int stride) {
  return {stride, (x.height() + stride - 1) / stride, (x.width() + stride - 1) / stride};
}

template <typename T>
const T* to_phases(const Tensor<T>& x, const PhaseLayout& L, std::vector<T>& buf) {
  if (L.s == 1) return x.data();
  buf.assign(static_cast<std::size_t>(x.channels()) * L.s * L.s * L.plane(), T(0));
  const int w = x.width();
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.channel(c);
    for (int pi = 0; pi < L.s; ++pi) {
      for (int pj = 0; pj < L.s; ++pj) {
        T* dst = buf.data() + static_cast<std::size_t>((c * L.s + pi) * L.s + pj) * L.plane();
        const int nb = (w - pj + L.s - 1) / L.s;
        for (int y = pi, a = 0; y < x.height(); y += L.s, ++a) {
          const T* row = src + y * w + pj;
          T* d = dst + a * L.wp;
          for (int b = 0; b < nb; ++b) d[b] = row[b * L.s];
        }
      }
    }
  }
  return buf.data();
}

template <typename T>
void from_phases(const std::vector<T>& buf, const PhaseLayout& L, Tensor<T>& dx) {
  const int w = dx.width();
  for (int c = 0; c < dx.channels(); ++c) {
    T* dst = dx.channel(c);
    for (int pi = 0; pi < L.s; ++pi) {
      for (int pj = 0; pj < L.s; ++pj) {
        const T* src = buf.data() + static_cast<std::size_t>((c * L.s + pi) * L.s + pj) * L.plane();
        const int nb = (w - pj + L.s - 1) / L.s;
        for (int y = pi, a = 0; y < dx.height(); y += L.s, ++a) {
          T* row = dst + y * w + pj;
          const T* d = src + a * L.wp;
          for (int b = 0; b < nb; ++b) row[b * L.s] += d[b];
        }
      }
    }
  }
}

// Offset of tap (c, ki, kj) for wide output row oy0 inside the phase buffer, and the number of
// readable elements left in that phase plane.
inline std::pair<std::size_t, std::size_t> tap_span(int c, int ki, int kj, int oy0, const PhaseLayout& L) {
  const int ph = (c * L.s + ki % L.s) * L.s + kj % L.s;
  const std::size_t in_plane = static_cast<std::size_t>(oy0 + ki / L.s) * L.wp + kj / L.s;
  const std::size_t left = in_plane < static_cast<std::size_t>(L.plane()) ? L.plane() - in_plane : 0;
  return {static_cast<std::size_t>(ph) * L.plane() + in_plane, left};
}

template <typename T>
void wide_im2col(const T* phases, int in, int k, const PhaseLayout& L, int oy0, int rows, T* col) {
  const std::size_t len = static_cast<std::size_t>(rows) * L.wp;
  T* dst = col;
  for (int c = 0; c < in; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, dst += len) {
        const auto [off, left] = tap_span(c, ki, kj, oy0, L);
        const std::size_t n = std::min(len, left);
        std::copy(phases + off, phases + off + n, dst);
        std::fill(dst + n, dst + len, T(0));
      }
    }
  }
}

template <typename T>
void wide_col2im(const T* col, int in, int k, const PhaseLayout& L, int oy0, int rows, T* phases) {
  const std::size_t len = static_cast<std::size_t>(rows) * L.wp;
  const T* src = col;
  for (int c = 0; c < in; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, src += len) {
        const auto [off, left] = tap_span(c, ki, kj, oy0, L);
        const std::size_t n = std::min(len, left);
        T* d = phases + off;
        for (std::size_t i = 0; i < n; ++i) d[i] += src[i];
      }
    }
  }
}

// Phase planes copied into a buffer with enough zero tail for blocked reads past the end.
template <typename T>
std::size_t padded_phase_size(int channels, const PhaseLayout& L) {
  return static_cast<std::size_t>(channels) * L.s * L.s * L.plane() + detail::Blocking<T>::kCols + 2 * L.wp + 64;
}

template <typename T>
void padded_phases(const Tensor<T>& x, const PhaseLayout& L, std::vector<T>& buf) {
  if (L.s == 1) {
    buf.resize(padded_phase_size<T>(x.channels(), L));
    std::copy(x.data(), x.data() + x.size(), buf.data());
    std::fill(buf.begin() + x.size(), buf.end(), T(0));
    return;
  }
  to_phases(x, L, buf);
  buf.resize(padded_phase_size<T>(x.channels(), L), T(0));
}

inline std::vector<std::size_t> tap_offsets(int in, int k, const PhaseLayout& L) {
  std::vector<std::size_t> off;
  off.reserve(static_cast<std::size_t>(in) * k * k);
  for (int c = 0; c < in; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) off.push_back(tap_span(c, ki, kj, 0, L).first);
    }
  }
  return off;
}

inline int round_up(int v, int m) { return (v + m - 1) / m * m; }

// Output channel count up to which the blocked kernels beat packed GEMM.
inline int implicit_max_out() {
  static const int v = [] {
    const char* e = std::getenv("RFL_IMPLICIT_MAX");
    return e ? std::atoi(e) : 64;
  }();
  return v;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad)
    : weight({out_channels, in_channels, kernel, kernel}),
      bias({out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad) {}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng, double gain, T bias_value) {
  std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in())));
  for (auto& v : weight.value) v = static_cast<T>(dist(rng));
  std::fill(bias.value.begin(), bias.value.end(), bias_value);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  if (x.channels() != in_) {
    throw ShapeError("conv: expected " + std::to_string(in_) + " input channels, got " +
                     std::to_string(x.channels()));
  }
  const int oh = out_extent(x.height());
  const int ow = out_extent(x.width());
  if (oh <= 0 || ow <= 0) throw ShapeError("conv: input smaller than kernel");
  Tensor<T> y(out_, oh, ow);
  const int kk = fan_in();
  const int n = oh * ow;
  for (int o = 0; o < out_; ++o) std::fill(y.channel(o), y.channel(o) + n, bias.value[o]);
  if (k_ == 1 && stride_ == 1 && pad_ == 0) {
    gemm<T>(false, false, out_, n, kk, T(1), weight.value.data(), x.data(), T(1), y.data());
    return y;
  }
  const Eigen::Map<const RowMat<T>> wm(weight.value.data(), out_, kk);
  auto& buf = workspace<T, 0>();
  if (pad_ > 0) {
    const int tr = tile_rows<T>(kk, ow, oh);
    buf.resize(static_cast<std::size_t>(kk) * tr * ow);
    for (int oy0 = 0; oy0 < oh; oy0 += tr) {
      const int oy1 = std::min(oh, oy0 + tr);
      const int cols = (oy1 - oy0) * ow;
      im2col(x, k_, stride_, pad_, oy0, oy1, ow, buf.data());
      const Eigen::Map<const RowMat<T>> cm(buf.data(), kk, cols);
      StridedMap<T> ym(y.data() + oy0 * ow, out_, cols, Eigen::OuterStride<>(n));
      ym.noalias() += wm * cm;
    }
    return y;
  }
  const PhaseLayout L = phase_layout(x, stride_);
  if (out_ <= implicit_max_out()) {
    auto& ph = workspace<T, 1>();
    padded_phases(x, L, ph);
    const auto off = tap_offsets(in_, k_, L);
    auto& wt = workspace<T, 3>();
    wt.resize(static_cast<std::size_t>(kk) * out_);
    for (int o = 0; o < out_; ++o) {
      for (int t = 0; t < kk; ++t) wt[static_cast<std::size_t>(t) * out_ + o] = weight.value[static_cast<std::size_t>(o) * kk + t];
    }
    const int cols = oh * L.wp;
    const int pitch = round_up(cols, detail::Blocking<T>::kCols);
    auto& wide = workspace<T, 2>();
    wide.resize(static_cast<std::size_t>(out_) * pitch);
    detail::implicit_forward(ph.data(), off, wt.data(), out_, cols, wide.data(), pitch);
    for (int o = 0; o < out_; ++o) {
      for (int r = 0; r < oh; ++r) {
        const T* src = wide.data() + static_cast<std::size_t>(o) * pitch + r * L.wp;
        T* dst = y.channel(o) + r * ow;
        for (int i = 0; i < ow; ++i) dst[i] += src[i];
      }
    }
    return y;
  }
  const T* phases = to_phases(x, L, workspace<T, 1>());
  const int tr = tile_rows<T>(kk, L.wp, oh);
  buf.resize(static_cast<std::size_t>(kk) * tr * L.wp);
  auto& wide = workspace<T, 2>();
  wide.resize(static_cast<std::size_t>(out_) * tr * L.wp);
  for (int oy0 = 0; oy0 < oh; oy0 += tr) {
    const int rows = std::min(oh - oy0, tr);
    const int cols = rows * L.wp;
    wide_im2col(phases, in_, k_, L, oy0, rows, buf.data());
    Eigen::Map<RowMat<T>> out(wide.data(), out_, cols);
    out.noalias() = wm * Eigen::Map<const RowMat<T>>(buf.data(), kk, cols);
    for (int o = 0; o < out_; ++o) {
      for (int r = 0; r < rows; ++r) {
        const T* src = wide.data() + static_cast<std::size_t>(o) * cols + r * L.wp;
        T* dst = y.channel(o) + (oy0 + r) * ow;
        for (int i = 0; i < ow; ++i) dst[i] += src[i];
      }
    }
  }
  return y;
}

template <typename T>
void Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
  const int oh = dy.height();
  const int ow = dy.width();
  const int n = oh * ow;
  const int kk = fan_in();
  for (int o = 0; o < out_; ++o) {
    const T* g = dy.channel(o);
    T s = 0;
    for (int i = 0; i < n; ++i) s += g[i];
    bias.grad[o] += s;
  }
  if (k_ == 1 && stride_ == 1 && pad_ == 0) {
    gemm<T>(false, true, out_, kk, n, T(1), dy.data(), x.data(), T(1), weight.grad.data());
    if (dx) {
      *dx = Tensor<T>(in_, x.height(), x.width());
      gemm<T>(true, false, kk, n, out_, T(1), weight.value.data(), dy.data(), T(0), dx->data());
    }
    return;
  }
  if (dx) *dx = Tensor<T>(in_, x.height(), x.width());
  const Eigen::Map<const RowMat<T>> wm(weight.value.data(), out_, kk);
  Eigen::Map<RowMat<T>> gw(weight.grad.data(), out_, kk);
  auto& buf = workspace<T, 0>();
  if (pad_ > 0) {
    const int tr = tile_rows<T>(kk, ow, oh);
    buf.resize(static_cast<std::size_t>(kk) * tr * ow);
    for (int oy0 = 0; oy0 < oh; oy0 += tr) {
      const int oy1 = std::min(oh, oy0 + tr);
      const int cols = (oy1 - oy0) * ow;
      const ConstStridedMap<T> gm(dy.data() + oy0 * ow, out_, cols, Eigen::OuterStride<>(n));
      im2col(x, k_, stride_, pad_, oy0, oy1, ow, buf.data());
      Eigen::Map<RowMat<T>> cm(buf.data(), kk, cols);
      gw.noalias() += gm * cm.transpose();
      if (dx) {
        // the column tile is consumed; reuse it for the column gradient
        cm.noalias() = wm.transpose() * gm;
        col2im(buf.data(), k_, stride_, pad_, oy0, oy1, ow, *dx);
      }
    }
    return;
  }
  const PhaseLayout L = phase_layout(x, stride_);
  if (out_ <= implicit_max_out()) {
    auto& ph = workspace<T, 1>();
    padded_phases(x, L, ph);
    const auto off = tap_offsets(in_, k_, L);
    const int cols = oh * L.wp;
    const int pitch = round_up(cols, detail::Blocking<T>::kCols);
    auto& wide = workspace<T, 2>();
    wide.assign(static_cast<std::size_t>(out_) * pitch, T(0));
    for (int o = 0; o < out_; ++o) {
      for (int r = 0; r < oh; ++r) {
        std::copy(dy.channel(o) + r * ow, dy.channel(o) + (r + 1) * ow,
                  wide.data() + static_cast<std::size_t>(o) * pitch + r * L.wp);
      }
    }
    detail::implicit_weight_grad(ph.data(), off, wide.data(), out_, cols, pitch, weight.grad.data());
    if (dx) {
      std::vector<T> dph(padded_phase_size<T>(in_, L), T(0));
      detail::implicit_input_grad(weight.value.data(), off, wide.data(), out_, cols, pitch, dph.data());
      if (L.s == 1) {
        std::copy(dph.data(), dph.data() + dx->size(), dx->data());
      } else {
        dph.resize(static_cast<std::size_t>(in_) * L.s * L.s * L.plane());
        from_phases(dph, L, *dx);
      }
    }
    return;
  }
  const T* phases = to_phases(x, L, workspace<T, 1>());
  std::vector<T> dphase_local;
  T* dphases = nullptr;
  if (dx) {
    if (L.s == 1) {
      dphases = dx->data();
    } else {
      dphase_local.assign(static_cast<std::size_t>(in_) * L.s * L.s * L.plane(), T(0));
      dphases = dphase_local.data();
    }
  }
  const int tr = tile_rows<T>(kk, L.wp, oh);
  buf.resize(static_cast<std::size_t>(kk) * tr * L.wp);
  auto& wide = workspace<T, 2>();
  wide.resize(static_cast<std::size_t>(out_) * tr * L.wp);
  for (int oy0 = 0; oy0 < oh; oy0 += tr) {
    const int rows = std::min(oh - oy0, tr);
    const int cols = rows * L.wp;
    // dy on the wide grid, zero in the discarded columns
    for (int o = 0; o < out_; ++o) {
      for (int r = 0; r < rows; ++r) {
        T* dst = wide.data() + static_cast<std::size_t>(o) * cols + r * L.wp;
        std::copy(dy.channel(o) + (oy0 + r) * ow, dy.channel(o) + (oy0 + r + 1) * ow, dst);
        std::fill(dst + ow, dst + L.wp, T(0));
      }
    }
    const Eigen::Map<const RowMat<T>> gm(wide.data(), out_, cols);
    wide_im2col(phases, in_, k_, L, oy0, rows, buf.data());
    Eigen::Map<RowMat<T>> cm(buf.data(), kk, cols);
    gw.noalias() += gm * cm.transpose();
    if (dx) {
      cm.noalias() = wm.transpose() * gm;
      wide_col2im(buf.data(), in_, k_, L, oy0, rows, dphases);
    }
  }
  if (dx && L.s > 1) from_phases(dphase_local, L, *dx);
}

template <typename T>
BatchNorm<T>::BatchNorm(int channels)
    : scale({channels}), offset({channels}), running_mean(channels, T(0)), running_var(channels, T(1)) {
  std::fill(scale.value.begin(), scale.value.end(), T(1));
}

template <typename T>
void BatchNorm<T>::forward_train(std::vector<Tensor<T>>& batch, Cache* cache, bool update_running) {
  if (batch.empty()) return;
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const int ch = channels();
  const int plane = batch.front().plane();
  const double count = static_cast<double>(plane) * batch.size();
  if (cache) {
    cache->inv_std.assign(ch, T(0));
    cache->normalized.clear();
    for (const auto& x : batch) cache->normalized.emplace_back(x.channels(), x.height(), x.width());
  }
  for (int c = 0; c < ch; ++c) {
    double sum = 0;
    for (const auto& x : batch) sum += Eigen::Map<const Arr>(x.channel(c), plane).template cast<double>().sum();
    const double mean = sum / count;
    double sq = 0;
    for (const auto& x : batch) {
      sq += (Eigen::Map<const Arr>(x.channel(c), plane).template cast<double>() - mean).square().sum();
    }
    const double var = sq / count;
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    if (update_running) {
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mean);
      running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * unbiased);
    }
    const T m = static_cast<T>(mean);
    const T g = scale.value[c];
    const T b = offset.value[c];
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Eigen::Map<Arr> p(batch[i].channel(c), plane);
      if (cache) {
        Eigen::Map<Arr> xh(cache->normalized[i].channel(c), plane);
        xh = (p - m) * inv;
        p = xh * g + b;
      } else {
        p = (p - m) * inv * g + b;
      }
    }
    if (cache) cache->inv_std[c] = inv;
  }
}

template <typename T>
void BatchNorm<T>::forward_infer(Tensor<T>& x) const {
  const int plane = x.plane();
  for (int c = 0; c < x.channels(); ++c) {
    const T inv = T(1) / std::sqrt(running_var[c] + eps);
    const T g = scale.value[c] * inv;
    const T b = offset.value[c] - running_mean[c] * g;
    T* p = x.channel(c);
    for (int i = 0; i < plane; ++i) p[i] = g * p[i] + b;
  }
}

template <typename T>
void BatchNorm<T>::backward(const Cache& cache, std::vector<Tensor<T>>& grads) {
  if (grads.empty()) return;
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const int ch = channels();
  const int plane = grads.front().plane();
  const double count = static_cast<double>(plane) * grads.size();
  for (int c = 0; c < ch; ++c) {
    double dscale = 0;
    double doffset = 0;
    for (std::size_t b = 0; b < grads.size(); ++b) {
      const Eigen::Map<const Arr> g(grads[b].channel(c), plane);
      const Eigen::Map<const Arr> xh(cache.normalized[b].channel(c), plane);
      dscale += (g.template cast<double>() * xh.template cast<double>()).sum();
      doffset += g.template cast<double>().sum();
    }
    scale.grad[c] += static_cast<T>(dscale);
    offset.grad[c] += static_cast<T>(doffset);
    const double k = static_cast<double>(scale.value[c]) * cache.inv_std[c] / count;
    const T a = static_cast<T>(k * count);
    const T d0 = static_cast<T>(k * doffset);
    const T d1 = static_cast<T>(k * dscale);
    for (std::size_t b = 0; b < grads.size(); ++b) {
      Eigen::Map<Arr> g(grads[b].channel(c), plane);
      const Eigen::Map<const Arr> xh(cache.normalized[b].channel(c), plane);
      g = a * g - d0 - xh * d1;
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& output, Tensor<T>& grad) {
  const T* o = output.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(o[i] > T(0))) g[i] = T(0);
  }
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int kernel, int stride, std::vector<std::int32_t>* argmax) {
  const int oh = (x.height() - kernel) / stride + 1;
  const int ow = (x.width() - kernel) / stride + 1;
  Tensor<T> y(x.channels(), oh, ow);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int c = 0; c < x.channels(); ++c) {
    const T* src = x.channel(c);
    const std::int32_t base = c * x.plane();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        int best_idx = 0;
        for (int ki = 0; ki < kernel; ++ki) {
          const int row = (oy * stride + ki) * x.width();
          for (int kj = 0; kj < kernel; ++kj) {
            const int idx = row + ox * stride + kj;
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        y[o] = best;
        if (argmax) (*argmax)[o] = base + best_idx;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& dy, const std::vector<std::int32_t>& argmax, int in_c,
                            int in_h, int in_w) {
  Tensor<T> dx(in_c, in_h, in_w);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template void relu_inplace<float>(Tensor<float>&);
template void relu_inplace<double>(Tensor<double>&);
template void relu_backward_inplace<float>(const Tensor<float>&, Tensor<float>&);
template void relu_backward_inplace<double>(const Tensor<double>&, Tensor<double>&);
template Tensor<float> max_pool<float>(const Tensor<float>&, int, int, std::vector<std::int32_t>*);
template Tensor<double> max_pool<double>(const Tensor<double>&, int, int, std::vector<std::int32_t>*);
template Tensor<float> max_pool_backward<float>(const Tensor<float>&, const std::vector<std::int32_t>&,
                                                int, int, int);
template Tensor<double> max_pool_backward<double>(const Tensor<double>&,
                                                  const std::vector<std::int32_t>&, int, int, int);

}  // namespace rfl
