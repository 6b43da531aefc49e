#pragma once

// Register-blocked kernels for unpadded convolution on the wide phase layout (see layers.cpp).
// Output position j of the wide grid reads input element x[off[tap] + j] for every tap.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace rfl::detail {

template <typename T>
struct VecOf;
template <>
struct VecOf<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct VecOf<double> {
  typedef double type __attribute__((vector_size(64)));
};

template <typename T>
struct Blocking {
  using Vec = typename VecOf<T>::type;
  static constexpr int kLanes = 64 / sizeof(T);
  static constexpr int kVecs = 4;                  // vectors per column block
  static constexpr int kCols = kVecs * kLanes;     // wide columns per block
  static constexpr int kOut = 6;                   // output channels (or taps) per block
  static constexpr int kTaps = 4;                  // taps per block in the weight gradient
};

template <typename V, typename T>
inline V load(const T* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}

template <typename V, typename T>
inline void store(T* p, const V& v) {
  std::memcpy(p, &v, sizeof(V));
}

// y[o][j] = sum_tap wt[tap][o] * x[off[tap] + j] for j < cols. wt is tap-major (kk x out).
// y rows have pitch `pitch` (a multiple of kCols); x must be readable up to the padded width.
template <typename T>
void implicit_forward(const T* x, const std::vector<std::size_t>& off, const T* wt, int out, int cols,
                      T* y, int pitch) {
  using B = Blocking<T>;
  using V = typename B::Vec;
  const int kk = static_cast<int>(off.size());
  for (int o0 = 0; o0 < out; o0 += B::kOut) {
    const int ob = std::min(B::kOut, out - o0);
    for (int j0 = 0; j0 < cols; j0 += B::kCols) {
      V acc[B::kOut][B::kVecs] = {};
      if (ob == B::kOut) {
        for (int t = 0; t < kk; ++t) {
          const T* xr = x + off[t] + j0;
          const V x0 = load<V>(xr), x1 = load<V>(xr + B::kLanes), x2 = load<V>(xr + 2 * B::kLanes),
                  x3 = load<V>(xr + 3 * B::kLanes);
          const T* w = wt + static_cast<std::size_t>(t) * out + o0;
          for (int b = 0; b < B::kOut; ++b) {
            const T wv = w[b];
            acc[b][0] += wv * x0;
            acc[b][1] += wv * x1;
            acc[b][2] += wv * x2;
            acc[b][3] += wv * x3;
          }
        }
      } else {
        for (int t = 0; t < kk; ++t) {
          const T* xr = x + off[t] + j0;
          const T* w = wt + static_cast<std::size_t>(t) * out + o0;
          for (int b = 0; b < ob; ++b) {
            for (int v = 0; v < B::kVecs; ++v) acc[b][v] += w[b] * load<V>(xr + v * B::kLanes);
          }
        }
      }
      for (int b = 0; b < ob; ++b) {
        T* dst = y + static_cast<std::size_t>(o0 + b) * pitch + j0;
        for (int v = 0; v < B::kVecs; ++v) store(dst + v * B::kLanes, acc[b][v]);
      }
    }
  }
}

// gw[o][tap] += sum_j dy[o][j] * x[off[tap] + j]. dy rows have pitch `pitch` and are zero from
// cols up to the pitch.
template <typename T>
void implicit_weight_grad(const T* x, const std::vector<std::size_t>& off, const T* dy, int out, int cols,
                          int pitch, T* gw) {
  using B = Blocking<T>;
  using V = typename B::Vec;
  const int kk = static_cast<int>(off.size());
  const int jn = (cols + B::kLanes - 1) / B::kLanes * B::kLanes;
  for (int o0 = 0; o0 < out; o0 += B::kOut) {
    const int ob = std::min(B::kOut, out - o0);
    for (int t0 = 0; t0 < kk; t0 += B::kTaps) {
      const int tb = std::min(B::kTaps, kk - t0);
      V acc[B::kTaps][B::kOut] = {};
      if (ob == B::kOut && tb == B::kTaps) {
        const T* xr0 = x + off[t0];
        const T* xr1 = x + off[t0 + 1];
        const T* xr2 = x + off[t0 + 2];
        const T* xr3 = x + off[t0 + 3];
        for (int j = 0; j < jn; j += B::kLanes) {
          const V x0 = load<V>(xr0 + j), x1 = load<V>(xr1 + j), x2 = load<V>(xr2 + j), x3 = load<V>(xr3 + j);
          for (int b = 0; b < B::kOut; ++b) {
            const V d = load<V>(dy + static_cast<std::size_t>(o0 + b) * pitch + j);
            acc[0][b] += d * x0;
            acc[1][b] += d * x1;
            acc[2][b] += d * x2;
            acc[3][b] += d * x3;
          }
        }
      } else {
        for (int j = 0; j < jn; j += B::kLanes) {
          for (int a = 0; a < tb; ++a) {
            const V xv = load<V>(x + off[t0 + a] + j);
            for (int b = 0; b < ob; ++b) acc[a][b] += load<V>(dy + static_cast<std::size_t>(o0 + b) * pitch + j) * xv;
          }
        }
      }
      for (int a = 0; a < tb; ++a) {
        for (int b = 0; b < ob; ++b) {
          T s = 0;
          for (int l = 0; l < B::kLanes; ++l) s += acc[a][b][l];
          gw[static_cast<std::size_t>(o0 + b) * kk + t0 + a] += s;
        }
      }
    }
  }
}

// dx[off[tap] + j] += sum_o w[o][tap] * dy[o][j]. w is out-major (out x kk); dy rows are zero
// from cols up to the pitch, so the wrapped columns add nothing.
template <typename T>
void implicit_input_grad(const T* w, const std::vector<std::size_t>& off, const T* dy, int out, int cols,
                         int pitch, T* dx) {
  using B = Blocking<T>;
  using V = typename B::Vec;
  const int kk = static_cast<int>(off.size());
  for (int t0 = 0; t0 < kk; t0 += B::kOut) {
    const int tb = std::min(B::kOut, kk - t0);
    for (int j0 = 0; j0 < cols; j0 += B::kCols) {
      V acc[B::kOut][B::kVecs] = {};
      for (int o = 0; o < out; ++o) {
        const T* d = dy + static_cast<std::size_t>(o) * pitch + j0;
        const V d0 = load<V>(d), d1 = load<V>(d + B::kLanes), d2 = load<V>(d + 2 * B::kLanes),
                d3 = load<V>(d + 3 * B::kLanes);
        const T* wr = w + static_cast<std::size_t>(o) * kk + t0;
        for (int a = 0; a < tb; ++a) {
          const T wv = wr[a];
          acc[a][0] += wv * d0;
          acc[a][1] += wv * d1;
          acc[a][2] += wv * d2;
          acc[a][3] += wv * d3;
        }
      }
      for (int a = 0; a < tb; ++a) {
        T* dst = dx + off[t0 + a] + j0;
        for (int v = 0; v < B::kVecs; ++v) store(dst + v * B::kLanes, load<V>(dst + v * B::kLanes) + acc[a][v]);
      }
    }
  }
}

}  // namespace rfl::detail
