#include "rfl/filtergen.hpp"

#include <cmath>

namespace rfl {

namespace {

template <typename T>
T sigmoid(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace

template <typename T>
FilterGenerator<T>::FilterGenerator(const LstmSpec& spec, std::mt19937_64& rng) : spec_(spec) {
  if (spec.gate_kernel != 1 && spec.gate_kernel != 3) throw Error("lstm: gate kernel must be 1 or 3");
  const int in = spec.input_channels;
  const int hid = spec.hidden_channels;
  gates = Conv2d<T>(in + hid, 4 * hid, spec.gate_kernel, 1, (spec.gate_kernel - 1) / 2);
  gates.init(rng, 1.0);
  // Forget gate starts open.
  for (int o = 0; o < hid; ++o) gates.bias.value[static_cast<int>(Gate::Forget) * hid + o] = T(1);
  init_h = Conv2d<T>(in, hid, 3, 1, 1);
  init_h.init(rng, 1.0);
  init_c = Conv2d<T>(in, hid, 3, 1, 1);
  init_c.init(rng, 1.0);
  output = Conv2d<T>(hid, in, 1, 1, 0);
  // Keeps initial correlation logits near unit scale: the filter is summed over
  // extent^2 * channels terms.
  const double taps = static_cast<double>(spec.feature_extent) * spec.feature_extent * in;
  output.init(rng, 1.0 / std::sqrt(taps));
}

template <typename T>
void FilterGenerator<T>::check_exemplar(const Tensor<T>& e, const char* what) const {
  if (e.channels() != spec_.input_channels || e.height() != spec_.feature_extent ||
      e.width() != spec_.feature_extent) {
    require_shape(e, spec_.input_channels, spec_.feature_extent, spec_.feature_extent, what);
  }
}

template <typename T>
LstmState<T> FilterGenerator<T>::init_state(const Tensor<T>& e0, InitCache* cache) const {
  check_exemplar(e0, "init_state");
  const int hid = spec_.hidden_channels;
  LstmState<T> s;
  if (spec_.zero_init) {
    s.h = Tensor<T>(hid, e0.height(), e0.width());
    s.c = Tensor<T>(hid, e0.height(), e0.width());
  } else {
    s.h = init_h.forward(e0);
    s.c = init_c.forward(e0);
    for (auto& v : s.h.values()) v = std::tanh(v);
    for (auto& v : s.c.values()) v = std::tanh(v);
  }
  if (cache) {
    cache->e0 = e0;
    cache->state = s;
  }
  return s;
}

template <typename T>
LstmState<T> FilterGenerator<T>::step(const LstmState<T>& state, const Tensor<T>& e,
                                      StepCache* cache) const {
  check_exemplar(e, "lstm_step");
  const int in = spec_.input_channels;
  const int hid = spec_.hidden_channels;
  require_shape(state.h, hid, e.height(), e.width(), "lstm_step hidden");
  require_shape(state.c, hid, e.height(), e.width(), "lstm_step cell");

  const int plane = e.plane();
  Tensor<T> x(in + hid, e.height(), e.width());
  std::copy(e.data(), e.data() + e.size(), x.data());
  std::copy(state.h.data(), state.h.data() + state.h.size(), x.data() + e.size());

  Tensor<T> g = gates.forward(x);
  const std::size_t n = static_cast<std::size_t>(hid) * plane;
  T* f = g.data();
  T* i = f + n;
  T* est = i + n;
  T* o = est + n;
  for (std::size_t k = 0; k < n; ++k) {
    f[k] = sigmoid(f[k]);
    i[k] = sigmoid(i[k]);
    est[k] = std::tanh(est[k]);
    o[k] = sigmoid(o[k]);
  }

  LstmState<T> next{Tensor<T>(hid, e.height(), e.width()), Tensor<T>(hid, e.height(), e.width())};
  Tensor<T> tanh_c(hid, e.height(), e.width());
  const T* cp = state.c.data();
  for (std::size_t k = 0; k < n; ++k) {
    const T c = f[k] * cp[k] + i[k] * est[k];
    next.c[k] = c;
    tanh_c[k] = std::tanh(c);
    next.h[k] = o[k] * tanh_c[k];
  }
  if (!next.c.all_finite() || !next.h.all_finite()) throw NumericError("lstm_step: non-finite state");
  if (cache) {
    cache->x = std::move(x);
    cache->gates = std::move(g);
    cache->c_prev = state.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

template <typename T>
Tensor<T> FilterGenerator<T>::generate_filter(const Tensor<T>& h) const {
  require_shape(h, spec_.hidden_channels, spec_.feature_extent, spec_.feature_extent, "generate_filter");
  return output.forward(h);
}

template <typename T>
void FilterGenerator<T>::init_backward(const InitCache& cache, const LstmState<T>& grad,
                                       Tensor<T>* grad_e0) {
  if (spec_.zero_init) {
    if (grad_e0) *grad_e0 = Tensor<T>(cache.e0.channels(), cache.e0.height(), cache.e0.width());
    return;
  }
  Tensor<T> dh = grad.h;
  Tensor<T> dc = grad.c;
  for (std::size_t k = 0; k < dh.size(); ++k) {
    dh[k] *= T(1) - cache.state.h[k] * cache.state.h[k];
    dc[k] *= T(1) - cache.state.c[k] * cache.state.c[k];
  }
  Tensor<T> de_h;
  Tensor<T> de_c;
  init_h.backward(cache.e0, dh, grad_e0 ? &de_h : nullptr);
  init_c.backward(cache.e0, dc, grad_e0 ? &de_c : nullptr);
  if (grad_e0) {
    de_h += de_c;
    *grad_e0 = std::move(de_h);
  }
}

template <typename T>
LstmState<T> FilterGenerator<T>::step_backward(const StepCache& cache, const LstmState<T>& grad,
                                               Tensor<T>* grad_e) {
  const int in = spec_.input_channels;
  const int hid = spec_.hidden_channels;
  const int hh = grad.h.height();
  const int ww = grad.h.width();
  const std::size_t n = static_cast<std::size_t>(hid) * hh * ww;
  const T* f = cache.gates.data();
  const T* i = f + n;
  const T* est = i + n;
  const T* o = est + n;

  LstmState<T> prev{Tensor<T>(hid, hh, ww), Tensor<T>(hid, hh, ww)};
  Tensor<T> dpre(4 * hid, hh, ww);
  T* df = dpre.data();
  T* di = df + n;
  T* de = di + n;
  T* dout = de + n;
  for (std::size_t k = 0; k < n; ++k) {
    const T tc = cache.tanh_c[k];
    const T dh = grad.h[k];
    const T dc = grad.c[k] + dh * o[k] * (T(1) - tc * tc);
    dout[k] = dh * tc * o[k] * (T(1) - o[k]);
    df[k] = dc * cache.c_prev[k] * f[k] * (T(1) - f[k]);
    di[k] = dc * est[k] * i[k] * (T(1) - i[k]);
    de[k] = dc * i[k] * (T(1) - est[k] * est[k]);
    prev.c[k] = dc * f[k];
  }
  Tensor<T> dx;
  gates.backward(cache.x, dpre, &dx);
  const std::size_t ne = static_cast<std::size_t>(in) * hh * ww;
  std::copy(dx.data() + ne, dx.data() + dx.size(), prev.h.data());
  if (grad_e) {
    *grad_e = Tensor<T>(in, hh, ww);
    std::copy(dx.data(), dx.data() + ne, grad_e->data());
  }
  return prev;
}

template <typename T>
Tensor<T> FilterGenerator<T>::filter_backward(const Tensor<T>& h, const Tensor<T>& grad_filter) {
  Tensor<T> dh;
  output.backward(h, grad_filter, &dh);
  return dh;
}

template <typename T>
LstmState<T> damp_state(const LstmState<T>& old, const LstmState<T>& fresh, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("damp_state: beta must lie in [0, 1]");
  if (!old.h.same_shape(fresh.h) || !old.c.same_shape(fresh.c)) {
    throw ShapeError("damp_state: state shapes differ");
  }
  LstmState<T> out = old;
  const T b = static_cast<T>(beta);
  const T keep = static_cast<T>(1.0 - beta);
  for (std::size_t k = 0; k < out.h.size(); ++k) out.h[k] = keep * old.h[k] + b * fresh.h[k];
  for (std::size_t k = 0; k < out.c.size(); ++k) out.c[k] = keep * old.c[k] + b * fresh.c[k];
  return out;
}

template class FilterGenerator<float>;
template class FilterGenerator<double>;
template LstmState<float> damp_state<float>(const LstmState<float>&, const LstmState<float>&, double);
template LstmState<double> damp_state<double>(const LstmState<double>&, const LstmState<double>&, double);

}  // namespace rfl
