#pragma once

#include <random>

#include "rfl/layers.hpp"

namespace rfl {

struct LstmSpec {
  int input_channels = 256;
  int hidden_channels = 1024;
  // 3 for the convolutional LSTM, 1 for the per-position ("norm") LSTM variant.
  int gate_kernel = 3;
  // Skip the initialization network and start from an all-zero memory.
  bool zero_init = false;
  // Spatial extent of exemplar feature maps; only used to scale the output-layer init.
  int feature_extent = 6;
};

// Target appearance memory: hidden and cell maps, hidden_channels x 6 x 6 each.
template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

// Gate order inside the fused gate convolution.
enum class Gate : int { Forget = 0, Input = 1, Estimate = 2, Output = 3 };

// Convolutional LSTM with its memory initialization network and 1x1 output layer that
// turns the hidden state into a correlation filter.
template <typename T>
class FilterGenerator {
 public:
  struct InitCache {
    Tensor<T> e0;
    LstmState<T> state;
  };
  struct StepCache {
    Tensor<T> x;       // concat(e_t, h_{t-1})
    Tensor<T> gates;   // activated f, i, e, o stacked along channels
    Tensor<T> c_prev;
    Tensor<T> tanh_c;
  };

  FilterGenerator() = default;
  FilterGenerator(const LstmSpec& spec, std::mt19937_64& rng);

  const LstmSpec& spec() const { return spec_; }

  LstmState<T> init_state(const Tensor<T>& e0, InitCache* cache = nullptr) const;
  LstmState<T> step(const LstmState<T>& state, const Tensor<T>& e, StepCache* cache = nullptr) const;
  Tensor<T> generate_filter(const Tensor<T>& h) const;

  // Backward passes accumulate parameter gradients.
  void init_backward(const InitCache& cache, const LstmState<T>& grad, Tensor<T>* grad_e0);
  // Returns the gradient w.r.t. the previous state.
  LstmState<T> step_backward(const StepCache& cache, const LstmState<T>& grad, Tensor<T>* grad_e);
  // Returns the gradient w.r.t. h.
  Tensor<T> filter_backward(const Tensor<T>& h, const Tensor<T>& grad_filter);

  // Fused gate convolution: (input + hidden) -> 4 * hidden, rows ordered by Gate.
  Conv2d<T> gates;
  Conv2d<T> init_h;
  Conv2d<T> init_c;
  Conv2d<T> output;

 private:
  void check_exemplar(const Tensor<T>& e, const char* what) const;
  LstmSpec spec_;
};

// Element-wise (1 - beta) * old + beta * fresh on both hidden and cell maps.
template <typename T>
LstmState<T> damp_state(const LstmState<T>& old, const LstmState<T>& fresh, double beta);

}  // namespace rfl
