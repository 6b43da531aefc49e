#include "rfl/backbone.hpp"

#include <cmath>

namespace rfl {

namespace {
constexpr int kPoolKernel = 3;
constexpr int kPoolStride = 2;
}  // namespace

int backbone_output_extent(int input) {
  int s = (input - kBackboneKernels[0]) / 2 + 1;
  s = (s - kPoolKernel) / kPoolStride + 1;
  s = s - kBackboneKernels[1] + 1;
  s = (s - kPoolKernel) / kPoolStride + 1;
  for (int l = 2; l < 5; ++l) s = s - kBackboneKernels[l] + 1;
  return s;
}

template <typename T>
Backbone<T>::Backbone(const BackboneSpec& spec, std::mt19937_64& rng) : spec_(spec) {
  int in = 3;
  for (int l = 0; l < 5; ++l) {
    conv[l] = Conv2d<T>(in, spec.channels[l], kBackboneKernels[l], l == 0 ? 2 : 1, 0);
    conv[l].init(rng, std::sqrt(2.0));
    bn[l] = BatchNorm<T>(spec.channels[l]);
    in = spec.channels[l];
  }
}

template <typename T>
std::vector<Tensor<T>> Backbone<T>::forward(std::vector<Tensor<T>> batch, Mode mode, Cache* cache,
                                            bool update_running) {
  for (const auto& x : batch) {
    if (x.channels() != 3) throw ShapeError("backbone: input must have 3 channels");
    if (x.height() != batch.front().height() || x.width() != batch.front().width()) {
      throw ShapeError("backbone: batch inputs must share one size");
    }
  }
  if (mode == Mode::Infer) {
    std::vector<Tensor<T>> out;
    out.reserve(batch.size());
    for (const auto& x : batch) out.push_back(forward_infer(x));
    return out;
  }
  std::vector<Tensor<T>> cur = std::move(batch);
  for (int l = 0; l < 5; ++l) {
    std::vector<Tensor<T>> z;
    z.reserve(cur.size());
    for (const auto& x : cur) z.push_back(conv[l].forward(x));
    if (cache) cache->inputs[l] = std::move(cur);
    bn[l].forward_train(z, cache ? &cache->bn[l] : nullptr, update_running);
    if (l < 4) {
      for (auto& t : z) relu_inplace(t);
    }
    if (l < 2) {
      std::vector<Tensor<T>> pooled;
      pooled.reserve(z.size());
      if (cache) cache->argmax[l].resize(z.size());
      for (std::size_t b = 0; b < z.size(); ++b) {
        pooled.push_back(max_pool(z[b], kPoolKernel, kPoolStride, cache ? &cache->argmax[l][b] : nullptr));
      }
      if (cache) cache->pre_pool[l] = std::move(z);
      cur = std::move(pooled);
    } else {
      cur = std::move(z);
    }
  }
  return cur;
}

template <typename T>
Tensor<T> Backbone<T>::forward_infer(const Tensor<T>& input) const {
  if (input.channels() != 3) throw ShapeError("backbone: input must have 3 channels");
  Tensor<T> cur = input;
  for (int l = 0; l < 5; ++l) {
    Tensor<T> z = conv[l].forward(cur);
    bn[l].forward_infer(z);
    if (l < 4) relu_inplace(z);
    cur = l < 2 ? max_pool(z, kPoolKernel, kPoolStride, nullptr) : std::move(z);
  }
  return cur;
}

template <typename T>
void Backbone<T>::backward(const Cache& cache, std::vector<Tensor<T>> grad) {
  for (int l = 4; l >= 0; --l) {
    const auto& inputs = cache.inputs[l];
    if (l < 2) {
      for (std::size_t b = 0; b < grad.size(); ++b) {
        const auto& pre = cache.pre_pool[l][b];
        grad[b] = max_pool_backward(grad[b], cache.argmax[l][b], pre.channels(), pre.height(), pre.width());
        relu_backward_inplace(pre, grad[b]);
      }
    } else if (l < 4) {
      // Output of layer l is the input of layer l + 1.
      for (std::size_t b = 0; b < grad.size(); ++b) relu_backward_inplace(cache.inputs[l + 1][b], grad[b]);
    }
    bn[l].backward(cache.bn[l], grad);
    for (std::size_t b = 0; b < grad.size(); ++b) {
      if (l == 0) {
        conv[l].backward(inputs[b], grad[b], nullptr);
      } else {
        Tensor<T> dx;
        conv[l].backward(inputs[b], grad[b], &dx);
        grad[b] = std::move(dx);
      }
    }
  }
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace rfl
