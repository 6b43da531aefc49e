#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "rfl/data.hpp"
#include "rfl/model.hpp"
#include "rfl/training.hpp"

namespace rfl::testing {

struct GradCheck {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
  std::string worst_param;
  std::vector<std::string> failures;
  // Largest analytic gradient among conv biases that feed train-mode batch norm. The batch
  // mean subtraction cancels them, so the loss does not depend on them at all.
  double inert_bias_grad = 0.0;
};

inline bool feeds_batch_norm(const std::string& name) {
  return (name.rfind("ecnn/conv", 0) == 0 || name.rfind("scnn/conv", 0) == 0) &&
         name.size() >= 5 && name.compare(name.size() - 5, 5, "/bias") == 0;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of the clip-batch loss against the backpropagated gradient, in double
// precision, on `samples` trainable entries drawn uniformly over tensors, then over elements. Conv biases
// ahead of batch norm are reported separately.
inline GradCheck check_clip_gradients(const NetConfig& net, int clip_len, int batch, int samples, double step,
                                      double tol, double floor, std::uint64_t seed) {
  RflModel<double> model(net, seed);
  SynthConfig sc;
  const auto seq = synth_sequence(sc, 30, seed + 1);
  std::mt19937_64 rng(seed + 2);
  ClipOptions opts;
  opts.length = clip_len;
  std::vector<Clip> clips;
  for (int b = 0; b < batch; ++b) clips.push_back(sample_clip(seq, opts, rng));

  model.zero_grad();
  clip_batch_loss(model, clips, LossOptions{}, true, false);
  auto params = model.parameters();
  std::vector<std::size_t> trainable;
  GradCheck out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable()) continue;
    if (feeds_batch_norm(params[i].name)) {
      for (double g : params[i].grad) out.inert_bias_grad = std::max(out.inert_bias_grad, std::abs(g));
      continue;
    }
    trainable.push_back(i);
  }
  std::uniform_int_distribution<std::size_t> pick_tensor(0, trainable.size() - 1);
  for (int s = 0; s < samples; ++s) {
    auto& p = params[trainable[pick_tensor(rng)]];
    std::uniform_int_distribution<std::size_t> pick(0, p.value.size() - 1);
    const std::size_t i = pick(rng);
    const double keep = p.value[i];
    p.value[i] = keep + step;
    const double lp = clip_batch_loss(model, clips, LossOptions{}, false, false);
    p.value[i] = keep - step;
    const double lm = clip_batch_loss(model, clips, LossOptions{}, false, false);
    p.value[i] = keep;
    const double num = (lp - lm) / (2 * step);
    const double rel = relative_error(p.grad[i], num, floor);
    ++out.checked;
    if (!(rel < tol)) {
      ++out.failed;
      out.failures.push_back(p.name + "[" + std::to_string(i) + "] analytic " + fmt(p.grad[i]) +
                             " numeric " + fmt(num));
    }
    if (rel > out.worst) {
      out.worst = rel;
      out.worst_param = p.name + "[" + std::to_string(i) + "]";
    }
  }
  return out;
}

}  // namespace rfl::testing
