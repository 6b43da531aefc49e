#include "rfl/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>

#include "json.hpp"

#include "rfl/checkpoint.hpp"
#include "rfl/error.hpp"
#include "rfl/response.hpp"

namespace rfl {

double TrainConfig::learning_rate(int iter) const {
  return lr0 * std::pow(lr_decay, std::floor(static_cast<double>(iter) / decay_every));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (clip_len < 1) throw Error("clip_len must be positive");
  if (!(lr0 > 0)) throw Error("lr0 must be positive");
  if (!(lr_decay > 0)) throw Error("lr_decay must be positive");
  if (decay_every < 1) throw Error("decay_every must be positive");
  if (!(grad_clip > 0)) throw Error("grad_clip must be positive");
  if (total_iters < 0) throw Error("total_iters must be non-negative");
  if (checkpoint_every < 0) throw Error("checkpoint_every must be non-negative");
  if (net.hidden_channels < 1) throw Error("hidden channels must be positive");
  if (net.gate_kernel != 1 && net.gate_kernel != 3) throw Error("gate kernel must be 1 or 3");
  for (int c : net.backbone.channels) {
    if (c < 1) throw Error("backbone channels must be positive");
  }
}

template <typename T>
double clip_batch_loss(RflModel<T>& model, const std::vector<Clip>& clips, const LossOptions& opts,
                       bool backprop, bool update_running) {
  if (clips.empty()) throw Error("clip_batch_loss: empty batch");
  const std::size_t len = clips.front().exemplars.size();
  for (const auto& c : clips) {
    if (c.exemplars.size() != len || c.searches.size() != len || c.label_boxes.size() != len || len == 0) {
      throw Error("clip_batch_loss: clips must share a non-zero length");
    }
  }
  const std::size_t batch = clips.size();

  std::vector<Tensor<T>> ex_in;
  std::vector<Tensor<T>> se_in;
  ex_in.reserve(batch * len);
  se_in.reserve(batch * len);
  for (const auto& c : clips) {
    for (std::size_t t = 0; t < len; ++t) {
      ex_in.push_back(to_input_tensor<T>(c.exemplars[t], model.norm));
      se_in.push_back(to_input_tensor<T>(c.searches[t], model.norm));
      require_shape(ex_in.back(), 3, kExemplarSize, kExemplarSize, "exemplar patch");
      require_shape(se_in.back(), 3, kSearchSize, kSearchSize, "search patch");
    }
  }

  typename Backbone<T>::Cache ex_cache;
  typename Backbone<T>::Cache se_cache;
  auto ex_feat = model.exemplar_net().forward(std::move(ex_in), Mode::Train, backprop ? &ex_cache : nullptr,
                                              update_running);
  auto se_feat = model.search_net().forward(std::move(se_in), Mode::Train, backprop ? &se_cache : nullptr,
                                            update_running);

  const GridSpec grid;
  auto& gen = model.lstm;
  const double scale = 1.0 / static_cast<double>(batch);
  double total = 0.0;

  std::vector<Tensor<T>> grad_ex;
  std::vector<Tensor<T>> grad_se;
  if (backprop) {
    grad_ex.resize(batch * len);
    grad_se.resize(batch * len);
  }

  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * len;
    typename FilterGenerator<T>::InitCache init_cache;
    std::vector<typename FilterGenerator<T>::StepCache> step_cache(len);
    std::vector<Tensor<T>> hidden(len);
    std::vector<Tensor<T>> filters(len);
    std::vector<Tensor<T>> grad_resp(len);

    LstmState<T> state = gen.init_state(ex_feat[base], backprop ? &init_cache : nullptr);
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) state = gen.step(state, ex_feat[base + t], backprop ? &step_cache[t] : nullptr);
      filters[t] = gen.generate_filter(state.h);
      const Tensor<T> resp = correlate(filters[t], se_feat[base + t]);
      const LabelMap labels = groundtruth_map(clips[b].label_boxes[t], grid);
      total += scale * response_loss(resp, labels, opts, backprop ? &grad_resp[t] : nullptr, scale);
      if (backprop) hidden[t] = state.h;
    }

    if (!backprop) continue;
    const int hc = gen.spec().hidden_channels;
    const int fe = hidden[0].height();
    LstmState<T> g{Tensor<T>(hc, fe, fe), Tensor<T>(hc, fe, fe)};
    for (std::size_t t = len; t-- > 0;) {
      Tensor<T> grad_f;
      correlate_backward(filters[t], se_feat[base + t], grad_resp[t], &grad_f, &grad_se[base + t]);
      g.h += gen.filter_backward(hidden[t], grad_f);
      if (t > 0) {
        g = gen.step_backward(step_cache[t], g, &grad_ex[base + t]);
      } else {
        gen.init_backward(init_cache, g, &grad_ex[base]);
      }
    }
  }

  if (backprop) {
    model.search_net().backward(se_cache, std::move(grad_se));
    model.exemplar_net().backward(ex_cache, std::move(grad_ex));
  }
  return total;
}

template <typename T>
double clip_gradients(RflModel<T>& model, double max_value, bool global_norm) {
  auto params = model.parameters();
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.grad) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (global_norm) {
    if (norm > max_value) {
      const T s = static_cast<T>(max_value / norm);
      for (auto& p : params) {
        for (T& g : p.grad) g *= s;
      }
    }
  } else {
    const T lim = static_cast<T>(max_value);
    for (auto& p : params) {
      for (T& g : p.grad) g = std::clamp(g, -lim, lim);
    }
  }
  return norm;
}

void Adam::step(RflModel<float>& model, double lr) {
  auto params = model.parameters();
  std::vector<ParamRef<float>*> train;
  for (auto& p : params) {
    if (p.trainable()) train.push_back(&p);
  }
  if (names.empty()) {
    for (auto* p : train) {
      names.push_back(p->name);
      m.emplace_back(p->value.size(), 0.f);
      v.emplace_back(p->value.size(), 0.f);
    }
  }
  if (names.size() != train.size()) throw Error("optimizer state does not match the model");
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (std::size_t k = 0; k < train.size(); ++k) {
    auto& p = *train[k];
    if (p.name != names[k] || p.value.size() != m[k].size()) {
      throw Error("optimizer state does not match parameter " + p.name);
    }
    float* mk = m[k].data();
    float* vk = v[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      mk[i] = static_cast<float>(beta1 * mk[i] + (1 - beta1) * g);
      vk[i] = static_cast<float>(beta2 * vk[i] + (1 - beta2) * g * g);
      const double mh = mk[i] / c1;
      const double vh = vk[i] / c2;
      p.value[i] = static_cast<float>(p.value[i] - lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

std::uint64_t batch_seed(std::uint64_t seed, int iter) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(iter) + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<SequenceRecord> data)
    : cfg_(cfg), data_(std::move(data)) {
  cfg_.validate();
  if (data_.empty()) throw Error("training needs at least one sequence");
  model_ = RflModel<float>(cfg_.net, cfg_.seed);
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<SequenceRecord> data)
    : cfg_(ckpt.train), data_(std::move(data)), model_(ckpt.model), adam_(ckpt.adam), iter_(ckpt.iteration) {
  cfg_.validate();
  if (data_.empty()) throw Error("training needs at least one sequence");
}

std::vector<Clip> Trainer::sample_batch(int iter) const {
  std::mt19937_64 rng(batch_seed(cfg_.seed, iter));
  ClipOptions opts;
  opts.length = cfg_.clip_len;
  opts.augment.enabled = cfg_.augment;
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<Clip> clips;
  clips.reserve(cfg_.batch_size);
  for (int i = 0; i < cfg_.batch_size; ++i) {
    // Round-robin for a fixed batch so every sequence is represented.
    const std::size_t s = cfg_.fixed_batch ? i % data_.size() : pick(rng);
    clips.push_back(sample_clip(data_[s], opts, rng));
  }
  return clips;
}

double Trainer::step() {
  std::vector<Clip> sampled;
  if (cfg_.fixed_batch) {
    if (fixed_.empty()) fixed_ = sample_batch(0);
  } else {
    sampled = sample_batch(iter_);
  }
  const auto& clips = cfg_.fixed_batch ? fixed_ : sampled;

  LossOptions lo;
  lo.balanced = cfg_.balanced_loss;
  model_.zero_grad();
  const double loss = clip_batch_loss(model_, clips, lo, true, true);
  if (!std::isfinite(loss)) {
    const auto seed = batch_seed(cfg_.seed, cfg_.fixed_batch ? 0 : iter_);
    if (!cfg_.out_dir.empty()) {
      std::filesystem::create_directories(cfg_.out_dir);
      nlohmann::json dump{{"iteration", iter_}, {"batch_seed", seed}, {"seed", cfg_.seed},
                          {"loss", std::isnan(loss) ? "nan" : "inf"}};
      std::ofstream(std::filesystem::path(cfg_.out_dir) / "nan_dump.json") << dump.dump(2) << "\n";
    }
    throw NumericError("non-finite loss at iteration " + std::to_string(iter_) + " (batch seed " +
                       std::to_string(seed) + ")");
  }
  clip_gradients(model_, cfg_.grad_clip, cfg_.global_norm_clip);
  const double lr = cfg_.learning_rate(iter_);
  adam_.step(model_, lr);
  history_.push_back({iter_, loss, lr});
  ++iter_;
  if (cfg_.checkpoint_every > 0 && !cfg_.out_dir.empty() && iter_ % cfg_.checkpoint_every == 0) {
    std::filesystem::create_directories(cfg_.out_dir);
    save_checkpoint(checkpoint(),
                    (std::filesystem::path(cfg_.out_dir) / ("ckpt_" + std::to_string(iter_) + ".rfl")).string());
  }
  return loss;
}

void Trainer::run(const std::function<void(const LossRecord&)>& on_step) {
  while (iter_ < cfg_.total_iters) {
    step();
    if (on_step) on_step(history_.back());
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model = model_;
  c.adam = adam_;
  c.iteration = iter_;
  c.train = cfg_;
  return c;
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "iter,loss,lr\n" << std::setprecision(10);
  for (const auto& r : history) out << r.iter << ',' << r.loss << ',' << r.lr << '\n';
  if (!out) throw IoError("write failed: " + path);
}

template double clip_batch_loss<float>(RflModel<float>&, const std::vector<Clip>&, const LossOptions&, bool, bool);
template double clip_batch_loss<double>(RflModel<double>&, const std::vector<Clip>&, const LossOptions&, bool,
                                        bool);
template double clip_gradients<float>(RflModel<float>&, double, bool);
template double clip_gradients<double>(RflModel<double>&, double, bool);

}  // namespace rfl
