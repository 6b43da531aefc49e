#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfl/data.hpp"
#include "rfl/model.hpp"
#include "rfl/supervision.hpp"

namespace rfl {

struct TrainConfig {
  int batch_size = 10;   // clips per iteration
  int clip_len = 10;     // unrolled frames per clip
  double lr0 = 1e-4;
  double lr_decay = 0.8;
  int decay_every = 5000;
  double grad_clip = 10.0;
  bool global_norm_clip = false;  // rescale the whole gradient instead of clamping elements
  int total_iters = 500;
  std::uint64_t seed = 1;
  NetConfig net;
  bool balanced_loss = false;
  bool augment = true;
  // Sample one batch at the first iteration and reuse it for every iteration.
  bool fixed_batch = false;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string out_dir;       // where periodic checkpoints and NaN dumps go

  double learning_rate(int iter) const;
  // Throws Error on non-positive sizes or rates.
  void validate() const;
};

struct LossRecord {
  int iter = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// Summed loss over the time steps of every clip, averaged over clips. With backprop the
// parameter gradients of that quantity are accumulated into the model.
//
// Per clip: state <- init(e_1); for t = 1..N: (t > 1: state <- step(state, e_t));
// f_t <- filter(h); loss += L(corr(f_t, s_{t+1}), labels_t).
template <typename T>
double clip_batch_loss(RflModel<T>& model, const std::vector<Clip>& clips, const LossOptions& opts,
                       bool backprop, bool update_running = true);

// Element-wise clamp to [-max_value, max_value], or global L2 rescaling when global_norm is set.
// Returns the gradient L2 norm before clipping.
template <typename T>
double clip_gradients(RflModel<T>& model, double max_value, bool global_norm = false);

class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(RflModel<float>& model, double lr);

  std::int64_t steps = 0;
  // Moments keyed by parameter name, in model parameter order.
  std::vector<std::string> names;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// Iteration-specific seed; every batch is reproducible from (seed, iter).
std::uint64_t batch_seed(std::uint64_t seed, int iter);

struct Checkpoint;

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<SequenceRecord> data);
  // Resumes from a checkpoint (model, optimizer and iteration counter).
  Trainer(const Checkpoint& ckpt, std::vector<SequenceRecord> data);

  // Runs one iteration; returns its loss. Throws NumericError on a non-finite loss.
  double step();
  // Runs until total_iters; calls on_step after each iteration.
  void run(const std::function<void(const LossRecord&)>& on_step = {});

  std::vector<Clip> sample_batch(int iter) const;

  int iteration() const { return iter_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<LossRecord>& history() const { return history_; }
  RflModel<float>& model() { return model_; }
  const RflModel<float>& model() const { return model_; }
  Checkpoint checkpoint() const;

 private:
  TrainConfig cfg_;
  std::vector<SequenceRecord> data_;
  RflModel<float> model_;
  Adam adam_;
  int iter_ = 0;
  std::vector<LossRecord> history_;
  std::vector<Clip> fixed_;
};

// "iter,loss,lr" header plus one row per record.
void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history);

}  // namespace rfl
