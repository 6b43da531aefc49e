// rfl: train, track, evaluate, generate synthetic data, inspect checkpoints.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>

#include "CLI11.hpp"

#include "rfl/checkpoint.hpp"
#include "rfl/data.hpp"
#include "rfl/error.hpp"
#include "rfl/evalbench.hpp"
#include "rfl/tracker.hpp"
#include "rfl/training.hpp"

namespace fs = std::filesystem;
using namespace rfl;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

struct TrackerFlags {
  double scale_step = 1.03;
  TrackerConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--scale-step", scale_step, "Scale pyramid ratio between neighbouring scales")
        ->capture_default_str();
    app->add_option("--scale-penalty", cfg.scale_penalty, "Penalty on non-unit scales (gamma)")
        ->capture_default_str();
    app->add_option("--scale-damping", cfg.scale_damping, "Scale update rate")->capture_default_str();
    app->add_option("--state-damping", cfg.state_damping, "Memory state update rate")->capture_default_str();
    app->add_option("--window-weight", cfg.window_weight, "Cosine window weight")->capture_default_str();
    app->add_option("--top-k", cfg.top_k, "Peak positions averaged for the location")->capture_default_str();
    app->add_option("--upsample", cfg.upsample_factor, "Response upsampling factor")->capture_default_str();
  }
  TrackerConfig get() const {
    TrackerConfig c = cfg;
    c.scale_steps = {1.0 / scale_step, 1.0, scale_step};
    c.validate();
    return c;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string widths = "full";
  std::optional<int> hidden;
  std::string data_dir;
  int synth_n = 0;
  int synth_length = 100;
  std::uint64_t synth_seed = 1;
  std::string synth_config;
  std::string resume;
  bool no_augment = false;
  int log_every = 10;

  void add(CLI::App* app) {
    app->add_option("--data", data_dir, "Training set root (one folder per sequence with img/ and groundtruth_rect.txt)");
    app->add_option("--synth-n", synth_n, "Train on this many generated sequences instead of --data");
    app->add_option("--synth-length", synth_length, "Frames per generated sequence")->capture_default_str();
    app->add_option("--synth-seed", synth_seed, "Seed of the generated training set")->capture_default_str();
    app->add_option("--synth-config", synth_config, "Generator key = value file");
    app->add_option("--out", cfg.out_dir, "Output directory")->required();
    app->add_option("--iters", cfg.total_iters, "Total iterations")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "Clips per mini-batch")->capture_default_str();
    app->add_option("--clip-len", cfg.clip_len, "Frames per clip")->capture_default_str();
    app->add_option("--lr", cfg.lr0, "Initial learning rate")->capture_default_str();
    app->add_option("--lr-decay", cfg.lr_decay, "Learning-rate multiplier per decay period")->capture_default_str();
    app->add_option("--decay-every", cfg.decay_every, "Iterations per decay period")->capture_default_str();
    app->add_option("--grad-clip", cfg.grad_clip, "Gradient clipping magnitude")->capture_default_str();
    app->add_flag("--global-norm-clip", cfg.global_norm_clip, "Clip the global gradient norm instead of elements");
    app->add_option("--seed", cfg.seed, "Initialization and sampling seed")->capture_default_str();
    app->add_option("--widths", widths, "Network widths: full or desk")
        ->check(CLI::IsMember({"full", "desk"}))
        ->capture_default_str();
    app->add_option("--hidden", hidden, "Memory channels (defaults to the width preset)");
    app->add_flag("--shared-backbone", cfg.net.shared_backbone, "One backbone for exemplar and search");
    app->add_flag("--zero-init", cfg.net.zero_init, "Start the memory from zeros instead of the init network");
    app->add_option("--gate-kernel", cfg.net.gate_kernel, "Gate convolution size (1 = per-position LSTM)")
        ->check(CLI::IsMember({1, 3}))
        ->capture_default_str();
    app->add_flag("--balanced-loss", cfg.balanced_loss, "Balance positive and negative label mass");
    app->add_flag("--no-augment", no_augment, "Disable data augmentation");
    app->add_flag("--fixed-batch", cfg.fixed_batch, "Reuse the first sampled batch every iteration");
    app->add_option("--checkpoint-every", cfg.checkpoint_every, "Periodic checkpoint interval (0 = off)")
        ->capture_default_str();
    app->add_option("--resume", resume, "Continue from a checkpoint");
    app->add_option("--log-every", log_every, "Progress line interval")->capture_default_str();
  }

  TrainConfig get() const {
    TrainConfig c = cfg;
    const NetConfig preset = widths == "desk" ? NetConfig::desk() : NetConfig::full();
    c.net.backbone = preset.backbone;
    c.net.hidden_channels = hidden.value_or(preset.hidden_channels);
    c.augment = !no_augment;
    c.validate();
    return c;
  }
};

std::vector<SequenceRecord> load_dataset(const std::string& dir) {
  if (fs::is_regular_file(fs::path(dir) / "groundtruth_rect.txt")) return {load_otb_sequence(dir)};
  auto seqs = load_otb_dataset(dir);
  if (seqs.empty()) throw IoError("no sequences found under " + dir);
  return seqs;
}

int cmd_train(const TrainFlags& f) {
  std::vector<SequenceRecord> data;
  if (f.synth_n > 0) {
    SynthConfig sc = f.synth_config.empty() ? SynthConfig{} : SynthConfig::from_kv(read_kv_file(f.synth_config));
    sc.length = f.synth_length;
    data = synth_dataset(sc, f.synth_n, f.synth_seed);
  } else if (!f.data_dir.empty()) {
    data = load_dataset(f.data_dir);
  } else {
    throw CLI::ValidationError("train", "either --data or --synth-n is required");
  }
  std::unique_ptr<Trainer> trainer;
  if (!f.resume.empty()) {
    Checkpoint ck = load_checkpoint(f.resume);
    ck.train.total_iters = f.cfg.total_iters;
    ck.train.out_dir = f.cfg.out_dir;
    trainer = std::make_unique<Trainer>(ck, std::move(data));
  } else {
    trainer = std::make_unique<Trainer>(f.get(), std::move(data));
  }
  fs::create_directories(f.cfg.out_dir);
  const auto& cfg = trainer->config();
  std::cout << "training " << trainer->model().trainable_count() << " parameters for " << cfg.total_iters
            << " iterations\n";
  trainer->run([&](const LossRecord& r) {
    if (f.log_every > 0 && (r.iter % f.log_every == 0 || r.iter + 1 == cfg.total_iters)) {
      std::printf("iter %d loss %.6f lr %.3g\n", r.iter, r.loss, r.lr);
      std::fflush(stdout);
    }
  });
  const fs::path out(f.cfg.out_dir);
  save_checkpoint(trainer->checkpoint(), (out / "model.rfl").string());
  write_loss_csv((out / "loss.csv").string(), trainer->history());
  std::cout << "wrote " << (out / "model.rfl").string() << "\n";
  return kOk;
}

int cmd_track(const std::string& seq_dir, const std::string& ckpt_path, std::string out_path,
              const TrackerFlags& tf) {
  const auto seq = load_otb_sequence(seq_dir);
  const auto ck = load_checkpoint(ckpt_path);
  const auto boxes = track_sequence(seq, ck.model, tf.get());
  if (out_path.empty()) out_path = seq.name + ".txt";
  write_box_file(out_path, boxes);
  std::cout << "wrote " << boxes.size() << " boxes to " << out_path << "\n";
  return kOk;
}

int cmd_eval(const std::string& dataset, const std::string& ckpt_path, const std::string& results_dir,
             const std::string& out_dir, bool overlays, int workers, const TrackerFlags& tf) {
  const auto seqs = load_dataset(dataset);
  EvalResult result;
  if (!results_dir.empty()) {
    result = run_ope(
        seqs,
        [&](const SequenceRecord& s) {
          const fs::path p = fs::path(results_dir) / (s.name + ".txt");
          if (!fs::is_regular_file(p)) throw IoError("missing results file " + p.string());
          std::vector<BBox> boxes;
          for (const auto& b : read_box_file(p.string())) {
            boxes.push_back(b.value_or(BBox{0, 0, 0, 0}));
          }
          return boxes;
        },
        workers);
  } else if (!ckpt_path.empty()) {
    const auto ck = load_checkpoint(ckpt_path);
    result = run_ope(seqs, ck.model, tf.get(), workers);
  } else {
    throw CLI::ValidationError("eval", "either --ckpt or --results is required");
  }
  report(result, seqs, {out_dir, overlays});
  std::printf("sequences %zu  auc %.4f  success@0.5 %.4f  mean IoU %.4f\n", result.sequences.size(), result.auc,
              result.success_at.at(0.5), result.mean_iou);
  return kOk;
}

int cmd_synth(const std::string& out_dir, int n, std::uint64_t seed, std::optional<int> length,
              const std::string& config) {
  SynthConfig sc = config.empty() ? SynthConfig{} : SynthConfig::from_kv(read_kv_file(config));
  if (length) sc.length = *length;
  const auto seqs = synth_dataset(sc, n, seed);
  fs::create_directories(out_dir);
  for (const auto& s : seqs) write_otb_sequence(s, (fs::path(out_dir) / s.name).string());
  write_kv_file((fs::path(out_dir) / "synth.cfg").string(), sc.to_kv());
  std::cout << "wrote " << seqs.size() << " sequences to " << out_dir << "\n";
  return kOk;
}

int cmd_inspect(const std::string& ckpt_path) {
  const auto ck = load_checkpoint(ckpt_path);
  const auto& net = ck.model.config();
  std::printf("version %s  iteration %d\n", kCheckpointVersion, ck.iteration);
  std::printf("backbone %d/%d/%d/%d/%d  hidden %d  gate kernel %d  zero init %s  shared backbone %s\n",
              net.backbone.channels[0], net.backbone.channels[1], net.backbone.channels[2],
              net.backbone.channels[3], net.backbone.channels[4], net.hidden_channels, net.gate_kernel,
              net.zero_init ? "yes" : "no", net.shared_backbone ? "yes" : "no");
  std::size_t total = 0;
  for (const auto& p : ck.model.parameters()) {
    std::string shape;
    for (std::size_t i = 0; i < p.shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(p.shape[i]);
    std::printf("%-28s %-18s %10zu%s\n", p.name.c_str(), shape.c_str(), p.value.size(),
                p.trainable() ? "" : "  (buffer)");
    if (p.trainable()) total += p.value.size();
  }
  std::printf("trainable parameters %zu\n", total);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent filter learning tracker"};
  app.set_config("--config", "", "INI file; [section] names match subcommands, flags override file values");
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Train the network on clips from annotated videos");
  train_flags.add(train);

  TrackerFlags track_flags;
  std::string seq_dir, ckpt, out_file;
  auto* track = app.add_subcommand("track", "Track one sequence and write its results file");
  track->add_option("--seq", seq_dir, "Sequence folder")->required()->check(CLI::ExistingDirectory);
  track->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  track->add_option("--out", out_file, "Results file (default <sequence>.txt)");
  track_flags.add(track);

  TrackerFlags eval_flags;
  std::string dataset, eval_ckpt, results_dir, eval_out = "eval_out";
  bool overlays = false;
  int workers = 0;
  auto* eval = app.add_subcommand("eval", "One-pass evaluation over a dataset");
  eval->add_option("--dataset", dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint to track with")->check(CLI::ExistingFile);
  eval->add_option("--results", results_dir, "Score precomputed <seq>.txt files instead of tracking")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "Report directory")->capture_default_str();
  eval->add_flag("--overlays", overlays, "Write frames with predicted and ground-truth boxes");
  eval->add_option("--workers", workers, "Parallel sequences (default: RFL_NUM_WORKERS or core count)");
  eval_flags.add(eval);

  std::string synth_out, synth_config;
  int synth_n = 1;
  std::uint64_t synth_seed = 1;
  std::optional<int> synth_length;
  auto* synth = app.add_subcommand("synth", "Generate synthetic sequences in the dataset layout");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n", synth_n, "Number of sequences")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--length", synth_length, "Frames per sequence (default 100)")->check(CLI::PositiveNumber);
  synth->add_option("--synth-config", synth_config, "Generator key = value file")->check(CLI::ExistingFile);

  std::string inspect_ckpt;
  auto* inspect = app.add_subcommand("inspect", "Print checkpoint contents");
  inspect->add_option("--ckpt", inspect_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*track) return cmd_track(seq_dir, ckpt, out_file, track_flags);
    if (*eval) return cmd_eval(dataset, eval_ckpt, results_dir, eval_out, overlays, workers, eval_flags);
    if (*synth) return cmd_synth(synth_out, synth_n, synth_seed, synth_length, synth_config);
    if (*inspect) return cmd_inspect(inspect_ckpt);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const VersionError& e) {
    std::cerr << "version error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
