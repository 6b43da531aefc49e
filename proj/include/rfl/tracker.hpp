#pragma once

#include <array>
#include <vector>

#include "rfl/data.hpp"
#include "rfl/model.hpp"
#include "rfl/response.hpp"

namespace rfl {

struct TrackerConfig {
  std::array<double, 3> scale_steps{1.0 / 1.03, 1.0, 1.03};
  double scale_penalty = 0.97;   // gamma, applied to the two non-unit scales
  double scale_damping = 0.6;    // beta_s
  double state_damping = 0.06;   // beta_m
  double window_weight = 0.11;
  int top_k = 5;
  int upsample_factor = kUpsampleFactor;

  void validate() const;
};

struct TrackerState {
  LstmState<float> lstm;
  Tensor<float> filter;
  Point center;
  double base_width = 0.0;   // size at initialization
  double base_height = 0.0;
  double scale = 1.0;
  int frame_index = 0;

  double width() const { return base_width * scale; }
  double height() const { return base_height * scale; }
  BBox box() const { return {center.x, center.y, width(), height()}; }
};

// Per-step internals, for inspection and tests.
struct StepDiagnostics {
  std::array<double, 3> peaks{};        // peak score per scale before the penalty
  std::array<double, 3> penalized{};
  int best_scale = 1;                   // index into scale_steps
  MapPosition peak;                     // top-K mean on the winning map, fine-grid units
  Point displacement;                   // frame pixels
  std::vector<ResponseMap> responses;   // raw 17x17 logits per scale
};

// Crops the 127x127 exemplar around bbox0, initializes the memory and the first filter.
// Throws InvalidBoxError for an invalid box or one whose center lies outside the frame.
TrackerState init_track(const Image& frame, const BBox& bbox0, const RflModel<float>& model,
                        const TrackerConfig& cfg = {});

// Locates the target in `frame`, then updates scale, memory and filter.
std::pair<BBox, TrackerState> track_step(const TrackerState& state, const Image& frame,
                                         const RflModel<float>& model, const TrackerConfig& cfg = {},
                                         StepDiagnostics* diag = nullptr);

// One box per frame; the first is the ground-truth initialization box.
std::vector<BBox> track_sequence(const SequenceRecord& seq, const RflModel<float>& model,
                                 const TrackerConfig& cfg = {});

}  // namespace rfl
