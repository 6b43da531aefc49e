#include "rfl/tracker.hpp"

#include <cmath>

#include "rfl/error.hpp"

namespace rfl {

void TrackerConfig::validate() const {
  for (double s : scale_steps) {
    if (!(s > 0)) throw Error("scale steps must be positive");
  }
  if (!(scale_penalty > 0 && scale_penalty <= 1)) throw Error("scale penalty must lie in (0, 1]");
  if (!(scale_damping >= 0 && scale_damping <= 1)) throw Error("scale damping must lie in [0, 1]");
  if (!(state_damping >= 0 && state_damping <= 1)) throw Error("state damping must lie in [0, 1]");
  if (!(window_weight >= 0 && window_weight <= 1)) throw Error("window weight must lie in [0, 1]");
  if (top_k < 1) throw Error("top_k must be positive");
  if (upsample_factor < 1) throw Error("upsample factor must be positive");
}

namespace {

Tensor<float> exemplar_at(const Image& frame, const BBox& box, const RflModel<float>& model) {
  const ImagePatch patch = extract_patch(frame, crop_region(box, kExemplarContext));
  return exemplar_features(model, patch);
}

}  // namespace

TrackerState init_track(const Image& frame, const BBox& bbox0, const RflModel<float>& model,
                        const TrackerConfig& cfg) {
  cfg.validate();
  require_valid(bbox0, "initial box");
  if (frame.empty()) throw Error("init_track: empty frame");
  if (bbox0.cx < 0 || bbox0.cy < 0 || bbox0.cx > frame.width || bbox0.cy > frame.height) {
    throw InvalidBoxError("initial box center lies outside the frame");
  }
  TrackerState s;
  const Tensor<float> e0 = exemplar_at(frame, bbox0, model);
  s.lstm = model.lstm.init_state(e0);
  s.filter = model.lstm.generate_filter(s.lstm.h);
  s.center = bbox0.center();
  s.base_width = bbox0.w;
  s.base_height = bbox0.h;
  s.scale = 1.0;
  s.frame_index = 0;
  return s;
}

std::pair<BBox, TrackerState> track_step(const TrackerState& state, const Image& frame,
                                         const RflModel<float>& model, const TrackerConfig& cfg,
                                         StepDiagnostics* diag) {
  if (state.filter.empty()) throw Error("track_step: tracker is not initialized");
  if (frame.empty()) throw Error("track_step: empty frame");

  const BBox current = state.box();
  const double side0 = crop_side(current, kSearchContext);
  std::array<double, 3> sides{};
  std::vector<ImagePatch> patches;
  for (int m = 0; m < 3; ++m) {
    sides[m] = side0 * cfg.scale_steps[m];
    patches.push_back(extract_patch(frame, CropSpec{state.center, sides[m], kSearchSize}));
  }
  const auto feats = search_features(model, patches);

  std::array<UpsampledMap, 3> maps;
  std::array<double, 3> peaks{};
  std::vector<ResponseMap> raw;
  for (int m = 0; m < 3; ++m) {
    raw.push_back(to_response_map(correlate(state.filter, feats[m]), m - 1));
    maps[m] = upsample(raw.back(), cfg.upsample_factor);
    maps[m].scores = maps[m].scores.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    peaks[m] = maps[m].scores.maxCoeff();
  }
  const auto penalized = scale_penalty(peaks, cfg.scale_penalty);
  int best = 1;
  for (int m = 0; m < 3; ++m) {
    if (penalized[m] > penalized[best]) best = m;
  }

  const UpsampledMap windowed = apply_window(maps[best], cfg.window_weight);
  const MapPosition pos = top_k_mean(windowed.scores, cfg.top_k);
  const double mid = (windowed.scores.rows() - 1) / 2.0;
  // fine cell -> patch pixels -> frame pixels
  const GridSpec grid;
  const double fine_to_patch = grid.stride / cfg.upsample_factor;
  const double patch_to_frame = sides[best] / kSearchSize;
  const Point disp{(pos.col - mid) * fine_to_patch * patch_to_frame, (pos.row - mid) * fine_to_patch * patch_to_frame};

  TrackerState next = state;
  next.center = {state.center.x + disp.x, state.center.y + disp.y};
  // (1 - d) s + d s step, written so that a unit step leaves the scale bit-identical.
  next.scale = state.scale * (1.0 + cfg.scale_damping * (cfg.scale_steps[best] - 1.0));
  next.frame_index = state.frame_index + 1;
  const BBox predicted = next.box();

  const Tensor<float> e = exemplar_at(frame, predicted, model);
  const LstmState<float> fresh = model.lstm.step(state.lstm, e);
  next.lstm = damp_state(state.lstm, fresh, cfg.state_damping);
  next.filter = model.lstm.generate_filter(next.lstm.h);

  if (diag) {
    diag->peaks = peaks;
    diag->penalized = penalized;
    diag->best_scale = best;
    diag->peak = pos;
    diag->displacement = disp;
    diag->responses = std::move(raw);
  }
  return {predicted, std::move(next)};
}

std::vector<BBox> track_sequence(const SequenceRecord& seq, const RflModel<float>& model,
                                 const TrackerConfig& cfg) {
  if (seq.size() == 0) throw Error("track_sequence: empty sequence '" + seq.name + "'");
  if (!seq.boxes.front()) throw Error("track_sequence: '" + seq.name + "' has no initial annotation");
  const BBox init = *seq.boxes.front();
  std::vector<BBox> out;
  out.reserve(seq.size());
  out.push_back(init);
  TrackerState state = init_track(seq.frame(0), init, model, cfg);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    auto [box, next] = track_step(state, seq.frame(i), model, cfg);
    out.push_back(box);
    state = std::move(next);
  }
  return out;
}

}  // namespace rfl
