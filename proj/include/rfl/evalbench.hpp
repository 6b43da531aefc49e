#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfl/data.hpp"
#include "rfl/model.hpp"
#include "rfl/tracker.hpp"

namespace rfl {

inline constexpr int kThresholdCount = 101;

// n evenly spaced thresholds from 0 to 1 inclusive.
std::vector<double> ope_thresholds(int n = kThresholdCount);

// rates[i] = fraction of ious strictly greater than thresholds[i]; auc = mean of rates.
// With the strict comparison a perfect tracker scores 0 at t = 1, so its auc is 100/101.
struct SuccessCurve {
  std::vector<double> thresholds;
  std::vector<double> rates;
  double auc = 0.0;
};

// Throws Error on empty input or IoU outside [0, 1].
SuccessCurve success_curve(std::span<const double> ious, std::span<const double> thresholds);
SuccessCurve success_curve(std::span<const double> ious);

// Fraction of frames with IoU > t.
double success_at(std::span<const double> ious, double t);

struct SequenceResult {
  std::string name;
  std::vector<BBox> boxes;
  std::vector<std::optional<double>> ious;  // nullopt where ground truth is absent
  std::vector<std::optional<double>> cle;   // center error, pixels
  SuccessCurve curve;
  double mean_iou = 0.0;
  double mean_cle = 0.0;
  int evaluated_frames = 0;
};

struct EvalResult {
  std::vector<SequenceResult> sequences;
  SuccessCurve curve;                   // macro average of the per-sequence curves
  double auc = 0.0;
  std::map<double, double> success_at;  // threshold -> macro-averaged rate
  double mean_iou = 0.0;                // over all evaluated frames
  double frac_iou_ge_half = 0.0;        // frames with IoU >= 0.5, pooled over sequences
  double mean_cle = 0.0;
};

// Scores predictions against ground truth. The first frame of each sequence must be
// annotated; frames without ground truth are skipped.
SequenceResult score_sequence(const SequenceRecord& seq, std::vector<BBox> predicted);
EvalResult aggregate(std::vector<SequenceResult> per_sequence);

using TrackFn = std::function<std::vector<BBox>(const SequenceRecord&)>;

// Worker count from RFL_NUM_WORKERS, else hardware concurrency; at least 1.
int eval_workers();

// One-pass evaluation: track each sequence once, initialized on its first ground-truth box.
EvalResult run_ope(const std::vector<SequenceRecord>& sequences, const TrackFn& track, int workers = 0);
EvalResult run_ope(const std::vector<SequenceRecord>& sequences, const RflModel<float>& model,
                   const TrackerConfig& cfg = {}, int workers = 0);

struct ReportOptions {
  std::string out_dir;
  bool overlays = false;
};

// Writes results/<seq>.txt, summary.json, curve.csv and sequences.csv under out_dir, plus
// overlays/<seq>/NNNN.png when enabled. Throws IoError when out_dir is not writable.
void report(const EvalResult& result, const std::vector<SequenceRecord>& sequences, const ReportOptions& opts);

std::string summary_json(const EvalResult& result);
// Restores the aggregate curve, auc, success rates and per-sequence summaries.
EvalResult parse_summary_json(const std::string& text);

}  // namespace rfl
