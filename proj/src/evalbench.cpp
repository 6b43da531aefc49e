#include "rfl/evalbench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "rfl/error.hpp"

namespace fs = std::filesystem;

namespace rfl {

std::vector<double> ope_thresholds(int n) {
  if (n < 2) throw Error("need at least two thresholds");
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = static_cast<double>(i) / (n - 1);
  return t;
}

SuccessCurve success_curve(std::span<const double> ious, std::span<const double> thresholds) {
  if (ious.empty()) throw Error("success_curve: no IoU values");
  if (thresholds.empty()) throw Error("success_curve: no thresholds");
  std::vector<double> sorted(ious.begin(), ious.end());
  for (double v : sorted) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("success_curve: IoU outside [0, 1]");
  }
  std::sort(sorted.begin(), sorted.end());
  SuccessCurve c;
  c.thresholds.assign(thresholds.begin(), thresholds.end());
  const double n = static_cast<double>(sorted.size());
  double sum = 0.0;
  for (double t : thresholds) {
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t);
    c.rates.push_back(static_cast<double>(above) / n);
    sum += c.rates.back();
  }
  c.auc = sum / static_cast<double>(thresholds.size());
  return c;
}

SuccessCurve success_curve(std::span<const double> ious) {
  const auto t = ope_thresholds();
  return success_curve(ious, t);
}

double success_at(std::span<const double> ious, double t) {
  if (ious.empty()) throw Error("success_at: no IoU values");
  const auto above = std::count_if(ious.begin(), ious.end(), [t](double v) { return v > t; });
  return static_cast<double>(above) / static_cast<double>(ious.size());
}

SequenceResult score_sequence(const SequenceRecord& seq, std::vector<BBox> predicted) {
  if (seq.size() == 0 || !seq.boxes.front()) {
    throw Error("sequence '" + seq.name + "' is missing ground truth for its first frame");
  }
  if (predicted.size() != seq.size()) {
    throw Error("sequence '" + seq.name + "': " + std::to_string(predicted.size()) + " predictions for " +
                std::to_string(seq.size()) + " frames");
  }
  SequenceResult r;
  r.name = seq.name;
  r.boxes = std::move(predicted);
  std::vector<double> valid;
  double cle_sum = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!seq.boxes[i] || !r.boxes[i].valid()) {
      // A degenerate prediction on an annotated frame counts as a miss.
      if (seq.boxes[i]) {
        r.ious.push_back(0.0);
        r.cle.push_back(center_distance(r.boxes[i], *seq.boxes[i]));
        valid.push_back(0.0);
        cle_sum += *r.cle.back();
      } else {
        r.ious.push_back(std::nullopt);
        r.cle.push_back(std::nullopt);
      }
      continue;
    }
    const double v = iou(r.boxes[i], *seq.boxes[i]);
    r.ious.push_back(v);
    r.cle.push_back(center_distance(r.boxes[i], *seq.boxes[i]));
    valid.push_back(v);
    cle_sum += *r.cle.back();
  }
  r.evaluated_frames = static_cast<int>(valid.size());
  r.curve = success_curve(valid);
  double s = 0.0;
  for (double v : valid) s += v;
  r.mean_iou = s / valid.size();
  r.mean_cle = cle_sum / valid.size();
  return r;
}

EvalResult aggregate(std::vector<SequenceResult> per_sequence) {
  if (per_sequence.empty()) throw Error("aggregate: no sequences");
  EvalResult out;
  const auto& t0 = per_sequence.front().curve.thresholds;
  out.curve.thresholds = t0;
  out.curve.rates.assign(t0.size(), 0.0);
  const double ns = static_cast<double>(per_sequence.size());
  double iou_sum = 0.0, cle_sum = 0.0;
  std::size_t frames = 0, ge_half = 0;
  for (const auto& r : per_sequence) {
    if (r.curve.thresholds != t0) throw Error("aggregate: sequences use different thresholds");
    for (std::size_t i = 0; i < t0.size(); ++i) out.curve.rates[i] += r.curve.rates[i] / ns;
    for (const auto& v : r.ious) {
      if (!v) continue;
      iou_sum += *v;
      ++frames;
      if (*v >= 0.5) ++ge_half;
    }
    for (const auto& c : r.cle) {
      if (c) cle_sum += *c;
    }
  }
  double sum = 0.0;
  for (double v : out.curve.rates) sum += v;
  out.curve.auc = sum / static_cast<double>(t0.size());
  out.auc = out.curve.auc;
  for (double t : {0.5, 0.7}) {
    double acc = 0.0;
    for (const auto& r : per_sequence) {
      std::vector<double> v;
      for (const auto& x : r.ious) {
        if (x) v.push_back(*x);
      }
      acc += success_at(v, t);
    }
    out.success_at[t] = acc / ns;
  }
  out.mean_iou = frames ? iou_sum / frames : 0.0;
  out.frac_iou_ge_half = frames ? static_cast<double>(ge_half) / frames : 0.0;
  out.mean_cle = frames ? cle_sum / frames : 0.0;
  out.sequences = std::move(per_sequence);
  return out;
}

int eval_workers() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RFL_NUM_WORKERS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = n > 0 ? std::min(n, cap) : cap;
  }
  return std::max(1, n);
}

EvalResult run_ope(const std::vector<SequenceRecord>& sequences, const TrackFn& track, int workers) {
  if (sequences.empty()) throw Error("run_ope: no sequences");
  for (const auto& s : sequences) {
    if (s.size() == 0 || !s.boxes.front()) throw Error("run_ope: sequence '" + s.name + "' lacks ground truth");
  }
  if (workers <= 0) workers = eval_workers();
  workers = std::min<int>(workers, static_cast<int>(sequences.size()));

  std::vector<SequenceResult> results(sequences.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < sequences.size(); i = next++) {
      try {
        results[i] = score_sequence(sequences[i], track(sequences[i]));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return aggregate(std::move(results));
}

EvalResult run_ope(const std::vector<SequenceRecord>& sequences, const RflModel<float>& model,
                   const TrackerConfig& cfg, int workers) {
  return run_ope(
      sequences, [&](const SequenceRecord& s) { return track_sequence(s, model, cfg); }, workers);
}

std::string summary_json(const EvalResult& r) {
  nlohmann::json j;
  j["auc"] = r.auc;
  j["thresholds"] = r.curve.thresholds;
  j["curve"] = r.curve.rates;
  nlohmann::json sa = nlohmann::json::object();
  for (const auto& [t, v] : r.success_at) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", t);
    sa[key] = v;
  }
  j["success_at"] = sa;
  j["mean_iou"] = r.mean_iou;
  j["frac_iou_ge_0.5"] = r.frac_iou_ge_half;
  j["mean_cle"] = r.mean_cle;
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : r.sequences) {
    seqs.push_back({{"name", s.name},
                    {"frames", s.boxes.size()},
                    {"evaluated_frames", s.evaluated_frames},
                    {"auc", s.curve.auc},
                    {"mean_iou", s.mean_iou},
                    {"mean_cle", s.mean_cle}});
  }
  j["sequences"] = std::move(seqs);
  return j.dump(2);
}

EvalResult parse_summary_json(const std::string& text) {
  EvalResult r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.auc = j.at("auc").get<double>();
    r.curve.thresholds = j.at("thresholds").get<std::vector<double>>();
    r.curve.rates = j.at("curve").get<std::vector<double>>();
    r.curve.auc = r.auc;
    for (const auto& [k, v] : j.at("success_at").items()) r.success_at[std::stod(k)] = v.get<double>();
    r.mean_iou = j.at("mean_iou").get<double>();
    r.frac_iou_ge_half = j.at("frac_iou_ge_0.5").get<double>();
    r.mean_cle = j.at("mean_cle").get<double>();
    for (const auto& s : j.at("sequences")) {
      SequenceResult sr;
      sr.name = s.at("name").get<std::string>();
      sr.evaluated_frames = s.at("evaluated_frames").get<int>();
      sr.curve.auc = s.at("auc").get<double>();
      sr.mean_iou = s.at("mean_iou").get<double>();
      sr.mean_cle = s.at("mean_cle").get<double>();
      r.sequences.push_back(std::move(sr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed summary: ") + e.what());
  }
  return r;
}

void report(const EvalResult& result, const std::vector<SequenceRecord>& sequences, const ReportOptions& opts) {
  const fs::path root(opts.out_dir);
  std::error_code ec;
  fs::create_directories(root / "results", ec);
  if (ec) throw IoError("cannot create " + (root / "results").string() + ": " + ec.message());

  auto open = [](const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p.string());
    return f;
  };
  for (const auto& s : result.sequences) write_box_file((root / "results" / (s.name + ".txt")).string(), s.boxes);

  {
    auto f = open(root / "summary.json");
    f << summary_json(result) << '\n';
  }
  {
    auto f = open(root / "curve.csv");
    f << "threshold,success\n" << std::setprecision(10);
    for (std::size_t i = 0; i < result.curve.rates.size(); ++i) {
      f << result.curve.thresholds[i] << ',' << result.curve.rates[i] << '\n';
    }
  }
  {
    auto f = open(root / "sequences.csv");
    f << "name,frames,evaluated_frames,auc,success_0.5,mean_iou,mean_cle\n" << std::setprecision(10);
    for (const auto& s : result.sequences) {
      std::vector<double> v;
      for (const auto& x : s.ious) {
        if (x) v.push_back(*x);
      }
      f << s.name << ',' << s.boxes.size() << ',' << s.evaluated_frames << ',' << s.curve.auc << ','
        << (v.empty() ? 0.0 : success_at(v, 0.5)) << ',' << s.mean_iou << ',' << s.mean_cle << '\n';
    }
  }

  if (!opts.overlays) return;
  for (const auto& s : result.sequences) {
    auto it = std::find_if(sequences.begin(), sequences.end(), [&](const SequenceRecord& q) { return q.name == s.name; });
    if (it == sequences.end()) throw Error("report: no frames for sequence '" + s.name + "'");
    const fs::path dir = root / "overlays" / s.name;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
      Image img = it->frame(i);
      if (it->boxes[i]) draw_box(img, *it->boxes[i], {0.f, 1.f, 0.f});
      if (s.boxes[i].valid()) draw_box(img, s.boxes[i], {1.f, 0.f, 0.f});
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu.png", i + 1);
      save_image((dir / name).string(), img);
    }
  }
}

}  // namespace rfl
