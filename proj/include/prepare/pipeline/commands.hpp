#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "prepare/anomaly/detector.hpp"
#include "prepare/core/embed.hpp"
#include "prepare/core/labels.hpp"
#include "prepare/core/run.hpp"
#include "prepare/forest/sweep.hpp"
#include "prepare/forest/train.hpp"
#include "prepare/online/controller.hpp"
#include "prepare/pipeline/annotation_server.hpp"
#include "prepare/pipeline/config.hpp"
#include "prepare/synth/generator.hpp"

// CLI subcommands as library calls. Each one reads its inputs, writes its
// outputs under `out_dir` and returns what it computed; nothing written
// depends on wall-clock time except the latency figures of deploy-sim.
namespace prepare::pipeline {

namespace fs = std::filesystem;

inline std::vector<Run> load_runs(const fs::path& dir_or_file) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir_or_file)) {
    for (const auto& e : fs::directory_iterator(dir_or_file)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".csv" || ext == ".jsonl")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(dir_or_file)) {
    files.push_back(dir_or_file);
  } else {
    throw IoError("no such run file or directory: " + dir_or_file.string());
  }
  std::vector<Run> runs;
  for (const auto& f : files) runs.push_back(load_run(f.string()));
  if (runs.empty()) throw NoInput("no run files in " + dir_or_file.string());
  return runs;
}

namespace detail {

inline fs::path ensure_dir(const fs::path& p) {
  fs::create_directories(p);
  return p;
}

inline nlohmann::ordered_json metrics_json(const forest::MetricsReport& m) {
  nlohmann::ordered_json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f_score"] = m.f_score;
  j["precision_undefined"] = m.precision_undefined;
  j["recall_undefined"] = m.recall_undefined;
  j["confusion"] = {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}};
  if (!m.per_fold.empty()) {
    j["precision_mean"] = m.precision_mean;
    j["precision_std"] = m.precision_std;
    j["recall_mean"] = m.recall_mean;
    j["recall_std"] = m.recall_std;
    j["f_mean"] = m.f_mean;
    j["f_std"] = m.f_std;
    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : m.per_fold)
      folds.push_back({{"precision", f.precision}, {"recall", f.recall}, {"f_score", f.f_score}});
    j["folds"] = std::move(folds);
  }
  return j;
}

inline nlohmann::ordered_json cv_json(const forest::CvResult& cv, std::size_t features) {
  nlohmann::ordered_json j;
  j["features"] = features;
  j["best_num_trees"] = cv.best_num_trees;
  j["best_max_depth"] = cv.best_max_depth;
  j["evaluations"] = cv.evaluations;
  j["metrics"] = metrics_json(cv.best);
  return j;
}

inline std::string cells_csv(const forest::CvResult& cv) {
  std::string out = "num_trees,max_depth,precision_mean,precision_std,recall_mean,recall_std,f_mean,f_std\n";
  for (const auto& c : cv.cells) {
    const auto& m = c.report;
    out += std::to_string(c.num_trees) + "," + std::to_string(c.max_depth) + "," + text::format_double(m.precision_mean) +
           "," + text::format_double(m.precision_std) + "," + text::format_double(m.recall_mean) + "," +
           text::format_double(m.recall_std) + "," + text::format_double(m.f_mean) + "," +
           text::format_double(m.f_std) + "\n";
  }
  return out;
}

inline void check_model_fits(const forest::SlipForest& model, double sample_period) {
  const auto& meta = model.metadata();
  if (meta.k_samples == 0) throw IncompatibleModel("model carries no window length");
  if (model.input_dim() != meta.k_samples * kFrameDim)
    throw IncompatibleModel("model input dimension " + std::to_string(model.input_dim()) + " does not match k = " +
                            std::to_string(meta.k_samples));
  if (meta.sample_period > 0.0 && std::abs(meta.sample_period - sample_period) > 0.01 * meta.sample_period)
    throw IncompatibleModel("model trained at " + text::format_double(meta.sample_period) + " s sampling, run has " +
                            text::format_double(sample_period) + " s");
}

}  // namespace detail

// ---- generate ---------------------------------------------------------------

struct GenerateResult {
  std::vector<Run> runs;
  LabelSet truth;
  std::map<std::string, std::vector<synth::SlipInjection>> injections;
};

/// Synthetic runs to `out/runs/*.csv`, ground truth to `out/truth_labels.csv`
/// and the injection plan to `out/injections.csv`.
inline GenerateResult cmd_generate(const PipelineConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto gait = synth::GaitProfile::trot(cfg.synth_noise_sigma, cfg.synth_gait_hz);
  const auto run_dir = detail::ensure_dir(out_dir / "runs");
  GenerateResult res;
  std::string inj_csv = "run_id,onset,duration,precursor,severity\n";
  const auto frames = static_cast<std::size_t>(std::floor(cfg.synth_duration_s / cfg.synth_sample_period + 1e-9));
  for (std::size_t r = 0; r < cfg.synth_runs; ++r) {
    char name[32];
    std::snprintf(name, sizeof(name), "run_%02zu", r);
    const auto plan = synth::plan_injections(frames, cfg.synth_sample_period, cfg.synth_plan,
                                             derive_seed(cfg.seed, 0x1000 + r));
    auto g = synth::generate_run(gait, cfg.synth_duration_s, plan, derive_seed(cfg.seed, 0x2000 + r), name,
                                 cfg.synth_sample_period);
    for (const auto& l : g.labels) res.truth.add(name, l);
    for (const auto& i : plan)
      inj_csv += std::string(name) + "," + std::to_string(i.onset) + "," + std::to_string(i.duration) + "," +
                 std::to_string(i.precursor) + "," + text::format_double(i.severity) + "\n";
    save_run(g.run, (run_dir / (std::string(name) + ".csv")).string());
    res.injections[name] = plan;
    res.runs.push_back(std::move(g.run));
  }
  save_labels(res.truth, (out_dir / "truth_labels.csv").string());
  text::write_file((out_dir / "injections.csv").string(), inj_csv);
  log << "generated " << res.runs.size() << " runs, " << res.truth.count(Label::slip) << " slip frames\n";
  return res;
}

// ---- detect -----------------------------------------------------------------

struct DetectResult {
  anomaly::DetectionReport report;
  std::vector<anomaly::CandidateWindow> candidates;
  std::optional<LabelSet> auto_labels;
  std::size_t truth_slip_frames = 0;
  std::size_t covered_slip_frames = 0;

  double coverage() const {
    return truth_slip_frames ? static_cast<double>(covered_slip_frames) / static_cast<double>(truth_slip_frames) : 1.0;
  }
};

/// Scores every frame, merges outliers into candidate windows and writes
/// `candidates.csv`, `anomaly/<run>.csv` and `detect_summary.json`. With
/// `truth`, ground truth restricted to the candidate windows stands in for
/// the annotator and is written to `labels.csv`.
inline DetectResult cmd_detect(const PipelineConfig& cfg, std::span<const Run> runs, const fs::path& out_dir,
                               std::ostream& log, const LabelSet* truth = nullptr) {
  DetectResult res;
  res.report = anomaly::detect_anomalies(runs, cfg.detector_options());
  res.candidates = res.report.candidates();
  const auto anomaly_dir = detail::ensure_dir(out_dir / "anomaly");
  text::write_file((out_dir / "candidates.csv").string(), anomaly::candidates_to_csv(res.candidates));
  for (const auto& rd : res.report.runs) {
    std::string csv = "frame_index,score,outlier,in_window\n";
    const auto& r = rd.result;
    for (std::size_t f = 0; f < r.scores.size(); ++f)
      csv += std::to_string(f) + "," + text::format_double(r.scores[f]) + "," + (r.outlier_flags[f] ? "1" : "0") +
             "," + (r.in_window(f) ? "1" : "0") + "\n";
    text::write_file((anomaly_dir / (rd.run_id + ".csv")).string(), csv);
  }
  if (truth) {
    LabelSet labels;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& result = res.report.runs[i].result;
      for (const auto& rec : truth->for_run(runs[i].id())) {
        if (rec.label != Label::slip) continue;
        ++res.truth_slip_frames;
        if (result.in_window(rec.frame_index)) {
          ++res.covered_slip_frames;
          labels.add(runs[i].id(), {rec.frame_index, Label::slip, LabelSource::synthetic_ground_truth});
        }
      }
    }
    save_labels(labels, (out_dir / "labels.csv").string());
    res.auto_labels = std::move(labels);
  }
  nlohmann::ordered_json summary;
  summary["total_frames"] = res.report.total_frames();
  std::size_t in_windows = 0;
  for (const auto& rd : res.report.runs) in_windows += rd.result.frames_in_windows();
  summary["frames_in_windows"] = in_windows;
  summary["candidate_windows"] = res.candidates.size();
  summary["effort_reduction"] = res.report.overall_effort_reduction();
  if (truth) {
    summary["truth_slip_frames"] = res.truth_slip_frames;
    summary["covered_slip_frames"] = res.covered_slip_frames;
    summary["slip_coverage"] = res.coverage();
  }
  text::write_file((out_dir / "detect_summary.json").string(), summary.dump(2) + "\n");
  log << res.candidates.size() << " candidate windows over " << res.report.total_frames()
      << " frames; effort reduction " << text::format_fixed(res.report.overall_effort_reduction(), 3);
  if (truth) log << "; slip coverage " << text::format_fixed(res.coverage(), 3);
  log << "\n";
  return res;
}

// ---- annotate-serve ---------------------------------------------------------

/// Serves the annotation API until the process is stopped. The journal is
/// `out/annotations.journal.csv`; labels are exported to `out/labels.csv`.
inline void cmd_annotate_serve(const PipelineConfig& cfg, const fs::path& candidates_csv, std::span<const Run> runs,
                               const fs::path& out_dir, std::ostream& log) {
  detail::ensure_dir(out_dir);
  auto cands = anomaly::candidates_from_csv(text::read_lines(candidates_csv.string()));
  std::map<std::string, Run> by_id;
  for (const auto& r : runs) by_id.emplace(r.id(), r);
  for (const auto& c : cands)
    if (!by_id.count(c.run_id)) throw NoInput("candidate refers to run '" + c.run_id + "' which was not loaded");
  AnnotationStore store(std::move(cands), (out_dir / "annotations.journal.csv").string());
  AnnotationServer server(store, std::move(by_id), cfg.pad_samples, (out_dir / "labels.csv").string());
  log << "serving " << store.tasks(true).size() << " candidates on http://" << cfg.annotate_host << ":"
      << cfg.annotate_port << "\n";
  log.flush();
  server.serve(cfg.annotate_host, cfg.annotate_port);
}

// ---- train ------------------------------------------------------------------

/// Embeds, cross-validates and fits the final model; writes `model.json`,
/// `metrics.json`, `cv_cells.csv` (`cv_cells_full.csv` when both variants
/// ran), `importance.csv` and `synthesis.csv`.
inline forest::TrainResult cmd_train(const PipelineConfig& cfg, std::span<const Run> runs, const LabelSet& labels,
                                     const fs::path& out_dir, std::ostream& log) {
  detail::ensure_dir(out_dir);
  const double period = forest::common_sample_period(runs);
  const std::size_t k = cfg.history_samples(period, &log);
  const std::size_t n = cfg.lookahead_samples(period);
  const auto ds = embed_runs(runs, labels, k, n);
  const std::size_t slips = ds.positives();
  if (slips < 2) throw InsufficientData("need at least 2 slip samples to train, have " + std::to_string(slips));
  log << "training on " << ds.X.rows() << " windows (" << slips << " slip), k = " << k << ", n = " << n << "\n";

  auto res = forest::train_slip_model(ds.X, ds.y, cfg.train_options(), {k, n, period});
  text::write_file((out_dir / "model.json").string(), res.model->serialize());

  nlohmann::ordered_json report;
  report["k_samples"] = k;
  report["lookahead_n"] = n;
  report["sample_period"] = period;
  report["samples"] = ds.X.rows();
  report["slip_samples"] = slips;
  if (res.full_cv) report["full"] = detail::cv_json(*res.full_cv, ds.X.cols());
  if (res.ablated_cv) report["ablated"] = detail::cv_json(*res.ablated_cv, res.feature_mask.size());
  report["selected"] = res.ablated_cv ? "ablated" : "full";
  report["final_num_trees"] = res.model->num_trees();
  report["final_max_depth"] = res.model->options().max_depth;
  report["synthetic_samples"] = res.final_synthesis.generated.size();
  text::write_file((out_dir / "metrics.json").string(), report.dump(2) + "\n");

  text::write_file((out_dir / "cv_cells.csv").string(), detail::cells_csv(res.selected()));
  if (res.full_cv && res.ablated_cv)
    text::write_file((out_dir / "cv_cells_full.csv").string(), detail::cells_csv(*res.full_cv));
  if (res.importance) {
    std::string csv = "feature_index,feature,importance\n";
    for (std::size_t f : res.importance->ranking())
      csv += std::to_string(f) + "," + feature_label(f, k) + "," + text::format_double(res.importance->values[f]) + "\n";
    text::write_file((out_dir / "importance.csv").string(), csv);
  }
  text::write_file((out_dir / "synthesis.csv").string(), res.final_synthesis.to_csv());

  const auto& best = res.selected().best;
  log << "selected P = " << res.model->num_trees() << ", d_max = " << res.model->options().max_depth
      << "; CV precision " << text::format_fixed(best.precision_mean, 3) << ", recall "
      << text::format_fixed(best.recall_mean, 3) << ", F " << text::format_fixed(best.f_mean, 3) << "\n";
  return res;
}

// ---- evaluate ---------------------------------------------------------------

/// Scores a trained model on labelled runs; writes `evaluation.json`.
inline forest::MetricsReport cmd_evaluate(const PipelineConfig& cfg, const forest::SlipForest& model,
                                          std::span<const Run> runs, const LabelSet& labels, const fs::path& out_dir,
                                          std::ostream& log) {
  detail::ensure_dir(out_dir);
  const double period = forest::common_sample_period(runs);
  detail::check_model_fits(model, period);
  const auto& meta = model.metadata();
  const auto ds = embed_runs(runs, labels, meta.k_samples, meta.lookahead_n);
  std::vector<std::uint8_t> pred(ds.X.rows());
  std::vector<double> row(ds.X.cols());
  for (std::size_t i = 0; i < ds.X.rows(); ++i) {
    copy_row(ds.X, i, row);
    pred[i] = model.predict_proba(row) > cfg.decision_threshold ? 1 : 0;
  }
  const auto m = forest::metrics(pred, ds.y);
  text::write_file((out_dir / "evaluation.json").string(), detail::metrics_json(m).dump(2) + "\n");
  log << "precision " << text::format_fixed(m.precision, 3) << ", recall " << text::format_fixed(m.recall, 3) << ", F "
      << text::format_fixed(m.f_score, 3) << " on " << ds.X.rows() << " windows\n";
  return m;
}

// ---- sweeps -----------------------------------------------------------------

namespace detail {
inline void write_sweep(const fs::path& out_dir, const std::string& stem, const std::vector<forest::SweepRow>& rows) {
  const bool has_full = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.full.has_value(); });
  const bool has_abl = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.ablated.has_value(); });
  if (has_full) text::write_file((out_dir / (stem + "_full.csv")).string(), forest::sweep_to_csv(rows, false));
  if (has_abl) text::write_file((out_dir / (stem + "_ablated.csv")).string(), forest::sweep_to_csv(rows, true));
}
}  // namespace detail

/// CV score per history length at the configured look-ahead;
/// `sweep_history_{full,ablated}.csv`.
inline std::vector<forest::SweepRow> cmd_sweep_history(const PipelineConfig& cfg, std::span<const Run> runs,
                                                       const LabelSet& labels, const fs::path& out_dir,
                                                       std::ostream& log) {
  detail::ensure_dir(out_dir);
  const double period = forest::common_sample_period(runs);
  const auto rows = forest::sweep_history(runs, labels, cfg.sweep_history_seconds, cfg.lookahead_samples(period),
                                          cfg.train_options());
  detail::write_sweep(out_dir, "sweep_history", rows);
  for (const auto& r : rows) {
    const auto& cv = r.ablated ? *r.ablated : *r.full;
    log << "history " << text::format_fixed(r.setting, 2) << " s (k = " << r.k_samples << "): F "
        << text::format_fixed(cv.best.f_mean, 3) << "\n";
  }
  return rows;
}

/// CV score per look-ahead at the configured history;
/// `sweep_lookahead_{full,ablated}.csv`.
inline std::vector<forest::SweepRow> cmd_sweep_lookahead(const PipelineConfig& cfg, std::span<const Run> runs,
                                                         const LabelSet& labels, const fs::path& out_dir,
                                                         std::ostream& log) {
  detail::ensure_dir(out_dir);
  const double period = forest::common_sample_period(runs);
  cfg.history_samples(period, &log);
  const auto rows =
      forest::sweep_lookahead(runs, labels, cfg.history_seconds, cfg.sweep_lookahead_ms, cfg.train_options());
  detail::write_sweep(out_dir, "sweep_lookahead", rows);
  for (const auto& r : rows) {
    const auto& cv = r.ablated ? *r.ablated : *r.full;
    log << "look-ahead " << text::format_fixed(r.setting, 0) << " ms (n = " << r.lookahead_n << "): F "
        << text::format_fixed(cv.best.f_mean, 3) << "\n";
  }
  return rows;
}

// ---- deploy-sim -------------------------------------------------------------

struct ModeTransition {
  double timestamp = 0.0;
  online::GaitMode from = online::GaitMode::Normal;
  online::GaitMode to = online::GaitMode::Normal;
  double p_slip = 0.0;
};

struct DeployResult {
  std::vector<online::PredictionEvent> events;
  std::vector<online::GaitMode> modes;  // mode after each event
  std::vector<ModeTransition> transitions;
};

/// Replays a run through the online predictor and the gait controller.
/// Writes `events.jsonl` and `transitions.csv`. With `realtime` the replay
/// is paced by the frame timestamps.
inline DeployResult cmd_deploy_sim(const PipelineConfig& cfg, const forest::SlipForest& model, const Run& run,
                                   const fs::path& out_dir, std::ostream& log, bool realtime = false) {
  detail::ensure_dir(out_dir);
  detail::check_model_fits(model, run.sample_period());
  online::HistoryBuffer buffer(model.metadata().k_samples, run.sample_period());
  online::ControllerState ctl(cfg.safe_mode, cfg.tau, cfg.safe_mode_seconds);
  DeployResult res;
  std::string jsonl;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t f = 0; f < run.size(); ++f) {
    const auto frame = run.frame(f);
    if (realtime)
      std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>(frame.timestamp - run.timestamp(0))));
    const auto ev = online::push_frame(buffer, frame, model, cfg.tau);
    if (!ev) continue;
    const auto before = ctl.mode;
    const auto mode = online::step_controller(ctl, *ev, ev->timestamp);
    if (mode != before) res.transitions.push_back({ev->timestamp, before, mode, ev->p_slip});
    res.events.push_back(*ev);
    res.modes.push_back(mode);
    nlohmann::ordered_json j;
    j["timestamp"] = ev->timestamp;
    j["p_slip"] = ev->p_slip;
    j["decision"] = ev->decision;
    j["mode"] = std::string(online::to_string(mode));
    j["inference_latency_ms"] = ev->inference_latency_ms;
    jsonl += j.dump() + "\n";
  }
  text::write_file((out_dir / "events.jsonl").string(), jsonl);
  std::string csv = "timestamp,from,to,p_slip\n";
  for (const auto& t : res.transitions)
    csv += text::format_double(t.timestamp) + "," + std::string(online::to_string(t.from)) + "," +
           std::string(online::to_string(t.to)) + "," + text::format_double(t.p_slip) + "\n";
  text::write_file((out_dir / "transitions.csv").string(), csv);
  log << res.events.size() << " prediction events, " << res.transitions.size() << " mode transitions\n";
  return res;
}

}  // namespace prepare::pipeline
