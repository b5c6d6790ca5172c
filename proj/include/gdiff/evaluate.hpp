#pragma once

// Objective evaluation of a checkpoint over one dataset split. Every dialog
// is sampled with a fresh rng at the configured seed, so the seed-pool pick
// and the noise stream are shared across dialogs and only the conditions
// differ; reference-based metrics are skipped (with a notice column) when the
// split carries no main-agent motion.

#include <gdiff/checkpoint.hpp>
#include <gdiff/dataset.hpp>
#include <gdiff/diffusion.hpp>
#include <gdiff/metrics.hpp>
#include <gdiff/sampling.hpp>

#include <map>
#include <string>
#include <vector>

namespace gdiff {

struct EvalRow {
  std::string dialog;
  bool has_reference = false;
  double jerk_gen = 0.0;
  double jerk_ref = 0.0;
  double jerk_ratio = 0.0;
  double w1_velocity = 0.0;
  double boundary_disc = 0.0;
  double amplitude = 0.0;
  double planted_positive = std::numeric_limits<double>::quiet_NaN();
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double spearman_planted_amplitude = std::numeric_limits<double>::quiet_NaN();
};

inline EvalReport evaluate_split(const RunConfig& cfg, const Checkpoint& ckpt,
                                 const std::string& split) {
  if (cfg.dataset.empty()) throw std::invalid_argument("eval: config key 'dataset' is required");
  DatasetIndex index = scan_dataset(cfg.dataset);
  ProviderTables tables = load_provider_tables(cfg.resolved_data_dir());
  std::map<std::string, double> planted;
  for (auto& [id, p] : read_toy_meta(cfg.dataset)) planted[id] = p;

  EvalReport report;
  for (const DialogEntry& e : index.dialogs) {
    if (e.split != split) continue;
    Rng rng(cfg.rng_seed);
    SampleResult gen = sample_dialog(ckpt, cfg.dataset, e.id, cfg.duration_s, rng, tables);

    EvalRow row;
    row.dialog = e.id;
    row.jerk_gen = mean_abs_jerk(gen.clip.frames);
    row.boundary_disc = boundary_discontinuity(gen.clip.frames, ckpt.config.gen_len());
    row.amplitude = mean_channel_amplitude(gen.clip.frames);
    if (auto it = planted.find(e.id); it != planted.end()) row.planted_positive = it->second;

    if (e.has_main_bvh) {
      auto [skel, clip] = parse_bvh(read_text_file(dialog_path(index, e.id, "main_agent.bvh")));
      Mat ref = detail::features_on_grid(clip, ckpt.config.fps);
      row.has_reference = true;
      row.jerk_ref = mean_abs_jerk(ref);
      row.jerk_ratio = row.jerk_ref > 0.0 ? row.jerk_gen / row.jerk_ref
                                          : std::numeric_limits<double>::quiet_NaN();
      row.w1_velocity =
          wasserstein1_hist(velocity_magnitudes(gen.clip.frames), velocity_magnitudes(ref));
    }
    report.rows.push_back(std::move(row));
  }

  std::vector<double> xs, ys;
  for (const EvalRow& r : report.rows)
    if (!std::isnan(r.planted_positive)) {
      xs.push_back(r.planted_positive);
      ys.push_back(r.amplitude);
    }
  if (xs.size() >= 3) report.spearman_planted_amplitude = spearman(xs, ys);
  return report;
}

inline std::string eval_report_csv(const EvalReport& report) {
  std::string csv =
      "dialog,jerk_gen,jerk_ref,jerk_ratio,w1_velocity,boundary_disc,amplitude,planted_positive\n";
  char buf[256];
  auto cell = [](double v) {
    if (std::isnan(v)) return std::string();
    char b[40];
    std::snprintf(b, sizeof(b), "%.9g", v);
    return std::string(b);
  };
  double mean_jerk = 0.0, mean_boundary = 0.0, mean_amp = 0.0;
  for (const EvalRow& r : report.rows) {
    std::string jr = r.has_reference ? cell(r.jerk_ref) : "";
    std::string jt = r.has_reference ? cell(r.jerk_ratio) : "";
    std::string w1 = r.has_reference ? cell(r.w1_velocity) : "";
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%s,%s,%s,%s\n", r.dialog.c_str(),
                  cell(r.jerk_gen).c_str(), jr.c_str(), jt.c_str(), w1.c_str(),
                  cell(r.boundary_disc).c_str(), cell(r.amplitude).c_str(),
                  cell(r.planted_positive).c_str());
    csv += buf;
    mean_jerk += r.jerk_gen;
    mean_boundary += r.boundary_disc;
    mean_amp += r.amplitude;
  }
  if (!report.rows.empty()) {
    double n = static_cast<double>(report.rows.size());
    std::snprintf(buf, sizeof(buf), "mean,%s,,,,%s,%s,\n", cell(mean_jerk / n).c_str(),
                  cell(mean_boundary / n).c_str(), cell(mean_amp / n).c_str());
    csv += buf;
  }
  std::snprintf(buf, sizeof(buf), "spearman_planted_amplitude,,,,,,%s,\n",
                cell(report.spearman_planted_amplitude).c_str());
  csv += buf;
  return csv;
}

}  // namespace gdiff
