#pragma once

// Sampling from a checkpoint: build per-window conditions straight from a
// dialog's raw audio and transcripts (the checkpoint supplies stats, layout,
// and skeleton), pick a seed from the checkpoint's pool, run the reverse
// process window by window, and denormalize back to BVH channel values.
//
// Generated frame g is aligned with audio frame g; window k covers generated
// frames [G*k - seed_len, G*k + G), clamped at 0 on the left edge, so the
// condition block always has window_len rows.

#include <gdiff/checkpoint.hpp>
#include <gdiff/dataset.hpp>
#include <gdiff/diffusion.hpp>

#include <string>
#include <vector>

namespace gdiff {

inline std::vector<ConditionVector> build_sample_conditions(const Checkpoint& ckpt,
                                                            const std::string& dataset_root,
                                                            const std::string& dialog_id,
                                                            double duration_s,
                                                            const ProviderTables& tables) {
  const RunConfig& cfg = ckpt.config;
  const Eigen::Index G = cfg.gen_len(), S = cfg.seed_len, W = cfg.window_len;
  const Eigen::Index n_windows = static_cast<Eigen::Index>(
      std::ceil(duration_s * cfg.fps / static_cast<double>(G)));
  if (n_windows < 1) throw std::invalid_argument("sample: duration shorter than one window");
  const Eigen::Index total = n_windows * G;

  const std::string dir = dataset_root + "/" + dialog_id;
  AudioTrack wav_main = decode_wav(read_binary_file(dir + "/main_agent.wav"));
  AudioTrack wav_inter = decode_wav(read_binary_file(dir + "/interloctr.wav"));
  Mat audio_main = normalize(
      align_to_motion(log_mel_frames(wav_main, cfg.fps, cfg.n_fft, static_cast<int>(cfg.n_mels)),
                      total),
      ckpt.audio_stats);
  Mat audio_inter = normalize(
      align_to_motion(log_mel_frames(wav_inter, cfg.fps, cfg.n_fft, static_cast<int>(cfg.n_mels)),
                      total),
      ckpt.audio_stats);
  std::vector<TranscriptToken> tok_main = parse_transcript(read_text_file(dir + "/main_agent.tsv"));
  std::vector<TranscriptToken> tok_inter = parse_transcript(read_text_file(dir + "/interloctr.tsv"));

  std::vector<ConditionVector> conds;
  conds.reserve(static_cast<std::size_t>(n_windows));
  for (Eigen::Index k = 0; k < n_windows; ++k) {
    Mat am(W, cfg.n_mels), ai(W, cfg.n_mels);
    for (Eigen::Index r = 0; r < W; ++r) {
      Eigen::Index src = std::min(std::max<Eigen::Index>(G * k - S + r, 0), total - 1);
      am.row(r) = audio_main.row(src);
      ai.row(r) = audio_inter.row(src);
    }
    double t0 = static_cast<double>(G * k - S) / cfg.fps;
    double t1 = static_cast<double>(G * k + G) / cfg.fps;
    WindowSocial soc =
        window_social_features(tables, tok_main, tok_inter, t0, t1, cfg.context_dim);
    conds.push_back(assemble_condition(am, ai, soc.intent, soc.emo_main, soc.emo_inter,
                                       soc.ctx_main, soc.ctx_inter));
  }
  return conds;
}

struct SampleResult {
  MotionClip clip;     // denormalized channel values on the checkpoint skeleton
  Mat normalized;      // the raw generated frames, normalized units
  Eigen::Index n_windows = 0;
};

// The first rng draw picks the seed window from the checkpoint pool; the rest
// of the stream drives the reverse process.
inline SampleResult sample_dialog(const Checkpoint& ckpt, const std::string& dataset_root,
                                  const std::string& dialog_id, double duration_s, Rng& rng,
                                  const ProviderTables& tables) {
  const RunConfig& cfg = ckpt.config;
  std::vector<ConditionVector> conds =
      build_sample_conditions(ckpt, dataset_root, dialog_id, duration_s, tables);

  Eigen::Index pool = ckpt.seed_pool_count();
  if (pool < 1) throw std::runtime_error("sample: checkpoint has an empty seed pool");
  Eigen::Index pick = static_cast<Eigen::Index>(rng.uniform_int(0, pool - 1));
  Mat seed = ckpt.seed_pool.middleRows(pick * cfg.seed_len, cfg.seed_len);

  NoiseSchedule sched = ckpt.schedule();
  DenoiserModel model(ckpt.params);
  SampleResult out;
  out.normalized = sample_long(model, seed, conds, sched, rng, cfg.guidance);
  out.clip.frames = denormalize(out.normalized, ckpt.motion_stats);
  out.clip.frame_time = 1.0 / cfg.fps;
  out.n_windows = static_cast<Eigen::Index>(conds.size());
  return out;
}

}  // namespace gdiff
