#pragma once

// Dataset layout scanning, ingestion into the binary window cache, and the
// synthetic toy-data generator. A dataset root holds split.tsv plus one
// directory per dialog with main_agent.{bvh,wav,tsv} and
// interloctr.{bvh,wav,tsv}; the main BVH is required for train/val dialogs,
// the interlocutor BVH is never required.

#include <gdiff/audio.hpp>
#include <gdiff/bvh.hpp>
#include <gdiff/cache.hpp>
#include <gdiff/config.hpp>
#include <gdiff/dialogue.hpp>
#include <gdiff/motion.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace gdiff {

namespace fs = std::filesystem;

struct DialogEntry {
  std::string id;
  std::string split;  // train / val / test
  bool has_main_bvh = false;
  bool has_inter_bvh = false;
};

struct DatasetIndex {
  std::string root;
  std::vector<DialogEntry> dialogs;  // lexicographic by id
};

inline std::vector<unsigned char> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_binary_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string dialog_path(const DatasetIndex& index, const std::string& id,
                               const char* file) {
  return index.root + "/" + id + "/" + file;
}

// Read split.tsv and verify that every mandatory per-dialog file exists.
inline DatasetIndex scan_dataset(const std::string& root) {
  DatasetIndex index;
  index.root = root;
  const std::string split_path = root + "/split.tsv";
  if (!fs::exists(split_path)) throw std::runtime_error("missing split file " + split_path);

  std::istringstream in(read_text_file(split_path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("split.tsv: expected 'dialog<TAB>split'", line_no);
    DialogEntry e;
    e.id = line.substr(0, tab);
    e.split = line.substr(tab + 1);
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw ParseError("split.tsv: unknown split '" + e.split + "'", line_no);
    index.dialogs.push_back(std::move(e));
  }
  std::sort(index.dialogs.begin(), index.dialogs.end(),
            [](const DialogEntry& a, const DialogEntry& b) { return a.id < b.id; });

  for (DialogEntry& e : index.dialogs) {
    auto need = [&](const char* file) {
      std::string p = dialog_path(index, e.id, file);
      if (!fs::exists(p))
        throw std::runtime_error("dialog '" + e.id + "' is missing required file " + p);
    };
    need("main_agent.wav");
    need("main_agent.tsv");
    need("interloctr.wav");
    need("interloctr.tsv");
    e.has_main_bvh = fs::exists(dialog_path(index, e.id, "main_agent.bvh"));
    e.has_inter_bvh = fs::exists(dialog_path(index, e.id, "interloctr.bvh"));
    if ((e.split == "train" || e.split == "val") && !e.has_main_bvh)
      throw std::runtime_error("dialog '" + e.id + "' (" + e.split +
                               ") is missing required file " +
                               dialog_path(index, e.id, "main_agent.bvh"));
  }
  return index;
}

// Per-window social features for the window covering [start_s, end_s).
struct WindowSocial {
  IntentVector intent;
  EmotionIntensity emo_main, emo_inter;
  Vec ctx_main, ctx_inter;
};

inline WindowSocial window_social_features(const ProviderTables& tables,
                                           const std::vector<TranscriptToken>& main_tokens,
                                           const std::vector<TranscriptToken>& inter_tokens,
                                           double start_s, double end_s,
                                           Eigen::Index context_dim) {
  WindowSocial s;
  std::string text_main = window_text(main_tokens, start_s, end_s);
  std::string text_inter = window_text(inter_tokens, start_s, end_s);
  s.intent = intent_onehot(stub_intent_provider(tables, text_main, text_inter));
  s.emo_main = stub_emotion_provider(tables, text_main);
  s.emo_inter = stub_emotion_provider(tables, text_inter);
  s.ctx_main = context_embedding(text_main, context_dim);
  s.ctx_inter = context_embedding(text_inter, context_dim);
  return s;
}

namespace detail {

// Motion clips whose frame rate is within 0.01% of the target grid are taken
// as already on it (BVH frame times are printed with finite precision).
inline Mat features_on_grid(const MotionClip& clip, double target_fps) {
  Mat feats = motion_features(clip);
  double src_fps = frame_rate(clip);
  if (std::abs(src_fps - target_fps) / target_fps < 1e-4) return feats;
  return resample(feats, src_fps, target_fps);
}

}  // namespace detail

struct IngestSummary {
  DatasetIndex index;
  Eigen::Index motion_dim = 0;
  long total_windows = 0;
};

// Build the training cache: normalized per-window seed/target/condition
// matrices in GDAF files, stats fitted on the train split only, plus the
// skeleton hierarchy and a small index. Deterministic for fixed inputs.
inline IngestSummary ingest(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dataset.empty()) throw std::invalid_argument("ingest: config key 'dataset' is required");
  if (cfg.cache_dir.empty())
    throw std::invalid_argument("ingest: config key 'cache_dir' is required");

  DatasetIndex index = scan_dataset(cfg.dataset);
  ProviderTables tables = load_provider_tables(cfg.resolved_data_dir());
  fs::create_directories(cfg.cache_dir);

  struct DialogData {
    const DialogEntry* entry = nullptr;
    Mat features;  // raw, on the fps grid
    Mat audio_main, audio_inter;
    std::vector<TranscriptToken> tok_main, tok_inter;
  };

  std::vector<DialogData> loaded;
  std::string hierarchy;
  Eigen::Index motion_dim = 0;
  for (const DialogEntry& e : index.dialogs) {
    if (e.split == "test") continue;
    DialogData d;
    d.entry = &e;
    auto path = [&](const char* f) { return dialog_path(index, e.id, f); };
    try {
      auto [skel, clip] = parse_bvh(read_text_file(path("main_agent.bvh")));
      d.features = detail::features_on_grid(clip, cfg.fps);
      if (hierarchy.empty()) {
        hierarchy = serialize_hierarchy(skel);
        motion_dim = skel.total_channels;
      } else if (skel.total_channels != motion_dim) {
        throw std::runtime_error("channel count differs from the first dialog");
      }
      AudioTrack wav_main = decode_wav(read_binary_file(path("main_agent.wav")));
      AudioTrack wav_inter = decode_wav(read_binary_file(path("interloctr.wav")));
      d.audio_main = align_to_motion(log_mel_frames(wav_main, cfg.fps, cfg.n_fft,
                                                    static_cast<int>(cfg.n_mels)),
                                     d.features.rows());
      d.audio_inter = align_to_motion(log_mel_frames(wav_inter, cfg.fps, cfg.n_fft,
                                                     static_cast<int>(cfg.n_mels)),
                                      d.features.rows());
      d.tok_main = parse_transcript(read_text_file(path("main_agent.tsv")));
      d.tok_inter = parse_transcript(read_text_file(path("interloctr.tsv")));
    } catch (const std::exception& ex) {
      throw std::runtime_error("dialog '" + e.id + "': " + ex.what());
    }
    loaded.push_back(std::move(d));
  }
  if (loaded.empty()) throw std::runtime_error("ingest: no train/val dialogs with motion");

  std::vector<Mat> train_motion, train_audio;
  for (const DialogData& d : loaded) {
    if (d.entry->split != "train") continue;
    train_motion.push_back(d.features);
    train_audio.push_back(d.audio_main);
    train_audio.push_back(d.audio_inter);
  }
  if (train_motion.empty()) throw std::runtime_error("ingest: train split is empty");
  NormStats motion_stats = fit_norm_stats(train_motion);
  NormStats audio_stats = fit_norm_stats(train_audio);

  Mat stats_m(2, motion_dim);
  stats_m.row(0) = motion_stats.mean.transpose();
  stats_m.row(1) = motion_stats.std.transpose();
  write_gdaf(cfg.cache_dir + "/stats_motion.gdaf", stats_m);
  Mat stats_a(2, cfg.n_mels);
  stats_a.row(0) = audio_stats.mean.transpose();
  stats_a.row(1) = audio_stats.std.transpose();
  write_gdaf(cfg.cache_dir + "/stats_audio.gdaf", stats_a);
  write_text_file(cfg.cache_dir + "/skeleton.bvh", hierarchy);

  const Eigen::Index W = cfg.window_len, S = cfg.seed_len, G = cfg.gen_len();
  std::string index_tsv;
  long total_windows = 0;
  for (const DialogData& d : loaded) {
    Mat features = normalize(d.features, motion_stats);
    Mat audio_main = normalize(d.audio_main, audio_stats);
    Mat audio_inter = normalize(d.audio_inter, audio_stats);

    std::vector<Eigen::Index> offsets = window_offsets(features.rows(), W, cfg.stride);
    const Eigen::Index n_w = static_cast<Eigen::Index>(offsets.size());
    Mat seeds(n_w * S, motion_dim), targets(n_w * G, motion_dim);
    Mat condf(n_w * W, 2 * cfg.n_mels), condc(n_w, clip_condition_dim(cfg.context_dim));
    for (Eigen::Index w = 0; w < n_w; ++w) {
      Eigen::Index o = offsets[static_cast<std::size_t>(w)];
      WindowSocial soc = window_social_features(tables, d.tok_main, d.tok_inter, o / cfg.fps,
                                                (o + W) / cfg.fps, cfg.context_dim);
      ConditionVector cond =
          assemble_condition(audio_main.middleRows(o, W), audio_inter.middleRows(o, W),
                             soc.intent, soc.emo_main, soc.emo_inter, soc.ctx_main, soc.ctx_inter);
      seeds.middleRows(w * S, S) = features.middleRows(o, S);
      targets.middleRows(w * G, G) = features.middleRows(o + S, G);
      condf.middleRows(w * W, W) = cond.frame_part;
      condc.row(w) = cond.clip_part.transpose();
    }
    const std::string base = cfg.cache_dir + "/" + d.entry->id;
    write_gdaf(base + "_seed.gdaf", seeds);
    write_gdaf(base + "_target.gdaf", targets);
    write_gdaf(base + "_condf.gdaf", condf);
    write_gdaf(base + "_condc.gdaf", condc);
    index_tsv += d.entry->id + "\t" + d.entry->split + "\t" + std::to_string(n_w) + "\n";
    total_windows += n_w;
  }
  for (const DialogEntry& e : index.dialogs)
    if (e.split == "test") index_tsv += e.id + "\ttest\t0\n";
  write_text_file(cfg.cache_dir + "/index.tsv", index_tsv);

  std::string meta;
  meta += "fps = " + std::to_string(cfg.fps) + "\n";
  meta += "window_len = " + std::to_string(W) + "\n";
  meta += "seed_len = " + std::to_string(S) + "\n";
  meta += "stride = " + std::to_string(cfg.stride) + "\n";
  meta += "n_mels = " + std::to_string(cfg.n_mels) + "\n";
  meta += "context_dim = " + std::to_string(cfg.context_dim) + "\n";
  write_text_file(cfg.cache_dir + "/meta.cfg", meta);

  IngestSummary summary;
  summary.index = std::move(index);
  summary.motion_dim = motion_dim;
  summary.total_windows = total_windows;
  return summary;
}

struct CachedDataset {
  std::vector<TrainingWindow> windows;
  NormStats motion_stats;
  NormStats audio_stats;
  SkeletonDef skeleton;
  Eigen::Index motion_dim = 0;
};

// Load every cached window of one split back into memory.
inline CachedDataset load_cached_windows(const RunConfig& cfg, const std::string& split) {
  CachedDataset ds;
  Mat stats_m = read_gdaf(cfg.cache_dir + "/stats_motion.gdaf");
  ds.motion_stats.mean = stats_m.row(0).transpose();
  ds.motion_stats.std = stats_m.row(1).transpose();
  Mat stats_a = read_gdaf(cfg.cache_dir + "/stats_audio.gdaf");
  ds.audio_stats.mean = stats_a.row(0).transpose();
  ds.audio_stats.std = stats_a.row(1).transpose();
  ds.skeleton = parse_hierarchy(read_text_file(cfg.cache_dir + "/skeleton.bvh"));
  ds.motion_dim = stats_m.cols();

  const Eigen::Index W = cfg.window_len, S = cfg.seed_len, G = cfg.gen_len();
  std::istringstream in(read_text_file(cfg.cache_dir + "/index.tsv"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, sp, nw_str;
    std::getline(ls, id, '\t');
    std::getline(ls, sp, '\t');
    std::getline(ls, nw_str, '\t');
    if (sp != split) continue;
    Eigen::Index n_w = std::stol(nw_str);
    if (n_w == 0) continue;
    const std::string base = cfg.cache_dir + "/" + id;
    Mat seeds = read_gdaf(base + "_seed.gdaf");
    Mat targets = read_gdaf(base + "_target.gdaf");
    Mat condf = read_gdaf(base + "_condf.gdaf");
    Mat condc = read_gdaf(base + "_condc.gdaf");
    for (Eigen::Index w = 0; w < n_w; ++w) {
      TrainingWindow tw;
      tw.seed_frames = seeds.middleRows(w * S, S);
      tw.target_frames = targets.middleRows(w * G, G);
      tw.frame_conditions = condf.middleRows(w * W, W);
      tw.clip_condition = condc.row(w).transpose();
      tw.source_id = id + "#" + std::to_string(w * cfg.stride);
      ds.windows.push_back(std::move(tw));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic toy data. Motion is a bank of sinusoids locked to a 2 Hz audio
// beat; per-dialog amplitude is an affine function of the scripted positive
// emotion intensity, and transcripts are built out of the shipped lexicons so
// the stub providers recover the scripted intent and emotion exactly.
// ---------------------------------------------------------------------------

struct ToyDialogPlan {
  std::string id;
  int intent_index = 0;
  double positive = 0.0;  // P/20, recovered exactly by the emotion stub
  double amplitude = 0.0;
};

inline SkeletonDef toy_skeleton() {
  SkeletonDef s;
  auto joint = [&s](const char* name, std::optional<int> parent, double ox, double oy, double oz,
                    bool end_site) {
    JointDef j;
    j.name = name;
    j.parent_index = parent;
    j.offset = {ox, oy, oz};
    j.is_end_site = end_site;
    if (!end_site) {
      if (!parent.has_value())
        j.channels = {Channel::Xposition, Channel::Yposition, Channel::Zposition,
                      Channel::Zrotation, Channel::Xrotation, Channel::Yrotation};
      else
        j.channels = {Channel::Zrotation, Channel::Xrotation, Channel::Yrotation};
    }
    s.joints.push_back(std::move(j));
    return static_cast<int>(s.joints.size()) - 1;
  };
  int hips = joint("Hips", std::nullopt, 0, 0, 0, false);
  int spine = joint("Spine", hips, 0, 10, 0, false);
  int head = joint("Head", spine, 0, 10, 0, false);
  joint("Head_End", head, 0, 5, 0, true);
  int larm = joint("LeftArm", spine, 5, 8, 0, false);
  joint("LeftArm_End", larm, 5, 0, 0, true);
  int rarm = joint("RightArm", spine, -5, 8, 0, false);
  joint("RightArm_End", rarm, -5, 0, 0, true);
  for (const JointDef& j : s.joints) s.total_channels += static_cast<int>(j.channels.size());
  return s;
}

constexpr double kToyBeatHz = 2.0;
constexpr int kToySampleRate = 16000;
constexpr const char* kToyPositiveWord = "happy";
constexpr const char* kToyIntentWord = "music";

inline double toy_amplitude(double positive) { return 0.5 + 2.5 * positive; }

// Fillers are chosen to miss every shipped table (verified at generation).
inline const std::vector<std::string>& toy_filler_words() {
  static const std::vector<std::string> words = {
      "well", "so",     "then",    "it",    "goes", "on",   "and",  "the",  "we",  "were",
      "just", "talking", "about", "things", "that", "day",  "kind", "of",   "some"};
  return words;
}

inline std::vector<ToyDialogPlan> gen_toy(const std::string& out_root, Eigen::Index n_dialogs,
                                          double seconds, std::uint64_t rng_seed,
                                          const ProviderTables& tables) {
  if (n_dialogs < 1) throw std::invalid_argument("gen_toy: need at least one dialog");
  if (seconds < 5.0) throw std::invalid_argument("gen_toy: need at least 5 seconds per dialog");
  if (!tables.positive.count(kToyPositiveWord))
    throw std::runtime_error("gen_toy: positive lexicon is missing '" +
                             std::string(kToyPositiveWord) + "'");
  auto intent_it = tables.intent_keywords.find(kToyIntentWord);
  if (intent_it == tables.intent_keywords.end())
    throw std::runtime_error("gen_toy: intent table is missing '" + std::string(kToyIntentWord) +
                             "'");
  for (const std::string& w : toy_filler_words())
    if (tables.positive.count(w) || tables.negative.count(w) || tables.intent_keywords.count(w))
      throw std::runtime_error("gen_toy: filler word '" + w + "' collides with a shipped table");

  fs::create_directories(out_root);
  Rng rng(rng_seed);
  SkeletonDef skel = toy_skeleton();
  const int intent_index = intent_it->second;
  const Eigen::Index n_frames = static_cast<Eigen::Index>(std::llround(seconds * 30.0));
  const Eigen::Index n_samples = static_cast<Eigen::Index>(std::llround(seconds * kToySampleRate));

  std::string split_tsv, meta_csv = "dialog,planted_intent,planted_positive\n";
  std::vector<ToyDialogPlan> plans;
  for (Eigen::Index d = 0; d < n_dialogs; ++d) {
    ToyDialogPlan plan;
    {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "dlg%03d", static_cast<int>(d));
      plan.id = buf;
    }
    // P positive words out of the 20-token cycle; one slot is the intent
    // keyword, so P tops out at 19.
    long P = n_dialogs > 1
                 ? std::lround(19.0 * static_cast<double>(d) / static_cast<double>(n_dialogs - 1))
                 : 10;
    plan.positive = static_cast<double>(P) / 20.0;
    plan.intent_index = intent_index;
    plan.amplitude = toy_amplitude(plan.positive);
    double phase = rng.uniform01() * 2.0 * M_PI;

    const std::string dir = out_root + "/" + plan.id;
    fs::create_directories(dir);

    // motion: per-channel sinusoid at the beat frequency
    MotionClip clip;
    clip.frame_time = 1.0 / 30.0;
    clip.frames.resize(n_frames, skel.total_channels);
    for (Eigen::Index f = 0; f < n_frames; ++f) {
      double t = static_cast<double>(f) / 30.0;
      for (int j = 0; j < skel.total_channels; ++j) {
        double base = (j == 1) ? 90.0 : 0.0;  // hips height
        double scale = (j < 3) ? 0.3 : 1.0;   // translations move less
        double chan_phase = 2.0 * M_PI * j / skel.total_channels;
        clip.frames(f, j) =
            base + plan.amplitude * scale *
                       std::sin(2.0 * M_PI * kToyBeatHz * t + chan_phase + phase);
      }
    }
    write_text_file(dir + "/main_agent.bvh", serialize_bvh(skel, clip));

    // audio: gated sine bursts at the beat rate
    auto synth = [&](double carrier_hz, double amp, double gate_shift) {
      AudioTrack track;
      track.sample_rate = kToySampleRate;
      track.samples.resize(n_samples);
      for (Eigen::Index i = 0; i < n_samples; ++i) {
        double t = static_cast<double>(i) / kToySampleRate;
        double g = std::fmod(kToyBeatHz * t + gate_shift, 1.0) < 0.5 ? 1.0 : 0.0;
        track.samples[i] = amp * g * std::sin(2.0 * M_PI * carrier_hz * t);
      }
      return track;
    };
    write_binary_file(dir + "/main_agent.wav", encode_wav(synth(440.0, 0.5, 0.0)));
    write_binary_file(dir + "/interloctr.wav", encode_wav(synth(220.0, 0.3, 0.5)));

    // transcripts: 4 tokens per second on the main track, cycling
    // [positive x P, intent keyword, fillers]; interlocutor gets fillers only
    std::string main_tsv, inter_tsv;
    const auto& fillers = toy_filler_words();
    const long main_tokens = 4 * static_cast<long>(seconds);
    for (long k = 0; k < main_tokens; ++k) {
      double mid = 0.125 + 0.25 * static_cast<double>(k);
      long j = k % 20;
      std::string word;
      if (j < P)
        word = kToyPositiveWord;
      else if (j == P)
        word = kToyIntentWord;
      else
        word = fillers[static_cast<std::size_t>((j - P - 1) % static_cast<long>(fillers.size()))];
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.3f\t%.3f\t%s\n", mid - 0.05, mid + 0.05, word.c_str());
      main_tsv += buf;
    }
    const long inter_tokens = 2 * static_cast<long>(seconds);
    for (long k = 0; k < inter_tokens; ++k) {
      double mid = 0.375 + 0.5 * static_cast<double>(k);
      const std::string& word =
          fillers[static_cast<std::size_t>(k % static_cast<long>(fillers.size()))];
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.3f\t%.3f\t%s\n", mid - 0.05, mid + 0.05, word.c_str());
      inter_tsv += buf;
    }
    write_text_file(dir + "/main_agent.tsv", main_tsv);
    write_text_file(dir + "/interloctr.tsv", inter_tsv);

    split_tsv += plan.id + "\ttrain\n";
    char row[64];
    std::snprintf(row, sizeof(row), "%s,%d,%.6f\n", plan.id.c_str(), plan.intent_index,
                  plan.positive);
    meta_csv += row;
    plans.push_back(std::move(plan));
  }
  write_text_file(out_root + "/split.tsv", split_tsv);
  write_text_file(out_root + "/toy_meta.csv", meta_csv);
  return plans;
}

// Planted toy intensities, when the dataset root carries toy_meta.csv.
inline std::vector<std::pair<std::string, double>> read_toy_meta(const std::string& root) {
  std::vector<std::pair<std::string, double>> out;
  const std::string path = root + "/toy_meta.csv";
  if (!fs::exists(path)) return out;
  std::istringstream in(read_text_file(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) continue;
    out.emplace_back(line.substr(0, c1), std::stod(line.substr(c2 + 1)));
  }
  return out;
}

}  // namespace gdiff
