#pragma once

// Timed-transcript parsing and the social-feature side of the generation
// condition: intent one-hot, emotion intensities, and context embeddings for
// both speakers. The pretrained classifiers these stand in for are external
// services; here they are pluggable providers with deterministic table-driven
// defaults, plus a file-import path through the feature cache format.

#include <gdiff/common.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace gdiff {

constexpr int kIntentDim = 60;
constexpr int kEmotionDim = 3;

struct TranscriptToken {
  double start = 0.0;  // seconds
  double end = 0.0;
  std::string word;
  bool is_laughter = false;  // raw token was "#"
};

struct IntentVector {
  Vec values;  // one-hot, length kIntentDim
};

// Point on the positive/neutral/negative simplex.
struct EmotionIntensity {
  double positive = 0.0;
  double neutral = 1.0;
  double negative = 0.0;
};

// The assembled condition for one window: per-frame audio features of both
// speakers side by side, and the window-level social features in the fixed
// order [intent | emotion main | emotion inter | context main | context inter].
struct ConditionVector {
  Mat frame_part;  // [window_len x 2*D_a]
  Vec clip_part;   // [kIntentDim + 2*kEmotionDim + 2*D_c]
};

inline Eigen::Index clip_condition_dim(Eigen::Index context_dim) {
  return kIntentDim + 2 * kEmotionDim + 2 * context_dim;
}

// Parse "start<TAB>end<TAB>token" lines. Tokens come back sorted by start
// time; "#" marks laughter per the corpus convention.
inline std::vector<TranscriptToken> parse_transcript(std::string_view tsv_text) {
  std::vector<TranscriptToken> tokens;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= tsv_text.size()) {
    std::size_t eol = tsv_text.find('\n', pos);
    std::string_view line = tsv_text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? tsv_text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string_view::npos ? std::string_view::npos : line.find('\t', t1 + 1);
    if (t1 == std::string_view::npos || t2 == std::string_view::npos ||
        line.find('\t', t2 + 1) != std::string_view::npos)
      throw ParseError("expected 3 tab-separated columns", line_no);

    auto parse_seconds = [line_no](std::string_view s, const char* what) {
      try {
        std::size_t used = 0;
        double v = std::stod(std::string(s), &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
      } catch (const std::exception&) {
        throw ParseError(std::string("non-numeric ") + what + " '" + std::string(s) + "'", line_no);
      }
    };

    TranscriptToken tok;
    tok.start = parse_seconds(line.substr(0, t1), "start time");
    tok.end = parse_seconds(line.substr(t1 + 1, t2 - t1 - 1), "end time");
    tok.word = std::string(line.substr(t2 + 1));
    if (tok.start < 0.0) throw ParseError("negative start time", line_no);
    if (tok.end < tok.start) throw ParseError("end time before start time", line_no);
    tok.is_laughter = (tok.word == "#");
    tokens.push_back(std::move(tok));
  }
  std::stable_sort(tokens.begin(), tokens.end(),
                   [](const TranscriptToken& a, const TranscriptToken& b) { return a.start < b.start; });
  return tokens;
}

// Space-joined words whose midpoint falls in [window_start_s, window_end_s).
// Laughter tokens contribute the literal word "laughter".
inline std::string window_text(const std::vector<TranscriptToken>& tokens, double window_start_s,
                               double window_end_s) {
  if (window_end_s <= window_start_s)
    throw std::invalid_argument("window_text: window end must exceed start");
  std::string out;
  for (const TranscriptToken& t : tokens) {
    double mid = 0.5 * (t.start + t.end);
    if (mid < window_start_s || mid >= window_end_s) continue;
    if (!out.empty()) out += ' ';
    out += t.is_laughter ? "laughter" : t.word;
  }
  return out;
}

inline IntentVector intent_onehot(int label_index) {
  if (label_index < 0 || label_index >= kIntentDim)
    throw std::out_of_range("intent_onehot: index " + std::to_string(label_index) +
                            " outside [0, " + std::to_string(kIntentDim) + ")");
  IntentVector v;
  v.values = Vec::Zero(kIntentDim);
  v.values[label_index] = 1.0;
  return v;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < text.size() && text[i] != ' ' && text[i] != '\t') ++i;
    if (i > start) words.push_back(lowercase(text.substr(start, i - start)));
  }
  return words;
}

// Tables behind the stub providers: keyword -> intent index, plus the two
// sentiment lexicons. Shipped as plain-text resources under data/.
struct ProviderTables {
  std::unordered_map<std::string, int> intent_keywords;
  std::unordered_set<std::string> positive;
  std::unordered_set<std::string> negative;
};

inline std::unordered_map<std::string, int> parse_intent_table(std::string_view content) {
  std::unordered_map<std::string, int> table;
  std::istringstream in{std::string(content)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected 'word<TAB>index'", line_no);
    int index = 0;
    try {
      index = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("non-numeric intent index", line_no);
    }
    if (index < 0 || index >= kIntentDim) throw ParseError("intent index out of range", line_no);
    table[lowercase(line.substr(0, tab))] = index;
  }
  return table;
}

inline std::unordered_set<std::string> parse_lexicon(std::string_view content) {
  std::unordered_set<std::string> words;
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    words.insert(lowercase(line));
  }
  return words;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ProviderTables load_provider_tables(const std::string& data_dir) {
  ProviderTables t;
  t.intent_keywords = parse_intent_table(read_text_file(data_dir + "/intent_keywords.tsv"));
  t.positive = parse_lexicon(read_text_file(data_dir + "/lexicon_positive.txt"));
  t.negative = parse_lexicon(read_text_file(data_dir + "/lexicon_negative.txt"));
  return t;
}

// First keyword hit wins, scanning the main speaker's text left to right and
// then the interlocutor's. No hit falls back to index 0 ("general chat").
inline int stub_intent_provider(const ProviderTables& tables, std::string_view window_text_main,
                                std::string_view window_text_inter) {
  for (std::string_view text : {window_text_main, window_text_inter})
    for (const std::string& w : split_words(text)) {
      auto it = tables.intent_keywords.find(w);
      if (it != tables.intent_keywords.end()) return it->second;
    }
  return 0;
}

// Lexicon counting: raw = (P, W-P-N, N) over the window's W words, normalized
// to the simplex. Empty text is neutral.
inline EmotionIntensity stub_emotion_provider(const ProviderTables& tables,
                                              std::string_view text) {
  std::vector<std::string> words = split_words(text);
  if (words.empty()) return EmotionIntensity{0.0, 1.0, 0.0};
  double pos = 0.0, neg = 0.0;
  for (const std::string& w : words) {
    if (tables.positive.count(w))
      pos += 1.0;
    else if (tables.negative.count(w))
      neg += 1.0;
  }
  double total = static_cast<double>(words.size());
  return EmotionIntensity{pos / total, (total - pos - neg) / total, neg / total};
}

// Hashed bag of words: bucket = fnv1a64(word) mod D_c, sign from hash bit 63
// (+1 when clear), accumulated then L2 normalized. Empty accumulation stays
// the zero vector.
inline Vec context_embedding(std::string_view text, Eigen::Index context_dim = 64) {
  if (context_dim < 1) throw std::invalid_argument("context_embedding: D_c must be >= 1");
  Vec acc = Vec::Zero(context_dim);
  for (const std::string& w : split_words(text)) {
    std::uint64_t h = fnv1a64(w);
    Eigen::Index bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(context_dim));
    acc[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = acc.norm();
  if (norm > 0.0) acc /= norm;
  return acc;
}

inline ConditionVector assemble_condition(const Mat& audio_main, const Mat& audio_inter,
                                          const IntentVector& intent,
                                          const EmotionIntensity& emo_main,
                                          const EmotionIntensity& emo_inter, const Vec& ctx_main,
                                          const Vec& ctx_inter) {
  if (audio_main.rows() != audio_inter.rows() || audio_main.cols() != audio_inter.cols())
    throw DimensionError("assemble_condition: speaker audio feature shapes differ");
  if (ctx_main.size() != ctx_inter.size())
    throw DimensionError("assemble_condition: context embedding sizes differ");
  if (intent.values.size() != kIntentDim)
    throw DimensionError("assemble_condition: intent vector must have length 60");

  ConditionVector c;
  c.frame_part.resize(audio_main.rows(), audio_main.cols() * 2);
  c.frame_part << audio_main, audio_inter;

  c.clip_part.resize(clip_condition_dim(ctx_main.size()));
  Eigen::Index at = 0;
  c.clip_part.segment(at, kIntentDim) = intent.values;
  at += kIntentDim;
  c.clip_part.segment(at, 3) << emo_main.positive, emo_main.neutral, emo_main.negative;
  at += 3;
  c.clip_part.segment(at, 3) << emo_inter.positive, emo_inter.neutral, emo_inter.negative;
  at += 3;
  c.clip_part.segment(at, ctx_main.size()) = ctx_main;
  at += ctx_main.size();
  c.clip_part.segment(at, ctx_inter.size()) = ctx_inter;
  return c;
}

}  // namespace gdiff
