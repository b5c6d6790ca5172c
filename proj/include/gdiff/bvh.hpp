#pragma once

// BVH (Biovision Hierarchy) reading and writing. Parsing is whitespace
// insensitive; the writer emits canonical 4-space indentation and fixed-point
// numbers, so parse -> serialize -> parse is stable to well under 1e-5 per
// channel value. Rotations stay in degrees exactly as stored.

#include <gdiff/common.hpp>

#include <array>
#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gdiff {

enum class Channel { Xposition, Yposition, Zposition, Xrotation, Yrotation, Zrotation };

inline const char* channel_name(Channel c) {
  switch (c) {
    case Channel::Xposition: return "Xposition";
    case Channel::Yposition: return "Yposition";
    case Channel::Zposition: return "Zposition";
    case Channel::Xrotation: return "Xrotation";
    case Channel::Yrotation: return "Yrotation";
    case Channel::Zrotation: return "Zrotation";
  }
  return "?";
}

inline std::optional<Channel> channel_from_name(std::string_view s) {
  static constexpr Channel kAll[] = {Channel::Xposition, Channel::Yposition, Channel::Zposition,
                                     Channel::Xrotation, Channel::Yrotation, Channel::Zrotation};
  for (Channel c : kAll)
    if (s == channel_name(c)) return c;
  return std::nullopt;
}

// One node of the hierarchy. End sites are kept (they must be written back
// out) but carry no channels; their name is derived from the parent joint.
struct JointDef {
  std::string name;
  std::optional<int> parent_index;  // empty for the root
  std::array<double, 3> offset{0.0, 0.0, 0.0};
  std::vector<Channel> channels;
  bool is_end_site = false;
};

// Joint list in depth-first file order.
struct SkeletonDef {
  std::vector<JointDef> joints;
  int total_channels = 0;
};

// Frame-major channel values. Positions in file units, rotations in degrees.
struct MotionClip {
  Mat frames;              // [num_frames x total_channels]
  double frame_time = 0.0; // seconds per frame
};

inline double frame_rate(const MotionClip& clip) {
  if (clip.frame_time <= 0.0) throw std::invalid_argument("frame_rate: frame_time must be > 0");
  return 1.0 / clip.frame_time;
}

namespace detail {

struct Token {
  std::string_view text;
  int line;
};

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f') {
      ++i;
    } else {
      std::size_t start = i;
      while (i < text.size() && text[i] != ' ' && text[i] != '\t' && text[i] != '\r' &&
             text[i] != '\n' && text[i] != '\v' && text[i] != '\f')
        ++i;
      out.push_back({text.substr(start, i - start), line});
    }
  }
  return out;
}

class TokenCursor {
 public:
  explicit TokenCursor(std::vector<Token> toks) : toks_(std::move(toks)) {}

  bool done() const { return pos_ >= toks_.size(); }
  const Token& peek() const {
    if (done()) throw ParseError("unexpected end of document", last_line());
    return toks_[pos_];
  }
  Token next() {
    Token t = peek();
    ++pos_;
    return t;
  }
  void expect(std::string_view word) {
    Token t = next();
    if (t.text != word)
      throw ParseError("expected '" + std::string(word) + "', got '" + std::string(t.text) + "'",
                       t.line);
  }
  double number(const char* what) {
    Token t = next();
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size())
      throw ParseError(std::string("expected ") + what + ", got '" + std::string(t.text) + "'",
                       t.line);
    return v;
  }
  long integer(const char* what) {
    Token t = next();
    long v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size())
      throw ParseError(std::string("expected ") + what + ", got '" + std::string(t.text) + "'",
                       t.line);
    return v;
  }
  int last_line() const { return toks_.empty() ? 0 : toks_.back().line; }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// Parses the body between the braces of a joint, recursing into children.
inline void parse_joint_body(TokenCursor& cur, SkeletonDef& skel, int joint_index) {
  Token open = cur.next();
  if (open.text != "{") throw ParseError("expected '{' after joint name", open.line);

  bool saw_offset = false;
  bool saw_channels = false;
  while (true) {
    Token t = cur.next();
    if (t.text == "}") break;
    if (t.text == "OFFSET") {
      skel.joints[joint_index].offset[0] = cur.number("offset value");
      skel.joints[joint_index].offset[1] = cur.number("offset value");
      skel.joints[joint_index].offset[2] = cur.number("offset value");
      saw_offset = true;
    } else if (t.text == "CHANNELS") {
      if (skel.joints[joint_index].is_end_site)
        throw ParseError("End Site may not declare CHANNELS", t.line);
      long n = cur.integer("channel count");
      if (n < 0 || n > 6) throw ParseError("channel count out of range", t.line);
      auto& chans = skel.joints[joint_index].channels;
      for (long k = 0; k < n; ++k) {
        Token ct = cur.next();
        auto ch = channel_from_name(ct.text);
        if (!ch) throw ParseError("unknown channel kind '" + std::string(ct.text) + "'", ct.line);
        for (Channel prev : chans)
          if (prev == *ch)
            throw ParseError("duplicate channel '" + std::string(ct.text) + "' on joint '" +
                                 skel.joints[joint_index].name + "'",
                             ct.line);
        chans.push_back(*ch);
      }
      saw_channels = true;
    } else if (t.text == "JOINT" || t.text == "End") {
      bool end_site = (t.text == "End");
      if (end_site) cur.expect("Site");
      JointDef child;
      child.parent_index = joint_index;
      child.is_end_site = end_site;
      child.name = end_site ? skel.joints[joint_index].name + "_End"
                            : std::string(cur.next().text);
      int child_index = static_cast<int>(skel.joints.size());
      skel.joints.push_back(std::move(child));
      parse_joint_body(cur, skel, child_index);
    } else {
      throw ParseError("unexpected token '" + std::string(t.text) + "' in joint body", t.line);
    }
  }

  const JointDef& j = skel.joints[joint_index];
  if (!saw_offset) throw ParseError("joint '" + j.name + "' missing OFFSET");
  if (!j.is_end_site && !saw_channels)
    throw ParseError("joint '" + j.name + "' missing CHANNELS");
  if (!std::isfinite(j.offset[0]) || !std::isfinite(j.offset[1]) || !std::isfinite(j.offset[2]))
    throw ParseError("joint '" + j.name + "' has non-finite offset");
}

inline SkeletonDef parse_hierarchy_tokens(TokenCursor& cur) {
  cur.expect("HIERARCHY");
  Token root_kw = cur.next();
  if (root_kw.text != "ROOT") throw ParseError("expected ROOT", root_kw.line);

  SkeletonDef skel;
  JointDef root;
  root.name = std::string(cur.next().text);
  skel.joints.push_back(std::move(root));
  parse_joint_body(cur, skel, 0);

  skel.total_channels = 0;
  for (const JointDef& j : skel.joints) skel.total_channels += static_cast<int>(j.channels.size());
  if (skel.total_channels == 0) throw ParseError("hierarchy declares no channels");
  return skel;
}

inline void append_number(std::string& out, double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  out += buf;
}

inline void serialize_joint(const SkeletonDef& skel, int index, int indent, std::string& out) {
  const JointDef& j = skel.joints[index];
  std::string pad(4 * static_cast<std::size_t>(indent), ' ');
  if (j.parent_index.has_value()) {
    out += pad;
    out += j.is_end_site ? "End Site" : "JOINT " + j.name;
    out += "\n";
  } else {
    out += "ROOT " + j.name + "\n";
  }
  out += pad + "{\n";
  std::string inner(4 * static_cast<std::size_t>(indent + 1), ' ');
  out += inner + "OFFSET";
  for (double v : j.offset) {
    out += ' ';
    append_number(out, v, "%.6f");
  }
  out += "\n";
  if (!j.is_end_site) {
    out += inner + "CHANNELS " + std::to_string(j.channels.size());
    for (Channel c : j.channels) {
      out += ' ';
      out += channel_name(c);
    }
    out += "\n";
  }
  for (int k = index + 1; k < static_cast<int>(skel.joints.size()); ++k)
    if (skel.joints[k].parent_index == index) serialize_joint(skel, k, indent + 1, out);
  out += pad + "}\n";
}

}  // namespace detail

// Structural checks shared by the writer and by code that builds skeletons
// programmatically. Throws on the first violated invariant. The joint list
// must be in depth-first order (children-in-list-order), since channel
// columns are tied to list position and the writer emits depth first.
inline void check_skeleton(const SkeletonDef& skel) {
  if (skel.joints.empty()) throw std::invalid_argument("skeleton has no joints");
  int channel_sum = 0;
  for (std::size_t i = 0; i < skel.joints.size(); ++i) {
    const JointDef& j = skel.joints[i];
    if (i == 0) {
      if (j.parent_index.has_value()) throw std::invalid_argument("first joint must be the root");
    } else if (!j.parent_index.has_value()) {
      throw std::invalid_argument("multiple root joints");
    } else if (*j.parent_index < 0 || *j.parent_index >= static_cast<int>(i)) {
      throw std::invalid_argument("joint '" + j.name + "' parent must appear earlier in the list");
    }
    if (j.is_end_site && !j.channels.empty())
      throw std::invalid_argument("end site '" + j.name + "' must have zero channels");
    if (!std::isfinite(j.offset[0]) || !std::isfinite(j.offset[1]) || !std::isfinite(j.offset[2]))
      throw std::invalid_argument("joint '" + j.name + "' offset not finite");
    channel_sum += static_cast<int>(j.channels.size());
  }
  if (channel_sum != skel.total_channels)
    throw std::invalid_argument("total_channels does not match per-joint channel counts");

  std::vector<int> order;
  order.reserve(skel.joints.size());
  auto visit = [&skel, &order](auto&& self, int idx) -> void {
    order.push_back(idx);
    for (int k = idx + 1; k < static_cast<int>(skel.joints.size()); ++k)
      if (skel.joints[static_cast<std::size_t>(k)].parent_index == idx) self(self, k);
  };
  visit(visit, 0);
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] != static_cast<int>(i))
      throw std::invalid_argument("joint list is not in depth-first order");
}

inline SkeletonDef parse_hierarchy(std::string_view text) {
  detail::TokenCursor cur(detail::tokenize(text));
  SkeletonDef skel = detail::parse_hierarchy_tokens(cur);
  if (!cur.done()) throw ParseError("unexpected content after hierarchy", cur.peek().line);
  return skel;
}

inline std::string serialize_hierarchy(const SkeletonDef& skel) {
  check_skeleton(skel);
  std::string out = "HIERARCHY\n";
  detail::serialize_joint(skel, 0, 0, out);
  return out;
}

// Parse a complete BVH document (HIERARCHY section followed by MOTION).
inline std::pair<SkeletonDef, MotionClip> parse_bvh(std::string_view text) {
  detail::TokenCursor cur(detail::tokenize(text));
  SkeletonDef skel = detail::parse_hierarchy_tokens(cur);

  cur.expect("MOTION");
  {
    detail::Token t = cur.next();
    if (t.text != "Frames:") throw ParseError("expected 'Frames:'", t.line);
  }
  long declared_frames = cur.integer("frame count");
  if (declared_frames < 1) throw ParseError("frame count must be >= 1");
  cur.expect("Frame");
  {
    detail::Token t = cur.next();
    if (t.text != "Time:") throw ParseError("expected 'Frame Time:'", t.line);
  }
  double frame_time = cur.number("frame time");
  if (frame_time <= 0.0) throw ParseError("Frame Time must be > 0");

  MotionClip clip;
  clip.frame_time = frame_time;
  clip.frames.resize(declared_frames, skel.total_channels);

  // Values are free-form whitespace separated, but each frame is expected to
  // occupy one line; a row whose line ends early is reported as short.
  for (long r = 0; r < declared_frames; ++r) {
    int row_line = -1;
    for (int c = 0; c < skel.total_channels; ++c) {
      if (cur.done())
        throw ParseError("frame " + std::to_string(r + 1) + " has " + std::to_string(c) +
                             " values, expected " + std::to_string(skel.total_channels),
                         cur.last_line());
      const detail::Token& t = cur.peek();
      if (row_line < 0) row_line = t.line;
      if (c > 0 && t.line != row_line)
        throw ParseError("frame " + std::to_string(r + 1) + " has " + std::to_string(c) +
                             " values, expected " + std::to_string(skel.total_channels),
                         row_line);
      clip.frames(r, c) = cur.number("frame value");
    }
    if (!cur.done() && cur.peek().line == row_line)
      throw ParseError("frame " + std::to_string(r + 1) + " has extra values", row_line);
  }
  if (!cur.done())
    throw ParseError("motion data has more rows than the declared Frames count",
                     cur.peek().line);
  if (!clip.frames.allFinite()) throw ParseError("motion data contains non-finite values");
  return {std::move(skel), std::move(clip)};
}

inline std::string serialize_bvh(const SkeletonDef& skel, const MotionClip& clip) {
  check_skeleton(skel);
  if (clip.frames.cols() != skel.total_channels)
    throw DimensionError("serialize_bvh: clip has " + std::to_string(clip.frames.cols()) +
                         " columns, skeleton declares " + std::to_string(skel.total_channels));
  if (clip.frames.rows() < 1) throw std::invalid_argument("serialize_bvh: clip has no frames");
  if (clip.frame_time <= 0.0) throw std::invalid_argument("serialize_bvh: frame_time must be > 0");

  std::string out = serialize_hierarchy(skel);
  out += "MOTION\n";
  out += "Frames: " + std::to_string(clip.frames.rows()) + "\n";
  out += "Frame Time: ";
  detail::append_number(out, clip.frame_time, "%.9f");
  out += "\n";
  out.reserve(out.size() + static_cast<std::size_t>(clip.frames.size()) * 10);
  for (Eigen::Index r = 0; r < clip.frames.rows(); ++r) {
    for (Eigen::Index c = 0; c < clip.frames.cols(); ++c) {
      if (c) out += ' ';
      detail::append_number(out, clip.frames(r, c), "%.6f");
    }
    out += "\n";
  }
  return out;
}

}  // namespace gdiff
