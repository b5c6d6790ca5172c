#pragma once

// Shared test utilities: random skeleton/clip generators for the BVH
// round-trip property and a handful of small comparison helpers.

#include <gdiff/bvh.hpp>
#include <gdiff/common.hpp>

#include <string>
#include <vector>

namespace testutil {

// Builds the joint list depth first, matching the order a BVH file stores it.
inline gdiff::SkeletonDef random_skeleton(gdiff::Rng& rng) {
  using namespace gdiff;
  static constexpr Channel kAll[] = {Channel::Xposition, Channel::Yposition, Channel::Zposition,
                                     Channel::Xrotation, Channel::Yrotation, Channel::Zrotation};
  SkeletonDef skel;
  int budget = static_cast<int>(rng.uniform_int(1, 6));

  auto gen_subtree = [&](auto&& self, std::optional<int> parent, int depth) -> void {
    JointDef joint;
    joint.name = "J" + std::to_string(skel.joints.size());
    joint.parent_index = parent;
    joint.offset = {rng.uniform01() * 100.0 - 50.0, rng.uniform01() * 100.0 - 50.0,
                    rng.uniform01() * 100.0 - 50.0};
    if (!parent.has_value()) {
      joint.channels.assign(kAll, kAll + 6);
    } else {
      for (Channel c : kAll)
        if (rng.uniform01() < 0.5) joint.channels.push_back(c);
      if (joint.channels.empty()) joint.channels.push_back(Channel::Xrotation);
    }
    int index = static_cast<int>(skel.joints.size());
    skel.joints.push_back(std::move(joint));
    --budget;

    if (rng.uniform01() < 0.4) {
      JointDef end;
      end.parent_index = index;
      end.name = skel.joints[static_cast<std::size_t>(index)].name + "_End";
      end.is_end_site = true;
      end.offset = {rng.uniform01() * 10.0, rng.uniform01() * 10.0, rng.uniform01() * 10.0};
      skel.joints.push_back(std::move(end));
    }
    while (budget > 0 && depth < 4 && rng.uniform01() < 0.5) self(self, index, depth + 1);
  };
  gen_subtree(gen_subtree, std::nullopt, 0);

  skel.total_channels = 0;
  for (const JointDef& j : skel.joints) skel.total_channels += static_cast<int>(j.channels.size());
  return skel;
}

inline gdiff::MotionClip random_clip(gdiff::Rng& rng, const gdiff::SkeletonDef& skel) {
  gdiff::MotionClip clip;
  const Eigen::Index frames = rng.uniform_int(1, 5);
  clip.frames.resize(frames, skel.total_channels);
  for (Eigen::Index r = 0; r < frames; ++r)
    for (Eigen::Index c = 0; c < skel.total_channels; ++c)
      clip.frames(r, c) = rng.uniform01() * 720.0 - 360.0;
  clip.frame_time = 0.01 + rng.uniform01() * 0.1;
  return clip;
}

inline bool skeletons_equal(const gdiff::SkeletonDef& a, const gdiff::SkeletonDef& b,
                            double offset_tol) {
  if (a.joints.size() != b.joints.size() || a.total_channels != b.total_channels) return false;
  for (std::size_t i = 0; i < a.joints.size(); ++i) {
    const auto& ja = a.joints[i];
    const auto& jb = b.joints[i];
    if (ja.name != jb.name || ja.parent_index != jb.parent_index ||
        ja.is_end_site != jb.is_end_site || ja.channels != jb.channels)
      return false;
    for (int k = 0; k < 3; ++k)
      if (std::abs(ja.offset[static_cast<std::size_t>(k)] -
                   jb.offset[static_cast<std::size_t>(k)]) > offset_tol)
        return false;
  }
  return true;
}

inline double max_abs_diff(const gdiff::Mat& a, const gdiff::Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testutil
