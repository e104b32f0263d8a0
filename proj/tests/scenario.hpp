#pragma once

// Shared synthetic closed-loop scenario used by the slam tests and the
// acceptance suite.

#include <cstdint>
#include <vector>

#include "evpano/eval.hpp"
#include "evpano/slam.hpp"
#include "evpano/synthgen.hpp"

namespace evpano::testing {

inline CameraIntrinsics scenario_camera() {
  CameraIntrinsics intr;
  intr.fx = 120.0;
  intr.fy = 120.0;
  intr.cx = 63.5;
  intr.cy = 63.5;
  intr.width = 128;
  intr.height = 128;
  return intr;
}

inline SynthPanorama scenario_panorama(std::uint64_t seed = 11, int blobs = 400) {
  BlobTexture tex;
  tex.seed = seed;
  tex.count = blobs;
  return make_blob_panorama(MapGeometry::for_camera(scenario_camera(), 1.0), tex);
}

struct Scenario {
  CameraIntrinsics intr;
  std::vector<TimedPose> path;
  SynthOutput synth;
};

inline Scenario make_scenario(const ShakeMotion& motion, double noise_rate = 0.01, std::uint64_t seed = 3,
                              int blobs = 400) {
  Scenario s;
  s.intr = scenario_camera();
  s.path = shake_trajectory(motion);
  SynthConfig cfg;
  cfg.noise_rate = noise_rate;
  s.synth = generate_events(scenario_panorama(11, blobs), s.path, s.intr, cfg, seed);
  return s;
}

inline std::vector<TimedPose> estimated_poses(const RunResult& run) {
  std::vector<TimedPose> out;
  out.reserve(run.trajectory.size());
  for (const auto& s : run.trajectory) out.push_back({s.t, s.pose});
  return out;
}

}  // namespace evpano::testing
