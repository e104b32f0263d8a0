#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evpano/events.hpp"
#include "evpano/geometry.hpp"
#include "evpano/map.hpp"
#include "evpano/tracker.hpp"

namespace evpano {

struct PipelineConfig {
  int bootstrap_packets = 10;
  double residual_gate = 0.85;
  PacketPolicy packet_policy;
  TrackerConfig tracker;
  double upsample = 1.0;
  int normalization_stride = 1;

  void validate() const;
};

struct TrajectorySample {
  double t = 0.0;
  Pose pose;
  double mean_residual = 0.0;
  double valid_fraction = 0.0;
  bool bootstrap = false;
  bool map_updated = false;
  bool low_confidence = false;
};

struct RunStats {
  std::size_t packets = 0;
  std::size_t events = 0;
  std::size_t bootstrap_packets = 0;
  std::size_t tracked_packets = 0;
  std::size_t gated_packets = 0;
  std::size_t map_updates = 0;
  std::size_t low_confidence_packets = 0;
  std::size_t rejected_events = 0;  // pixel outside the sensor
  std::size_t dropped_events = 0;   // projected outside the map
  std::size_t tracking_iterations = 0;
  double tracking_seconds = 0.0;
  double mapping_seconds = 0.0;

  double mapping_ms_per_packet() const;
  double tracking_ms_per_iteration() const;
  double pose_updates_per_second() const;
  double events_per_second() const;
};

/// Track-then-map loop over packets. The first `bootstrap_packets` packets
/// are mapped at the identity pose; afterwards every packet is tracked and,
/// unless its mean residual exceeds the gate, mapped at the tracked pose.
class Pipeline {
 public:
  Pipeline(const CameraIntrinsics& intr, const PipelineConfig& cfg);

  TrajectorySample process_packet(const EventPacket& packet);

  const PanoramicMap& map() const { return map_; }
  const RunStats& stats() const { return stats_; }
  const Pose& pose() const { return pose_; }
  const CameraIntrinsics& intrinsics() const { return intr_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  void map_packet(std::span<const Event> events, const Pose& now, const Pose& prev, bool bootstrap);

  CameraIntrinsics intr_;
  PipelineConfig cfg_;
  PanoramicMap map_;
  Pose pose_;
  RunStats stats_;
  std::vector<Event> scratch_;
};

struct RunResult {
  std::vector<TrajectorySample> trajectory;
  PanoramicMap map;
  RunStats stats;
};

RunResult run(std::span<const Event> stream, const CameraIntrinsics& intr, const PipelineConfig& cfg);

/// Streams `t x y p` lines through the pipeline without holding the whole
/// stream in memory.
RunResult run(std::istream& events_text, const CameraIntrinsics& intr, const PipelineConfig& cfg);

enum class TrajectoryFormat { AxisAngle, Quaternion };

/// One line per sample: `t wx wy wz`, or `t qw qx qy qz`.
void write_trajectory(std::ostream& out, std::span<const TrajectorySample> samples, TrajectoryFormat format);

/// Single-line summary plus per-component timings.
std::string format_stats(const RunStats& stats, const PipelineConfig& cfg);

}  // namespace evpano
