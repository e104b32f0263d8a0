#include "evpano/slam.hpp"

#include <chrono>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace evpano {

void PipelineConfig::validate() const {
  if (bootstrap_packets < 1) throw ConfigError("bootstrap_packets must be >= 1");
  if (!(residual_gate > 0.0 && residual_gate <= 1.0)) throw ConfigError("residual_gate must be in (0, 1]");
  if (!(upsample >= 1.0)) throw ConfigError("upsample must be >= 1");
  if (normalization_stride < 1) throw ConfigError("normalization_stride must be >= 1");
  packet_policy.validate();
  tracker.validate();
}

double RunStats::mapping_ms_per_packet() const {
  return map_updates == 0 ? 0.0 : 1e3 * mapping_seconds / static_cast<double>(map_updates);
}

double RunStats::tracking_ms_per_iteration() const {
  return tracking_iterations == 0 ? 0.0 : 1e3 * tracking_seconds / static_cast<double>(tracking_iterations);
}

double RunStats::pose_updates_per_second() const {
  const double s = tracking_seconds + mapping_seconds;
  return s <= 0.0 ? 0.0 : static_cast<double>(packets) / s;
}

double RunStats::events_per_second() const {
  const double s = tracking_seconds + mapping_seconds;
  return s <= 0.0 ? 0.0 : static_cast<double>(events) / s;
}

Pipeline::Pipeline(const CameraIntrinsics& intr, const PipelineConfig& cfg)
    : intr_(intr), cfg_(cfg), map_(PanoramicMap::for_camera(intr, cfg.upsample)) {
  intr_.validate();
  cfg_.validate();
}

void Pipeline::map_packet(std::span<const Event> events, const Pose& now, const Pose& prev, bool bootstrap) {
  const PoseProjector proj(now, intr_, map_.geometry());
  for (const Event& e : events) {
    const auto v = proj(e.x, e.y);
    if (!v) {
      ++stats_.dropped_events;
      continue;
    }
    if (!map_.update_occurrence(*v)) {
      ++stats_.dropped_events;
      continue;
    }
    // A static pose sweeps no path, so bootstrap seeds N with unit mass
    // wherever occurrences land.
    if (bootstrap) map_.seed_normalization(*v, 1.0);
  }
  if (!bootstrap) map_.update_normalization(now, prev, intr_, cfg_.normalization_stride);
  ++stats_.map_updates;
}

TrajectorySample Pipeline::process_packet(const EventPacket& packet) {
  using clock = std::chrono::steady_clock;

  scratch_.clear();
  for (const Event& e : packet.events) {
    if (intr_.contains(e.x, e.y)) {
      scratch_.push_back(e);
    } else {
      ++stats_.rejected_events;
    }
  }
  ++stats_.packets;
  stats_.events += packet.events.size();

  TrajectorySample sample;
  sample.t = packet.t_end;

  if (stats_.packets <= static_cast<std::size_t>(cfg_.bootstrap_packets)) {
    const auto t0 = clock::now();
    pose_ = Pose();
    map_packet(scratch_, pose_, pose_, true);
    stats_.mapping_seconds += std::chrono::duration<double>(clock::now() - t0).count();
    ++stats_.bootstrap_packets;
    sample.pose = pose_;
    sample.bootstrap = true;
    sample.map_updated = true;
    sample.valid_fraction = 1.0;
    return sample;
  }

  const auto t0 = clock::now();
  const TrackResult tr = track_packet(scratch_, pose_, map_, intr_, cfg_.tracker);
  const auto t1 = clock::now();
  stats_.tracking_seconds += std::chrono::duration<double>(t1 - t0).count();
  stats_.tracking_iterations += static_cast<std::size_t>(tr.iterations_used);
  ++stats_.tracked_packets;

  sample.pose = tr.pose;
  sample.mean_residual = tr.mean_residual;
  sample.valid_fraction = tr.valid_fraction;
  sample.low_confidence = tr.low_confidence;

  if (tr.low_confidence) {
    ++stats_.low_confidence_packets;
  } else if (tr.mean_residual <= cfg_.residual_gate) {
    map_packet(scratch_, tr.pose, pose_, false);
    stats_.mapping_seconds += std::chrono::duration<double>(clock::now() - t1).count();
    sample.map_updated = true;
  } else {
    ++stats_.gated_packets;
  }
  pose_ = tr.pose;
  return sample;
}

RunResult run(std::span<const Event> stream, const CameraIntrinsics& intr, const PipelineConfig& cfg) {
  Pipeline pipeline(intr, cfg);
  Packetizer pk(cfg.packet_policy);
  RunResult out{{}, pipeline.map(), {}};
  for (const Event& e : stream) {
    if (auto p = pk.push(e)) out.trajectory.push_back(pipeline.process_packet(*p));
  }
  if (auto p = pk.flush()) out.trajectory.push_back(pipeline.process_packet(*p));
  out.map = pipeline.map();
  out.stats = pipeline.stats();
  return out;
}

RunResult run(std::istream& events_text, const CameraIntrinsics& intr, const PipelineConfig& cfg) {
  Pipeline pipeline(intr, cfg);
  Packetizer pk(cfg.packet_policy);
  RunResult out{{}, pipeline.map(), {}};
  std::string line;
  std::size_t n = 0;
  while (std::getline(events_text, line)) {
    auto e = parse_event_line(line, ++n);
    if (!e) continue;
    if (auto p = pk.push(*e)) out.trajectory.push_back(pipeline.process_packet(*p));
  }
  if (events_text.bad()) throw std::runtime_error("I/O error while reading events");
  if (auto p = pk.flush()) out.trajectory.push_back(pipeline.process_packet(*p));
  out.map = pipeline.map();
  out.stats = pipeline.stats();
  return out;
}

void write_trajectory(std::ostream& out, std::span<const TrajectorySample> samples, TrajectoryFormat format) {
  char buf[160];
  for (const auto& s : samples) {
    int len = 0;
    if (format == TrajectoryFormat::AxisAngle) {
      len = std::snprintf(buf, sizeof(buf), "%.9f %.12g %.12g %.12g\n", s.t, s.pose.theta.x(), s.pose.theta.y(),
                          s.pose.theta.z());
    } else {
      const Eigen::Quaterniond q(s.pose.rotation());
      len = std::snprintf(buf, sizeof(buf), "%.9f %.12g %.12g %.12g %.12g\n", s.t, q.w(), q.x(), q.y(), q.z());
    }
    out.write(buf, len);
  }
}

std::string format_stats(const RunStats& s, const PipelineConfig& cfg) {
  std::ostringstream os;
  os.precision(4);
  os << "packets=" << s.packets << " events=" << s.events << " bootstrap=" << s.bootstrap_packets
     << " tracked=" << s.tracked_packets << " gated=" << s.gated_packets << " map_updates=" << s.map_updates
     << " low_confidence=" << s.low_confidence_packets << " dropped=" << s.dropped_events
     << " rejected=" << s.rejected_events << " residual_gate=" << cfg.residual_gate
     << " pose_updates_per_s=" << s.pose_updates_per_second() << " events_per_s=" << s.events_per_second()
     << "\n";
  os << "mapping_ms_per_packet=" << s.mapping_ms_per_packet()
     << " tracking_ms_per_iter=" << s.tracking_ms_per_iteration() << " iters=" << cfg.tracker.max_iters
     << " packet_size=" << cfg.packet_policy.count << "\n";
  return os.str();
}

}  // namespace evpano
