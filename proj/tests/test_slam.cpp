#include "doctest.h"

#include <cstring>
#include <sstream>

#include "evpano/trajectory.hpp"
#include "scenario.hpp"

using namespace evpano;

namespace {

const testing::Scenario& short_scenario() {
  static const testing::Scenario s = [] {
    ShakeMotion m;
    m.duration = 3.0;
    return testing::make_scenario(m);
  }();
  return s;
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.packet_policy = PacketPolicy::by_count(1500);
  return cfg;
}

bool same_grid(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<Event> patch(int x0, int y0, int n, double t) {
  std::vector<Event> ev;
  for (int i = 0; i < n; ++i) ev.push_back({t, x0 + i % 10, y0 + (i / 10) % 10, 1});
  return ev;
}

}  // namespace

TEST_CASE("bootstrap keeps the identity pose and fills the map") {
  const auto& s = short_scenario();
  auto cfg = default_config();
  Pipeline p(s.intr, cfg);
  const auto packets = packetize(s.synth.events, cfg.packet_policy);
  REQUIRE(packets.size() > static_cast<std::size_t>(cfg.bootstrap_packets));

  const auto first = p.process_packet(packets[0]);
  CHECK(first.bootstrap);
  CHECK(first.pose.theta == Vec3::Zero());
  double mass = 0.0;
  for (double o : p.map().occurrences()) mass += o;
  CHECK(mass > 0.0);

  for (int i = 1; i < cfg.bootstrap_packets; ++i) {
    const auto smp = p.process_packet(packets[i]);
    CHECK(smp.bootstrap);
    CHECK(smp.pose.theta == Vec3::Zero());
  }
  const auto tracked = p.process_packet(packets[cfg.bootstrap_packets]);
  CHECK_FALSE(tracked.bootstrap);
  CHECK(p.stats().bootstrap_packets == static_cast<std::size_t>(cfg.bootstrap_packets));
}

TEST_CASE("a gated packet leaves the map untouched") {
  const auto intr = testing::scenario_camera();
  PipelineConfig cfg = default_config();
  cfg.bootstrap_packets = 1;
  cfg.residual_gate = 0.9;
  Pipeline p(intr, cfg);

  EventPacket boot;
  boot.events = patch(10, 10, 200, 0.0);
  boot.t_end = 0.0;
  p.process_packet(boot);

  const std::vector<double> occ(p.map().occurrences().begin(), p.map().occurrences().end());
  const std::vector<double> norm(p.map().normalizations().begin(), p.map().normalizations().end());

  // 95% of the events land where the map is empty, 5% on the bootstrap patch
  EventPacket busy;
  busy.events = patch(80, 80, 190, 0.01);
  const auto known = patch(10, 10, 10, 0.01);
  busy.events.insert(busy.events.end(), known.begin(), known.end());
  busy.t_start = busy.t_end = 0.01;
  const auto smp = p.process_packet(busy);

  CHECK(smp.mean_residual > cfg.residual_gate);
  CHECK_FALSE(smp.map_updated);
  CHECK(p.stats().gated_packets == 1);
  CHECK(same_grid(occ, p.map().occurrences()));
  CHECK(same_grid(norm, p.map().normalizations()));
}

TEST_CASE("closed loop bookkeeping") {
  const auto& s = short_scenario();
  const auto cfg = default_config();
  const RunResult r = run(s.synth.events, s.intr, cfg);
  const auto packets = packetize(s.synth.events, cfg.packet_policy);

  CHECK(r.trajectory.size() == packets.size());
  CHECK(r.stats.packets == packets.size());
  CHECK(r.stats.events == s.synth.events.size());
  CHECK(r.stats.map_updates == r.stats.packets - r.stats.gated_packets - r.stats.low_confidence_packets);
  CHECK(r.stats.gated_packets == 0);
  CHECK(r.stats.low_confidence_packets == 0);

  for (std::size_t i = 1; i < r.trajectory.size(); ++i) CHECK(r.trajectory[i - 1].t <= r.trajectory[i].t);
  for (int i = 0; i < cfg.bootstrap_packets; ++i) CHECK(r.trajectory[i].pose.theta == Vec3::Zero());

  const auto report = evaluate_trajectory(testing::estimated_poses(r), s.path);
  CHECK(report.stats.mean < 1.0);
}

TEST_CASE("empty stream") {
  const RunResult r = run(std::span<const Event>{}, testing::scenario_camera(), default_config());
  CHECK(r.trajectory.empty());
  CHECK(r.stats.packets == 0);
  const std::vector<double> zero(r.map.occurrences().size(), 0.0);
  CHECK(same_grid(zero, r.map.occurrences()));
  CHECK(same_grid(zero, r.map.normalizations()));
}

TEST_CASE("runs are deterministic") {
  const auto& s = short_scenario();
  const std::span<const Event> head(s.synth.events.data(), s.synth.events.size() / 2);
  const RunResult a = run(head, s.intr, default_config());
  const RunResult b = run(head, s.intr, default_config());
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    CHECK(a.trajectory[i].t == b.trajectory[i].t);
    CHECK((a.trajectory[i].pose.theta - b.trajectory[i].pose.theta).norm() <= 1e-12);
  }
  CHECK(same_grid(a.map.occurrences(), b.map.occurrences()));
  CHECK(same_grid(a.map.normalizations(), b.map.normalizations()));
}

TEST_CASE("text streaming matches the in-memory run") {
  const auto& s = short_scenario();
  const std::span<const Event> head(s.synth.events.data(), s.synth.events.size() / 3);
  std::ostringstream text;
  write_events(text, head);
  std::istringstream in(text.str());
  const auto parsed = parse_event_stream(in).events;

  const RunResult a = run(parsed, s.intr, default_config());
  std::istringstream in2(text.str());
  const RunResult b = run(in2, s.intr, default_config());
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    CHECK(a.trajectory[i].t == b.trajectory[i].t);
    CHECK(a.trajectory[i].pose.theta == b.trajectory[i].pose.theta);
  }
  CHECK(same_grid(a.map.occurrences(), b.map.occurrences()));
}

TEST_CASE("events outside the sensor are rejected") {
  PipelineConfig cfg = default_config();
  Pipeline p(testing::scenario_camera(), cfg);
  EventPacket pk;
  pk.events = {{0.0, 500, 3, 1}, {0.0, -1, 3, 1}, {0.0, 3, 3, 1}};
  p.process_packet(pk);
  CHECK(p.stats().rejected_events == 2);
}

TEST_CASE("trajectory output formats") {
  std::vector<TrajectorySample> s(2);
  s[0].t = 0.5;
  s[1].t = 1.0;
  s[1].pose = Pose(0.0, 0.3, 0.0);
  std::ostringstream aa, q;
  write_trajectory(aa, s, TrajectoryFormat::AxisAngle);
  write_trajectory(q, s, TrajectoryFormat::Quaternion);

  std::istringstream ia(aa.str()), iq(q.str());
  const auto pa = parse_trajectory(ia);
  const auto pq = parse_trajectory(iq);
  REQUIRE(pa.size() == 2);
  REQUIRE(pq.size() == 2);
  CHECK(pa[1].t == doctest::Approx(1.0));
  CHECK((pa[1].pose.theta - Vec3(0, 0.3, 0)).norm() < 1e-9);
  CHECK((pq[1].pose.theta - Vec3(0, 0.3, 0)).norm() < 1e-9);
}

TEST_CASE("invalid pipeline settings") {
  PipelineConfig cfg;
  cfg.bootstrap_packets = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.residual_gate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.residual_gate = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.upsample = 0.5;
  CHECK_THROWS_AS(Pipeline(testing::scenario_camera(), cfg), ConfigError);
}
