// evpano command-line front end: track, simulate, evaluate, export.

#include <openssl/evp.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "evpano/eval.hpp"
#include "evpano/image.hpp"
#include "evpano/slam.hpp"
#include "evpano/synthgen.hpp"
#include "evpano/trajectory.hpp"

#ifndef EVPANO_VERSION
#define EVPANO_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace evpano;

namespace {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

// Outputs are written to temporary siblings and renamed into place only
// once every one of them is complete.
class StagedOutputs {
 public:
  StagedOutputs() = default;
  StagedOutputs(const StagedOutputs&) = delete;
  StagedOutputs& operator=(const StagedOutputs&) = delete;
  ~StagedOutputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& [final_path, tmp] : files_) fs::remove(tmp, ec);
  }

  std::string stage(const std::string& final_path) {
    const std::string tmp = final_path + ".tmp" + std::to_string(::getpid());
    files_.emplace_back(final_path, tmp);
    return tmp;
  }

  json digests() const {
    json d = json::object();
    for (const auto& [final_path, tmp] : files_) d[final_path] = sha256_file(tmp);
    return d;
  }

  void commit() {
    for (const auto& [final_path, tmp] : files_) fs::rename(tmp, final_path);
    committed_ = true;
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
  bool committed_ = false;
};

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void close_out(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path);
}

json input_digest(const std::string& path) { return {{"path", path}, {"sha256", sha256_file(path)}}; }

void write_manifest(StagedOutputs& staged, const std::string& path, json manifest) {
  manifest["outputs"] = staged.digests();
  const std::string tmp = staged.stage(path);
  auto out = open_out(tmp);
  out << manifest.dump(2) << "\n";
  close_out(out, tmp);
}

json manifest_head(const std::string& command) {
  return {{"tool", "evpano"}, {"version", EVPANO_VERSION}, {"command", command}};
}

std::string or_default(const std::string& explicit_path, const std::string& primary) {
  return explicit_path.empty() ? primary + ".manifest.json" : explicit_path;
}

// --- track ---------------------------------------------------------------

struct TrackArgs {
  std::string events, calib;
  std::string traj_out = "trajectory.txt", map_out, stats_out, checkpoint_out, manifest_out;
  std::string traj_format = "axis-angle";
  std::size_t packet_size = 1500;
  double packet_dt = 0.0;
  int iters = 10;
  double alpha = 1.0, beta = 0.4, upsample = 1.0, residual_gate = 0.85;
  int bootstrap_packets = 10;
  std::uint64_t seed = 0;
};

int cmd_track(const TrackArgs& a) {
  const CameraIntrinsics intr = load_calibration(a.calib);
  PipelineConfig cfg;
  cfg.packet_policy = a.packet_dt > 0.0 ? PacketPolicy::by_time(a.packet_dt) : PacketPolicy::by_count(a.packet_size);
  cfg.tracker.max_iters = a.iters;
  cfg.tracker.alpha = a.alpha;
  cfg.tracker.beta = a.beta;
  cfg.upsample = a.upsample;
  cfg.residual_gate = a.residual_gate;
  cfg.bootstrap_packets = a.bootstrap_packets;
  cfg.validate();
  const TrajectoryFormat format = a.traj_format == "quaternion" ? TrajectoryFormat::Quaternion
                                                                 : TrajectoryFormat::AxisAngle;

  std::ifstream events(a.events);
  if (!events) throw std::runtime_error("cannot open events file: " + a.events);
  const RunResult r = run(events, intr, cfg);

  StagedOutputs staged;
  {
    const std::string tmp = staged.stage(a.traj_out);
    auto out = open_out(tmp);
    write_trajectory(out, r.trajectory, format);
    close_out(out, tmp);
  }
  if (!a.map_out.empty()) write_pgm(staged.stage(a.map_out), r.map.export_image());
  if (!a.checkpoint_out.empty()) {
    const std::string tmp = staged.stage(a.checkpoint_out);
    auto out = open_out(tmp, true);
    r.map.save_checkpoint(out);
    close_out(out, tmp);
  }
  const std::string stats = format_stats(r.stats, cfg);
  if (!a.stats_out.empty()) {
    const std::string tmp = staged.stage(a.stats_out);
    auto out = open_out(tmp);
    out << stats;
    close_out(out, tmp);
  }

  json m = manifest_head("track");
  m["config"] = {{"packet_size", a.packet_size},
                 {"packet_dt", a.packet_dt},
                 {"iters", a.iters},
                 {"alpha", a.alpha},
                 {"beta", a.beta},
                 {"upsample", a.upsample},
                 {"residual_gate", a.residual_gate},
                 {"bootstrap_packets", a.bootstrap_packets},
                 {"traj_format", a.traj_format},
                 {"seed", a.seed}};
  m["inputs"] = {{"events", input_digest(a.events)}, {"calib", input_digest(a.calib)}};
  write_manifest(staged, or_default(a.manifest_out, a.traj_out), m);
  staged.commit();
  std::cout << stats;
  return 0;
}

// --- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string calib, panorama, trajectory;
  std::string events_out = "events.txt", gt_out = "groundtruth.txt", panorama_out, manifest_out;
  double duration = 10.0;
  int blob_count = 400;
  double noise_rate = 0.0, contrast_threshold = 0.15, segment_length = 1.0;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  const CameraIntrinsics intr = load_calibration(a.calib);
  SynthConfig cfg;
  cfg.noise_rate = a.noise_rate;
  cfg.contrast_threshold = a.contrast_threshold;
  cfg.segment_length = a.segment_length;
  cfg.validate();

  std::vector<TimedPose> path;
  if (!a.trajectory.empty()) {
    path = load_trajectory(a.trajectory);
  } else {
    ShakeMotion motion;
    motion.duration = a.duration;
    path = shake_trajectory(motion);
  }

  const SynthPanorama pano = [&] {
    if (!a.panorama.empty()) return SynthPanorama::from_image(read_pgm(a.panorama));
    BlobTexture tex;
    tex.count = a.blob_count;
    tex.seed = a.seed;
    return make_blob_panorama(MapGeometry::for_camera(intr, 1.0), tex);
  }();
  const SynthOutput out = generate_events(pano, path, intr, cfg, a.seed);

  StagedOutputs staged;
  {
    const std::string tmp = staged.stage(a.events_out);
    auto f = open_out(tmp);
    write_events(f, out.events);
    close_out(f, tmp);
  }
  {
    const std::string tmp = staged.stage(a.gt_out);
    auto f = open_out(tmp);
    write_ground_truth(f, out.ground_truth);
    close_out(f, tmp);
  }
  if (!a.panorama_out.empty()) write_pgm(staged.stage(a.panorama_out), pano.to_image());

  json m = manifest_head("simulate");
  m["config"] = {{"noise_rate", a.noise_rate},
                 {"contrast_threshold", a.contrast_threshold},
                 {"segment_length", a.segment_length},
                 {"seed", a.seed}};
  m["inputs"] = {{"calib", input_digest(a.calib)}};
  if (!a.panorama.empty()) {
    m["inputs"]["panorama"] = input_digest(a.panorama);
  } else {
    m["config"]["blob_count"] = a.blob_count;
  }
  if (!a.trajectory.empty()) {
    m["inputs"]["trajectory"] = input_digest(a.trajectory);
  } else {
    m["config"]["duration"] = a.duration;
  }
  write_manifest(staged, or_default(a.manifest_out, a.events_out), m);
  staged.commit();
  std::cout << "events=" << out.events.size() << " ground_truth_samples=" << out.ground_truth.size() << "\n";
  return 0;
}

// --- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  std::string estimate, groundtruth, quat_order = "xyzw";
  std::string report_out, histogram_out, manifest_out;
  int ransac_iters = 1000;
  double inlier_threshold = 5.0, max_offset = 0.05;
  bool fixed_offset = false;
  std::uint64_t seed = 7;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const QuatOrder order = parse_quat_order(a.quat_order);
  const auto est = load_trajectory(a.estimate, order);
  const auto gt = load_trajectory(a.groundtruth, order);
  TemporalAlignOptions align;
  align.fit_offset = !a.fixed_offset;
  align.max_offset = a.max_offset;
  RansacOptions ransac;
  ransac.iterations = a.ransac_iters;
  ransac.inlier_threshold_deg = a.inlier_threshold;
  ransac.seed = a.seed;
  const EvaluationReport rep = evaluate_trajectory(est, gt, align, ransac);

  std::ostringstream text;
  write_report(text, rep);
  StagedOutputs staged;
  if (!a.report_out.empty()) {
    const std::string tmp = staged.stage(a.report_out);
    auto f = open_out(tmp);
    f << text.str();
    close_out(f, tmp);
  }
  if (!a.histogram_out.empty()) {
    const std::string tmp = staged.stage(a.histogram_out);
    auto f = open_out(tmp);
    write_histogram_csv(f, rep.stats);
    close_out(f, tmp);
  }
  if (!a.report_out.empty() || !a.manifest_out.empty()) {
    json m = manifest_head("evaluate");
    m["config"] = {{"quat_order", a.quat_order},
                   {"ransac_iters", a.ransac_iters},
                   {"inlier_threshold_deg", a.inlier_threshold},
                   {"fit_offset", !a.fixed_offset},
                   {"max_offset", a.max_offset},
                   {"seed", a.seed}};
    m["inputs"] = {{"estimate", input_digest(a.estimate)}, {"groundtruth", input_digest(a.groundtruth)}};
    write_manifest(staged, or_default(a.manifest_out, a.report_out), m);
  }
  staged.commit();
  std::cout << text.str();
  return 0;
}

// --- export --------------------------------------------------------------

struct ExportArgs {
  std::string checkpoint, map_out, manifest_out;
};

int cmd_export(const ExportArgs& a) {
  std::ifstream in(a.checkpoint, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + a.checkpoint);
  const PanoramicMap map = PanoramicMap::load_checkpoint(in);
  StagedOutputs staged;
  write_pgm(staged.stage(a.map_out), map.export_image());
  json m = manifest_head("export");
  m["inputs"] = {{"checkpoint", input_digest(a.checkpoint)}};
  write_manifest(staged, or_default(a.manifest_out, a.map_out), m);
  staged.commit();
  std::cout << "map " << map.width() << "x" << map.height() << " upsample " << map.upsample() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera panoramic tracking and mapping"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EVPANO_VERSION);

  TrackArgs track;
  auto* t = app.add_subcommand("track", "track an event stream and build the panoramic map");
  t->add_option("--events", track.events, "event file, one `t x y p` per line")->required()->check(CLI::ExistingFile);
  t->add_option("--calib", track.calib, "calibration: fx fy cx cy [width height]")->required();
  t->add_option("--packet-size", track.packet_size, "events per packet")->capture_default_str();
  t->add_option("--packet-dt", track.packet_dt, "packet duration in seconds (overrides --packet-size)");
  t->add_option("--iters", track.iters, "Gauss-Newton iterations per packet")->capture_default_str();
  t->add_option("--alpha", track.alpha, "damping towards the previous pose")->capture_default_str();
  t->add_option("--beta", track.beta, "Nesterov momentum")->capture_default_str();
  t->add_option("--upsample", track.upsample, "map resolution relative to the camera")->capture_default_str();
  t->add_option("--residual-gate", track.residual_gate, "mean residual above which the map is not updated")
      ->capture_default_str();
  t->add_option("--bootstrap-packets", track.bootstrap_packets, "packets mapped at the identity pose")
      ->capture_default_str();
  t->add_option("--seed", track.seed, "recorded in the manifest")->capture_default_str();
  t->add_option("--traj-out", track.traj_out, "trajectory output")->capture_default_str();
  t->add_option("--traj-format", track.traj_format, "axis-angle or quaternion")
      ->check(CLI::IsMember({"axis-angle", "quaternion"}))
      ->capture_default_str();
  t->add_option("--map-out", track.map_out, "map image (PGM)");
  t->add_option("--checkpoint-out", track.checkpoint_out, "raw map checkpoint");
  t->add_option("--stats-out", track.stats_out, "run statistics");
  t->add_option("--manifest-out", track.manifest_out, "run manifest (default: <traj-out>.manifest.json)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "generate a synthetic event stream");
  s->add_option("--calib", sim.calib, "calibration: fx fy cx cy [width height]")->required();
  s->add_option("--panorama", sim.panorama, "panorama image (PGM); default: random blob texture")
      ->check(CLI::ExistingFile);
  s->add_option("--trajectory", sim.trajectory, "orientation file; default: yaw/pitch shake")
      ->check(CLI::ExistingFile);
  s->add_option("--duration", sim.duration, "length of the default shake in seconds")->capture_default_str();
  s->add_option("--blob-count", sim.blob_count, "blobs in the default texture")->capture_default_str();
  s->add_option("--noise-rate", sim.noise_rate, "noise events per pixel per second")->capture_default_str();
  s->add_option("--contrast-threshold", sim.contrast_threshold, "log-intensity threshold C")->capture_default_str();
  s->add_option("--segment-length", sim.segment_length, "path segment length in map pixels")->capture_default_str();
  s->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  s->add_option("--events-out", sim.events_out, "event output")->capture_default_str();
  s->add_option("--gt-out", sim.gt_out, "ground-truth output")->capture_default_str();
  s->add_option("--panorama-out", sim.panorama_out, "write the panorama used (PGM)");
  s->add_option("--manifest-out", sim.manifest_out, "run manifest (default: <events-out>.manifest.json)");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "compare an estimated trajectory with ground truth");
  e->add_option("--estimate", ev.estimate, "estimated trajectory")->required()->check(CLI::ExistingFile);
  e->add_option("--groundtruth", ev.groundtruth, "ground-truth trajectory")->required()->check(CLI::ExistingFile);
  e->add_option("--quat-order", ev.quat_order, "quaternion order of 8-column files: xyzw or wxyz")
      ->check(CLI::IsMember({"xyzw", "wxyz"}))
      ->capture_default_str();
  e->add_option("--ransac-iters", ev.ransac_iters, "RANSAC iterations")->capture_default_str();
  e->add_option("--inlier-threshold", ev.inlier_threshold, "RANSAC inlier threshold in degrees")
      ->capture_default_str();
  e->add_option("--max-offset", ev.max_offset, "time offset search range in seconds")->capture_default_str();
  e->add_flag("--fixed-offset", ev.fixed_offset, "do not search for a time offset");
  e->add_option("--seed", ev.seed, "RANSAC seed")->capture_default_str();
  e->add_option("--report-out", ev.report_out, "report output");
  e->add_option("--histogram-out", ev.histogram_out, "error histogram (CSV)");
  e->add_option("--manifest-out", ev.manifest_out, "run manifest (default: <report-out>.manifest.json)");

  ExportArgs ex;
  auto* x = app.add_subcommand("export", "render a map checkpoint as an image");
  x->add_option("--checkpoint", ex.checkpoint, "map checkpoint")->required();
  x->add_option("--map-out", ex.map_out, "map image (PGM)")->required();
  x->add_option("--manifest-out", ex.manifest_out, "run manifest (default: <map-out>.manifest.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (t->parsed()) return cmd_track(track);
    if (s->parsed()) return cmd_simulate(sim);
    if (e->parsed()) return cmd_evaluate(ev);
    if (x->parsed()) return cmd_export(ex);
  } catch (const std::exception& err) {
    std::cerr << "evpano: error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
