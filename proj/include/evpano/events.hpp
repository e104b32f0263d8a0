#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evpano {

/// One sensor firing. Polarity is kept for round-tripping but tracking only
/// uses the pixel position.
struct Event {
  double t = 0.0;
  int x = 0;
  int y = 0;
  int p = 1;  // -1 or +1

  bool operator==(const Event&) const = default;
};

struct EventPacket {
  std::vector<Event> events;
  double t_start = 0.0;
  double t_end = 0.0;
  bool partial = false;  // trailing by-count packet with fewer than `count` events
};

struct PacketPolicy {
  enum class Mode { ByCount, ByTime };

  Mode mode = Mode::ByCount;
  std::size_t count = 1500;
  double dt = 0.005;

  static PacketPolicy by_count(std::size_t n) { return {Mode::ByCount, n, 0.0}; }
  static PacketPolicy by_time(double seconds) { return {Mode::ByTime, 0, seconds}; }

  void validate() const;
};

class MalformedLine : public std::runtime_error {
 public:
  MalformedLine(std::size_t line, const std::string& text);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ParsedStream {
  std::vector<Event> events;
  /// 1-based line numbers where the timestamp went backwards. The stream is
  /// still accepted; sensors jitter.
  std::vector<std::size_t> non_monotone_lines;
};

/// Parses `t x y p` lines. p in {0,1} or {-1,1}; 0 becomes -1. Blank lines
/// and lines starting with '#' are skipped.
ParsedStream parse_event_stream(std::istream& in);

/// Parses a single line; returns nullopt for blank/comment lines.
std::optional<Event> parse_event_line(const std::string& line, std::size_t line_number);

/// Writes events in the same text layout, with p written as 0/1.
void write_events(std::ostream& out, std::span<const Event> events);

/// Incremental packet builder. Packets are complete values once returned.
class Packetizer {
 public:
  explicit Packetizer(PacketPolicy policy);

  /// Returns a packet when `e` closes the current one.
  std::optional<EventPacket> push(const Event& e);
  /// Emits whatever is pending (flagged partial for by-count).
  std::optional<EventPacket> flush();

 private:
  EventPacket take(bool partial);

  PacketPolicy policy_;
  EventPacket current_;
  long long window_ = 0;
};

std::vector<EventPacket> packetize(std::span<const Event> stream, const PacketPolicy& policy);

}  // namespace evpano
