#include "evpano/events.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "evpano/geometry.hpp"

namespace evpano {

void PacketPolicy::validate() const {
  if (mode == Mode::ByCount && count < 1) throw ConfigError("packet count must be >= 1");
  if (mode == Mode::ByTime && !(dt > 0.0)) throw ConfigError("packet dt must be > 0");
}

MalformedLine::MalformedLine(std::size_t line, const std::string& text)
    : std::runtime_error("malformed event at line " + std::to_string(line) + ": '" + text + "'"),
      line_(line) {}

namespace {

const char* skip_ws(const char* p, const char* end) {
  while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  return p;
}

template <typename T>
bool read_field(const char*& p, const char* end, T& out) {
  p = skip_ws(p, end);
  if (p == end) return false;
  auto [next, ec] = std::from_chars(p, end, out);
  if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) return false;
  p = next;
  return true;
}

}  // namespace

std::optional<Event> parse_event_line(const std::string& line, std::size_t line_number) {
  const char* p = line.data();
  const char* end = p + line.size();
  const char* first = skip_ws(p, end);
  if (first == end || *first == '#') return std::nullopt;

  Event e;
  int pol = 0;
  if (!read_field(p, end, e.t) || !read_field(p, end, e.x) || !read_field(p, end, e.y) ||
      !read_field(p, end, pol) || skip_ws(p, end) != end || !std::isfinite(e.t)) {
    throw MalformedLine(line_number, line);
  }
  if (pol == 0 || pol == -1) {
    e.p = -1;
  } else if (pol == 1) {
    e.p = 1;
  } else {
    throw MalformedLine(line_number, line);
  }
  return e;
}

ParsedStream parse_event_stream(std::istream& in) {
  ParsedStream out;
  std::string line;
  std::size_t n = 0;
  double last_t = -INFINITY;
  while (std::getline(in, line)) {
    ++n;
    auto e = parse_event_line(line, n);
    if (!e) continue;
    if (e->t < last_t) out.non_monotone_lines.push_back(n);
    last_t = std::max(last_t, e->t);
    out.events.push_back(*e);
  }
  return out;
}

void write_events(std::ostream& out, std::span<const Event> events) {
  char buf[96];
  for (const Event& e : events) {
    const int len = std::snprintf(buf, sizeof(buf), "%.9f %d %d %d\n", e.t, e.x, e.y, e.p > 0 ? 1 : 0);
    out.write(buf, len);
  }
}

Packetizer::Packetizer(PacketPolicy policy) : policy_(policy) { policy_.validate(); }

EventPacket Packetizer::take(bool partial) {
  EventPacket out = std::move(current_);
  current_ = EventPacket{};
  out.t_start = out.events.front().t;
  out.t_end = out.events.back().t;
  out.partial = partial;
  return out;
}

std::optional<EventPacket> Packetizer::push(const Event& e) {
  if (policy_.mode == PacketPolicy::Mode::ByCount) {
    if (current_.events.empty()) current_.events.reserve(policy_.count);
    current_.events.push_back(e);
    if (current_.events.size() == policy_.count) return take(false);
    return std::nullopt;
  }

  const auto window = static_cast<long long>(std::floor(e.t / policy_.dt));
  std::optional<EventPacket> done;
  if (!current_.events.empty() && window != window_) done = take(false);
  window_ = window;
  current_.events.push_back(e);
  return done;
}

std::optional<EventPacket> Packetizer::flush() {
  if (current_.events.empty()) return std::nullopt;
  return take(policy_.mode == PacketPolicy::Mode::ByCount);
}

std::vector<EventPacket> packetize(std::span<const Event> stream, const PacketPolicy& policy) {
  Packetizer pk(policy);
  std::vector<EventPacket> out;
  for (const Event& e : stream) {
    if (auto p = pk.push(e)) out.push_back(std::move(*p));
  }
  if (auto p = pk.flush()) out.push_back(std::move(*p));
  return out;
}

}  // namespace evpano
