#pragma once

// Packet transport contract shared by the probe engine, the path inspector and the simulator.

#include <chrono>
#include <cstdint>
#include <optional>
#include <variant>

#include "mpscan/packet.hpp"

namespace mpscan {

using Millis = std::chrono::duration<double, std::milli>;

/// A reply from the probed target itself.
struct ProbeResponse {
  std::uint8_t tcp_flags = 0;
  std::vector<TcpOption> options;
  std::uint32_t ack_number = 0;
  Millis rtt{0};
  Bytes raw;

  bool is_syn_ack() const noexcept {
    return (tcp_flags & (tcp_flag::kSyn | tcp_flag::kAck)) == (tcp_flag::kSyn | tcp_flag::kAck);
  }
  bool is_rst() const noexcept { return tcp_flags & tcp_flag::kRst; }
};

ProbeResponse response_from_packet(const TcpPacket& packet, Millis rtt);

/// ICMP time-exceeded style reply quoting the leading bytes of the expired packet.
struct IcmpQuote {
  IpAddress responder;
  Bytes quoted;
};

using HopReply = std::variant<IcmpQuote, ProbeResponse>;

class PacketTransport {
 public:
  virtual ~PacketTransport() = default;

  /// Sends `probe` and waits for the first reply addressed to its 4-tuple.
  virtual std::optional<ProbeResponse> exchange(const TcpPacket& probe, Millis timeout) = 0;

  /// Sends `probe` with the given IP TTL / hop limit.
  virtual std::optional<HopReply> exchange_ttl(const TcpPacket& probe, std::uint8_t ttl, Millis timeout) = 0;
};

/// Time source for campaign pacing; virtual in simulation, steady for live runs.
class Clock {
 public:
  using TimePoint = std::chrono::nanoseconds;  // since an arbitrary epoch

  virtual ~Clock() = default;
  virtual TimePoint now() = 0;
  virtual void sleep_until(TimePoint t) = 0;
};

class VirtualClock final : public Clock {
 public:
  TimePoint now() override { return now_; }
  void sleep_until(TimePoint t) override {
    if (t > now_) now_ = t;
  }
  void advance(TimePoint d) { now_ += d; }

 private:
  TimePoint now_{0};
};

class SteadyClock final : public Clock {
 public:
  TimePoint now() override;
  void sleep_until(TimePoint t) override;

 private:
  std::chrono::steady_clock::time_point origin_ = std::chrono::steady_clock::now();
};

}  // namespace mpscan
