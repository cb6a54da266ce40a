#include "mpscan/transport.hpp"

#include <thread>

namespace mpscan {

ProbeResponse response_from_packet(const TcpPacket& packet, Millis rtt) {
  ProbeResponse r;
  r.tcp_flags = packet.flags;
  r.options = packet.options;
  r.ack_number = packet.ack;
  r.rtt = rtt;
  r.raw = serialize_packet(packet);
  return r;
}

Clock::TimePoint SteadyClock::now() {
  return std::chrono::duration_cast<TimePoint>(std::chrono::steady_clock::now() - origin_);
}

void SteadyClock::sleep_until(TimePoint t) {
  std::this_thread::sleep_until(origin_ + t);
}

}  // namespace mpscan
