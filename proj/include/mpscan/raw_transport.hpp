#pragma once

// Live IPv4 packet transport over raw sockets (needs CAP_NET_RAW).

#include <mutex>

#include "mpscan/transport.hpp"

namespace mpscan {

class RawSocketTransport final : public PacketTransport {
 public:
  /// Throws TransportUnavailable when raw sockets cannot be opened.
  RawSocketTransport();
  ~RawSocketTransport() override;
  RawSocketTransport(const RawSocketTransport&) = delete;
  RawSocketTransport& operator=(const RawSocketTransport&) = delete;

  std::optional<ProbeResponse> exchange(const TcpPacket& probe, Millis timeout) override;
  std::optional<HopReply> exchange_ttl(const TcpPacket& probe, std::uint8_t ttl, Millis timeout) override;

  /// The local address the kernel would route from towards `target`.
  static IpAddress local_source_for(const IpAddress& target);

 private:
  void close_all() noexcept;
  std::optional<HopReply> send_and_wait(const TcpPacket& probe, Millis timeout, bool accept_icmp);

  int send_fd_ = -1;
  int tcp_fd_ = -1;
  int icmp_fd_ = -1;
  std::mutex mutex_;
};

}  // namespace mpscan
