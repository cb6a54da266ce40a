#include "mpscan/raw_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mpscan/error.hpp"

namespace mpscan {

namespace {

constexpr std::uint8_t kIcmpTimeExceeded = 11;

std::size_t ip_header_length(std::span<const std::uint8_t> b) {
  return b.empty() ? 0 : static_cast<std::size_t>(b[0] & 0x0f) * 4;
}

bool same_flow(const TcpPacket& probe, const TcpPacket& quoted) {
  return quoted.src == probe.src && quoted.dst == probe.dst && quoted.src_port == probe.src_port &&
         quoted.dst_port == probe.dst_port && quoted.seq == probe.seq;
}

}  // namespace

RawSocketTransport::RawSocketTransport() {
  send_fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_RAW);
  tcp_fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_TCP);
  icmp_fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_ICMP);
  if (send_fd_ < 0 || tcp_fd_ < 0 || icmp_fd_ < 0) {
    const int err = errno;
    close_all();
    throw Error(ErrorCode::TransportUnavailable,
                std::string("raw sockets unavailable (CAP_NET_RAW required): ") + std::strerror(err));
  }
  const int on = 1;
  ::setsockopt(send_fd_, IPPROTO_IP, IP_HDRINCL, &on, sizeof on);
}

RawSocketTransport::~RawSocketTransport() { close_all(); }

void RawSocketTransport::close_all() noexcept {
  for (int* fd : {&send_fd_, &tcp_fd_, &icmp_fd_}) {
    if (*fd >= 0) ::close(*fd);
    *fd = -1;
  }
}

IpAddress RawSocketTransport::local_source_for(const IpAddress& target) {
  if (!target.is_v4()) throw Error(ErrorCode::TransportUnavailable, "live probing supports IPv4 targets only");
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw Error(ErrorCode::TransportUnavailable, "cannot open UDP socket for route lookup");
  sockaddr_in dst{};
  dst.sin_family = AF_INET;
  dst.sin_port = htons(9);
  std::memcpy(&dst.sin_addr, target.bytes().data(), 4);
  sockaddr_in local{};
  socklen_t len = sizeof local;
  const bool ok = ::connect(fd, reinterpret_cast<sockaddr*>(&dst), sizeof dst) == 0 &&
                  ::getsockname(fd, reinterpret_cast<sockaddr*>(&local), &len) == 0;
  ::close(fd);
  if (!ok) throw Error(ErrorCode::TransportUnavailable, "no route to " + target.to_string());
  return IpAddress::v4(ntohl(local.sin_addr.s_addr));
}

std::optional<ProbeResponse> RawSocketTransport::exchange(const TcpPacket& probe, Millis timeout) {
  auto reply = send_and_wait(probe, timeout, false);
  if (!reply) return std::nullopt;
  return std::get<ProbeResponse>(*reply);
}

std::optional<HopReply> RawSocketTransport::exchange_ttl(const TcpPacket& probe, std::uint8_t ttl, Millis timeout) {
  TcpPacket p = probe;
  p.ttl = ttl;
  return send_and_wait(p, timeout, true);
}

std::optional<HopReply> RawSocketTransport::send_and_wait(const TcpPacket& probe, Millis timeout, bool accept_icmp) {
  if (!probe.dst.is_v4() || !probe.src.is_v4()) {
    throw Error(ErrorCode::TransportUnavailable, "live probing supports IPv4 targets only");
  }
  std::lock_guard lock(mutex_);
  const Bytes wire = serialize_packet(probe);
  sockaddr_in dst{};
  dst.sin_family = AF_INET;
  std::memcpy(&dst.sin_addr, probe.dst.bytes().data(), 4);

  const auto start = std::chrono::steady_clock::now();
  const auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout);
  if (::sendto(send_fd_, wire.data(), wire.size(), 0, reinterpret_cast<sockaddr*>(&dst), sizeof dst) < 0) {
    throw Error(ErrorCode::TransportUnavailable, std::string("sendto: ") + std::strerror(errno));
  }

  std::uint8_t buf[65536];
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return std::nullopt;
    const int wait_ms =
        static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
    pollfd fds[2] = {{tcp_fd_, POLLIN, 0}, {icmp_fd_, POLLIN, 0}};
    if (::poll(fds, 2, wait_ms) <= 0) continue;

    if (fds[0].revents & POLLIN) {
      const ssize_t n = ::recv(tcp_fd_, buf, sizeof buf, 0);
      if (n > 0) {
        auto parsed = parse_ip_tcp({buf, static_cast<std::size_t>(n)});
        if (parsed && parsed->options_complete) {
          const TcpPacket& r = parsed->packet;
          if (r.src == probe.dst && r.dst == probe.src && r.src_port == probe.dst_port &&
              r.dst_port == probe.src_port) {
            ProbeResponse resp = response_from_packet(r, std::chrono::steady_clock::now() - start);
            resp.raw.assign(buf, buf + n);
            return resp;
          }
        }
      }
    }
    if (fds[1].revents & POLLIN) {
      const ssize_t n = ::recv(icmp_fd_, buf, sizeof buf, 0);
      if (n <= 0 || !accept_icmp) continue;
      std::span<const std::uint8_t> pkt{buf, static_cast<std::size_t>(n)};
      const std::size_t ihl = ip_header_length(pkt);
      if (pkt.size() < ihl + 8 || pkt[ihl] != kIcmpTimeExceeded) continue;
      auto quoted = pkt.subspan(ihl + 8);
      auto parsed = parse_ip_tcp(quoted);
      if (!parsed || !same_flow(probe, parsed->packet)) continue;
      IcmpQuote q;
      q.responder = *IpAddress::from_bytes(AddressFamily::V4, pkt.subspan(12, 4));
      q.quoted.assign(quoted.begin(), quoted.end());
      return q;
    }
  }
}

}  // namespace mpscan
