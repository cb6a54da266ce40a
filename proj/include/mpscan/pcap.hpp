#pragma once

// Classic libpcap file format (microsecond and nanosecond variants, either byte order).

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>

#include "mpscan/option_codec.hpp"

namespace mpscan {

namespace linktype {
inline constexpr std::uint32_t kNull = 0;
inline constexpr std::uint32_t kEthernet = 1;
inline constexpr std::uint32_t kRaw = 101;
inline constexpr std::uint32_t kLoop = 108;
inline constexpr std::uint32_t kLinuxSll = 113;
inline constexpr std::uint32_t kIpv4 = 228;
inline constexpr std::uint32_t kIpv6 = 229;
}  // namespace linktype

struct CapturedPacket {
  std::chrono::nanoseconds timestamp{0};
  std::uint32_t original_length = 0;
  Bytes data;
};

class PcapReader {
 public:
  /// Throws MalformedCapture when the global header is unreadable.
  explicit PcapReader(std::istream& in);

  std::uint32_t link_type() const noexcept { return link_type_; }
  /// Nullopt at end of file; throws MalformedCapture on a torn record header.
  std::optional<CapturedPacket> next();

 private:
  std::uint32_t read32(const std::uint8_t* p) const noexcept;

  std::istream& in_;
  bool swapped_ = false;
  bool nanos_ = false;
  std::uint32_t snaplen_ = 0;
  std::uint32_t link_type_ = 0;
};

class PcapWriter {
 public:
  PcapWriter(std::ostream& out, std::uint32_t link_type = linktype::kRaw, std::uint32_t snaplen = 65535);
  void write(std::chrono::nanoseconds timestamp, std::span<const std::uint8_t> frame);

 private:
  std::ostream& out_;
};

/// The IP datagram inside a link-layer frame, or nullopt for non-IP frames.
std::optional<std::span<const std::uint8_t>> ip_payload(std::uint32_t link_type, std::span<const std::uint8_t> frame);

}  // namespace mpscan
