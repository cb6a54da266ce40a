#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mpscan {

enum class AddressFamily : std::uint8_t { V4, V6 };

std::string_view to_string(AddressFamily family);
std::optional<AddressFamily> parse_family(std::string_view text);

/// An IPv4 or IPv6 address. IPv4 addresses occupy the first four bytes.
class IpAddress {
 public:
  IpAddress() = default;

  static IpAddress v4(std::uint32_t host_order);
  static IpAddress v6(const std::array<std::uint8_t, 16>& bytes);
  static std::optional<IpAddress> from_bytes(AddressFamily family, std::span<const std::uint8_t> bytes);
  /// Accepts dotted-quad or RFC 4291 text; brackets around IPv6 are tolerated.
  static std::optional<IpAddress> parse(std::string_view text);

  AddressFamily family() const noexcept { return family_; }
  bool is_v4() const noexcept { return family_ == AddressFamily::V4; }
  std::size_t size() const noexcept { return is_v4() ? 4 : 16; }
  std::span<const std::uint8_t> bytes() const noexcept { return {bytes_.data(), size()}; }
  std::uint32_t v4_value() const noexcept;

  bool bit(std::size_t index) const noexcept {
    return (bytes_[index / 8] >> (7 - index % 8)) & 1U;
  }
  IpAddress masked(unsigned prefix_len) const noexcept;

  std::string to_string() const;

  friend auto operator<=>(const IpAddress&, const IpAddress&) = default;
  friend bool operator==(const IpAddress&, const IpAddress&) = default;

 private:
  AddressFamily family_ = AddressFamily::V4;
  std::array<std::uint8_t, 16> bytes_{};
};

struct IpPrefix {
  IpAddress network;
  unsigned length = 0;

  /// "a.b.c.d/n" or "x::/n"; a bare address is a host prefix.
  static std::optional<IpPrefix> parse(std::string_view text);
  bool contains(const IpAddress& address) const noexcept;
  std::string to_string() const;

  friend bool operator==(const IpPrefix&, const IpPrefix&) = default;
};

/// Target endpoint for probes.
struct Endpoint {
  IpAddress address;
  std::uint16_t port = 0;

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

/// Parses "address,port" lines. Blank lines and '#' comments are skipped.
std::vector<Endpoint> parse_target_list(std::string_view text);

/// Parses one CIDR prefix per line with '#' comments.
std::vector<IpPrefix> parse_prefix_list(std::string_view text);

std::string read_text_file(const std::string& path);

std::string_view trim(std::string_view text);

}  // namespace mpscan

template <>
struct std::hash<mpscan::IpAddress> {
  std::size_t operator()(const mpscan::IpAddress& a) const noexcept {
    std::size_t h = a.is_v4() ? 0x9e3779b97f4a7c15ULL : 0xc2b2ae3d27d4eb4fULL;
    for (auto b : a.bytes()) h = (h ^ b) * 0x100000001b3ULL;
    return h;
  }
};
