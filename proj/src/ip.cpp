#include "mpscan/ip.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mpscan/error.hpp"

namespace mpscan {

std::string_view to_string(AddressFamily family) {
  return family == AddressFamily::V4 ? "v4" : "v6";
}

std::optional<AddressFamily> parse_family(std::string_view text) {
  if (text == "v4" || text == "4" || text == "ipv4") return AddressFamily::V4;
  if (text == "v6" || text == "6" || text == "ipv6") return AddressFamily::V6;
  return std::nullopt;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  return text;
}

IpAddress IpAddress::v4(std::uint32_t host_order) {
  IpAddress a;
  a.family_ = AddressFamily::V4;
  a.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
  a.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
  a.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
  a.bytes_[3] = static_cast<std::uint8_t>(host_order);
  return a;
}

IpAddress IpAddress::v6(const std::array<std::uint8_t, 16>& bytes) {
  IpAddress a;
  a.family_ = AddressFamily::V6;
  a.bytes_ = bytes;
  return a;
}

std::optional<IpAddress> IpAddress::from_bytes(AddressFamily family, std::span<const std::uint8_t> bytes) {
  IpAddress a;
  a.family_ = family;
  if (bytes.size() != a.size()) return std::nullopt;
  std::copy(bytes.begin(), bytes.end(), a.bytes_.begin());
  return a;
}

std::optional<IpAddress> IpAddress::parse(std::string_view text) {
  text = trim(text);
  if (text.size() >= 2 && text.front() == '[' && text.back() == ']') text = text.substr(1, text.size() - 2);
  if (text.empty() || text.size() > INET6_ADDRSTRLEN) return std::nullopt;
  std::string buf(text);
  IpAddress a;
  if (buf.find(':') == std::string::npos) {
    if (inet_pton(AF_INET, buf.c_str(), a.bytes_.data()) != 1) return std::nullopt;
    a.family_ = AddressFamily::V4;
  } else {
    if (inet_pton(AF_INET6, buf.c_str(), a.bytes_.data()) != 1) return std::nullopt;
    a.family_ = AddressFamily::V6;
  }
  return a;
}

std::uint32_t IpAddress::v4_value() const noexcept {
  return (std::uint32_t{bytes_[0]} << 24) | (std::uint32_t{bytes_[1]} << 16) |
         (std::uint32_t{bytes_[2]} << 8) | std::uint32_t{bytes_[3]};
}

IpAddress IpAddress::masked(unsigned prefix_len) const noexcept {
  IpAddress out = *this;
  const std::size_t bits = size() * 8;
  for (std::size_t i = prefix_len; i < bits; ++i) out.bytes_[i / 8] &= static_cast<std::uint8_t>(~(0x80U >> (i % 8)));
  return out;
}

std::string IpAddress::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {};
  inet_ntop(is_v4() ? AF_INET : AF_INET6, bytes_.data(), buf, sizeof buf);
  return buf;
}

std::optional<IpPrefix> IpPrefix::parse(std::string_view text) {
  text = trim(text);
  const auto slash = text.find('/');
  auto address = IpAddress::parse(text.substr(0, slash));
  if (!address) return std::nullopt;
  unsigned length = static_cast<unsigned>(address->size() * 8);
  if (slash != std::string_view::npos) {
    auto digits = text.substr(slash + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), length);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
    if (length > address->size() * 8) return std::nullopt;
  }
  return IpPrefix{address->masked(length), length};
}

bool IpPrefix::contains(const IpAddress& address) const noexcept {
  return address.family() == network.family() && address.masked(length) == network;
}

std::string IpPrefix::to_string() const {
  return network.to_string() + "/" + std::to_string(length);
}

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) fn(line, line_no);
  }
}

}  // namespace

std::vector<Endpoint> parse_target_list(std::string_view text) {
  std::vector<Endpoint> out;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto comma = line.rfind(',');
    if (comma == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "target line " + std::to_string(line_no) + ": expected address,port");
    }
    auto address = IpAddress::parse(line.substr(0, comma));
    auto port_text = trim(line.substr(comma + 1));
    unsigned port = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (!address || ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
      throw Error(ErrorCode::ParseError, "target line " + std::to_string(line_no) + ": bad address or port");
    }
    out.push_back({*address, static_cast<std::uint16_t>(port)});
  });
  return out;
}

std::vector<IpPrefix> parse_prefix_list(std::string_view text) {
  std::vector<IpPrefix> out;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    auto prefix = IpPrefix::parse(line);
    if (!prefix) throw Error(ErrorCode::ParseError, "prefix line " + std::to_string(line_no) + ": " + std::string(line));
    out.push_back(*prefix);
  });
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mpscan
