#pragma once

// Hamming-weight test separating random sender's keys from mirrored ones.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>

#include "mpscan/option_codec.hpp"

namespace mpscan {

inline constexpr int kKeyBits = 64;

int hamming_weight(Key key) noexcept;

struct WeightHistogram {
  std::array<std::uint64_t, kKeyBits + 1> counts{};
  std::uint64_t total = 0;

  void add(Key key) noexcept;
  /// Associative merge for parallel builds.
  WeightHistogram& operator+=(const WeightHistogram& other) noexcept;
  friend bool operator==(const WeightHistogram&, const WeightHistogram&) = default;
};

/// Expected bin counts under Binomial(64, 1/2).
std::array<double, kKeyBits + 1> expected_counts(std::uint64_t total);

/// C(64, w) / 2^64.
double binomial_weight_probability(int weight);

struct EntropyReport {
  WeightHistogram histogram;
  int probe_key_weight = 0;
  std::uint64_t mirrored_exact_count = 0;
  double excess_at_probe_weight = 0;
  double chi_square = 0;
  int degrees_of_freedom = 0;
  double p_value = 1;
};

/// Bins with expected count below this are pooled into the adjacent tail bin.
inline constexpr double kChiSquareMinExpected = 5.0;

EntropyReport analyze_keys(std::span<const Key> keys, Key probe_key);

/// Chi-square statistic and p-value over pooled bins; exposed for tests.
struct ChiSquareResult {
  double statistic = 0;
  int degrees_of_freedom = 0;
  double p_value = 1;
};
ChiSquareResult chi_square_binomial(const WeightHistogram& histogram);

/// Writes a 65-row "weight count expected" table after a header block.
void write_report(std::ostream& os, const EntropyReport& report);

}  // namespace mpscan
