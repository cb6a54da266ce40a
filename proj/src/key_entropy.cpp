#include "mpscan/key_entropy.hpp"

#include <bit>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <ostream>

#include "mpscan/error.hpp"

namespace mpscan {

int hamming_weight(Key key) noexcept { return std::popcount(key.value); }

void WeightHistogram::add(Key key) noexcept {
  ++counts[static_cast<std::size_t>(hamming_weight(key))];
  ++total;
}

WeightHistogram& WeightHistogram::operator+=(const WeightHistogram& other) noexcept {
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
  return *this;
}

namespace {

// Pascal's triangle up to row 64; every entry fits in 64 bits (C(64, 32) < 2^61).
constexpr auto kBinomial = [] {
  std::array<std::uint64_t, kKeyBits + 1> row{};
  row[0] = 1;
  for (int n = 1; n <= kKeyBits; ++n) {
    for (int k = n; k > 0; --k) row[static_cast<std::size_t>(k)] += row[static_cast<std::size_t>(k - 1)];
  }
  return row;
}();

}  // namespace

double binomial_weight_probability(int weight) {
  if (weight < 0 || weight > kKeyBits) return 0;
  return std::ldexp(static_cast<double>(kBinomial[static_cast<std::size_t>(weight)]), -kKeyBits);
}

std::array<double, kKeyBits + 1> expected_counts(std::uint64_t total) {
  if (total == 0) throw Error(ErrorCode::InvalidArgument, "total must be at least 1");
  std::array<double, kKeyBits + 1> out{};
  for (int w = 0; w <= kKeyBits; ++w) {
    out[static_cast<std::size_t>(w)] = static_cast<double>(total) * binomial_weight_probability(w);
  }
  return out;
}

ChiSquareResult chi_square_binomial(const WeightHistogram& h) {
  const auto expected = expected_counts(h.total);
  // Symmetric distribution: pool [0, lo] and [64 - lo, 64].
  int lo = 0;
  while (lo < kKeyBits / 2 && expected[static_cast<std::size_t>(lo)] < kChiSquareMinExpected) ++lo;
  const int hi = kKeyBits - lo;

  ChiSquareResult r;
  if (lo >= hi) return r;  // too few keys for any valid bin split

  double stat = 0;
  int bins = 0;
  auto accumulate = [&](double observed, double exp) {
    stat += (observed - exp) * (observed - exp) / exp;
    ++bins;
  };
  double obs_low = 0, exp_low = 0, obs_high = 0, exp_high = 0;
  for (int w = 0; w <= lo; ++w) {
    obs_low += static_cast<double>(h.counts[static_cast<std::size_t>(w)]);
    exp_low += expected[static_cast<std::size_t>(w)];
  }
  for (int w = hi; w <= kKeyBits; ++w) {
    obs_high += static_cast<double>(h.counts[static_cast<std::size_t>(w)]);
    exp_high += expected[static_cast<std::size_t>(w)];
  }
  accumulate(obs_low, exp_low);
  for (int w = lo + 1; w < hi; ++w) {
    accumulate(static_cast<double>(h.counts[static_cast<std::size_t>(w)]), expected[static_cast<std::size_t>(w)]);
  }
  accumulate(obs_high, exp_high);

  r.statistic = stat;
  r.degrees_of_freedom = bins - 1;
  r.p_value = boost::math::gamma_q(r.degrees_of_freedom / 2.0, stat / 2.0);
  return r;
}

EntropyReport analyze_keys(std::span<const Key> keys, Key probe_key) {
  if (keys.empty()) throw Error(ErrorCode::EmptyInput, "no keys to analyze");
  EntropyReport r;
  for (const Key k : keys) {
    r.histogram.add(k);
    if (k == probe_key) ++r.mirrored_exact_count;
  }
  r.probe_key_weight = hamming_weight(probe_key);
  const auto expected = expected_counts(r.histogram.total);
  const auto w = static_cast<std::size_t>(r.probe_key_weight);
  const double excess = (static_cast<double>(r.histogram.counts[w]) - expected[w]) / static_cast<double>(r.histogram.total);
  r.excess_at_probe_weight = std::max(0.0, excess);
  const auto chi = chi_square_binomial(r.histogram);
  r.chi_square = chi.statistic;
  r.degrees_of_freedom = chi.degrees_of_freedom;
  r.p_value = chi.p_value;
  return r;
}

void write_report(std::ostream& os, const EntropyReport& r) {
  os << "total=" << r.histogram.total << " probe_key_weight=" << r.probe_key_weight
     << " mirrored_exact=" << r.mirrored_exact_count << " excess_at_probe_weight=" << r.excess_at_probe_weight
     << " chi_square=" << r.chi_square << " dof=" << r.degrees_of_freedom << " p_value=" << r.p_value << '\n';
  const auto expected = expected_counts(r.histogram.total);
  for (int w = 0; w <= kKeyBits; ++w) {
    os << "weight=" << w << " count=" << r.histogram.counts[static_cast<std::size_t>(w)]
       << " expected=" << expected[static_cast<std::size_t>(w)] << '\n';
  }
}

}  // namespace mpscan
