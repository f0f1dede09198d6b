#include "vcfl/rng.hpp"

#include <cmath>
#include <numbers>

#include "vcfl/error.hpp"

namespace vcfl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(splitmix64(splitmix64(seed) ^ (stream_id * 0xd1b54a32d192ed03ull + 0x2545f4914f6cdd1dull))) {}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t n = counter_++;
  return splitmix64(key_ ^ splitmix64(n));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("RngStream::below: empty range");
  // Rejection on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(splitmix64(key_ + child), splitmix64(stream_id_ ^ child));
}

}  // namespace vcfl
