#pragma once

#include <cstdint>
#include <random>

#include "ssdiff/tensor.hpp"

namespace ssdiff {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seedable standard-normal source. Independent streams for one run are
/// obtained by mixing the run seed with a stream id.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(splitmix64(seed ^ splitmix64(stream + 0x5bd1e995ull))) {}

  double next() { return normal_(engine_); }

  ImageTensor standard_normal(const Shape& shape) {
    ImageTensor out(shape);
    for (auto& v : out.data()) v = normal_(engine_);
    return out;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

namespace stream_id {
inline constexpr std::uint64_t pseudo_label = 1;
inline constexpr std::uint64_t restore = 2;
}  // namespace stream_id

}  // namespace ssdiff
