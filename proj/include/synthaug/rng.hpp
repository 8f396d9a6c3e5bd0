#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace synthaug {

// Deterministic splittable generator. The state is a function of
// (seed, stream_id) only, so any number of parallel consumers can each own a
// stream and reproduce the same variates regardless of scheduling.
//
// Core generator is xoshiro256** keyed through splitmix64; normals use the
// Box-Muller transform with the spare variate cached.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Child stream whose identity depends only on this stream's identity and
  // the given path, never on how many variates have been drawn.
  RngStream child(std::uint64_t id) const;
  RngStream child(std::initializer_list<std::uint64_t> path) const;

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();
  void fill_normal(std::span<double> out);
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n)

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace synthaug
