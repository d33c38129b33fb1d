#ifndef POISMIX_RNG_HPP
#define POISMIX_RNG_HPP

#include <cstdint>
#include <initializer_list>

namespace poismix {

/// SplitMix64 step: advances state and returns the next output.
std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256++ stream. Streams are derived from (seed, path) by SplitMix64
/// chaining, so the stream for a given replicate is the same whether
/// replicates run serially or in parallel. All samplers are self-contained
/// (no libc distribution state), giving bit-identical draws across runs.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64();

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform01();

  /// Uniform on (0, 1]; safe as a log() argument.
  double uniform01_pos();

  /// Box-Muller; consumes exactly two uniforms per draw.
  double normal(double mean = 0.0, double sd = 1.0);

  /// Poisson(mu). Knuth multiplication below mu = 10, Hormann's PTRS
  /// transformed rejection above. Exact for all mu in [0, 1e8].
  long poisson(double mu);

 private:
  std::uint64_t s_[4];
};

}  // namespace poismix

#endif  // POISMIX_RNG_HPP
