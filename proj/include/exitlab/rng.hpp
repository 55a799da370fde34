#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "exitlab/models.hpp"

namespace exitlab {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Identifies one trajectory's random stream. The generated numbers are a
/// pure function of these three values. Run and trajectory indices must fit
/// in 32 bits.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t run_index = 0;
  std::uint64_t traj_index = 0;
};

/// Standard normal variates drawn from a counter-based stream.
///
/// Each Philox block yields two 53-bit uniforms which Box-Muller turns into
/// two normals, so the sequence does not depend on how callers batch their
/// requests.
class GaussianSource {
 public:
  explicit GaussianSource(const RngStream& stream);

  double next();
  void fill(std::span<double> out);
  void fill(Vector& out) { fill(std::span<double>(out.data(), static_cast<std::size_t>(out.size()))); }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::uint32_t run_ = 0;
  std::uint32_t traj_ = 0;
  std::uint64_t block_ = 0;
  double cached_ = 0.0;
  double cached_first_ = 0.0;
  bool has_cached_ = false;
};

/// `count` standard-normal vectors of dimension n (unscaled; the caller
/// multiplies by sqrt(dt)).
std::vector<Vector> gaussian_increments(const RngStream& stream, std::size_t n, std::size_t count);

}  // namespace exitlab
