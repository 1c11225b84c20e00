#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace mvcn {

/// Uniform grid t_k = k T / K on [0, T].
struct TimeGrid {
  double T = 1.0;
  int K = 1;

  double dt() const noexcept { return T / static_cast<double>(K); }
  double node(int k) const noexcept { return T * static_cast<double>(k) / static_cast<double>(K); }
  void validate() const;
  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key) noexcept;

/// Substream families. Streams are keyed by (seed, family, stream index,
/// step, component), never by scheduling order.
enum class StreamFamily : std::uint32_t {
  Common = 0,
  Cloud = 1,
  Pilot = 2,
  Initial = 3,
  Auxiliary = 4,
};

/// Fill `out` with standard normals from the substream (seed, family, stream, step).
void standard_normals(std::uint64_t seed, StreamFamily family, std::uint64_t stream, std::uint64_t step,
                      std::span<double> out) noexcept;

/// Independent master seed for repetition `index`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// Brownian increments for the common source (K x m0, shared by every
/// particle) and the idiosyncratic sources (N x K x m, one row per particle).
struct NoiseBundle {
  TimeGrid grid;
  int N = 0;
  int m0 = 0;
  int m = 0;
  std::uint64_t seed = 0;
  StreamFamily family = StreamFamily::Cloud;
  std::uint64_t first_stream = 0;
  std::vector<double> dW0;
  std::vector<double> dW1;

  std::span<const double> common(int k) const noexcept {
    return {dW0.data() + static_cast<std::size_t>(k) * m0, static_cast<std::size_t>(m0)};
  }
  std::span<const double> idio(int i, int k) const noexcept {
    return {dW1.data() + (static_cast<std::size_t>(i) * grid.K + k) * m, static_cast<std::size_t>(m)};
  }
  std::uint64_t stream_id(int i) const noexcept { return first_stream + static_cast<std::uint64_t>(i); }
};

/// Generate a bundle; idiosyncratic rows use streams first_stream + i of `family`.
NoiseBundle generate(const TimeGrid& grid, int N, int m0, int m, std::uint64_t seed,
                     StreamFamily family = StreamFamily::Cloud, std::uint64_t first_stream = 0);

/// Cameron-Martin direction given by its density h' on the grid cells (K x dim).
struct CameronMartinDirection {
  TimeGrid grid;
  int dim = 1;
  std::vector<double> hprime;

  static CameronMartinDirection constant(const TimeGrid& grid, int dim, double value);
  double norm2() const noexcept;
  /// h(t_k) = sum_{j<k} h'_j dt (h_0 = 0).
  std::vector<double> path_value(int k) const;
};

/// dW0 <- dW0 + eps h' dt. Idiosyncratic increments untouched.
NoiseBundle bump_common(const NoiseBundle& bundle, const CameronMartinDirection& h, double eps);
/// Same bump applied to the idiosyncratic row of particle i only.
NoiseBundle bump_idio(const NoiseBundle& bundle, int i, const CameronMartinDirection& h, double eps);
/// Sum `factor` consecutive increments: the same Brownian path on a coarser grid.
NoiseBundle coarsen(const NoiseBundle& bundle, int factor);
/// First n particles of a bundle.
NoiseBundle head(const NoiseBundle& bundle, int n);

/// i.i.d. N(mean, std^2 I) initial states, keyed by particle index.
std::vector<double> sample_initial(int N, int d, std::span<const double> mean, double std_dev, std::uint64_t seed);

/// Binary dump: magic "MVCNNOIS", u32 version, u64 seed, f64 T, u64 K, u64 N,
/// u32 m0, u32 m, then dW0 and dW1 as little-endian f64, row-major.
void write_bundle(const NoiseBundle& bundle, std::ostream& os);
NoiseBundle read_bundle(std::istream& is);

}  // namespace mvcn
