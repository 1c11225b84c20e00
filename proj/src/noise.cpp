#include "mvcn/noise.hpp"

#include <bit>
#include <cmath>
#include <algorithm>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>

#include "mvcn/errors.hpp"

namespace mvcn {

void TimeGrid::validate() const {
  if (!(T > 0.0) || !std::isfinite(T)) fail(ErrorKind::Config, "horizon T must be positive and finite");
  if (K < 1) fail(ErrorKind::Config, "step count K must be at least 1");
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

void standard_normals(std::uint64_t seed, StreamFamily family, std::uint64_t stream, std::uint64_t step,
                      std::span<double> out) noexcept {
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const std::uint32_t tag = (static_cast<std::uint32_t>(family) << 24) | static_cast<std::uint32_t>((stream >> 32) & 0xFFFFFFu);
  constexpr double kUnit = 0x1.0p-53;
  for (std::size_t block = 0; 2 * block < out.size(); ++block) {
    const auto r = philox4x32({static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(block),
                               static_cast<std::uint32_t>(stream), tag},
                              key);
    const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
    const double u1 = static_cast<double>((a >> 11) + 1) * kUnit;  // (0, 1]
    const double u2 = static_cast<double>(b >> 11) * kUnit;        // [0, 1)
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[2 * block] = radius * std::cos(angle);
    if (2 * block + 1 < out.size()) out[2 * block + 1] = radius * std::sin(angle);
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(master ^ mix(index + 0x632BE59BD9B4E019ull));
}

NoiseBundle generate(const TimeGrid& grid, int N, int m0, int m, std::uint64_t seed, StreamFamily family,
                     std::uint64_t first_stream) {
  grid.validate();
  if (N < 1) fail(ErrorKind::Config, "noise bundle needs at least one particle");
  if (m0 < 1 || m < 1) fail(ErrorKind::ShapeMismatch, "noise dimensions must be positive");
  NoiseBundle nb;
  nb.grid = grid;
  nb.N = N;
  nb.m0 = m0;
  nb.m = m;
  nb.seed = seed;
  nb.family = family;
  nb.first_stream = first_stream;
  const double sdt = std::sqrt(grid.dt());
  const std::size_t K = static_cast<std::size_t>(grid.K);
  nb.dW0.resize(K * m0);
  for (std::size_t k = 0; k < K; ++k) {
    std::span<double> row(nb.dW0.data() + k * m0, static_cast<std::size_t>(m0));
    standard_normals(seed, StreamFamily::Common, 0, k, row);
    for (double& e : row) e *= sdt;
  }
  nb.dW1.resize(static_cast<std::size_t>(N) * K * m);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      std::span<double> row(nb.dW1.data() + (static_cast<std::size_t>(i) * K + k) * m, static_cast<std::size_t>(m));
      standard_normals(seed, family, first_stream + static_cast<std::uint64_t>(i), k, row);
      for (double& e : row) e *= sdt;
    }
  }
  return nb;
}

CameronMartinDirection CameronMartinDirection::constant(const TimeGrid& grid, int dim, double value) {
  CameronMartinDirection h;
  h.grid = grid;
  h.dim = dim;
  h.hprime.assign(static_cast<std::size_t>(grid.K) * dim, value);
  return h;
}

double CameronMartinDirection::norm2() const noexcept {
  double s = 0.0;
  for (double e : hprime) s += e * e;
  return s * grid.dt();
}

std::vector<double> CameronMartinDirection::path_value(int k) const {
  std::vector<double> h(dim, 0.0);
  for (int j = 0; j < k; ++j) {
    for (int c = 0; c < dim; ++c) h[c] += hprime[static_cast<std::size_t>(j) * dim + c] * grid.dt();
  }
  return h;
}

NoiseBundle bump_common(const NoiseBundle& bundle, const CameronMartinDirection& h, double eps) {
  if (!(h.grid == bundle.grid) || h.dim != bundle.m0 || h.hprime.size() != bundle.dW0.size()) {
    fail(ErrorKind::GridMismatch, "Cameron-Martin direction does not match the common-noise grid");
  }
  NoiseBundle out = bundle;
  const double dt = bundle.grid.dt();
  for (std::size_t q = 0; q < out.dW0.size(); ++q) out.dW0[q] += eps * h.hprime[q] * dt;
  return out;
}

NoiseBundle bump_idio(const NoiseBundle& bundle, int i, const CameronMartinDirection& h, double eps) {
  if (!(h.grid == bundle.grid) || h.dim != bundle.m) {
    fail(ErrorKind::GridMismatch, "Cameron-Martin direction does not match the idiosyncratic grid");
  }
  if (i < 0 || i >= bundle.N) fail(ErrorKind::ShapeMismatch, "particle index out of range", i);
  NoiseBundle out = bundle;
  const double dt = bundle.grid.dt();
  const std::size_t row = static_cast<std::size_t>(bundle.grid.K) * bundle.m;
  double* base = out.dW1.data() + static_cast<std::size_t>(i) * row;
  for (std::size_t q = 0; q < row; ++q) base[q] += eps * h.hprime[q] * dt;
  return out;
}

NoiseBundle coarsen(const NoiseBundle& bundle, int factor) {
  if (factor < 1 || bundle.grid.K % factor != 0) fail(ErrorKind::GridMismatch, "coarsening factor must divide K");
  NoiseBundle out = bundle;
  const int Kc = bundle.grid.K / factor;
  out.grid.K = Kc;
  out.dW0.assign(static_cast<std::size_t>(Kc) * bundle.m0, 0.0);
  out.dW1.assign(static_cast<std::size_t>(bundle.N) * Kc * bundle.m, 0.0);
  for (int k = 0; k < bundle.grid.K; ++k) {
    for (int c = 0; c < bundle.m0; ++c) out.dW0[static_cast<std::size_t>(k / factor) * bundle.m0 + c] += bundle.common(k)[c];
  }
  for (int i = 0; i < bundle.N; ++i) {
    for (int k = 0; k < bundle.grid.K; ++k) {
      const auto src = bundle.idio(i, k);
      double* dst = out.dW1.data() + (static_cast<std::size_t>(i) * Kc + k / factor) * bundle.m;
      for (int c = 0; c < bundle.m; ++c) dst[c] += src[c];
    }
  }
  return out;
}

NoiseBundle head(const NoiseBundle& bundle, int n) {
  if (n < 1 || n > bundle.N) fail(ErrorKind::ShapeMismatch, "head size out of range");
  NoiseBundle out = bundle;
  out.N = n;
  out.dW1.resize(static_cast<std::size_t>(n) * bundle.grid.K * bundle.m);
  return out;
}

std::vector<double> sample_initial(int N, int d, std::span<const double> mean, double std_dev, std::uint64_t seed) {
  if (static_cast<int>(mean.size()) != d) fail(ErrorKind::ShapeMismatch, "initial mean has wrong dimension");
  if (!(std_dev >= 0.0) || !std::isfinite(std_dev)) fail(ErrorKind::NonFiniteInput, "initial std must be finite");
  std::vector<double> x(static_cast<std::size_t>(N) * d);
  for (int i = 0; i < N; ++i) {
    std::span<double> row(x.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d));
    standard_normals(seed, StreamFamily::Initial, static_cast<std::uint64_t>(i), 0, row);
    for (int c = 0; c < d; ++c) row[c] = mean[c] + std_dev * row[c];
  }
  return x;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'V', 'C', 'N', 'N', 'O', 'I', 'S'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) fail(ErrorKind::Io, "truncated noise dump");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_bundle(const NoiseBundle& nb, std::ostream& os) {
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, nb.seed);
  put<double>(os, nb.grid.T);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(nb.grid.K));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(nb.N));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(nb.m0));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(nb.m));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(nb.family));
  put<std::uint64_t>(os, nb.first_stream);
  for (double e : nb.dW0) put<double>(os, e);
  for (double e : nb.dW1) put<double>(os, e);
  if (!os) fail(ErrorKind::Io, "failed to write noise dump");
}

NoiseBundle read_bundle(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    fail(ErrorKind::Io, "not a noise dump");
  }
  if (get<std::uint32_t>(is) != kVersion) fail(ErrorKind::Io, "unsupported noise dump version");
  NoiseBundle nb;
  nb.seed = get<std::uint64_t>(is);
  nb.grid.T = get<double>(is);
  nb.grid.K = static_cast<int>(get<std::uint64_t>(is));
  nb.N = static_cast<int>(get<std::uint64_t>(is));
  nb.m0 = static_cast<int>(get<std::uint32_t>(is));
  nb.m = static_cast<int>(get<std::uint32_t>(is));
  nb.family = static_cast<StreamFamily>(get<std::uint32_t>(is));
  nb.first_stream = get<std::uint64_t>(is);
  nb.grid.validate();
  nb.dW0.resize(static_cast<std::size_t>(nb.grid.K) * nb.m0);
  nb.dW1.resize(static_cast<std::size_t>(nb.N) * nb.grid.K * nb.m);
  for (double& e : nb.dW0) e = get<double>(is);
  for (double& e : nb.dW1) e = get<double>(is);
  return nb;
}

}  // namespace mvcn
