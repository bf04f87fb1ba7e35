#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace screening {

template <typename T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using Vec = VecT<double>;
using Mat = MatT<double>;

/// Extended precision used where high-order finite differences amplify rounding.
using Ext = long double;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Reserved stand-in for a +infinity price; always paired with an explicit flag.
inline constexpr double kPriceSentinel = 1e18;

// ---------------------------------------------------------------------------
// Errors

class ScreeningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfDomain : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class NotInRange : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class NoConvergence : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class DomainClipped : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class NotMonotone : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class MaxIterations : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class TooLarge : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class ConfigError : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

class CertificateRefused : public ScreeningError {
 public:
  using ScreeningError::ScreeningError;
};

// ---------------------------------------------------------------------------
// Small helpers

template <typename To, typename From>
VecT<To> cast_vec(const VecT<From>& v) {
  return v.template cast<To>();
}

inline double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// splitmix64 step; used to derive independent per-index seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t index_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(mix_seed(seed) ^ (index * 0xd1b54a32d192ed03ULL));
}

/// Radical inverse in the given base: the Halton coordinate of `index`.
inline double radical_inverse(std::uint64_t index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

inline constexpr unsigned kHaltonPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

/// Point of the Halton sequence in [0,1)^dim (dim <= 12).
inline Vec halton_point(std::uint64_t index, int dim, int offset = 0) {
  Vec p(dim);
  for (int k = 0; k < dim; ++k) {
    p[k] = radical_inverse(index, kHaltonPrimes[(k + offset) % 12]);
  }
  return p;
}

}  // namespace screening
