#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace wgscat {

using cplx = std::complex<double>;

inline constexpr const char* kVersion = "0.1.0";
// Bump to invalidate on-disk spectrum caches after solver changes.
inline constexpr int kCacheEpoch = 1;

// Domain violations (bad arguments, invalid configurations).
struct domain_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failures that the caller is expected to handle by changing
// the request (shift a grid point, refine a root, change a seed).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace wgscat
