#pragma once

#include <complex>
#include <cstddef>

namespace aeckit::detail {

// Thin wrapper over a cached FFTW plan pair. Plans are created once per size
// under a lock; execution uses FFTW's new-array interface and is thread-safe.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  std::size_t size() const noexcept { return n_; }

  // in: n reals; out: n/2+1 bins.
  void forward(const double* in, std::complex<double>* out) const;
  // in: n/2+1 bins (copied, not modified); out: n reals, unnormalised.
  void inverse(const std::complex<double>* in, double* out) const;

 private:
  std::size_t n_;
  void* r2c_;
  void* c2r_;
};

}  // namespace aeckit::detail
