#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace aeckit {

// Dense channel-major (C, H, W) tensor. For network features H is the time
// axis (frames) and W the frequency axis (bins).
template <typename T>
struct Tensor3 {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<T> data;

  Tensor3() = default;
  Tensor3(std::size_t c_, std::size_t h_, std::size_t w_, T fill = T{})
      : c(c_), h(h_), w(w_), data(c_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return h * w; }

  T& at(std::size_t ci, std::size_t y, std::size_t x) { return data[(ci * h + y) * w + x]; }
  const T& at(std::size_t ci, std::size_t y, std::size_t x) const { return data[(ci * h + y) * w + x]; }

  T* row(std::size_t ci, std::size_t y) { return data.data() + (ci * h + y) * w; }
  const T* row(std::size_t ci, std::size_t y) const { return data.data() + (ci * h + y) * w; }

  bool same_shape(const Tensor3& o) const noexcept { return c == o.c && h == o.h && w == o.w; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

}  // namespace aeckit
