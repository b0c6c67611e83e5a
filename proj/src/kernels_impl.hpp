#pragma once

// Shared bodies for the serial and OpenMP kernel variants. Parallel == true
// only adds work-sharing pragmas around loops whose iterations write disjoint
// outputs; the per-element arithmetic is identical.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "aeckit/error.hpp"
#include "aeckit/tensor.hpp"

namespace aeckit::kernels::detail {

template <typename T>
void conv_out_row(const Tensor3<T>& in, const T* w_o, T bias, std::size_t y, T* __restrict out) {
  const std::size_t W = in.w;
  const std::size_t H = in.h;
  for (std::size_t x = 0; x < W; ++x) out[x] = bias;
  for (std::size_t c = 0; c < in.c; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      if (y + ky < 1 || y + ky - 1 >= H) continue;
      const T* __restrict src = in.row(c, y + ky - 1);
      const T* wk = w_o + (c * 3 + ky) * 3;
      const T w0 = wk[0], w1 = wk[1], w2 = wk[2];
      if (W == 1) {
        out[0] += w1 * src[0];
        continue;
      }
      out[0] += w1 * src[0] + w2 * src[1];
      for (std::size_t x = 1; x + 1 < W; ++x) out[x] += w0 * src[x - 1] + w1 * src[x] + w2 * src[x + 1];
      out[W - 1] += w0 * src[W - 2] + w1 * src[W - 1];
    }
  }
}

template <bool Parallel, typename T>
void conv3x3_forward(const Tensor3<T>& in, const std::vector<T>& weights, const std::vector<T>& bias,
                     Tensor3<T>& out) {
  const std::size_t oc = bias.size();
  if (weights.size() != oc * in.c * 9) throw Error(ErrorCode::ShapeMismatch, "conv weight size");
  if (out.c != oc || out.h != in.h || out.w != in.w) out = Tensor3<T>(oc, in.h, in.w);
  const auto rows = static_cast<std::ptrdiff_t>(oc * in.h);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto o = static_cast<std::size_t>(i) / in.h;
    const auto y = static_cast<std::size_t>(i) % in.h;
    conv_out_row(in, weights.data() + o * in.c * 9, bias[o], y, out.row(o, y));
  }
}

template <bool Parallel, typename T>
void conv3x3_backward_params(const Tensor3<T>& in, const Tensor3<T>& dout, std::vector<T>& dweights,
                             std::vector<T>& dbias) {
  const std::size_t oc = dout.c;
  const std::size_t W = in.w;
  const std::size_t H = in.h;
  if (dweights.size() != oc * in.c * 9 || dbias.size() != oc || dout.h != H || dout.w != W)
    throw Error(ErrorCode::ShapeMismatch, "conv gradient buffers");
#pragma omp parallel if (Parallel)
  {
    std::vector<T> a0(W), a1(W), a2(W);
#pragma omp for schedule(static)
    for (std::ptrdiff_t oi = 0; oi < static_cast<std::ptrdiff_t>(oc); ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      std::fill(a1.begin(), a1.end(), T{});
      for (std::size_t y = 0; y < H; ++y) {
        const T* d = dout.row(o, y);
        for (std::size_t x = 0; x < W; ++x) a1[x] += d[x];
      }
      T bsum{};
      for (std::size_t x = 0; x < W; ++x) bsum += a1[x];
      dbias[o] += bsum;

      for (std::size_t c = 0; c < in.c; ++c) {
        for (std::size_t ky = 0; ky < 3; ++ky) {
          std::fill(a0.begin(), a0.end(), T{});
          std::fill(a1.begin(), a1.end(), T{});
          std::fill(a2.begin(), a2.end(), T{});
          for (std::size_t y = 0; y < H; ++y) {
            if (y + ky < 1 || y + ky - 1 >= H) continue;
            const T* __restrict d = dout.row(o, y);
            const T* __restrict src = in.row(c, y + ky - 1);
            for (std::size_t x = 1; x < W; ++x) a0[x] += d[x] * src[x - 1];
            for (std::size_t x = 0; x < W; ++x) a1[x] += d[x] * src[x];
            for (std::size_t x = 0; x + 1 < W; ++x) a2[x] += d[x] * src[x + 1];
          }
          T s0{}, s1{}, s2{};
          for (std::size_t x = 0; x < W; ++x) {
            s0 += a0[x];
            s1 += a1[x];
            s2 += a2[x];
          }
          T* dw = dweights.data() + ((o * in.c + c) * 3 + ky) * 3;
          dw[0] += s0;
          dw[1] += s1;
          dw[2] += s2;
        }
      }
    }
  }
}

template <bool Parallel, typename T>
void conv3x3_backward_input(const Tensor3<T>& dout, const std::vector<T>& weights, Tensor3<T>& din) {
  const std::size_t oc = dout.c;
  const std::size_t W = dout.w;
  const std::size_t H = dout.h;
  if (oc == 0 || weights.size() % (oc * 9) != 0) throw Error(ErrorCode::ShapeMismatch, "conv weight size");
  const std::size_t ic = weights.size() / (oc * 9);
  if (din.c != ic || din.h != H || din.w != W) din = Tensor3<T>(ic, H, W);
  const auto rows = static_cast<std::ptrdiff_t>(ic * H);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto c = static_cast<std::size_t>(i) / H;
    const auto y = static_cast<std::size_t>(i) % H;
    T* __restrict out = din.row(c, y);
    std::fill(out, out + W, T{});
    for (std::size_t o = 0; o < oc; ++o) {
      for (std::size_t ky = 0; ky < 3; ++ky) {
        // input row y feeds output row y - ky + 1
        if (y + 1 < ky || y + 1 - ky >= H) continue;
        const T* __restrict d = dout.row(o, y + 1 - ky);
        const T* wk = weights.data() + ((o * ic + c) * 3 + ky) * 3;
        const T w0 = wk[0], w1 = wk[1], w2 = wk[2];
        if (W == 1) {
          out[0] += w1 * d[0];
          continue;
        }
        out[0] += w0 * d[1] + w1 * d[0];
        for (std::size_t x = 1; x + 1 < W; ++x) out[x] += w0 * d[x + 1] + w1 * d[x] + w2 * d[x - 1];
        out[W - 1] += w1 * d[W - 1] + w2 * d[W - 2];
      }
    }
  }
}

template <bool Parallel, typename T>
void maxpool2x2_forward(const Tensor3<T>& in, Tensor3<T>& out, std::vector<std::uint32_t>& argmax) {
  const std::size_t oh = in.h / 2, ow = in.w / 2;
  if (oh == 0 || ow == 0) throw Error(ErrorCode::ShapeMismatch, "max pool input smaller than 2x2");
  if (out.c != in.c || out.h != oh || out.w != ow) out = Tensor3<T>(in.c, oh, ow);
  argmax.resize(out.size());
  const auto rows = static_cast<std::ptrdiff_t>(in.c * oh);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto c = static_cast<std::size_t>(i) / oh;
    const auto y = static_cast<std::size_t>(i) % oh;
    for (std::size_t x = 0; x < ow; ++x) {
      std::size_t best = (c * in.h + 2 * y) * in.w + 2 * x;
      const std::size_t cand[3] = {best + 1, best + in.w, best + in.w + 1};
      for (std::size_t k : cand)
        if (in.data[k] > in.data[best]) best = k;
      const std::size_t oidx = (c * oh + y) * ow + x;
      out.data[oidx] = in.data[best];
      argmax[oidx] = static_cast<std::uint32_t>(best);
    }
  }
}

template <bool Parallel, typename T>
void maxpool2x2_backward(const Tensor3<T>& dout, const std::vector<std::uint32_t>& argmax, Tensor3<T>& din) {
  if (argmax.size() != dout.size()) throw Error(ErrorCode::ShapeMismatch, "max pool argmax size");
  std::fill(din.data.begin(), din.data.end(), T{});
  // Windows do not overlap, so every input index is written by at most one output.
  const auto n = static_cast<std::ptrdiff_t>(dout.size());
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) din.data[argmax[static_cast<std::size_t>(i)]] = dout.data[static_cast<std::size_t>(i)];
}

template <bool Parallel, typename T>
void leaky_relu_forward(const Tensor3<T>& in, T slope, Tensor3<T>& out) {
  if (!out.same_shape(in)) out = Tensor3<T>(in.c, in.h, in.w);
  const auto n = static_cast<std::ptrdiff_t>(in.size());
  const T* src = in.data.data();
  T* dst = out.data.data();
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = src[i] > T{} ? src[i] : slope * src[i];
}

template <bool Parallel, typename T>
void leaky_relu_backward(const Tensor3<T>& pre, T slope, Tensor3<T>& dout) {
  if (!dout.same_shape(pre)) throw Error(ErrorCode::ShapeMismatch, "leaky relu gradient shape");
  const auto n = static_cast<std::ptrdiff_t>(pre.size());
  const T* p = pre.data.data();
  T* d = dout.data.data();
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = p[i] > T{} ? d[i] : slope * d[i];
}

}  // namespace aeckit::kernels::detail

#define AECKIT_INSTANTIATE_KERNELS(NS, PAR, T)                                                          \
  namespace aeckit::kernels::NS {                                                                       \
  template <>                                                                                           \
  void conv3x3_forward<T>(const Tensor3<T>& in, const std::vector<T>& w, const std::vector<T>& b,       \
                          Tensor3<T>& out) {                                                            \
    detail::conv3x3_forward<PAR>(in, w, b, out);                                                        \
  }                                                                                                     \
  template <>                                                                                           \
  void conv3x3_backward_params<T>(const Tensor3<T>& in, const Tensor3<T>& dout, std::vector<T>& dw,     \
                                  std::vector<T>& db) {                                                 \
    detail::conv3x3_backward_params<PAR>(in, dout, dw, db);                                             \
  }                                                                                                     \
  template <>                                                                                           \
  void conv3x3_backward_input<T>(const Tensor3<T>& dout, const std::vector<T>& w, Tensor3<T>& din) {    \
    detail::conv3x3_backward_input<PAR>(dout, w, din);                                                  \
  }                                                                                                     \
  template <>                                                                                           \
  void maxpool2x2_forward<T>(const Tensor3<T>& in, Tensor3<T>& out, std::vector<std::uint32_t>& am) {   \
    detail::maxpool2x2_forward<PAR>(in, out, am);                                                       \
  }                                                                                                     \
  template <>                                                                                           \
  void maxpool2x2_backward<T>(const Tensor3<T>& dout, const std::vector<std::uint32_t>& am,             \
                              Tensor3<T>& din) {                                                        \
    detail::maxpool2x2_backward<PAR>(dout, am, din);                                                    \
  }                                                                                                     \
  template <>                                                                                           \
  void leaky_relu_forward<T>(const Tensor3<T>& in, T slope, Tensor3<T>& out) {                          \
    detail::leaky_relu_forward<PAR>(in, slope, out);                                                    \
  }                                                                                                     \
  template <>                                                                                           \
  void leaky_relu_backward<T>(const Tensor3<T>& pre, T slope, Tensor3<T>& dout) {                       \
    detail::leaky_relu_backward<PAR>(pre, slope, dout);                                                 \
  }                                                                                                     \
  }
