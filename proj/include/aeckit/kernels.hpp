#pragma once

// Data-parallel kernels of the network's convolutional front end.
//
// Every kernel exists twice: `serial::` is the straightforward reference and
// `omp::` distributes independent output rows or channels over OpenMP
// threads. Both variants perform the same floating-point operations in the
// same order per output element, so results are bit-identical for any
// thread count.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "aeckit/tensor.hpp"

namespace aeckit::kernels {

namespace serial {

// 3x3 convolution, stride 1, zero "same" padding. weights: [out_c][in_c][3][3].
template <typename T>
void conv3x3_forward(const Tensor3<T>& in, const std::vector<T>& weights, const std::vector<T>& bias,
                     Tensor3<T>& out);

// Accumulates (+=) weight and bias gradients.
template <typename T>
void conv3x3_backward_params(const Tensor3<T>& in, const Tensor3<T>& dout, std::vector<T>& dweights,
                             std::vector<T>& dbias);

// Overwrites din with the gradient w.r.t. the convolution input.
template <typename T>
void conv3x3_backward_input(const Tensor3<T>& dout, const std::vector<T>& weights, Tensor3<T>& din);

// 2x2 max pooling, floor semantics. argmax holds the flat input index of each
// output; ties go to the first element in row-major window order.
template <typename T>
void maxpool2x2_forward(const Tensor3<T>& in, Tensor3<T>& out, std::vector<std::uint32_t>& argmax);

template <typename T>
void maxpool2x2_backward(const Tensor3<T>& dout, const std::vector<std::uint32_t>& argmax, Tensor3<T>& din);

template <typename T>
void leaky_relu_forward(const Tensor3<T>& in, T slope, Tensor3<T>& out);

// dout *= (pre > 0 ? 1 : slope), in place.
template <typename T>
void leaky_relu_backward(const Tensor3<T>& pre, T slope, Tensor3<T>& dout);

}  // namespace serial

namespace omp {

template <typename T>
void conv3x3_forward(const Tensor3<T>& in, const std::vector<T>& weights, const std::vector<T>& bias,
                     Tensor3<T>& out);

template <typename T>
void conv3x3_backward_params(const Tensor3<T>& in, const Tensor3<T>& dout, std::vector<T>& dweights,
                             std::vector<T>& dbias);

template <typename T>
void conv3x3_backward_input(const Tensor3<T>& dout, const std::vector<T>& weights, Tensor3<T>& din);

template <typename T>
void maxpool2x2_forward(const Tensor3<T>& in, Tensor3<T>& out, std::vector<std::uint32_t>& argmax);

template <typename T>
void maxpool2x2_backward(const Tensor3<T>& dout, const std::vector<std::uint32_t>& argmax, Tensor3<T>& din);

template <typename T>
void leaky_relu_forward(const Tensor3<T>& in, T slope, Tensor3<T>& out);

template <typename T>
void leaky_relu_backward(const Tensor3<T>& pre, T slope, Tensor3<T>& dout);

}  // namespace omp

}  // namespace aeckit::kernels
