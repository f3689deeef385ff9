#pragma once

#include <cstddef>
#include <vector>

#include "uuconv/tensor.hpp"

namespace uuconv {

// Differentiable ops. Every op validates shapes, computes the forward value
// and, when `tape` is non-null and some input requires grad, records a
// backward rule. Passing tape == nullptr gives a pure inference evaluation
// with bit-identical values.

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double factor);

// input [N,Cin,H,W], weight [Cout,Cin/groups,kH,kW], optional bias [Cout]
// (pass a default-constructed Tensor for no bias). Zero padding.
Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias, std::size_t stride, std::size_t padding,
              std::size_t groups = 1);

// input [..., Din], weight [Dout, Din], bias [Dout]:
// out = input . weight^T + bias over the trailing axis.
Tensor linear(Tape* tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias);

// Normalizes the trailing axis with the population (1/C) variance.
Tensor layer_norm(Tape* tape, const Tensor& input, const Tensor& gamma,
                  const Tensor& beta, double eps);

// Exact erf-based GELU: x * Phi(x).
Tensor gelu(Tape* tape, const Tensor& input);

// Max-subtracted softmax along `axis`.
Tensor softmax(Tape* tape, const Tensor& input, std::size_t axis);

// Adaptive average pooling: bin b covers input rows
// [floor(b*H/out_h), ceil((b+1)*H/out_h)).
Tensor pool_avg2d(Tape* tape, const Tensor& input, std::size_t out_h,
                  std::size_t out_w);

// Bilinear upsampling, align_corners=false convention
// (source coordinate (i+0.5)*scale - 0.5, clamped). Upscale only.
Tensor upsample_bilinear(Tape* tape, const Tensor& input, std::size_t out_h,
                         std::size_t out_w);

// x [N,C,H,W] plus a per-channel offset v of shape [C] or [N,C].
Tensor broadcast_add_channels(Tape* tape, const Tensor& x, const Tensor& v);

// x [..., C] scaled per channel by v [C] (ConvNeXt layer scale).
Tensor scale_channels_last(Tape* tape, const Tensor& x, const Tensor& v);

Tensor concat(Tape* tape, const std::vector<Tensor>& tensors,
              std::size_t axis);
Tensor slice(Tape* tape, const Tensor& input, std::size_t axis,
             std::size_t start, std::size_t length);

// order is a permutation of axis indices; out axis i = in axis order[i].
Tensor permute(Tape* tape, const Tensor& input,
               const std::vector<std::size_t>& order);
Tensor reshape(Tape* tape, const Tensor& input, Shape new_shape);

// [N,C,H,W] -> [N,C] spatial mean.
Tensor global_avg_pool(Tape* tape, const Tensor& input);

// Gathers rows along axis 0; used for sub-batch dispatch.
Tensor select_rows(Tape* tape, const Tensor& input,
                   const std::vector<std::size_t>& rows);

Tensor sum_all(Tape* tape, const Tensor& input);

// Plain dense kernels shared by the ops (exposed for reuse/benchmarks).
namespace detail {
// c[m,n] += a[m,k] * b[k,n]
void gemm_ab(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k);
// c[m,n] += a[m,k] * b[n,k]^T
void gemm_abt(const double* a, const double* b, double* c, std::size_t m,
              std::size_t n, std::size_t k);
// c[m,n] += a[k,m]^T * b[k,n]
void gemm_atb(const double* a, const double* b, double* c, std::size_t m,
              std::size_t n, std::size_t k);
}  // namespace detail

}  // namespace uuconv
