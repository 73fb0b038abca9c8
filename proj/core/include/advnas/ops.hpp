#pragma once

#include "advnas/tensor.hpp"

namespace advnas {
namespace ops {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a); // subgradient at 0 is 0
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a); // log(1+exp(x)), stable over [-80, 80] and beyond
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

// ---- reductions / shape ----
Tensor sum(const Tensor& a);  // rank-0 scalar
Tensor mean(const Tensor& a); // rank-0 scalar
Tensor reshape(const Tensor& a, std::vector<int> shape);
// [N,C,H,W] -> [N,C], summing over the spatial extent
Tensor global_sum_pool(const Tensor& x);

// ---- softmax family ----
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

// ---- scalar plumbing for mixture weights ----
// v[i] as a rank-0 tensor (differentiable scatter on backward)
Tensor index_entry(const Tensor& v, int i);
// x * s where s is a rank-0 tensor (differentiable in both)
Tensor scale_by(const Tensor& x, const Tensor& s);

// ---- dense / conv kernels ----
// y = x @ w + b; x [N,Din], w [Din,Dout], optional b [Dout]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

// x [N,C,H,W], w [Co,C,k,k]; zero padding; k in {1,3,5}, dilation in {1,2},
// stride in {1,2}. H' = (H + 2p - d(k-1) - 1)/s + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int dilation, int padding);

// x [N,Ca,H,W], w [Ca,Cb,3,3], stride in {2,4}; output [N,Cb,sH,sW].
// Exact adjoint of conv2d(k=3, dilation=1, stride=s, padding = s==2 ? 1 : 0):
// <conv2d(x,w,...), y> == <x, transposed_conv2d(y,w,s)>.
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, int stride);

enum class InterpMode { Nearest, Bilinear };
// scale in {2,4}. Nearest replicates source pixels (floor division mapping).
// Bilinear is corner-aligned: output corners map exactly onto input corners;
// a 1-pixel input axis degenerates to replication.
Tensor interpolate(const Tensor& x, int scale, InterpMode mode);

enum class PoolKind { Avg, Max };
// 2x2 window, stride 2, even spatial dims required. Max backward routes the
// gradient to the argmax position; ties break toward the lowest linear index.
Tensor pool2d(const Tensor& x, PoolKind kind);

} // namespace ops
} // namespace advnas
