#pragma once

// Internal direct-convolution kernels. Data is repacked NCHW -> NHWC so the
// innermost loops run FMA over a contiguous channel axis, which keeps the
// desk-scale spatial dims (2..32) from starving the vector units.
//
// Every parallel scheme below partitions disjoint output slices and keeps a
// fixed serial accumulation order inside each slice, so results are bitwise
// identical for any thread count.

#include <vector>

#include <omp.h>

namespace advnas {
namespace convk {

struct ConvGeom {
    int N;
    int Ci, Hi, Wi;
    int Co, Ho, Wo;
    int k, stride, dil, pad;
};

inline int conv_out_extent(int in, int k, int stride, int dil, int pad) {
    return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

template <typename T>
std::vector<T> nchw_to_nhwc(const T* src, int n, int c, int h, int w) {
    std::vector<T> out(static_cast<std::size_t>(n) * c * h * w);
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
            const T* s = src + (static_cast<std::size_t>(in) * c + ic) * h * w;
            T* d = out.data() + (static_cast<std::size_t>(in) * h * w) * c + ic;
            for (int i = 0; i < h * w; ++i) d[static_cast<std::size_t>(i) * c] = s[i];
        }
    return out;
}

template <typename T>
void nhwc_to_nchw(const T* src, T* dst, int n, int c, int h, int w) {
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
            const T* s = src + (static_cast<std::size_t>(in) * h * w) * c + ic;
            T* d = dst + (static_cast<std::size_t>(in) * c + ic) * h * w;
            for (int i = 0; i < h * w; ++i) d[i] = s[static_cast<std::size_t>(i) * c];
        }
}

template <typename T>
void nhwc_to_nchw_add(const T* src, T* dst, int n, int c, int h, int w) {
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
            const T* s = src + (static_cast<std::size_t>(in) * h * w) * c + ic;
            T* d = dst + (static_cast<std::size_t>(in) * c + ic) * h * w;
            for (int i = 0; i < h * w; ++i) d[i] += s[static_cast<std::size_t>(i) * c];
        }
}

// [Co,Ci,k,k] -> [k*k][Ci][Co]
template <typename T>
std::vector<T> pack_w_cico(const T* w, int co, int ci, int k) {
    std::vector<T> out(static_cast<std::size_t>(k) * k * ci * co);
    for (int oc = 0; oc < co; ++oc)
        for (int ic = 0; ic < ci; ++ic)
            for (int t = 0; t < k * k; ++t)
                out[(static_cast<std::size_t>(t) * ci + ic) * co + oc] =
                    w[(static_cast<std::size_t>(oc) * ci + ic) * k * k + t];
    return out;
}

// [Co,Ci,k,k] -> [k*k][Co][Ci]
template <typename T>
std::vector<T> pack_w_coci(const T* w, int co, int ci, int k) {
    std::vector<T> out(static_cast<std::size_t>(k) * k * ci * co);
    for (int oc = 0; oc < co; ++oc)
        for (int ic = 0; ic < ci; ++ic)
            for (int t = 0; t < k * k; ++t)
                out[(static_cast<std::size_t>(t) * co + oc) * ci + ic] =
                    w[(static_cast<std::size_t>(oc) * ci + ic) * k * k + t];
    return out;
}

// accumulate packed [k*k][Ci][Co] into [Co,Ci,k,k]
template <typename T>
void unpack_gw_add(const T* gwp, T* gw, int co, int ci, int k) {
    for (int oc = 0; oc < co; ++oc)
        for (int ic = 0; ic < ci; ++ic)
            for (int t = 0; t < k * k; ++t)
                gw[(static_cast<std::size_t>(oc) * ci + ic) * k * k + t] +=
                    gwp[(static_cast<std::size_t>(t) * ci + ic) * co + oc];
}

// x [N,Hi,Wi,Ci], w [k*k][Ci][Co] -> y [N,Ho,Wo,Co]
template <typename T>
void conv_fwd_nhwc(const T* x, const T* w, T* y, const ConvGeom& g, int nthreads) {
#pragma omp parallel for num_threads(nthreads) schedule(static)
    for (int n = 0; n < g.N; ++n) {
        std::vector<T> acc(static_cast<std::size_t>(g.Co));
        const T* xn = x + static_cast<std::size_t>(n) * g.Hi * g.Wi * g.Ci;
        T* yn = y + static_cast<std::size_t>(n) * g.Ho * g.Wo * g.Co;
        for (int oh = 0; oh < g.Ho; ++oh)
            for (int ow = 0; ow < g.Wo; ++ow) {
                std::fill(acc.begin(), acc.end(), T(0));
                for (int kh = 0; kh < g.k; ++kh) {
                    const int ih = oh * g.stride - g.pad + kh * g.dil;
                    if (ih < 0 || ih >= g.Hi) continue;
                    for (int kw = 0; kw < g.k; ++kw) {
                        const int iw = ow * g.stride - g.pad + kw * g.dil;
                        if (iw < 0 || iw >= g.Wi) continue;
                        const T* xrow = xn + (static_cast<std::size_t>(ih) * g.Wi + iw) * g.Ci;
                        const T* wtap = w + static_cast<std::size_t>(kh * g.k + kw) * g.Ci * g.Co;
                        for (int ci = 0; ci < g.Ci; ++ci) {
                            const T xv = xrow[ci];
                            const T* wrow = wtap + static_cast<std::size_t>(ci) * g.Co;
                            for (int co = 0; co < g.Co; ++co) acc[static_cast<std::size_t>(co)] += xv * wrow[co];
                        }
                    }
                }
                T* yrow = yn + (static_cast<std::size_t>(oh) * g.Wo + ow) * g.Co;
                for (int co = 0; co < g.Co; ++co) yrow[co] = acc[static_cast<std::size_t>(co)];
            }
    }
}

// gy [N,Ho,Wo,Co], wt [k*k][Co][Ci] -> gx [N,Hi,Wi,Ci]; gx must be zeroed.
template <typename T>
void conv_gx_nhwc(const T* gy, const T* wt, T* gx, const ConvGeom& g, int nthreads) {
#pragma omp parallel for num_threads(nthreads) schedule(static)
    for (int n = 0; n < g.N; ++n) {
        const T* gyn = gy + static_cast<std::size_t>(n) * g.Ho * g.Wo * g.Co;
        T* gxn = gx + static_cast<std::size_t>(n) * g.Hi * g.Wi * g.Ci;
        for (int oh = 0; oh < g.Ho; ++oh)
            for (int ow = 0; ow < g.Wo; ++ow) {
                const T* gyrow = gyn + (static_cast<std::size_t>(oh) * g.Wo + ow) * g.Co;
                for (int kh = 0; kh < g.k; ++kh) {
                    const int ih = oh * g.stride - g.pad + kh * g.dil;
                    if (ih < 0 || ih >= g.Hi) continue;
                    for (int kw = 0; kw < g.k; ++kw) {
                        const int iw = ow * g.stride - g.pad + kw * g.dil;
                        if (iw < 0 || iw >= g.Wi) continue;
                        T* gxrow = gxn + (static_cast<std::size_t>(ih) * g.Wi + iw) * g.Ci;
                        const T* wtap = wt + static_cast<std::size_t>(kh * g.k + kw) * g.Co * g.Ci;
                        for (int co = 0; co < g.Co; ++co) {
                            const T gv = gyrow[co];
                            const T* wrow = wtap + static_cast<std::size_t>(co) * g.Ci;
                            for (int ci = 0; ci < g.Ci; ++ci) gxrow[ci] += gv * wrow[ci];
                        }
                    }
                }
            }
    }
}

// x [N,Hi,Wi,Ci], gy [N,Ho,Wo,Co] -> gw [k*k][Ci][Co]; gw must be zeroed.
// Parallel over kernel taps: each thread owns whole gw slices and scans the
// batch in fixed order, keeping accumulation deterministic.
template <typename T>
void conv_gw_nhwc(const T* x, const T* gy, T* gw, const ConvGeom& g, int nthreads) {
    const int taps = g.k * g.k;
#pragma omp parallel for num_threads(nthreads) schedule(static)
    for (int t = 0; t < taps; ++t) {
        const int kh = t / g.k;
        const int kw = t % g.k;
        T* gwt = gw + static_cast<std::size_t>(t) * g.Ci * g.Co;
        for (int n = 0; n < g.N; ++n) {
            const T* xn = x + static_cast<std::size_t>(n) * g.Hi * g.Wi * g.Ci;
            const T* gyn = gy + static_cast<std::size_t>(n) * g.Ho * g.Wo * g.Co;
            for (int oh = 0; oh < g.Ho; ++oh) {
                const int ih = oh * g.stride - g.pad + kh * g.dil;
                if (ih < 0 || ih >= g.Hi) continue;
                for (int ow = 0; ow < g.Wo; ++ow) {
                    const int iw = ow * g.stride - g.pad + kw * g.dil;
                    if (iw < 0 || iw >= g.Wi) continue;
                    const T* xrow = xn + (static_cast<std::size_t>(ih) * g.Wi + iw) * g.Ci;
                    const T* gyrow = gyn + (static_cast<std::size_t>(oh) * g.Wo + ow) * g.Co;
                    for (int ci = 0; ci < g.Ci; ++ci) {
                        const T xv = xrow[ci];
                        T* grow = gwt + static_cast<std::size_t>(ci) * g.Co;
                        for (int co = 0; co < g.Co; ++co) grow[co] += xv * gyrow[co];
                    }
                }
            }
        }
    }
}

} // namespace convk
} // namespace advnas
