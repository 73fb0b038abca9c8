#include "advnas/ops.hpp"

#include "conv_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace advnas {
namespace ops {

namespace {

template <class F>
decltype(auto) dispatch(DType dt, F&& f) {
    if (dt == DType::F32) return f.template operator()<float>();
    return f.template operator()<double>();
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw ContractError(std::string(op) + ": dtype mismatch");
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                             " vs " + shape_to_string(b.shape()));
}

// out = f(a) elementwise; backward adds g(x, y, gy) into a's grad.
template <class FV, class FG>
Tensor unary_op(const Tensor& a, const char* name, FV fval, FG fgrad) {
    Tensor out = make_node(a.shape(), a.dtype(), {a}, name, [fgrad](TensorImpl& self) {
        TensorImpl* x = self.parents[0].get();
        if (!x->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            auto xs = x->val<T>();
            auto ys = self.val<T>();
            auto gy = self.grd<T>();
            auto gx = x->grd<T>();
            for (std::size_t i = 0; i < xs.size(); ++i)
                gx[i] += static_cast<T>(fgrad(static_cast<double>(xs[i]), static_cast<double>(ys[i]),
                                              static_cast<double>(gy[i])));
        });
    });
    dispatch(a.dtype(), [&]<class T>() {
        auto xs = a.values<T>();
        auto ys = out.values_mut<T>();
        for (std::size_t i = 0; i < xs.size(); ++i)
            ys[i] = static_cast<T>(fval(static_cast<double>(xs[i])));
    });
    return out;
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same(a, b, "add");
    Tensor out = make_node(a.shape(), a.dtype(), {a, b}, "add", [](TensorImpl& self) {
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            for (int p = 0; p < 2; ++p) {
                TensorImpl* in = self.parents[static_cast<std::size_t>(p)].get();
                if (!in->needs_grad) continue;
                auto g = in->grd<T>();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
            }
        });
    });
    dispatch(a.dtype(), [&]<class T>() {
        auto as = a.values<T>();
        auto bs = b.values<T>();
        auto ys = out.values_mut<T>();
        for (std::size_t i = 0; i < as.size(); ++i) ys[i] = as[i] + bs[i];
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same(a, b, "sub");
    Tensor out = make_node(a.shape(), a.dtype(), {a, b}, "sub", [](TensorImpl& self) {
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            TensorImpl* pa = self.parents[0].get();
            TensorImpl* pb = self.parents[1].get();
            if (pa->needs_grad) {
                auto g = pa->grd<T>();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
            }
            if (pb->needs_grad) {
                auto g = pb->grd<T>();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
            }
        });
    });
    dispatch(a.dtype(), [&]<class T>() {
        auto as = a.values<T>();
        auto bs = b.values<T>();
        auto ys = out.values_mut<T>();
        for (std::size_t i = 0; i < as.size(); ++i) ys[i] = as[i] - bs[i];
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same(a, b, "mul");
    Tensor out = make_node(a.shape(), a.dtype(), {a, b}, "mul", [](TensorImpl& self) {
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            TensorImpl* pa = self.parents[0].get();
            TensorImpl* pb = self.parents[1].get();
            auto as = pa->val<T>();
            auto bs = pb->val<T>();
            if (pa->needs_grad) {
                auto g = pa->grd<T>();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * bs[i];
            }
            if (pb->needs_grad) {
                auto g = pb->grd<T>();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * as[i];
            }
        });
    });
    dispatch(a.dtype(), [&]<class T>() {
        auto as = a.values<T>();
        auto bs = b.values<T>();
        auto ys = out.values_mut<T>();
        for (std::size_t i = 0; i < as.size(); ++i) ys[i] = as[i] * bs[i];
    });
    return out;
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(
        a, "scale", [c](double x) { return c * x; },
        [c](double, double, double gy) { return c * gy; });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(
        a, "add_scalar", [c](double x) { return x + c; },
        [](double, double, double gy) { return gy; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double, double gy) { return x > 0.0 ? gy : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y, double gy) { return (1.0 - y * y) * gy; });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        a, "softplus",
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double, double gy) {
            const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            return s * gy;
        });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a, "log", [](double x) { return std::log(x); },
        [](double x, double, double gy) { return gy / x; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, "exp", [](double x) { return std::exp(x); },
        [](double, double y, double gy) { return y * gy; });
}

Tensor sum(const Tensor& a) {
    Tensor out = make_node({}, a.dtype(), {a}, "sum", [](TensorImpl& self) {
        TensorImpl* x = self.parents[0].get();
        if (!x->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            const T g = self.grd<T>()[0];
            auto gx = x->grd<T>();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    });
    dispatch(a.dtype(), [&]<class T>() {
        auto xs = a.values<T>();
        T acc = 0;
        for (T v : xs) acc += v;
        out.values_mut<T>()[0] = acc;
    });
    return out;
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = make_node({}, a.dtype(), {a}, "mean", [inv](TensorImpl& self) {
        TensorImpl* x = self.parents[0].get();
        if (!x->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            const T g = static_cast<T>(static_cast<double>(self.grd<T>()[0]) * inv);
            auto gx = x->grd<T>();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    });
    dispatch(a.dtype(), [&]<class T>() {
        auto xs = a.values<T>();
        T acc = 0;
        for (T v : xs) acc += v;
        out.values_mut<T>()[0] = static_cast<T>(static_cast<double>(acc) * inv);
    });
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                             shape_to_string(shape));
    Tensor out = make_node(std::move(shape), a.dtype(), {a}, "reshape", [](TensorImpl& self) {
        TensorImpl* x = self.parents[0].get();
        if (!x->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            auto gx = x->grd<T>();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
        });
    });
    dispatch(a.dtype(), [&]<class T>() {
        auto xs = a.values<T>();
        auto ys = out.values_mut<T>();
        std::copy(xs.begin(), xs.end(), ys.begin());
    });
    return out;
}

Tensor global_sum_pool(const Tensor& x) {
    if (x.shape().size() != 4) throw DimensionError("global_sum_pool: expected rank-4 input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = make_node({N, C}, x.dtype(), {x}, "global_sum_pool", [H, W](TensorImpl& self) {
        TensorImpl* in = self.parents[0].get();
        if (!in->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            auto gx = in->grd<T>();
            const std::size_t hw = static_cast<std::size_t>(H) * W;
            for (std::size_t nc = 0; nc < gy.size(); ++nc)
                for (std::size_t i = 0; i < hw; ++i) gx[nc * hw + i] += gy[nc];
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        auto xs = x.values<T>();
        auto ys = out.values_mut<T>();
        const std::size_t hw = static_cast<std::size_t>(H) * W;
        for (std::size_t nc = 0; nc < ys.size(); ++nc) {
            T acc = 0;
            for (std::size_t i = 0; i < hw; ++i) acc += xs[nc * hw + i];
            ys[nc] = acc;
        }
    });
    return out;
}

namespace {

struct AxisSpan {
    std::int64_t outer, len, inner;
};

AxisSpan axis_span(const std::vector<int>& shape, int axis, const char* op) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw ContractError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                            shape_to_string(shape));
    AxisSpan s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

} // namespace

Tensor softmax(const Tensor& x, int axis) {
    const AxisSpan sp = axis_span(x.shape(), axis, "softmax");
    Tensor out = make_node(x.shape(), x.dtype(), {x}, "softmax", [sp](TensorImpl& self) {
        TensorImpl* in = self.parents[0].get();
        if (!in->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            auto y = self.val<T>();
            auto gy = self.grd<T>();
            auto gx = in->grd<T>();
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t i = 0; i < sp.inner; ++i) {
                    const std::int64_t base = (o * sp.len) * sp.inner + i;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < sp.len; ++j) {
                        const std::int64_t p = base + j * sp.inner;
                        dot += static_cast<double>(gy[static_cast<std::size_t>(p)]) *
                               static_cast<double>(y[static_cast<std::size_t>(p)]);
                    }
                    for (std::int64_t j = 0; j < sp.len; ++j) {
                        const std::int64_t p = base + j * sp.inner;
                        gx[static_cast<std::size_t>(p)] += static_cast<T>(
                            static_cast<double>(y[static_cast<std::size_t>(p)]) *
                            (static_cast<double>(gy[static_cast<std::size_t>(p)]) - dot));
                    }
                }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        auto xs = x.values<T>();
        auto ys = out.values_mut<T>();
        for (std::int64_t o = 0; o < sp.outer; ++o)
            for (std::int64_t i = 0; i < sp.inner; ++i) {
                const std::int64_t base = (o * sp.len) * sp.inner + i;
                double m = -HUGE_VAL;
                for (std::int64_t j = 0; j < sp.len; ++j)
                    m = std::max(m, static_cast<double>(xs[static_cast<std::size_t>(base + j * sp.inner)]));
                double z = 0.0;
                for (std::int64_t j = 0; j < sp.len; ++j) {
                    const std::int64_t p = base + j * sp.inner;
                    const double e = std::exp(static_cast<double>(xs[static_cast<std::size_t>(p)]) - m);
                    ys[static_cast<std::size_t>(p)] = static_cast<T>(e);
                    z += e;
                }
                for (std::int64_t j = 0; j < sp.len; ++j) {
                    const std::int64_t p = base + j * sp.inner;
                    ys[static_cast<std::size_t>(p)] = static_cast<T>(static_cast<double>(ys[static_cast<std::size_t>(p)]) / z);
                }
            }
    });
    return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
    const AxisSpan sp = axis_span(x.shape(), axis, "log_softmax");
    Tensor out = make_node(x.shape(), x.dtype(), {x}, "log_softmax", [sp](TensorImpl& self) {
        TensorImpl* in = self.parents[0].get();
        if (!in->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            auto y = self.val<T>();
            auto gy = self.grd<T>();
            auto gx = in->grd<T>();
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t i = 0; i < sp.inner; ++i) {
                    const std::int64_t base = (o * sp.len) * sp.inner + i;
                    double gsum = 0.0;
                    for (std::int64_t j = 0; j < sp.len; ++j)
                        gsum += static_cast<double>(gy[static_cast<std::size_t>(base + j * sp.inner)]);
                    for (std::int64_t j = 0; j < sp.len; ++j) {
                        const std::int64_t p = base + j * sp.inner;
                        gx[static_cast<std::size_t>(p)] += static_cast<T>(
                            static_cast<double>(gy[static_cast<std::size_t>(p)]) -
                            std::exp(static_cast<double>(y[static_cast<std::size_t>(p)])) * gsum);
                    }
                }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        auto xs = x.values<T>();
        auto ys = out.values_mut<T>();
        for (std::int64_t o = 0; o < sp.outer; ++o)
            for (std::int64_t i = 0; i < sp.inner; ++i) {
                const std::int64_t base = (o * sp.len) * sp.inner + i;
                double m = -HUGE_VAL;
                for (std::int64_t j = 0; j < sp.len; ++j)
                    m = std::max(m, static_cast<double>(xs[static_cast<std::size_t>(base + j * sp.inner)]));
                double z = 0.0;
                for (std::int64_t j = 0; j < sp.len; ++j)
                    z += std::exp(static_cast<double>(xs[static_cast<std::size_t>(base + j * sp.inner)]) - m);
                const double lz = m + std::log(z);
                for (std::int64_t j = 0; j < sp.len; ++j) {
                    const std::int64_t p = base + j * sp.inner;
                    ys[static_cast<std::size_t>(p)] = static_cast<T>(static_cast<double>(xs[static_cast<std::size_t>(p)]) - lz);
                }
            }
    });
    return out;
}

Tensor index_entry(const Tensor& v, int i) {
    if (v.shape().size() != 1) throw DimensionError("index_entry: expected rank-1 tensor");
    if (i < 0 || i >= v.dim(0)) throw ContractError("index_entry: index out of range");
    Tensor out = make_node({}, v.dtype(), {v}, "index_entry", [i](TensorImpl& self) {
        TensorImpl* in = self.parents[0].get();
        if (!in->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            in->grd<T>()[static_cast<std::size_t>(i)] += self.grd<T>()[0];
        });
    });
    dispatch(v.dtype(), [&]<class T>() { out.values_mut<T>()[0] = v.values<T>()[static_cast<std::size_t>(i)]; });
    return out;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw DimensionError("scale_by: scale must be a scalar tensor");
    if (s.dtype() != x.dtype()) throw ContractError("scale_by: dtype mismatch");
    Tensor out = make_node(x.shape(), x.dtype(), {x, s}, "scale_by", [](TensorImpl& self) {
        TensorImpl* px = self.parents[0].get();
        TensorImpl* ps = self.parents[1].get();
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            const T sv = ps->val<T>()[0];
            if (px->needs_grad) {
                auto gx = px->grd<T>();
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * sv;
            }
            if (ps->needs_grad) {
                auto xs = px->val<T>();
                double acc = 0.0;
                for (std::size_t i = 0; i < xs.size(); ++i)
                    acc += static_cast<double>(gy[i]) * static_cast<double>(xs[i]);
                ps->grd<T>()[0] += static_cast<T>(acc);
            }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        auto xs = x.values<T>();
        auto ys = out.values_mut<T>();
        const T sv = s.values<T>()[0];
        for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] * sv;
    });
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2)
        throw DimensionError("linear: expected x [N,Din] and w [Din,Dout]");
    if (x.dim(1) != w.dim(0))
        throw DimensionError("linear: x " + shape_to_string(x.shape()) + " incompatible with w " +
                             shape_to_string(w.shape()));
    const int N = x.dim(0), Din = x.dim(1), Dout = w.dim(1);
    const bool has_bias = b.defined();
    if (has_bias && (b.shape().size() != 1 || b.dim(0) != Dout))
        throw DimensionError("linear: bias must be [Dout]");
    std::vector<Tensor> inputs{x, w};
    if (has_bias) inputs.push_back(b);
    Tensor out = make_node({N, Dout}, x.dtype(), inputs, "linear",
                           [N, Din, Dout, has_bias](TensorImpl& self) {
        TensorImpl* px = self.parents[0].get();
        TensorImpl* pw = self.parents[1].get();
        TensorImpl* pb = has_bias ? self.parents[2].get() : nullptr;
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            auto xs = px->val<T>();
            auto ws = pw->val<T>();
            if (px->needs_grad) {
                auto gx = px->grd<T>();
                for (int n = 0; n < N; ++n)
                    for (int i = 0; i < Din; ++i) {
                        double acc = 0.0;
                        for (int o = 0; o < Dout; ++o)
                            acc += static_cast<double>(gy[static_cast<std::size_t>(n) * Dout + o]) *
                                   static_cast<double>(ws[static_cast<std::size_t>(i) * Dout + o]);
                        gx[static_cast<std::size_t>(n) * Din + i] += static_cast<T>(acc);
                    }
            }
            if (pw->needs_grad) {
                auto gw = pw->grd<T>();
                for (int n = 0; n < N; ++n)
                    for (int i = 0; i < Din; ++i) {
                        const T xv = xs[static_cast<std::size_t>(n) * Din + i];
                        for (int o = 0; o < Dout; ++o)
                            gw[static_cast<std::size_t>(i) * Dout + o] +=
                                xv * gy[static_cast<std::size_t>(n) * Dout + o];
                    }
            }
            if (pb && pb->needs_grad) {
                auto gb = pb->grd<T>();
                for (int n = 0; n < N; ++n)
                    for (int o = 0; o < Dout; ++o) gb[static_cast<std::size_t>(o)] += gy[static_cast<std::size_t>(n) * Dout + o];
            }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        auto xs = x.values<T>();
        auto ws = w.values<T>();
        auto ys = out.values_mut<T>();
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < Dout; ++o) {
                double acc = has_bias ? static_cast<double>(b.values<T>()[static_cast<std::size_t>(o)]) : 0.0;
                for (int i = 0; i < Din; ++i)
                    acc += static_cast<double>(xs[static_cast<std::size_t>(n) * Din + i]) *
                           static_cast<double>(ws[static_cast<std::size_t>(i) * Dout + o]);
                ys[static_cast<std::size_t>(n) * Dout + o] = static_cast<T>(acc);
            }
    });
    return out;
}

namespace {

using convk::ConvGeom;

void require_rank4(const Tensor& t, const char* op, const char* what) {
    if (t.shape().size() != 4)
        throw DimensionError(std::string(op) + ": " + what + " must be rank-4, got " +
                             shape_to_string(t.shape()));
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int dilation, int padding) {
    require_rank4(x, "conv2d", "input");
    require_rank4(w, "conv2d", "weight");
    if (x.dtype() != w.dtype()) throw ContractError("conv2d: dtype mismatch");
    const int k = w.dim(2);
    if (w.dim(3) != k) throw DimensionError("conv2d: kernel must be square, got " + shape_to_string(w.shape()));
    if (k != 1 && k != 3 && k != 5) throw ConfigError("conv2d: kernel size must be 1, 3 or 5");
    if (dilation != 1 && dilation != 2) throw ConfigError("conv2d: dilation must be 1 or 2");
    if (stride != 1 && stride != 2) throw ConfigError("conv2d: stride must be 1 or 2");
    if (padding < 0) throw ConfigError("conv2d: padding must be non-negative");
    if (x.dim(1) != w.dim(1))
        throw DimensionError("conv2d: input channels " + std::to_string(x.dim(1)) +
                             " do not match kernel channels " + std::to_string(w.dim(1)) + " (x " +
                             shape_to_string(x.shape()) + ", w " + shape_to_string(w.shape()) + ")");
    ConvGeom g;
    g.N = x.dim(0);
    g.Ci = x.dim(1);
    g.Hi = x.dim(2);
    g.Wi = x.dim(3);
    g.Co = w.dim(0);
    g.k = k;
    g.stride = stride;
    g.dil = dilation;
    g.pad = padding;
    g.Ho = convk::conv_out_extent(g.Hi, k, stride, dilation, padding);
    g.Wo = convk::conv_out_extent(g.Wi, k, stride, dilation, padding);
    if (g.Ho < 1 || g.Wo < 1)
        throw DimensionError("conv2d: empty output for input " + shape_to_string(x.shape()));

    Tensor out = make_node({g.N, g.Co, g.Ho, g.Wo}, x.dtype(), {x, w}, "conv2d", [g](TensorImpl& self) {
        TensorImpl* px = self.parents[0].get();
        TensorImpl* pw = self.parents[1].get();
        dispatch(self.dtype, [&]<class T>() {
            const auto gyh = convk::nchw_to_nhwc(self.grd<T>().data(), g.N, g.Co, g.Ho, g.Wo);
            if (px->needs_grad) {
                const auto wt = convk::pack_w_coci(pw->val<T>().data(), g.Co, g.Ci, g.k);
                std::vector<T> gxh(static_cast<std::size_t>(g.N) * g.Hi * g.Wi * g.Ci, T(0));
                convk::conv_gx_nhwc(gyh.data(), wt.data(), gxh.data(), g, num_threads());
                convk::nhwc_to_nchw_add(gxh.data(), px->grd<T>().data(), g.N, g.Ci, g.Hi, g.Wi);
            }
            if (pw->needs_grad) {
                const auto xh = convk::nchw_to_nhwc(px->val<T>().data(), g.N, g.Ci, g.Hi, g.Wi);
                std::vector<T> gwp(static_cast<std::size_t>(g.k) * g.k * g.Ci * g.Co, T(0));
                convk::conv_gw_nhwc(xh.data(), gyh.data(), gwp.data(), g, num_threads());
                convk::unpack_gw_add(gwp.data(), pw->grd<T>().data(), g.Co, g.Ci, g.k);
            }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        const auto xh = convk::nchw_to_nhwc(x.values<T>().data(), g.N, g.Ci, g.Hi, g.Wi);
        const auto wp = convk::pack_w_cico(w.values<T>().data(), g.Co, g.Ci, g.k);
        std::vector<T> yh(static_cast<std::size_t>(g.N) * g.Ho * g.Wo * g.Co);
        convk::conv_fwd_nhwc(xh.data(), wp.data(), yh.data(), g, num_threads());
        convk::nhwc_to_nchw(yh.data(), out.values_mut<T>().data(), g.N, g.Co, g.Ho, g.Wo);
    });
    return out;
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, int stride) {
    require_rank4(x, "transposed_conv2d", "input");
    require_rank4(w, "transposed_conv2d", "weight");
    if (x.dtype() != w.dtype()) throw ContractError("transposed_conv2d: dtype mismatch");
    if (stride != 2 && stride != 4) throw ConfigError("transposed_conv2d: stride must be 2 or 4");
    if (w.dim(2) != 3 || w.dim(3) != 3)
        throw DimensionError("transposed_conv2d: kernel must be 3x3, got " + shape_to_string(w.shape()));
    if (x.dim(1) != w.dim(0))
        throw DimensionError("transposed_conv2d: input channels " + std::to_string(x.dim(1)) +
                             " do not match kernel channels " + std::to_string(w.dim(0)) + " (x " +
                             shape_to_string(x.shape()) + ", w " + shape_to_string(w.shape()) + ")");
    // The op is the adjoint of a "virtual" forward conv that maps the large
    // output plane back to the small input plane.
    ConvGeom g;
    g.N = x.dim(0);
    g.Co = w.dim(0); // small side channels
    g.Ci = w.dim(1); // large side channels
    g.Ho = x.dim(2);
    g.Wo = x.dim(3);
    g.Hi = stride * g.Ho;
    g.Wi = stride * g.Wo;
    g.k = 3;
    g.stride = stride;
    g.dil = 1;
    g.pad = stride == 2 ? 1 : 0;

    Tensor out = make_node({g.N, g.Ci, g.Hi, g.Wi}, x.dtype(), {x, w}, "transposed_conv2d",
                           [g](TensorImpl& self) {
        TensorImpl* px = self.parents[0].get();
        TensorImpl* pw = self.parents[1].get();
        dispatch(self.dtype, [&]<class T>() {
            const auto gth = convk::nchw_to_nhwc(self.grd<T>().data(), g.N, g.Ci, g.Hi, g.Wi);
            if (px->needs_grad) {
                // d/d(input) of the adjoint is the virtual forward conv.
                const auto wp = convk::pack_w_cico(pw->val<T>().data(), g.Co, g.Ci, g.k);
                std::vector<T> guh(static_cast<std::size_t>(g.N) * g.Ho * g.Wo * g.Co);
                convk::conv_fwd_nhwc(gth.data(), wp.data(), guh.data(), g, num_threads());
                convk::nhwc_to_nchw_add(guh.data(), px->grd<T>().data(), g.N, g.Co, g.Ho, g.Wo);
            }
            if (pw->needs_grad) {
                const auto uh = convk::nchw_to_nhwc(px->val<T>().data(), g.N, g.Co, g.Ho, g.Wo);
                std::vector<T> gwp(static_cast<std::size_t>(g.k) * g.k * g.Ci * g.Co, T(0));
                convk::conv_gw_nhwc(gth.data(), uh.data(), gwp.data(), g, num_threads());
                convk::unpack_gw_add(gwp.data(), pw->grd<T>().data(), g.Co, g.Ci, g.k);
            }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        const auto uh = convk::nchw_to_nhwc(x.values<T>().data(), g.N, g.Co, g.Ho, g.Wo);
        const auto wt = convk::pack_w_coci(w.values<T>().data(), g.Co, g.Ci, g.k);
        std::vector<T> th(static_cast<std::size_t>(g.N) * g.Hi * g.Wi * g.Ci, T(0));
        convk::conv_gx_nhwc(uh.data(), wt.data(), th.data(), g, num_threads());
        convk::nhwc_to_nchw(th.data(), out.values_mut<T>().data(), g.N, g.Ci, g.Hi, g.Wi);
    });
    return out;
}

namespace {

struct BilinearAxis {
    std::vector<int> i0, i1;
    std::vector<double> w1; // weight of i1; weight of i0 is 1-w1
};

BilinearAxis bilinear_axis(int in, int out) {
    BilinearAxis a;
    a.i0.resize(static_cast<std::size_t>(out));
    a.i1.resize(static_cast<std::size_t>(out));
    a.w1.resize(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        if (in == 1) {
            a.i0[static_cast<std::size_t>(o)] = 0;
            a.i1[static_cast<std::size_t>(o)] = 0;
            a.w1[static_cast<std::size_t>(o)] = 0.0;
            continue;
        }
        const double f = static_cast<double>(o) * (in - 1) / static_cast<double>(out - 1);
        int lo = static_cast<int>(f);
        if (lo > in - 2) lo = in - 2;
        a.i0[static_cast<std::size_t>(o)] = lo;
        a.i1[static_cast<std::size_t>(o)] = lo + 1;
        a.w1[static_cast<std::size_t>(o)] = f - lo;
    }
    return a;
}

} // namespace

Tensor interpolate(const Tensor& x, int scale, InterpMode mode) {
    require_rank4(x, "interpolate", "input");
    if (scale != 2 && scale != 4) throw ConfigError("interpolate: scale must be 2 or 4");
    const int N = x.dim(0), C = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
    const int Ho = Hi * scale, Wo = Wi * scale;
    const char* name = mode == InterpMode::Nearest ? "interp_nearest" : "interp_bilinear";
    if (mode == InterpMode::Nearest) {
        Tensor out = make_node({N, C, Ho, Wo}, x.dtype(), {x}, name, [=](TensorImpl& self) {
            TensorImpl* in = self.parents[0].get();
            if (!in->needs_grad) return;
            dispatch(self.dtype, [&]<class T>() {
                auto gy = self.grd<T>();
                auto gx = in->grd<T>();
                for (int nc = 0; nc < N * C; ++nc) {
                    const std::size_t ob = static_cast<std::size_t>(nc) * Ho * Wo;
                    const std::size_t ib = static_cast<std::size_t>(nc) * Hi * Wi;
                    for (int oh = 0; oh < Ho; ++oh)
                        for (int ow = 0; ow < Wo; ++ow)
                            gx[ib + static_cast<std::size_t>(oh / scale) * Wi + ow / scale] +=
                                gy[ob + static_cast<std::size_t>(oh) * Wo + ow];
                }
            });
        });
        dispatch(x.dtype(), [&]<class T>() {
            auto xs = x.values<T>();
            auto ys = out.values_mut<T>();
            for (int nc = 0; nc < N * C; ++nc) {
                const std::size_t ob = static_cast<std::size_t>(nc) * Ho * Wo;
                const std::size_t ib = static_cast<std::size_t>(nc) * Hi * Wi;
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow)
                        ys[ob + static_cast<std::size_t>(oh) * Wo + ow] =
                            xs[ib + static_cast<std::size_t>(oh / scale) * Wi + ow / scale];
            }
        });
        return out;
    }
    // Corner-aligned bilinear, shared per-axis tap tables.
    const BilinearAxis ah = bilinear_axis(Hi, Ho);
    const BilinearAxis aw = bilinear_axis(Wi, Wo);
    Tensor out = make_node({N, C, Ho, Wo}, x.dtype(), {x}, name, [=](TensorImpl& self) {
        TensorImpl* in = self.parents[0].get();
        if (!in->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            auto gy = self.grd<T>();
            auto gx = in->grd<T>();
            for (int nc = 0; nc < N * C; ++nc) {
                const std::size_t ob = static_cast<std::size_t>(nc) * Ho * Wo;
                const std::size_t ib = static_cast<std::size_t>(nc) * Hi * Wi;
                for (int oh = 0; oh < Ho; ++oh) {
                    const std::size_t h0 = static_cast<std::size_t>(ah.i0[static_cast<std::size_t>(oh)]);
                    const std::size_t h1 = static_cast<std::size_t>(ah.i1[static_cast<std::size_t>(oh)]);
                    const double wh1 = ah.w1[static_cast<std::size_t>(oh)];
                    for (int ow = 0; ow < Wo; ++ow) {
                        const std::size_t w0 = static_cast<std::size_t>(aw.i0[static_cast<std::size_t>(ow)]);
                        const std::size_t w1i = static_cast<std::size_t>(aw.i1[static_cast<std::size_t>(ow)]);
                        const double ww1 = aw.w1[static_cast<std::size_t>(ow)];
                        const double g = static_cast<double>(gy[ob + static_cast<std::size_t>(oh) * Wo + ow]);
                        gx[ib + h0 * Wi + w0] += static_cast<T>(g * (1.0 - wh1) * (1.0 - ww1));
                        gx[ib + h0 * Wi + w1i] += static_cast<T>(g * (1.0 - wh1) * ww1);
                        gx[ib + h1 * Wi + w0] += static_cast<T>(g * wh1 * (1.0 - ww1));
                        gx[ib + h1 * Wi + w1i] += static_cast<T>(g * wh1 * ww1);
                    }
                }
            }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        auto xs = x.values<T>();
        auto ys = out.values_mut<T>();
        for (int nc = 0; nc < N * C; ++nc) {
            const std::size_t ob = static_cast<std::size_t>(nc) * Ho * Wo;
            const std::size_t ib = static_cast<std::size_t>(nc) * Hi * Wi;
            for (int oh = 0; oh < Ho; ++oh) {
                const std::size_t h0 = static_cast<std::size_t>(ah.i0[static_cast<std::size_t>(oh)]);
                const std::size_t h1 = static_cast<std::size_t>(ah.i1[static_cast<std::size_t>(oh)]);
                const double wh1 = ah.w1[static_cast<std::size_t>(oh)];
                for (int ow = 0; ow < Wo; ++ow) {
                    const std::size_t w0 = static_cast<std::size_t>(aw.i0[static_cast<std::size_t>(ow)]);
                    const std::size_t w1i = static_cast<std::size_t>(aw.i1[static_cast<std::size_t>(ow)]);
                    const double ww1 = aw.w1[static_cast<std::size_t>(ow)];
                    const double v = (1.0 - wh1) * ((1.0 - ww1) * static_cast<double>(xs[ib + h0 * Wi + w0]) +
                                                    ww1 * static_cast<double>(xs[ib + h0 * Wi + w1i])) +
                                     wh1 * ((1.0 - ww1) * static_cast<double>(xs[ib + h1 * Wi + w0]) +
                                            ww1 * static_cast<double>(xs[ib + h1 * Wi + w1i]));
                    ys[ob + static_cast<std::size_t>(oh) * Wo + ow] = static_cast<T>(v);
                }
            }
        }
    });
    return out;
}

Tensor pool2d(const Tensor& x, PoolKind kind) {
    require_rank4(x, "pool2d", "input");
    const int N = x.dim(0), C = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
    if (Hi % 2 != 0 || Wi % 2 != 0)
        throw DimensionError("pool2d: spatial dims must be even, got " + shape_to_string(x.shape()));
    const int Ho = Hi / 2, Wo = Wi / 2;
    const char* name = kind == PoolKind::Avg ? "avg_pool2d" : "max_pool2d";
    Tensor out = make_node({N, C, Ho, Wo}, x.dtype(), {x}, name, [=](TensorImpl& self) {
        TensorImpl* in = self.parents[0].get();
        if (!in->needs_grad) return;
        dispatch(self.dtype, [&]<class T>() {
            auto xs = in->val<T>();
            auto gy = self.grd<T>();
            auto gx = in->grd<T>();
            for (int nc = 0; nc < N * C; ++nc) {
                const std::size_t ob = static_cast<std::size_t>(nc) * Ho * Wo;
                const std::size_t ib = static_cast<std::size_t>(nc) * Hi * Wi;
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        const T g = gy[ob + static_cast<std::size_t>(oh) * Wo + ow];
                        const std::size_t p00 = ib + static_cast<std::size_t>(2 * oh) * Wi + 2 * ow;
                        if (kind == PoolKind::Avg) {
                            const T q = static_cast<T>(static_cast<double>(g) * 0.25);
                            gx[p00] += q;
                            gx[p00 + 1] += q;
                            gx[p00 + Wi] += q;
                            gx[p00 + Wi + 1] += q;
                        } else {
                            // ties route to the lowest linear index
                            const std::size_t idx[4] = {p00, p00 + 1, p00 + static_cast<std::size_t>(Wi),
                                                        p00 + static_cast<std::size_t>(Wi) + 1};
                            std::size_t best = idx[0];
                            for (int j = 1; j < 4; ++j)
                                if (xs[idx[static_cast<std::size_t>(j)]] > xs[best]) best = idx[static_cast<std::size_t>(j)];
                            gx[best] += g;
                        }
                    }
            }
        });
    });
    dispatch(x.dtype(), [&]<class T>() {
        auto xs = x.values<T>();
        auto ys = out.values_mut<T>();
        for (int nc = 0; nc < N * C; ++nc) {
            const std::size_t ob = static_cast<std::size_t>(nc) * Ho * Wo;
            const std::size_t ib = static_cast<std::size_t>(nc) * Hi * Wi;
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    const std::size_t p00 = ib + static_cast<std::size_t>(2 * oh) * Wi + 2 * ow;
                    const T a = xs[p00], b = xs[p00 + 1];
                    const T c = xs[p00 + static_cast<std::size_t>(Wi)], d = xs[p00 + static_cast<std::size_t>(Wi) + 1];
                    ys[ob + static_cast<std::size_t>(oh) * Wo + ow] =
                        kind == PoolKind::Avg
                            ? static_cast<T>((static_cast<double>(a) + b + c + d) * 0.25)
                            : std::max(std::max(a, b), std::max(c, d));
                }
        }
    });
    return out;
}

} // namespace ops
} // namespace advnas
