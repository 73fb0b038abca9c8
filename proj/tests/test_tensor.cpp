#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advnas/ops.hpp"
#include "advnas/random.hpp"
#include "advnas/tensor.hpp"

#include "gradcheck_util.hpp"

#include <cmath>
#include <cstring>

using namespace advnas;
namespace op = advnas::ops;

namespace {

Tensor tensor_from(std::vector<int> shape, std::vector<double> vals, DType dt = DType::F64) {
    return Tensor::from_data(std::move(shape), vals, dt);
}

// Direct-convolution oracle: plain sum over taps, no packing tricks.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, int stride, int dil, int pad) {
    const int N = x.dim(0), Ci = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
    const int Co = w.dim(0), k = w.dim(2);
    const int Ho = (Hi + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    const int Wo = (Wi + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(N) * Co * Ho * Wo, 0.0);
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                const int ih = oh * stride - pad + kh * dil;
                                const int iw = ow * stride - pad + kw * dil;
                                if (ih < 0 || ih >= Hi || iw < 0 || iw >= Wi) continue;
                                acc += x.value_at(((static_cast<std::int64_t>(n) * Ci + ci) * Hi + ih) * Wi + iw) *
                                       w.value_at(((static_cast<std::int64_t>(co) * Ci + ci) * k + kh) * k + kw);
                            }
                    out[static_cast<std::size_t>(((n * Co + co) * Ho + oh) * Wo + ow)] = acc;
                }
    return out;
}

} // namespace

TEST_CASE("conv2d identity kernel preserves input") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 1.0, DType::F64);
    Tensor w = Tensor::full({1, 1, 1, 1}, 1.0, DType::F64);
    Tensor y = op::conv2d(x, w, 1, 1, 0);
    REQUIRE(y.shape() == std::vector<int>{1, 1, 4, 4});
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.value_at(i) == doctest::Approx(1.0));
}

TEST_CASE("conv2d dilation-2 delta placement matches direct oracle") {
    Tensor x = Tensor::zeros({1, 1, 5, 5}, DType::F64);
    x.set_value_at(2 * 5 + 2, 1.0); // delta at center
    RandomStream rng(3, "w");
    Tensor w = gradcheck::rand_tensor({1, 1, 3, 3}, rng);
    Tensor y = op::conv2d(x, w, 1, 2, 2);
    REQUIRE(y.shape() == std::vector<int>{1, 1, 5, 5});
    const auto expect = conv_oracle(x, w, 1, 2, 2);
    for (std::int64_t i = 0; i < y.numel(); ++i)
        CHECK(y.value_at(i) == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
    // tap (kh,kw) lands at output position (4-2kh, 4-2kw): dilation-2 offsets around center
    CHECK(y.value_at(2 * 5 + 2) == doctest::Approx(w.value_at(4)));
    CHECK(y.value_at(0) == doctest::Approx(w.value_at(8)));
    CHECK(y.value_at(4 * 5 + 4) == doctest::Approx(w.value_at(0)));
    // off-lattice positions stay zero
    CHECK(y.value_at(1 * 5 + 1) == doctest::Approx(0.0));
}

TEST_CASE("conv2d stride 2 output extent") {
    Tensor x = Tensor::zeros({1, 1, 8, 8}, DType::F32);
    Tensor w = Tensor::zeros({1, 1, 3, 3}, DType::F32);
    Tensor y = op::conv2d(x, w, 2, 1, 1);
    CHECK(y.shape() == std::vector<int>{1, 1, 4, 4});
}

TEST_CASE("conv2d random cases match direct oracle") {
    RandomStream rng(11, "conv-oracle");
    for (int k : {1, 3, 5})
        for (int dil : {1, 2})
            for (int stride : {1, 2}) {
                Tensor x = gradcheck::rand_tensor({2, 3, 8, 8}, rng);
                Tensor w = gradcheck::rand_tensor({4, 3, k, k}, rng);
                const int pad = dil * (k - 1) / 2;
                Tensor y = op::conv2d(x, w, stride, dil, pad);
                const auto expect = conv_oracle(x, w, stride, dil, pad);
                REQUIRE(static_cast<std::size_t>(y.numel()) == expect.size());
                for (std::int64_t i = 0; i < y.numel(); ++i)
                    CHECK(y.value_at(i) == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-10));
            }
}

TEST_CASE("conv2d channel mismatch reports both shapes") {
    Tensor x = Tensor::zeros({1, 3, 4, 4});
    Tensor w = Tensor::zeros({2, 4, 3, 3});
    try {
        op::conv2d(x, w, 1, 1, 1);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[1,3,4,4]") != std::string::npos);
        CHECK(msg.find("[2,4,3,3]") != std::string::npos);
    }
}

TEST_CASE("transposed_conv2d doubles and quadruples spatial extent") {
    Tensor x = Tensor::zeros({1, 1, 4, 4});
    Tensor w = Tensor::zeros({1, 1, 3, 3});
    CHECK(op::transposed_conv2d(x, w, 2).shape() == std::vector<int>{1, 1, 8, 8});
    CHECK(op::transposed_conv2d(x, w, 4).shape() == std::vector<int>{1, 1, 16, 16});
}

TEST_CASE("transposed_conv2d of zeros is zero") {
    Tensor x = Tensor::zeros({2, 3, 4, 4}, DType::F64);
    RandomStream rng(5, "w");
    Tensor w = gradcheck::rand_tensor({3, 2, 3, 3}, rng);
    Tensor y = op::transposed_conv2d(x, w, 2);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.value_at(i) == 0.0);
}

TEST_CASE("transposed_conv2d rejects unsupported stride") {
    Tensor x = Tensor::zeros({1, 1, 4, 4});
    Tensor w = Tensor::zeros({1, 1, 3, 3});
    CHECK_THROWS_AS(op::transposed_conv2d(x, w, 3), ConfigError);
}

TEST_CASE("conv/transposed-conv adjoint inner product identity") {
    // stride 2 pairs with the public conv2d; stride 4 pairs with the direct
    // oracle (the public conv stays within its stride {1,2} contract).
    RandomStream rng(7, "adjoint");
    for (int stride : {2, 4}) {
        const int pad = stride == 2 ? 1 : 0;
        const int Hs = 8;
        Tensor x = gradcheck::rand_tensor({2, 3, Hs, Hs}, rng);
        Tensor w = gradcheck::rand_tensor({4, 3, 3, 3}, rng);
        std::vector<double> cy = stride == 2
            ? [&] {
                  Tensor t = op::conv2d(x, w, 2, 1, pad);
                  std::vector<double> v(static_cast<std::size_t>(t.numel()));
                  for (std::int64_t i = 0; i < t.numel(); ++i) v[static_cast<std::size_t>(i)] = t.value_at(i);
                  return v;
              }()
            : conv_oracle(x, w, 4, 1, pad);
        Tensor y = gradcheck::rand_tensor({2, 4, Hs / stride, Hs / stride}, rng);
        REQUIRE(static_cast<std::int64_t>(cy.size()) == y.numel());
        Tensor tx = op::transposed_conv2d(y, w, stride);
        REQUIRE(tx.shape() == x.shape());
        double lhs = 0.0, rhs = 0.0;
        for (std::int64_t i = 0; i < y.numel(); ++i) lhs += cy[static_cast<std::size_t>(i)] * y.value_at(i);
        for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x.value_at(i) * tx.value_at(i);
        CHECK(std::abs(lhs - rhs) < 1e-6);
    }
}

TEST_CASE("nearest interpolation replicates pixels") {
    Tensor x = tensor_from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor y = op::interpolate(x, 2, op::InterpMode::Nearest);
    const std::vector<double> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    REQUIRE(y.numel() == 16);
    for (std::int64_t i = 0; i < 16; ++i) CHECK(y.value_at(i) == expect[static_cast<std::size_t>(i)]);
}

TEST_CASE("bilinear interpolation preserves constants") {
    Tensor x = Tensor::full({2, 3, 2, 2}, 0.37, DType::F64);
    for (int scale : {2, 4}) {
        Tensor y = op::interpolate(x, scale, op::InterpMode::Bilinear);
        for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.value_at(i) == doctest::Approx(0.37));
    }
}

TEST_CASE("bilinear on 2x2 ramp matches corner-aligned scalar oracle") {
    Tensor x = tensor_from({1, 1, 2, 2}, {0, 1, 2, 3});
    Tensor y = op::interpolate(x, 2, op::InterpMode::Bilinear);
    auto at = [&](int r, int c) { return y.value_at(r * 4 + c); };
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            const double fr = r / 3.0, fc = c / 3.0; // corner-aligned source coordinates
            const double expect = (1 - fr) * ((1 - fc) * 0 + fc * 1) + fr * ((1 - fc) * 2 + fc * 3);
            CHECK(at(r, c) == doctest::Approx(expect).epsilon(1e-12));
        }
    // corners map to corners exactly
    CHECK(at(0, 0) == 0.0);
    CHECK(at(0, 3) == 1.0);
    CHECK(at(3, 0) == 2.0);
    CHECK(at(3, 3) == 3.0);
}

TEST_CASE("pool2d single window") {
    Tensor x = tensor_from({1, 1, 2, 2}, {1, 3, 5, 7});
    CHECK(op::pool2d(x, op::PoolKind::Avg).value_at(0) == doctest::Approx(4.0));
    CHECK(op::pool2d(x, op::PoolKind::Max).value_at(0) == doctest::Approx(7.0));
}

TEST_CASE("max pool routes gradient to the argmax") {
    Tensor x = tensor_from({1, 1, 2, 2}, {1, 3, 5, 7});
    x.set_requires_grad(true);
    op::sum(op::pool2d(x, op::PoolKind::Max)).backward();
    CHECK(x.grad_at(0) == 0.0);
    CHECK(x.grad_at(1) == 0.0);
    CHECK(x.grad_at(2) == 0.0);
    CHECK(x.grad_at(3) == 1.0);
}

TEST_CASE("max pool ties break to lowest linear index") {
    Tensor x = tensor_from({1, 1, 2, 2}, {2, 2, 2, 2});
    x.set_requires_grad(true);
    op::sum(op::pool2d(x, op::PoolKind::Max)).backward();
    CHECK(x.grad_at(0) == 1.0);
    CHECK(x.grad_at(1) == 0.0);
}

TEST_CASE("pool2d rejects odd spatial dims") {
    Tensor x = Tensor::zeros({1, 1, 3, 4});
    CHECK_THROWS_AS(op::pool2d(x, op::PoolKind::Avg), DimensionError);
}

TEST_CASE("linear with identity weights is identity") {
    Tensor x = tensor_from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor w = tensor_from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor b = Tensor::zeros({3}, DType::F64);
    Tensor y = op::linear(x, w, b);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(y.value_at(i) == doctest::Approx(x.value_at(i)));
}

TEST_CASE("softmax of equal entries is uniform") {
    Tensor v = Tensor::full({7}, 2.5, DType::F64);
    Tensor p = op::softmax(v, 0);
    for (int i = 0; i < 7; ++i) CHECK(p.value_at(i) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant") {
    RandomStream rng(21, "softmax");
    for (int trial = 0; trial < 20; ++trial) {
        Tensor v = gradcheck::rand_tensor({5}, rng, -3.0, 3.0);
        const double c = rng.uniform(-10.0, 10.0);
        Tensor vs = op::add_scalar(v, c);
        Tensor p = op::softmax(v, 0);
        Tensor ps = op::softmax(vs, 0);
        double s = 0.0;
        for (int i = 0; i < 5; ++i) {
            CHECK(std::abs(p.value_at(i) - ps.value_at(i)) < 1e-7);
            s += p.value_at(i);
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("backward of sum gives all-ones gradient") {
    Tensor x = Tensor::full({2, 3}, 1.5, DType::F64).set_requires_grad(true);
    op::sum(x).backward();
    for (std::int64_t i = 0; i < 6; ++i) CHECK(x.grad_at(i) == 1.0);
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Tensor x = tensor_from({3}, {1, 2, 3});
    x.set_requires_grad(true);
    op::sum(op::mul(x, x)).backward();
    CHECK(x.grad_at(0) == doctest::Approx(2.0));
    CHECK(x.grad_at(1) == doctest::Approx(4.0));
    CHECK(x.grad_at(2) == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::zeros({3}).set_requires_grad(true);
    Tensor y = op::scale(x, 2.0);
    CHECK_THROWS_AS(y.backward(), ContractError);
}

TEST_CASE("repeated backward without reset accumulates") {
    Tensor x = tensor_from({2}, {1, 1});
    x.set_requires_grad(true);
    Tensor loss = op::sum(x);
    loss.backward();
    loss.backward();
    CHECK(x.grad_at(0) == 2.0);
    x.zero_grad();
    loss.backward();
    CHECK(x.grad_at(0) == 1.0);
}

TEST_CASE("non-participating leaf keeps an all-zero gradient") {
    Tensor x = tensor_from({2}, {1, 2});
    x.set_requires_grad(true);
    Tensor bystander = tensor_from({4}, {1, 2, 3, 4});
    bystander.set_requires_grad(true);
    op::sum(x).backward();
    for (std::int64_t i = 0; i < 4; ++i) CHECK(bystander.grad_at(i) == 0.0);
}

TEST_CASE("diamond graph: reused tensor gets both contributions once each") {
    Tensor x = tensor_from({2}, {3, 4});
    x.set_requires_grad(true);
    Tensor y = op::add(x, x);       // dy/dx = 2
    Tensor z = op::sum(op::mul(y, y)); // z = sum(4 x^2), dz/dx = 8x
    z.backward();
    CHECK(x.grad_at(0) == doctest::Approx(24.0));
    CHECK(x.grad_at(1) == doctest::Approx(32.0));
    Graph g(z);
    // topological order: every node appears after all of its parents
    const auto& order = g.topo_order();
    for (std::size_t i = 0; i < order.size(); ++i)
        for (const auto& p : order[i]->parents) {
            bool parent_before = false;
            for (std::size_t j = 0; j < i; ++j)
                if (order[j] == p.get()) parent_before = true;
            if (p->needs_grad) CHECK(parent_before);
        }
}

TEST_CASE("composing three scale-2 upsamplings multiplies extent by 8") {
    Tensor x = Tensor::zeros({1, 2, 3, 3});
    Tensor y = op::interpolate(op::interpolate(op::interpolate(x, 2, op::InterpMode::Bilinear), 2,
                                               op::InterpMode::Nearest),
                               2, op::InterpMode::Bilinear);
    CHECK(y.shape() == std::vector<int>{1, 2, 24, 24});
}

TEST_CASE("kernels are bitwise deterministic and thread-count invariant") {
    RandomStream rng(13, "det");
    Tensor x = gradcheck::rand_tensor({4, 3, 8, 8}, rng);
    Tensor w = gradcheck::rand_tensor({5, 3, 3, 3}, rng);

    auto run = [&](int threads) {
        set_num_threads(threads);
        Tensor xc = x.clone().set_requires_grad(true);
        Tensor wc = w.clone().set_requires_grad(true);
        Tensor y = op::conv2d(xc, wc, 1, 2, 2);
        op::sum(op::mul(y, y)).backward();
        std::vector<double> bits;
        auto push = [&](std::span<const double> s) { bits.insert(bits.end(), s.begin(), s.end()); };
        push(y.values<double>());
        push(xc.grad<double>());
        push(wc.grad<double>());
        return bits;
    };
    const auto serial = run(1);
    const auto serial2 = run(1);
    const auto parallel = run(4);
    set_num_threads(0);
    CHECK(std::memcmp(serial.data(), serial2.data(), serial.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(serial.data(), parallel.data(), serial.size() * sizeof(double)) == 0);
}

TEST_CASE("no-grad scope records nothing") {
    Tensor x = tensor_from({2}, {1, 2});
    x.set_requires_grad(true);
    NoGradScope ng;
    Tensor y = op::scale(x, 3.0);
    CHECK(y.is_leaf());
}
