#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advnas/ops.hpp"
#include "advnas/relaxation.hpp"

#include "gradcheck_util.hpp"

#include <cmath>

using namespace advnas;
namespace op = advnas::ops;

TEST_CASE("edge_probs: uniform over zeros, hand-computed case, argmax preserved") {
    Tensor z = Tensor::zeros({7}, DType::F64);
    Tensor p = edge_probs(z);
    for (int i = 0; i < 7; ++i) CHECK(p.value_at(i) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));

    Tensor v = Tensor::from_data({3}, std::vector<double>{std::log(2.0), 0.0, 0.0}, DType::F64);
    Tensor pv = edge_probs(v);
    CHECK(pv.value_at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pv.value_at(1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(pv.value_at(2) == doctest::Approx(0.25).epsilon(1e-12));

    Tensor a = Tensor::from_data({3}, std::vector<double>{5.0, 1.0, 1.0}, DType::F64);
    auto probs = edge_prob_values(a);
    CHECK(std::max_element(probs.begin(), probs.end()) - probs.begin() == 0);
}

TEST_CASE("edge_probs: NaN input raises a numeric error") {
    Tensor v = Tensor::zeros({3}, DType::F64);
    v.set_value_at(1, std::nan(""));
    CHECK_THROWS_AS(edge_probs(v), NumericError);
}

TEST_CASE("edge_probs: shift invariance within 1e-7") {
    RandomStream rng(31, "shift");
    for (int trial = 0; trial < 30; ++trial) {
        Tensor v = gradcheck::rand_tensor({7}, rng, -4.0, 4.0);
        const double c = rng.uniform(-20.0, 20.0);
        auto p = edge_prob_values(v);
        auto ps = edge_prob_values(op::add_scalar(v, c).detach());
        for (int i = 0; i < 7; ++i) CHECK(std::abs(p[static_cast<std::size_t>(i)] - ps[static_cast<std::size_t>(i)]) < 1e-7);
    }
}

TEST_CASE("gumbel_weights: zero noise at tau 1 recovers probs") {
    Tensor v = Tensor::from_data({4}, std::vector<double>{0.3, -1.0, 2.0, 0.1}, DType::F64);
    Tensor probs = edge_probs(v);
    std::vector<double> zeros(4, 0.0);
    Tensor w = gumbel_weights_with_noise(probs, 1.0, zeros);
    for (int i = 0; i < 4; ++i) CHECK(w.value_at(i) == doctest::Approx(probs.value_at(i)).epsilon(1e-12));
}

TEST_CASE("gumbel_weights: tau 0.01 is effectively one-hot") {
    RandomStream rng(41, "small-tau");
    Tensor probs = edge_probs(Tensor::from_data({3}, std::vector<double>{1.2, 0.1, -0.2}, DType::F64));
    // zero noise: perturbed logits keep their log-prob gaps, far above tau
    std::vector<double> zeros(3, 0.0);
    Tensor w0 = gumbel_weights_with_noise(probs, 0.01, zeros);
    CHECK(std::max({w0.value_at(0), w0.value_at(1), w0.value_at(2)}) >= 0.999);
    // fixed noise draws: the property holds whenever the argmax gap of
    // log p + g clears tau*log(999) ~ 0.07 (exact ties mix by construction)
    int counted = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> g{rng.gumbel(), rng.gumbel(), rng.gumbel()};
        std::vector<double> logit(3);
        for (int i = 0; i < 3; ++i) logit[static_cast<std::size_t>(i)] = std::log(probs.value_at(i)) + g[static_cast<std::size_t>(i)];
        std::sort(logit.begin(), logit.end());
        if (logit[2] - logit[1] < 0.08) continue;
        ++counted;
        Tensor w = gumbel_weights_with_noise(probs, 0.01, g);
        double mx = 0.0;
        for (int i = 0; i < 3; ++i) mx = std::max(mx, w.value_at(i));
        CHECK(mx >= 0.999);
    }
    CHECK(counted >= 10);
}

TEST_CASE("gumbel_weights: sums to one across the tau range") {
    RandomStream rng(43, "tau-range");
    Tensor probs = edge_probs(Tensor::from_data({5}, std::vector<double>{1.0, 0.0, -1.0, 2.0, 0.5}, DType::F64));
    for (double tau : {0.01, 0.1, 1.0, 10.0})
        for (int trial = 0; trial < 25; ++trial) {
            Tensor w = gumbel_weights(probs, tau, rng);
            double s = 0.0;
            for (int i = 0; i < 5; ++i) {
                s += w.value_at(i);
                CHECK(w.value_at(i) >= 0.0);
            }
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
}

TEST_CASE("gumbel_weights: argmax frequency follows the probabilities") {
    // Gumbel-max property of the log-prob form, 1e5 draws, +-0.01.
    RandomStream rng(47, "gumbel-max");
    const std::vector<double> target{0.6, 0.3, 0.1};
    std::vector<double> logits(3);
    for (int i = 0; i < 3; ++i) logits[static_cast<std::size_t>(i)] = std::log(target[static_cast<std::size_t>(i)]);
    Tensor probs = edge_probs(Tensor::from_data({3}, logits, DType::F64));
    const int n = 100000;
    std::vector<int> hits(3, 0);
    for (int t = 0; t < n; ++t) {
        Tensor w = gumbel_weights(probs, 1.0, rng);
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (w.value_at(i) > w.value_at(best)) best = i;
        ++hits[static_cast<std::size_t>(best)];
    }
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(static_cast<double>(hits[static_cast<std::size_t>(i)]) / n -
                       target[static_cast<std::size_t>(i)]) < 0.01);
}

TEST_CASE("gumbel_weights: invalid tau is a configuration error") {
    Tensor probs = edge_probs(Tensor::zeros({3}, DType::F64));
    std::vector<double> g(3, 0.0);
    CHECK_THROWS_AS(gumbel_weights_with_noise(probs, 0.0, g), ConfigError);
    CHECK_THROWS_AS(gumbel_weights_with_noise(probs, -1.0, g), ConfigError);
}

TEST_CASE("gumbel literal form differs from the log-prob form") {
    Tensor probs = edge_probs(Tensor::from_data({3}, std::vector<double>{1.0, 0.0, -1.0}, DType::F64));
    std::vector<double> zeros(3, 0.0);
    Tensor wp = gumbel_weights_with_noise(probs, 1.0, zeros, GumbelForm::ProbLiteral);
    // softmax of the probabilities themselves, not the probabilities
    CHECK(wp.value_at(0) != doctest::Approx(probs.value_at(0)).epsilon(1e-3));
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += wp.value_at(i);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

namespace {

SearchableEdge normal_edge(const char* id) {
    SearchableEdge e;
    e.id = id;
    e.role = CandidateRole::GNormal;
    e.scale = 1;
    return e;
}

} // namespace

TEST_CASE("mixed op: saturated identity and saturated none") {
    RandomStream init(3, "init");
    MixedOp mop(normal_edge("g1.1-3"), 4, DType::F64, true, init);
    RandomStream xr(5, "x");
    Tensor x = gradcheck::rand_tensor({2, 4, 4, 4}, xr);

    Tensor alpha = Tensor::zeros({7}, DType::F64);
    alpha.set_value_at(1, 40.0); // Identity
    std::vector<double> zeros(7, 0.0);
    Tensor w = mixture_weights(alpha, 1.0, zeros);
    Tensor out = mop.forward(x, w);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        CHECK(std::abs(out.value_at(i) - x.value_at(i)) < 1e-4);

    Tensor alpha_none = Tensor::zeros({7}, DType::F64);
    alpha_none.set_value_at(0, 40.0); // None
    Tensor wn = mixture_weights(alpha_none, 1.0, zeros);
    Tensor out_none = mop.forward(x, wn);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(std::abs(out_none.value_at(i)) < 1e-4);
}

TEST_CASE("mixed op: gradient w.r.t. alpha matches finite differences") {
    RandomStream init(7, "init");
    MixedOp mop(normal_edge("g1.2-4"), 3, DType::F64, true, init);
    RandomStream xr(9, "x");
    Tensor x = gradcheck::rand_tensor({1, 3, 4, 4}, xr, -1.0, 1.0, 0.1);
    Tensor alpha = gradcheck::rand_tensor({7}, xr, -0.5, 0.5);
    RandomStream gr(11, "g");
    std::vector<double> noise(7);
    for (auto& v : noise) v = gr.gumbel();

    auto r = gradcheck::check(
        [&] { return mop.forward(x, mixture_weights(alpha, 1.0, noise)); }, {alpha});
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("mixed op: gradient w.r.t. input and op weights matches finite differences") {
    RandomStream init(13, "init");
    MixedOp mop(normal_edge("g1.3-4"), 2, DType::F64, true, init);
    RandomStream xr(15, "x");
    Tensor x = gradcheck::rand_tensor({1, 2, 4, 4}, xr, -1.0, 1.0, 0.1);
    Tensor alpha = gradcheck::rand_tensor({7}, xr, -0.5, 0.5);
    RandomStream gr(17, "g");
    std::vector<double> noise(7);
    for (auto& v : noise) v = gr.gumbel();

    std::vector<Tensor> inputs{x};
    for (auto& w : mop.op_weights())
        if (w.defined()) inputs.push_back(w);
    auto r = gradcheck::check(
        [&] { return mop.forward(x, mixture_weights(alpha, 1.0, noise)); }, inputs);
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("mixed op: gradient reaches every weighted candidate") {
    RandomStream init(19, "init");
    MixedOp mop(normal_edge("g2.1-4"), 3, DType::F64, true, init);
    RandomStream xr(21, "x");
    Tensor x = gradcheck::rand_tensor({2, 3, 4, 4}, xr, -1.0, 1.0, 0.1);
    Tensor alpha = Tensor::zeros({7}, DType::F64).set_requires_grad(true);
    std::vector<double> zeros7(7, 0.0);
    Tensor out = mop.forward(x, mixture_weights(alpha, 1.0, zeros7));
    op::sum(op::mul(out, out)).backward();
    for (std::size_t i = 0; i < mop.op_weights().size(); ++i) {
        const Tensor& w = mop.op_weights()[i];
        if (!w.defined()) continue;
        double norm = 0.0;
        for (std::int64_t j = 0; j < w.numel(); ++j) norm += std::abs(w.grad_at(j));
        CHECK(norm > 0.0); // uniform mixture: every candidate weight sees gradient
    }
    double anorm = 0.0;
    for (int j = 0; j < 7; ++j) anorm += std::abs(alpha.grad_at(j));
    CHECK(anorm > 0.0);
}

TEST_CASE("mixed op: one gumbel vector per edge per forward") {
    RandomStream init(23, "init");
    MixedOp mop(normal_edge("g3.2-3"), 2, DType::F32, true, init);
    RandomStream gumbel_rng(29, "gumbel");
    FreshGumbel provider(gumbel_rng);
    Tensor x = Tensor::full({1, 2, 4, 4}, 0.5, DType::F32);
    Tensor alpha = Tensor::zeros({7}, DType::F32);

    const auto before = gumbel_rng.draw_count();
    auto noise = provider.sample(mop.edge().id, 7);
    Tensor w = mixture_weights(alpha, 1.0, noise);
    (void)mop.forward(x, w);
    const auto after = gumbel_rng.draw_count();
    CHECK(after - before == 7); // one draw per candidate, once per edge
}

TEST_CASE("arch params: zero init is uniform with maximal entropy") {
    const auto t = build_network_template(8, 8, 1);
    ArchParams p = ArchParams::zeros_for(t);
    REQUIRE(p.alpha.size() == 24);
    REQUIRE(p.beta.size() == 14); // two down-cells at 8x8
    for (const auto& e : p.alpha) {
        const auto probs = edge_prob_values(e.values);
        for (double v : probs) CHECK(v == doctest::Approx(1.0 / static_cast<double>(probs.size())));
    }
    // alpha: 15 seven-way + 9 three-way; beta: 10 seven-way + 4 six-way
    const double expected =
        (25.0 * std::log(7.0) + 9.0 * std::log(3.0) + 4.0 * std::log(6.0)) / 38.0;
    CHECK(mean_edge_entropy(p) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(p.find_alpha("g1.0-1") != nullptr);
    CHECK(p.find_alpha("g9.0-1") == nullptr);
    CHECK(p.find_beta("d1.2-4") != nullptr);
}
