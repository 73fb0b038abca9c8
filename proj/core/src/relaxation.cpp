#include "advnas/relaxation.hpp"

#include "advnas/errors.hpp"
#include "advnas/ops.hpp"

#include <cmath>

namespace advnas {

namespace op = ops;

std::vector<EdgeParams> ArchParams::zeros_for_edges(const std::vector<SearchableEdge>& edges, DType dt) {
    std::vector<EdgeParams> out;
    out.reserve(edges.size());
    for (const SearchableEdge& e : edges) {
        EdgeParams p;
        p.edge_id = e.id;
        p.role = e.role;
        p.values = Tensor::zeros({static_cast<int>(candidate_ops(e.role).size())}, dt);
        p.values.set_requires_grad(true);
        out.push_back(std::move(p));
    }
    return out;
}

ArchParams ArchParams::zeros_for(const NetworkTemplate& t, DType dt) {
    ArchParams p;
    p.alpha = zeros_for_edges(searchable_edges(t.gen), dt);
    p.beta = zeros_for_edges(searchable_edges(t.disc), dt);
    return p;
}

const EdgeParams* ArchParams::find_alpha(std::string_view edge_id) const {
    for (const auto& e : alpha)
        if (e.edge_id == edge_id) return &e;
    return nullptr;
}

const EdgeParams* ArchParams::find_beta(std::string_view edge_id) const {
    for (const auto& e : beta)
        if (e.edge_id == edge_id) return &e;
    return nullptr;
}

Tensor edge_probs(const Tensor& params) {
    if (params.shape().size() != 1) throw ContractError("edge_probs: expected a rank-1 parameter vector");
    for (std::int64_t i = 0; i < params.numel(); ++i)
        if (!std::isfinite(params.value_at(i)))
            throw NumericError("edge_probs: non-finite architecture parameter");
    return op::softmax(params, 0);
}

std::vector<double> edge_prob_values(const Tensor& params) {
    NoGradScope ng;
    Tensor p = edge_probs(params);
    std::vector<double> out(static_cast<std::size_t>(p.numel()));
    for (std::int64_t i = 0; i < p.numel(); ++i) out[static_cast<std::size_t>(i)] = p.value_at(i);
    return out;
}

double edge_entropy(const Tensor& params) {
    const auto p = edge_prob_values(params);
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double mean_edge_entropy(const ArchParams& params) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& e : params.alpha) {
        acc += edge_entropy(e.values);
        ++n;
    }
    for (const auto& e : params.beta) {
        acc += edge_entropy(e.values);
        ++n;
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

namespace {

Tensor gumbel_logits(const Tensor& pre, double tau, std::span<const double> noise) {
    if (tau <= 0.0) throw ConfigError("gumbel weights: tau must be positive");
    if (static_cast<std::int64_t>(noise.size()) != pre.numel())
        throw DimensionError("gumbel weights: noise length does not match candidate count");
    Tensor g = Tensor::from_data(pre.shape(), noise, pre.dtype());
    return op::softmax(op::scale(op::add(pre, g), 1.0 / tau), 0);
}

} // namespace

Tensor gumbel_weights_with_noise(const Tensor& probs, double tau, std::span<const double> noise,
                                 GumbelForm form) {
    if (probs.shape().size() != 1) throw ContractError("gumbel weights: expected a rank-1 probability vector");
    const Tensor pre = form == GumbelForm::LogProb ? op::log(probs) : probs;
    return gumbel_logits(pre, tau, noise);
}

Tensor gumbel_weights(const Tensor& probs, double tau, RandomStream& rng, GumbelForm form) {
    std::vector<double> g(static_cast<std::size_t>(probs.numel()));
    for (auto& v : g) v = rng.gumbel();
    return gumbel_weights_with_noise(probs, tau, g, form);
}

Tensor mixture_weights(const Tensor& params, double tau, std::span<const double> noise, GumbelForm form) {
    if (params.shape().size() != 1) throw ContractError("mixture_weights: expected a rank-1 parameter vector");
    const Tensor pre = form == GumbelForm::LogProb ? op::log_softmax(params, 0)
                                                   : op::softmax(params, 0);
    return gumbel_logits(pre, tau, noise);
}

Tensor apply_op_kind(OpKind kind, const Tensor& x, const Tensor& w, int scale, bool preactivation) {
    const Tensor xin = preactivation && op_has_weights(kind) ? op::relu(x) : x;
    switch (kind) {
    case OpKind::None:
        return Tensor::zeros(x.shape(), x.dtype());
    case OpKind::Identity:
        return x;
    case OpKind::Conv1x1d1:
        return op::conv2d(xin, w, 1, 1, 0);
    case OpKind::Conv3x3d1:
        return op::conv2d(xin, w, 1, 1, 1);
    case OpKind::Conv3x3d2:
        return op::conv2d(xin, w, 1, 2, 2);
    case OpKind::Conv5x5d1:
        return op::conv2d(xin, w, 1, 1, 2);
    case OpKind::Conv5x5d2:
        return op::conv2d(xin, w, 1, 2, 4);
    case OpKind::TransposedConv3x3:
        return op::transposed_conv2d(xin, w, scale);
    case OpKind::NearestUp:
        return op::interpolate(x, scale, op::InterpMode::Nearest);
    case OpKind::BilinearUp:
        return op::interpolate(x, scale, op::InterpMode::Bilinear);
    case OpKind::AvgPool:
        return op::pool2d(x, op::PoolKind::Avg);
    case OpKind::MaxPool:
        return op::pool2d(x, op::PoolKind::Max);
    case OpKind::Conv3x3d1s2:
        return op::conv2d(xin, w, 2, 1, 1);
    case OpKind::Conv3x3d2s2:
        return op::conv2d(xin, w, 2, 2, 2);
    case OpKind::Conv5x5d1s2:
        return op::conv2d(xin, w, 2, 1, 2);
    case OpKind::Conv5x5d2s2:
        return op::conv2d(xin, w, 2, 2, 4);
    }
    throw ContractError("apply_op_kind: unhandled op kind");
}

Tensor init_conv_weight(int co, int ci, int k, DType dt, RandomStream& rng) {
    Tensor w = Tensor::zeros({co, ci, k, k}, dt);
    const double std = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
    for (std::int64_t j = 0; j < w.numel(); ++j) w.set_value_at(j, rng.gaussian() * std);
    return w;
}

MixedOp::MixedOp(SearchableEdge edge, int channels, DType dt, bool preactivation,
                 RandomStream& init_rng)
    : edge_(std::move(edge)), channels_(channels), preactivation_(preactivation) {
    const auto& kinds = candidate_ops(edge_.role);
    weights_.resize(kinds.size());
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        const OpKind kind = kinds[i];
        if (!op_has_weights(kind)) continue;
        Tensor w = init_conv_weight(channels_, channels_, op_kernel_size(kind), dt, init_rng);
        w.set_requires_grad(true);
        weights_[i] = std::move(w);
    }
}

Tensor MixedOp::apply_candidate(const Tensor& x, int candidate) const {
    const auto& kinds = candidate_ops(edge_.role);
    if (candidate < 0 || candidate >= static_cast<int>(kinds.size()))
        throw ContractError("MixedOp: candidate index out of range on edge " + edge_.id);
    return apply_op_kind(kinds[static_cast<std::size_t>(candidate)], x,
                         weights_[static_cast<std::size_t>(candidate)], edge_.scale, preactivation_);
}

Tensor MixedOp::forward(const Tensor& x, const Tensor& weights) const {
    const auto& kinds = candidate_ops(edge_.role);
    if (weights.numel() != static_cast<std::int64_t>(kinds.size()))
        throw DimensionError("MixedOp: mixture weight length does not match candidate set on edge " +
                             edge_.id);
    Tensor out;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        // 'None' contributes exactly zero, with zero gradient to its weight.
        if (kinds[i] == OpKind::None) continue;
        Tensor fx = apply_candidate(x, static_cast<int>(i));
        Tensor term = op::scale_by(fx, op::index_entry(weights, static_cast<int>(i)));
        try {
            out = out.defined() ? op::add(out, term) : term;
        } catch (const DimensionError& e) {
            throw ContractError("MixedOp: candidate outputs disagree in shape on edge " + edge_.id +
                                ": " + e.what());
        }
    }
    return out;
}

Tensor MixedOp::forward_one(const Tensor& x, int candidate) const {
    const auto& kinds = candidate_ops(edge_.role);
    if (candidate < 0 || candidate >= static_cast<int>(kinds.size()))
        throw ContractError("MixedOp: candidate index out of range on edge " + edge_.id);
    return apply_candidate(x, candidate);
}

} // namespace advnas
