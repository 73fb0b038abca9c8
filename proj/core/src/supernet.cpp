#include "advnas/supernet.hpp"

#include "advnas/ops.hpp"

#include <cmath>
#include <functional>

namespace advnas {

namespace op = ops;

namespace {

Tensor init_linear_weight(int din, int dout, DType dt, RandomStream& rng) {
    Tensor w = Tensor::zeros({din, dout}, dt);
    const double std = std::sqrt(2.0 / static_cast<double>(din));
    for (std::int64_t j = 0; j < w.numel(); ++j) w.set_value_at(j, rng.gaussian() * std);
    return w;
}

void check_finite(const Tensor& t, const char* who, int cell_1based, int node) {
    const bool ok = t.dtype() == DType::F32
                        ? [&] {
                              for (float v : t.values<float>())
                                  if (!std::isfinite(v)) return false;
                              return true;
                          }()
                        : [&] {
                              for (double v : t.values<double>())
                                  if (!std::isfinite(v)) return false;
                              return true;
                          }();
    if (!ok)
        throw NumericError(std::string(who) + " cell " + std::to_string(cell_1based) + " node " +
                           std::to_string(node) + " produced a non-finite activation");
}

// Returns the edge's contribution to its target node, or an undefined tensor
// for "nothing" (pruned 'None' edge, or a source node that never came alive).
using EdgeApply = std::function<Tensor(std::size_t edge_idx, const Tensor& x)>;

// Shared node walk: x_j = sum_{i<j} f_{i,j}(x_i), canonical edge order; skip
// edges add into the target cell's output node after its internal edges.
Tensor walk_cells(const std::vector<CellTemplate>& cells, const std::vector<SearchableEdge>& edges,
                  const EdgeApply& apply, Tensor input, const char* who) {
    std::vector<Tensor> node3(cells.size());
    Tensor cur = std::move(input);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        Tensor nodes[kCellNodes];
        nodes[kCellInputNode] = cur;
        auto accumulate = [&](int target, Tensor contrib) {
            if (!contrib.defined()) return;
            nodes[target] = nodes[target].defined() ? op::add(nodes[target], std::move(contrib))
                                                    : std::move(contrib);
        };
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const SearchableEdge& e = edges[i];
            if (e.is_skip || e.cell != static_cast<int>(c)) continue;
            if (!nodes[e.from_node].defined()) continue;
            accumulate(e.to_node, apply(i, nodes[e.from_node]));
        }
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const SearchableEdge& e = edges[i];
            if (!e.is_skip || e.to_cell != static_cast<int>(c)) continue;
            const Tensor& src = node3[static_cast<std::size_t>(e.cell)];
            if (!src.defined()) continue;
            accumulate(kCellOutputNode, apply(i, src));
        }
        for (int j = 1; j < kCellNodes; ++j)
            if (nodes[j].defined()) check_finite(nodes[j], who, static_cast<int>(c) + 1, j);
        node3[c] = nodes[3];
        cur = nodes[kCellOutputNode];
        if (!cur.defined())
            throw ContractError(std::string(who) + " cell " + std::to_string(c + 1) +
                                ": output node has no live inputs");
    }
    return cur;
}

void check_params_order(const std::vector<SearchableEdge>& edges,
                        const std::vector<EdgeParams>& params, DType dt) {
    if (params.size() != edges.size())
        throw ContractError("supernet forward: parameter count does not match searchable edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (params[i].edge_id != edges[i].id)
            throw ContractError("supernet forward: parameter order mismatch at " + params[i].edge_id);
        if (params[i].values.dtype() != dt)
            throw ContractError("supernet forward: parameter dtype does not match network dtype");
    }
}

} // namespace

SuperNet SuperNet::generator(const GeneratorTemplate& t, DType dt, RandomStream& init_rng) {
    SuperNet net;
    net.role_ = NetRole::Generator;
    net.dt_ = dt;
    net.gen_ = t;
    net.edges_ = searchable_edges(t);
    const int c = t.base_channels;
    net.stem_w_ = init_linear_weight(t.noise_dim, c * t.base_resolution * t.base_resolution, dt, init_rng);
    net.stem_w_.set_requires_grad(true);
    net.stem_b_ = Tensor::zeros({c * t.base_resolution * t.base_resolution}, dt);
    net.stem_b_.set_requires_grad(true);
    net.ops_.reserve(net.edges_.size());
    for (const SearchableEdge& e : net.edges_)
        net.ops_.emplace_back(e, c, dt, t.preactivation, init_rng);
    net.head_w_ = init_conv_weight(t.img_channels, c, 1, dt, init_rng);
    net.head_w_.set_requires_grad(true);
    return net;
}

SuperNet SuperNet::discriminator(const DiscriminatorTemplate& t, DType dt, RandomStream& init_rng) {
    SuperNet net;
    net.role_ = NetRole::Discriminator;
    net.dt_ = dt;
    net.disc_ = t;
    net.edges_ = searchable_edges(t);
    const int c = t.base_channels;
    net.stem_w_ = init_conv_weight(c, t.img_channels, 1, dt, init_rng);
    net.stem_w_.set_requires_grad(true);
    net.ops_.reserve(net.edges_.size());
    for (const SearchableEdge& e : net.edges_)
        net.ops_.emplace_back(e, c, dt, t.preactivation, init_rng);
    net.head_w_ = init_linear_weight(c, 1, dt, init_rng);
    net.head_w_.set_requires_grad(true);
    net.head_b_ = Tensor::zeros({1}, dt);
    net.head_b_.set_requires_grad(true);
    return net;
}

const GeneratorTemplate& SuperNet::gen_template() const {
    if (role_ != NetRole::Generator) throw ContractError("gen_template: not a generator");
    return gen_;
}

const DiscriminatorTemplate& SuperNet::disc_template() const {
    if (role_ != NetRole::Discriminator) throw ContractError("disc_template: not a discriminator");
    return disc_;
}

Tensor SuperNet::forward(const Tensor& input, const std::vector<EdgeParams>& params,
                         const MixPlan& mix) const {
    check_params_order(edges_, params, dt_);

    EdgeApply apply;
    std::vector<Tensor> weights; // gumbel mode, canonical order
    if (mix.mode == MixPlan::Mode::Gumbel) {
        if (!mix.noise) throw ContractError("supernet forward: gumbel mixing needs a noise provider");
        weights.reserve(edges_.size());
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            const auto n = candidate_ops(edges_[i].role).size();
            const auto g = mix.noise->sample(edges_[i].id, n);
            weights.push_back(mixture_weights(params[i].values, mix.tau, g, mix.form));
        }
        apply = [&](std::size_t i, const Tensor& x) { return ops_[i].forward(x, weights[i]); };
    } else {
        if (!mix.hard_choices || mix.hard_choices->size() != edges_.size())
            throw ContractError("supernet forward: hard mixing needs one choice per edge");
        apply = [&](std::size_t i, const Tensor& x) -> Tensor {
            const int choice = (*mix.hard_choices)[i];
            if (candidate_ops(edges_[i].role)[static_cast<std::size_t>(choice)] == OpKind::None)
                return Tensor(); // pruned
            return ops_[i].forward_one(x, choice);
        };
    }

    if (role_ == NetRole::Generator) {
        if (input.shape().size() != 2 || input.dim(1) != gen_.noise_dim)
            throw DimensionError("generator forward: expected noise [N," +
                                 std::to_string(gen_.noise_dim) + "], got " +
                                 shape_to_string(input.shape()));
        const int n = input.dim(0);
        Tensor h = op::linear(input, stem_w_, stem_b_);
        h = op::reshape(h, {n, gen_.base_channels, gen_.base_resolution, gen_.base_resolution});
        Tensor out = walk_cells(gen_.cells, edges_, apply, std::move(h), "generator");
        return op::tanh(op::conv2d(out, head_w_, 1, 1, 0));
    }

    const int r = disc_.input_resolution;
    if (input.shape().size() != 4 || input.dim(1) != disc_.img_channels || input.dim(2) != r ||
        input.dim(3) != r)
        throw DimensionError("discriminator forward: expected images [N," +
                             std::to_string(disc_.img_channels) + "," + std::to_string(r) + "," +
                             std::to_string(r) + "], got " + shape_to_string(input.shape()));
    Tensor h = op::conv2d(input, stem_w_, 1, 1, 0);
    Tensor out = walk_cells(disc_.cells, edges_, apply, std::move(h), "discriminator");
    return op::linear(op::global_sum_pool(out), head_w_, head_b_);
}

std::vector<std::pair<std::string, Tensor>> SuperNet::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    const char* p = role_ == NetRole::Generator ? "g" : "d";
    out.emplace_back(std::string(p) + ".stem.w", stem_w_);
    if (stem_b_.defined()) out.emplace_back(std::string(p) + ".stem.b", stem_b_);
    for (std::size_t i = 0; i < ops_.size(); ++i) {
        const auto& ws = ops_[i].op_weights();
        for (std::size_t k = 0; k < ws.size(); ++k)
            if (ws[k].defined())
                out.emplace_back(edges_[i].id + ".op" + std::to_string(k) + ".w", ws[k]);
    }
    out.emplace_back(std::string(p) + ".head.w", head_w_);
    if (head_b_.defined()) out.emplace_back(std::string(p) + ".head.b", head_b_);
    return out;
}

std::int64_t SuperNet::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.numel();
    return n;
}

void SuperNet::set_params_requires_grad(bool on) {
    for (auto& [name, t] : named_params()) {
        Tensor tt = t;
        tt.set_requires_grad(on);
    }
}

Tensor forward_generator(const SuperNet& net, const Tensor& z, const std::vector<EdgeParams>& alpha,
                         const MixPlan& mix) {
    if (net.role() != NetRole::Generator) throw ContractError("forward_generator: wrong role");
    return net.forward(z, alpha, mix);
}

Tensor forward_discriminator(const SuperNet& net, const Tensor& x,
                             const std::vector<EdgeParams>& beta, const MixPlan& mix) {
    if (net.role() != NetRole::Discriminator) throw ContractError("forward_discriminator: wrong role");
    return net.forward(x, beta, mix);
}

namespace {

// An edge participates when its op is not 'None' and its source node is live.
bool edge_in_use(const DerivedArchEdge& de, const std::vector<bool>& alive) {
    if (de.op == OpKind::None) return false;
    return alive[static_cast<std::size_t>(de.edge.cell) * kCellNodes +
                 static_cast<std::size_t>(de.edge.from_node)];
}

} // namespace

void DerivedNet::build_alive() {
    alive_ = role_ == NetRole::Generator ? alive_nodes_generator(gen_, chosen_)
                                         : alive_nodes_discriminator(disc_, chosen_);
    const std::size_t cells = role_ == NetRole::Generator ? gen_.cells.size() : disc_.cells.size();
    if (!alive_[(cells - 1) * kCellNodes + kCellOutputNode])
        throw DerivationError("derived network: output unreachable after pruning");
}

DerivedNet DerivedNet::generator(const DerivedArch& arch, DType dt, RandomStream& init_rng) {
    if (!arch.has_generator()) throw ContractError("DerivedNet::generator: architecture has no generator");
    DerivedNet net;
    net.role_ = NetRole::Generator;
    net.dt_ = dt;
    net.gen_ = arch.generator_template();
    net.chosen_ = arch.gen_edges;
    net.build_alive();
    const int c = arch.channels;
    net.stem_w_ = init_linear_weight(arch.noise_dim, c * arch.base_resolution * arch.base_resolution,
                                     dt, init_rng);
    net.stem_w_.set_requires_grad(true);
    net.stem_b_ = Tensor::zeros({c * arch.base_resolution * arch.base_resolution}, dt);
    net.stem_b_.set_requires_grad(true);
    net.edge_weights_.resize(net.chosen_.size());
    for (std::size_t i = 0; i < net.chosen_.size(); ++i) {
        const auto& de = net.chosen_[i];
        if (!op_has_weights(de.op) || !edge_in_use(de, net.alive_)) continue;
        Tensor w = init_conv_weight(c, c, op_kernel_size(de.op), dt, init_rng);
        w.set_requires_grad(true);
        net.edge_weights_[i] = std::move(w);
    }
    net.head_w_ = init_conv_weight(arch.img_channels, c, 1, dt, init_rng);
    net.head_w_.set_requires_grad(true);
    return net;
}

DerivedNet DerivedNet::discriminator(const DerivedArch& arch, DType dt, RandomStream& init_rng) {
    if (!arch.has_discriminator())
        throw ContractError("DerivedNet::discriminator: architecture has no discriminator");
    DerivedNet net;
    net.role_ = NetRole::Discriminator;
    net.dt_ = dt;
    net.disc_ = arch.discriminator_template();
    net.chosen_ = arch.disc_edges;
    net.build_alive();
    const int c = arch.channels;
    net.stem_w_ = init_conv_weight(c, arch.img_channels, 1, dt, init_rng);
    net.stem_w_.set_requires_grad(true);
    net.edge_weights_.resize(net.chosen_.size());
    for (std::size_t i = 0; i < net.chosen_.size(); ++i) {
        const auto& de = net.chosen_[i];
        if (!op_has_weights(de.op) || !edge_in_use(de, net.alive_)) continue;
        Tensor w = init_conv_weight(c, c, op_kernel_size(de.op), dt, init_rng);
        w.set_requires_grad(true);
        net.edge_weights_[i] = std::move(w);
    }
    net.head_w_ = init_linear_weight(c, 1, dt, init_rng);
    net.head_w_.set_requires_grad(true);
    net.head_b_ = Tensor::zeros({1}, dt);
    net.head_b_.set_requires_grad(true);
    return net;
}

namespace {

std::vector<DerivedArchEdge> edges_from_choices(const std::vector<SearchableEdge>& edges,
                                                const std::vector<int>& choices) {
    if (choices.size() != edges.size())
        throw ContractError("derived-from-supernet: one choice per edge required");
    std::vector<DerivedArchEdge> out;
    out.reserve(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i)
        out.push_back({edges[i], candidate_ops(edges[i].role)[static_cast<std::size_t>(choices[i])]});
    return out;
}

} // namespace

DerivedNet DerivedNet::generator_from_supernet(const SuperNet& net, const std::vector<int>& choices) {
    DerivedNet d;
    d.role_ = NetRole::Generator;
    d.dt_ = net.dtype();
    d.gen_ = net.gen_template();
    d.chosen_ = edges_from_choices(net.edges(), choices);
    d.build_alive();
    for (std::size_t i = 0; i < d.chosen_.size(); ++i) {
        // shared handles: the derived net reads the supernet's tensors
        d.edge_weights_.push_back(op_has_weights(d.chosen_[i].op)
                                      ? net.mixed_op(i).op_weights()[static_cast<std::size_t>(choices[i])]
                                      : Tensor());
    }
    auto named = net.named_params();
    for (auto& [name, t] : named) {
        if (name == "g.stem.w") d.stem_w_ = t;
        else if (name == "g.stem.b") d.stem_b_ = t;
        else if (name == "g.head.w") d.head_w_ = t;
    }
    return d;
}

DerivedNet DerivedNet::discriminator_from_supernet(const SuperNet& net, const std::vector<int>& choices) {
    DerivedNet d;
    d.role_ = NetRole::Discriminator;
    d.dt_ = net.dtype();
    d.disc_ = net.disc_template();
    d.chosen_ = edges_from_choices(net.edges(), choices);
    d.build_alive();
    for (std::size_t i = 0; i < d.chosen_.size(); ++i) {
        d.edge_weights_.push_back(op_has_weights(d.chosen_[i].op)
                                      ? net.mixed_op(i).op_weights()[static_cast<std::size_t>(choices[i])]
                                      : Tensor());
    }
    auto named = net.named_params();
    for (auto& [name, t] : named) {
        if (name == "d.stem.w") d.stem_w_ = t;
        else if (name == "d.head.w") d.head_w_ = t;
        else if (name == "d.head.b") d.head_b_ = t;
    }
    return d;
}

Tensor DerivedNet::forward(const Tensor& input) const {
    const auto& cells = role_ == NetRole::Generator ? gen_.cells : disc_.cells;
    const bool preact = role_ == NetRole::Generator ? gen_.preactivation : disc_.preactivation;
    std::vector<SearchableEdge> edges;
    edges.reserve(chosen_.size());
    for (const auto& de : chosen_) edges.push_back(de.edge);
    EdgeApply apply = [&](std::size_t i, const Tensor& x) -> Tensor {
        const auto& de = chosen_[i];
        if (de.op == OpKind::None) return Tensor();
        return apply_op_kind(de.op, x, edge_weights_[i], de.edge.scale, preact);
    };

    if (role_ == NetRole::Generator) {
        if (input.shape().size() != 2 || input.dim(1) != gen_.noise_dim)
            throw DimensionError("derived generator forward: expected noise [N," +
                                 std::to_string(gen_.noise_dim) + "], got " +
                                 shape_to_string(input.shape()));
        const int n = input.dim(0);
        Tensor h = op::linear(input, stem_w_, stem_b_);
        h = op::reshape(h, {n, gen_.base_channels, gen_.base_resolution, gen_.base_resolution});
        Tensor out = walk_cells(cells, edges, apply, std::move(h), "derived generator");
        return op::tanh(op::conv2d(out, head_w_, 1, 1, 0));
    }
    Tensor h = op::conv2d(input, stem_w_, 1, 1, 0);
    Tensor out = walk_cells(cells, edges, apply, std::move(h), "derived discriminator");
    return op::linear(op::global_sum_pool(out), head_w_, head_b_);
}

std::vector<std::pair<std::string, Tensor>> DerivedNet::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    const char* p = role_ == NetRole::Generator ? "g" : "d";
    out.emplace_back(std::string(p) + ".stem.w", stem_w_);
    if (stem_b_.defined()) out.emplace_back(std::string(p) + ".stem.b", stem_b_);
    for (std::size_t i = 0; i < chosen_.size(); ++i)
        if (edge_weights_[i].defined()) out.emplace_back(chosen_[i].edge.id + ".w", edge_weights_[i]);
    out.emplace_back(std::string(p) + ".head.w", head_w_);
    if (head_b_.defined()) out.emplace_back(std::string(p) + ".head.b", head_b_);
    return out;
}

std::int64_t DerivedNet::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.numel();
    return n;
}

void DerivedNet::set_params_requires_grad(bool on) {
    for (auto& [name, t] : named_params()) {
        Tensor tt = t;
        tt.set_requires_grad(on);
    }
}

DerivedNet instantiate_derived(const DerivedArch& arch, NetRole role, DType dt, RandomStream& init_rng) {
    return role == NetRole::Generator ? DerivedNet::generator(arch, dt, init_rng)
                                      : DerivedNet::discriminator(arch, dt, init_rng);
}

} // namespace advnas
