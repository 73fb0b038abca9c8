#pragma once

#include "advnas/derive.hpp"
#include "advnas/relaxation.hpp"
#include "advnas/search_space.hpp"
#include "advnas/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace advnas {

enum class NetRole { Generator, Discriminator };

// How mixture weights are produced for one forward pass.
//  - Gumbel: w = softmax((log_softmax(params) + g)/tau), one fresh noise
//    vector per edge per pass (ZeroGumbel turns this into plain softmax mixing).
//  - Hard: exact one-hot; only the chosen candidate runs, so the pass is
//    bit-identical to the corresponding derived network.
struct MixPlan {
    enum class Mode { Gumbel, Hard };
    Mode mode = Mode::Gumbel;
    double tau = 1.0;
    GumbelForm form = GumbelForm::LogProb;
    GumbelProvider* noise = nullptr;             // Gumbel mode
    const std::vector<int>* hard_choices = nullptr; // Hard mode, canonical edge order

    static MixPlan gumbel(GumbelProvider& g, double tau, GumbelForm form = GumbelForm::LogProb) {
        MixPlan m;
        m.mode = Mode::Gumbel;
        m.tau = tau;
        m.form = form;
        m.noise = &g;
        return m;
    }
    static MixPlan hard(const std::vector<int>& choices) {
        MixPlan m;
        m.mode = Mode::Hard;
        m.hard_choices = &choices;
        return m;
    }
};

// Supernet over one role: every candidate op instantiated on every edge,
// combined per the MixPlan. Node semantics: x_j = sum_{i<j} f_{i,j}(x_i);
// skip edges add into the target cell's output node.
class SuperNet {
public:
    static SuperNet generator(const GeneratorTemplate& t, DType dt, RandomStream& init_rng);
    static SuperNet discriminator(const DiscriminatorTemplate& t, DType dt, RandomStream& init_rng);

    // Generator: input [N, noise_dim] -> [N, img_channels, R, R].
    // Discriminator: input [N, img_channels, R, R] -> logits [N, 1] (no sigmoid).
    // params must be in canonical searchable-edge order.
    Tensor forward(const Tensor& input, const std::vector<EdgeParams>& params, const MixPlan& mix) const;

    NetRole role() const { return role_; }
    DType dtype() const { return dt_; }
    const std::vector<SearchableEdge>& edges() const { return edges_; }
    const GeneratorTemplate& gen_template() const;
    const DiscriminatorTemplate& disc_template() const;
    const MixedOp& mixed_op(std::size_t i) const { return ops_[i]; }
    MixedOp& mixed_op(std::size_t i) { return ops_[i]; }

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::int64_t parameter_count() const;
    void set_params_requires_grad(bool on);

private:
    SuperNet() = default;

    NetRole role_ = NetRole::Generator;
    DType dt_ = DType::F32;
    GeneratorTemplate gen_;
    DiscriminatorTemplate disc_;
    std::vector<SearchableEdge> edges_;
    std::vector<MixedOp> ops_;
    Tensor stem_w_, stem_b_;
    Tensor head_w_, head_b_;
};

Tensor forward_generator(const SuperNet& net, const Tensor& z, const std::vector<EdgeParams>& alpha,
                         const MixPlan& mix);
Tensor forward_discriminator(const SuperNet& net, const Tensor& x,
                             const std::vector<EdgeParams>& beta, const MixPlan& mix);

// Discrete network: one concrete op per edge, 'None' edges removed, nodes
// that lost every input dropped along with their outgoing edges.
class DerivedNet {
public:
    // Fresh weights drawn from init_rng.
    static DerivedNet generator(const DerivedArch& arch, DType dt, RandomStream& init_rng);
    static DerivedNet discriminator(const DerivedArch& arch, DType dt, RandomStream& init_rng);
    // Shares the supernet's weight tensors for the chosen candidates
    // (equivalence checks; forward stays bit-identical to the hard-mode
    // supernet pass).
    static DerivedNet generator_from_supernet(const SuperNet& net, const std::vector<int>& choices);
    static DerivedNet discriminator_from_supernet(const SuperNet& net, const std::vector<int>& choices);

    Tensor forward(const Tensor& input) const;

    NetRole role() const { return role_; }
    DType dtype() const { return dt_; }
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::int64_t parameter_count() const;
    void set_params_requires_grad(bool on);
    const std::vector<DerivedArchEdge>& chosen_edges() const { return chosen_; }

private:
    DerivedNet() = default;
    void build_alive();

    NetRole role_ = NetRole::Generator;
    DType dt_ = DType::F32;
    GeneratorTemplate gen_;
    DiscriminatorTemplate disc_;
    std::vector<DerivedArchEdge> chosen_;
    std::vector<Tensor> edge_weights_; // aligned with chosen_, undefined for weightless ops
    std::vector<bool> alive_;
    Tensor stem_w_, stem_b_;
    Tensor head_w_, head_b_;
};

// Fresh-weight instantiation of a derived architecture for one role.
DerivedNet instantiate_derived(const DerivedArch& arch, NetRole role, DType dt, RandomStream& init_rng);

} // namespace advnas
