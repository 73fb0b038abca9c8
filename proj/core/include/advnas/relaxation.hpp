#pragma once

#include "advnas/random.hpp"
#include "advnas/search_space.hpp"
#include "advnas/tensor.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace advnas {

// Trainable parameter vector of one searchable edge.
struct EdgeParams {
    std::string edge_id;
    CandidateRole role = CandidateRole::GNormal;
    Tensor values; // rank-1 leaf, length |candidate set|, requires_grad
};

// Learnable architecture parameters: alpha drives the generator edges, beta
// the discriminator edges, in canonical searchable-edge order.
struct ArchParams {
    std::vector<EdgeParams> alpha;
    std::vector<EdgeParams> beta;
    double tau = 1.0;

    // Zero-initialized (uniform candidate distribution, maximal entropy).
    static ArchParams zeros_for(const NetworkTemplate& t, DType dt = DType::F32);
    static std::vector<EdgeParams> zeros_for_edges(const std::vector<SearchableEdge>& edges, DType dt);

    const EdgeParams* find_alpha(std::string_view edge_id) const;
    const EdgeParams* find_beta(std::string_view edge_id) const;
};

// softmax of one edge's parameters; differentiable. NaN input is a NumericError.
Tensor edge_probs(const Tensor& params);
std::vector<double> edge_prob_values(const Tensor& params);
// entropy of softmax(params) in nats
double edge_entropy(const Tensor& params);
// mean entropy over all alpha and beta edges
double mean_edge_entropy(const ArchParams& params);

// log p + Gumbel noise reproduces the Gumbel-max sampling property and is the
// default. ProbLiteral perturbs the probability itself (p + noise) and is
// kept behind this switch for compatibility; it does not sample from p.
enum class GumbelForm { LogProb, ProbLiteral };

// softmax((log probs + g) / tau) with externally supplied noise g; the noise
// is treated as a constant (reparameterization), so the result stays
// differentiable w.r.t. probs. tau <= 0 is a ConfigError.
Tensor gumbel_weights_with_noise(const Tensor& probs, double tau, std::span<const double> noise,
                                 GumbelForm form = GumbelForm::LogProb);
// Same, drawing |probs| Gumbel(0,1) samples from rng (one vector per call).
Tensor gumbel_weights(const Tensor& probs, double tau, RandomStream& rng,
                      GumbelForm form = GumbelForm::LogProb);

// Mixture weights straight from raw parameters:
// softmax((log_softmax(params) + g) / tau); numerically preferable to going
// through edge_probs and identical in value.
Tensor mixture_weights(const Tensor& params, double tau, std::span<const double> noise,
                       GumbelForm form = GumbelForm::LogProb);

// Per-edge Gumbel noise source. Exactly one vector is drawn per edge per
// forward pass, shared by all candidates on that edge.
class GumbelProvider {
public:
    virtual ~GumbelProvider() = default;
    virtual std::vector<double> sample(const std::string& edge_id, std::size_t n) = 0;
};

class FreshGumbel final : public GumbelProvider {
public:
    explicit FreshGumbel(RandomStream& rng) : rng_(&rng) {}
    std::vector<double> sample(const std::string&, std::size_t n) override {
        std::vector<double> g(n);
        for (auto& v : g) v = rng_->gumbel();
        return g;
    }

private:
    RandomStream* rng_;
};

// Replays stored noise (finite-difference tests); unknown edges get zeros.
class FixedGumbel final : public GumbelProvider {
public:
    FixedGumbel() = default;
    explicit FixedGumbel(std::map<std::string, std::vector<double>> noise) : noise_(std::move(noise)) {}
    void set(const std::string& edge_id, std::vector<double> g) { noise_[edge_id] = std::move(g); }
    std::vector<double> sample(const std::string& edge_id, std::size_t n) override {
        auto it = noise_.find(edge_id);
        if (it != noise_.end()) return it->second;
        return std::vector<double>(n, 0.0);
    }

private:
    std::map<std::string, std::vector<double>> noise_;
};

class ZeroGumbel final : public GumbelProvider {
public:
    std::vector<double> sample(const std::string&, std::size_t n) override {
        return std::vector<double>(n, 0.0);
    }
};

// Applies one candidate operation. w must be defined for weighted kinds and
// is ignored otherwise; scale feeds the resampling kinds. When preactivation
// is set, weighted kinds see relu(x) instead of x (weightless kinds never do,
// so Identity stays exact). The soft mixture, the hard supernet path and
// derived networks all go through this one dispatch.
Tensor apply_op_kind(OpKind kind, const Tensor& x, const Tensor& w, int scale, bool preactivation);

// He-style init for a conv weight [Co,Ci,k,k]: normal with std sqrt(2/(Ci k^2)).
Tensor init_conv_weight(int co, int ci, int k, DType dt, RandomStream& rng);

// One searchable edge instantiated with a kernel (and weights, where the op
// kind has any) for every candidate in its set.
class MixedOp {
public:
    MixedOp(SearchableEdge edge, int channels, DType dt, bool preactivation, RandomStream& init_rng);

    // Weighted sum over candidates, sum_f w_f * f(x); 'None' contributes
    // zeros. weights is the rank-1 mixture vector for this edge.
    Tensor forward(const Tensor& x, const Tensor& weights) const;
    // Exactly one candidate (the discrete path); 'None' yields zeros.
    Tensor forward_one(const Tensor& x, int candidate) const;

    const SearchableEdge& edge() const { return edge_; }
    int channels() const { return channels_; }
    // Trainable op weights, candidate-set order; undefined entries for
    // weightless kinds.
    const std::vector<Tensor>& op_weights() const { return weights_; }
    std::vector<Tensor>& op_weights() { return weights_; }

    Tensor apply_candidate(const Tensor& x, int candidate) const;

private:
    SearchableEdge edge_;
    int channels_ = 0;
    bool preactivation_ = true;
    std::vector<Tensor> weights_;
};

} // namespace advnas
