#pragma once

#include "advnas/errors.hpp"
#include "advnas/random.hpp"
#include "advnas/relaxation.hpp"
#include "advnas/search_space.hpp"

#include <string>
#include <vector>

namespace advnas {

// Raised when argmax derivation produces a network whose output is
// unreachable after 'None' pruning.
class DerivationError : public Error {
public:
    using Error::Error;
};

struct DerivedArchEdge {
    SearchableEdge edge;
    OpKind op = OpKind::None;
};

// Discrete architecture: exactly one operation per searchable edge. The
// artifact's chief output; serializable as a versioned text table.
struct DerivedArch {
    // dimensions and provenance
    int channels = 0;
    int base_resolution = 0;
    int noise_dim = 0;
    int img_channels = 3;
    std::uint64_t seed = 0;
    std::string source = "search"; // search | random
    std::string tool_version;

    std::vector<DerivedArchEdge> gen_edges;  // canonical order; empty when absent
    std::vector<DerivedArchEdge> disc_edges; // canonical order; empty when absent

    bool has_generator() const { return !gen_edges.empty(); }
    bool has_discriminator() const { return !disc_edges.empty(); }

    GeneratorTemplate generator_template() const;
    DiscriminatorTemplate discriminator_template() const;
};

struct DeriveMeta {
    std::uint64_t seed = 0;
    std::string source = "search";
};

// argmax over one edge's parameter vector; ties break to the lowest index.
int select_candidate(const Tensor& params);
// argmax per edge, canonical order (no validation).
std::vector<int> argmax_choices(const std::vector<EdgeParams>& params);

// Per-node liveness (index cell * kCellNodes + node) after 'None' pruning:
// a node is alive when it keeps at least one incoming edge from a live node;
// dead nodes drop their outgoing edges.
std::vector<bool> alive_nodes_generator(const GeneratorTemplate& t,
                                        const std::vector<DerivedArchEdge>& edges);
std::vector<bool> alive_nodes_discriminator(const DiscriminatorTemplate& t,
                                            const std::vector<DerivedArchEdge>& edges);

// Names of dead nodes when the output became unreachable; empty otherwise.
std::vector<std::string> dead_nodes_generator(const GeneratorTemplate& t,
                                              const std::vector<DerivedArchEdge>& edges);
std::vector<std::string> dead_nodes_discriminator(const DiscriminatorTemplate& t,
                                                  const std::vector<DerivedArchEdge>& edges);
// Output-reachability violations for every part present.
std::vector<std::string> validate_derived(const DerivedArch& arch);

// Per-edge argmax of edge_probs over alpha (and beta when present), then
// validation. Throws DerivationError listing dead nodes when the derived
// output is unreachable.
DerivedArch derive(const ArchParams& params, const NetworkTemplate& t, const DeriveMeta& meta);

// Uniform independent choice per edge, revalidated; resamples up to 100
// times before giving up with a ConfigError.
DerivedArch sample_random_arch(const NetworkTemplate& t, RandomStream& rng, std::uint64_t seed_tag);

// Versioned text format (see serialize_arch for the layout). Round-trips
// byte-exactly: serialize(parse(text)) == text for files this tool wrote.
std::string serialize_arch(const DerivedArch& arch);
DerivedArch parse_arch(const std::string& text);
void save_arch(const DerivedArch& arch, const std::string& path);
DerivedArch load_arch(const std::string& path);

} // namespace advnas
