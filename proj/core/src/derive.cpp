#include "advnas/derive.hpp"

#include "advnas/version.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace advnas {

GeneratorTemplate DerivedArch::generator_template() const {
    return build_generator_template(channels, noise_dim, base_resolution, img_channels);
}

DiscriminatorTemplate DerivedArch::discriminator_template() const {
    return build_discriminator_template(channels, base_resolution * 8, img_channels);
}

int select_candidate(const Tensor& params) {
    const auto probs = edge_prob_values(params); // validates finiteness
    int best = 0;
    for (int i = 1; i < static_cast<int>(probs.size()); ++i)
        if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
    return best;
}

std::vector<int> argmax_choices(const std::vector<EdgeParams>& params) {
    std::vector<int> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(select_candidate(p.values));
    return out;
}

namespace {

// Aliveness after 'None' pruning. node index: cell * kCellNodes + node.
std::vector<bool> alive_nodes(const std::vector<CellTemplate>& cells,
                              const std::vector<SkipEdgeSpec>& skips,
                              const std::vector<DerivedArchEdge>& edges) {
    const std::size_t n_cells = cells.size();
    std::vector<bool> alive(n_cells * kCellNodes, false);
    alive[0] = true; // cell 0 input is fed by the stem

    auto op_for = [&](int cell, int from, int to, bool is_skip, int to_cell) -> const DerivedArchEdge* {
        for (const auto& e : edges) {
            if (e.edge.cell != cell || e.edge.is_skip != is_skip) continue;
            if (is_skip) {
                if (e.edge.from_node == from && e.edge.to_cell == to_cell) return &e;
            } else if (e.edge.from_node == from && e.edge.to_node == to) {
                return &e;
            }
        }
        return nullptr;
    };

    for (std::size_t c = 0; c < n_cells; ++c) {
        if (c > 0) alive[c * kCellNodes] = alive[(c - 1) * kCellNodes + kCellOutputNode];
        for (int j = 1; j < kCellNodes; ++j) {
            bool has_live_input = false;
            for (const EdgeSpec& e : cells[c].edges) {
                if (e.to_node != j) continue;
                const DerivedArchEdge* de = op_for(static_cast<int>(c), e.from_node, e.to_node, false, 0);
                if (!de || de->op == OpKind::None) continue;
                if (alive[c * kCellNodes + static_cast<std::size_t>(e.from_node)]) has_live_input = true;
            }
            if (j == kCellOutputNode) {
                for (const SkipEdgeSpec& k : skips) {
                    if (k.to_cell != static_cast<int>(c)) continue;
                    const DerivedArchEdge* de = op_for(k.from_cell, k.from_node, 0, true, k.to_cell);
                    if (!de || de->op == OpKind::None) continue;
                    if (alive[static_cast<std::size_t>(k.from_cell) * kCellNodes +
                              static_cast<std::size_t>(k.from_node)])
                        has_live_input = true;
                }
            }
            alive[c * kCellNodes + static_cast<std::size_t>(j)] = has_live_input;
        }
    }
    return alive;
}

std::vector<std::string> dead_report(const std::vector<bool>& alive, std::size_t n_cells, char prefix) {
    std::vector<std::string> dead;
    if (!alive[(n_cells - 1) * kCellNodes + kCellOutputNode]) {
        for (std::size_t c = 0; c < n_cells; ++c)
            for (int j = 0; j < kCellNodes; ++j)
                if (!alive[c * kCellNodes + static_cast<std::size_t>(j)])
                    dead.push_back(std::string(1, prefix) + std::to_string(c + 1) + ".node" +
                                   std::to_string(j));
    }
    return dead;
}

} // namespace

std::vector<bool> alive_nodes_generator(const GeneratorTemplate& t,
                                        const std::vector<DerivedArchEdge>& edges) {
    return alive_nodes(t.cells, t.skips, edges);
}

std::vector<bool> alive_nodes_discriminator(const DiscriminatorTemplate& t,
                                            const std::vector<DerivedArchEdge>& edges) {
    return alive_nodes(t.cells, {}, edges);
}

std::vector<std::string> dead_nodes_generator(const GeneratorTemplate& t,
                                              const std::vector<DerivedArchEdge>& edges) {
    return dead_report(alive_nodes_generator(t, edges), t.cells.size(), 'g');
}

std::vector<std::string> dead_nodes_discriminator(const DiscriminatorTemplate& t,
                                                  const std::vector<DerivedArchEdge>& edges) {
    return dead_report(alive_nodes_discriminator(t, edges), t.cells.size(), 'd');
}

std::vector<std::string> validate_derived(const DerivedArch& arch) {
    std::vector<std::string> out;
    if (arch.has_generator()) {
        auto d = dead_nodes_generator(arch.generator_template(), arch.gen_edges);
        out.insert(out.end(), d.begin(), d.end());
    }
    if (arch.has_discriminator()) {
        auto d = dead_nodes_discriminator(arch.discriminator_template(), arch.disc_edges);
        out.insert(out.end(), d.begin(), d.end());
    }
    return out;
}

namespace {

std::vector<DerivedArchEdge> choose_edges(const std::vector<SearchableEdge>& edges,
                                          const std::vector<EdgeParams>& params) {
    if (edges.size() != params.size())
        throw ContractError("derive: parameter count does not match template edges");
    std::vector<DerivedArchEdge> out;
    out.reserve(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (params[i].edge_id != edges[i].id)
            throw ContractError("derive: parameter order mismatch at edge " + params[i].edge_id);
        DerivedArchEdge e;
        e.edge = edges[i];
        e.op = candidate_ops(edges[i].role)[static_cast<std::size_t>(select_candidate(params[i].values))];
        out.push_back(std::move(e));
    }
    return out;
}

void throw_if_dead(const std::vector<std::string>& dead) {
    if (dead.empty()) return;
    std::string msg = "derivation: output unreachable after pruning; dead nodes:";
    for (const auto& d : dead) msg += " " + d;
    throw DerivationError(msg);
}

} // namespace

DerivedArch derive(const ArchParams& params, const NetworkTemplate& t, const DeriveMeta& meta) {
    DerivedArch arch;
    arch.channels = t.gen.base_channels;
    arch.base_resolution = t.gen.base_resolution;
    arch.noise_dim = t.gen.noise_dim;
    arch.img_channels = t.gen.img_channels;
    arch.seed = meta.seed;
    arch.source = meta.source;
    arch.tool_version = kToolVersion;
    if (!params.alpha.empty()) arch.gen_edges = choose_edges(searchable_edges(t.gen), params.alpha);
    if (!params.beta.empty()) arch.disc_edges = choose_edges(searchable_edges(t.disc), params.beta);
    throw_if_dead(validate_derived(arch));
    return arch;
}

DerivedArch sample_random_arch(const NetworkTemplate& t, RandomStream& rng, std::uint64_t seed_tag) {
    const auto gen_edges = searchable_edges(t.gen);
    const auto disc_edges = searchable_edges(t.disc);
    for (int attempt = 0; attempt < 100; ++attempt) {
        DerivedArch arch;
        arch.channels = t.gen.base_channels;
        arch.base_resolution = t.gen.base_resolution;
        arch.noise_dim = t.gen.noise_dim;
        arch.img_channels = t.gen.img_channels;
        arch.seed = seed_tag;
        arch.source = "random";
        arch.tool_version = kToolVersion;
        for (const auto& e : gen_edges) {
            const auto& set = candidate_ops(e.role);
            arch.gen_edges.push_back({e, set[static_cast<std::size_t>(rng.uniform_int(set.size()))]});
        }
        for (const auto& e : disc_edges) {
            const auto& set = candidate_ops(e.role);
            arch.disc_edges.push_back({e, set[static_cast<std::size_t>(rng.uniform_int(set.size()))]});
        }
        if (validate_derived(arch).empty()) return arch;
    }
    throw ConfigError("sample_random_arch: 100 consecutive samples failed validation");
}

namespace {

std::string edge_token(const SearchableEdge& e) {
    if (e.is_skip) return std::to_string(e.from_node) + "->c" + std::to_string(e.to_cell + 1);
    return std::to_string(e.from_node) + "->" + std::to_string(e.to_node);
}

// resolution span of an edge given its owning template dims
std::pair<int, int> edge_resolution(const DerivedArch& a, const SearchableEdge& e, bool generator) {
    if (generator) {
        const int rin = a.base_resolution << e.cell;
        const int rout = rin * 2;
        if (e.is_skip) return {rout, a.base_resolution << (e.to_cell + 1)};
        if (e.role == CandidateRole::GUp) return {rin, rout};
        return {rout, rout};
    }
    const int rin = (a.base_resolution * 8) >> e.cell;
    if (e.role == CandidateRole::DDown) return {rin, rin / 2};
    return {rin, rin};
}

void write_section(std::ostringstream& os, const DerivedArch& a,
                   const std::vector<DerivedArchEdge>& edges, bool generator) {
    os << (generator ? "[generator]\n" : "[discriminator]\n");
    int current_cell = -1;
    for (const auto& de : edges) {
        if (de.edge.cell != current_cell) {
            current_cell = de.edge.cell;
            os << "cell " << current_cell + 1 << '\n';
        }
        os << edge_token(de.edge) << ' ' << op_kind_name(de.op) << ' ';
        if (de.op == OpKind::None) {
            os << "- -\n";
            continue;
        }
        if (op_has_weights(de.op)) os << a.channels;
        else os << 1;
        const auto [rin, rout] = edge_resolution(a, de.edge, generator);
        os << ' ' << rin << "->" << rout << '\n';
    }
}

} // namespace

std::string serialize_arch(const DerivedArch& arch) {
    std::ostringstream os;
    os << "advnas-arch v1\n";
    os << "candidate_sets " << candidate_set_version_hash() << '\n';
    os << "channels " << arch.channels << '\n';
    os << "base_resolution " << arch.base_resolution << '\n';
    os << "noise_dim " << arch.noise_dim << '\n';
    os << "img_channels " << arch.img_channels << '\n';
    os << "seed " << arch.seed << '\n';
    os << "source " << arch.source << '\n';
    os << "tool_version " << arch.tool_version << '\n';
    if (arch.has_generator()) {
        os << '\n';
        write_section(os, arch, arch.gen_edges, true);
    }
    if (arch.has_discriminator()) {
        os << '\n';
        write_section(os, arch, arch.disc_edges, false);
    }
    return os.str();
}

namespace {

struct LineReader {
    std::istringstream in;
    std::string line;
    int number = 0;
    explicit LineReader(const std::string& text) : in(text) {}
    bool next() {
        if (!std::getline(in, line)) return false;
        ++number;
        return true;
    }
    [[noreturn]] void fail(const std::string& why) const {
        throw FormatError("architecture file, line " + std::to_string(number) + ": " + why);
    }
};

std::vector<DerivedArchEdge> parse_section(LineReader& r, const DerivedArch& arch, bool generator) {
    const auto expected = generator ? searchable_edges(arch.generator_template())
                                    : searchable_edges(arch.discriminator_template());
    std::vector<DerivedArchEdge> out;
    std::size_t idx = 0;
    int current_cell = -1;
    while (idx < expected.size()) {
        if (!r.next()) r.fail("section ended before all edges were listed");
        if (r.line.empty()) r.fail("unexpected blank line inside a section");
        std::istringstream ls(r.line);
        std::string first;
        ls >> first;
        if (first == "cell") {
            int c = 0;
            ls >> c;
            if (c != expected[idx].cell + 1) r.fail("cells out of order");
            current_cell = c - 1;
            continue;
        }
        const SearchableEdge& e = expected[idx];
        if (e.cell != current_cell) r.fail("edge listed under the wrong cell");
        if (first != edge_token(e)) r.fail("expected edge " + edge_token(e) + ", got " + first);
        std::string op_name, num, res;
        ls >> op_name >> num >> res;
        if (op_name.empty() || num.empty() || res.empty()) r.fail("malformed edge row");
        const auto kind = op_kind_from_name(op_name);
        if (!kind) r.fail("unknown operation '" + op_name + "'");
        const auto& set = candidate_ops(e.role);
        if (std::find(set.begin(), set.end(), *kind) == set.end())
            r.fail("operation '" + op_name + "' is not in the " + role_name(e.role) + " candidate set");
        DerivedArchEdge de{e, *kind};
        // cross-check the informational columns
        if (*kind == OpKind::None) {
            if (num != "-" || res != "-") r.fail("'none' rows must use '- -'");
        } else {
            const std::string expect_num = op_has_weights(*kind) ? std::to_string(arch.channels) : "1";
            if (num != expect_num) r.fail("unexpected operation width " + num);
            const auto [rin, rout] = edge_resolution(arch, e, generator);
            const std::string expect_res = std::to_string(rin) + "->" + std::to_string(rout);
            if (res != expect_res) r.fail("unexpected resolution " + res + " (want " + expect_res + ")");
        }
        out.push_back(std::move(de));
        ++idx;
    }
    return out;
}

} // namespace

DerivedArch parse_arch(const std::string& text) {
    LineReader r(text);
    if (!r.next() || r.line != "advnas-arch v1") throw FormatError("architecture file: bad or missing version line");
    DerivedArch arch;
    std::string hash;
    bool have_hash = false;
    while (r.next()) {
        if (r.line.empty()) break;
        std::istringstream ls(r.line);
        std::string key;
        ls >> key;
        std::string value;
        ls >> value;
        if (key == "candidate_sets") {
            hash = value;
            have_hash = true;
        } else if (key == "channels") arch.channels = std::stoi(value);
        else if (key == "base_resolution") arch.base_resolution = std::stoi(value);
        else if (key == "noise_dim") arch.noise_dim = std::stoi(value);
        else if (key == "img_channels") arch.img_channels = std::stoi(value);
        else if (key == "seed") arch.seed = std::stoull(value);
        else if (key == "source") arch.source = value;
        else if (key == "tool_version") arch.tool_version = value;
        else r.fail("unknown header key '" + key + "'");
    }
    if (!have_hash || hash != candidate_set_version_hash())
        throw FormatError("architecture file: candidate-set version mismatch");
    if (arch.channels < 1 || arch.base_resolution < 1 || arch.noise_dim < 1 || arch.img_channels < 1)
        throw FormatError("architecture file: missing or invalid dimensions");
    while (r.next()) {
        if (r.line.empty()) continue;
        if (r.line == "[generator]") arch.gen_edges = parse_section(r, arch, true);
        else if (r.line == "[discriminator]") arch.disc_edges = parse_section(r, arch, false);
        else r.fail("unexpected content '" + r.line + "'");
    }
    if (!arch.has_generator() && !arch.has_discriminator())
        throw FormatError("architecture file: no sections present");
    return arch;
}

void save_arch(const DerivedArch& arch, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write architecture file: " + path);
    out << serialize_arch(arch);
}

DerivedArch load_arch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read architecture file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_arch(ss.str());
}

} // namespace advnas
