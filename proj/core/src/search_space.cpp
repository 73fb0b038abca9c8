#include "advnas/search_space.hpp"

#include "advnas/errors.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace advnas {

namespace {

struct OpNameRow {
    OpKind kind;
    const char* name;
};

constexpr OpNameRow kOpNames[] = {
    {OpKind::None, "none"},
    {OpKind::Identity, "identity"},
    {OpKind::Conv1x1d1, "conv1x1"},
    {OpKind::Conv3x3d1, "conv3x3"},
    {OpKind::Conv3x3d2, "conv3x3d2"},
    {OpKind::Conv5x5d1, "conv5x5"},
    {OpKind::Conv5x5d2, "conv5x5d2"},
    {OpKind::TransposedConv3x3, "tconv3x3"},
    {OpKind::NearestUp, "nearest"},
    {OpKind::BilinearUp, "bilinear"},
    {OpKind::AvgPool, "avgpool"},
    {OpKind::MaxPool, "maxpool"},
    {OpKind::Conv3x3d1s2, "conv3x3s2"},
    {OpKind::Conv3x3d2s2, "conv3x3d2s2"},
    {OpKind::Conv5x5d1s2, "conv5x5s2"},
    {OpKind::Conv5x5d2s2, "conv5x5d2s2"},
};

} // namespace

const char* op_kind_name(OpKind kind) {
    for (const auto& row : kOpNames)
        if (row.kind == kind) return row.name;
    throw ContractError("op_kind_name: unknown op kind");
}

std::optional<OpKind> op_kind_from_name(std::string_view name) {
    for (const auto& row : kOpNames)
        if (name == row.name) return row.kind;
    return std::nullopt;
}

bool op_has_weights(OpKind kind) {
    switch (kind) {
    case OpKind::Conv1x1d1:
    case OpKind::Conv3x3d1:
    case OpKind::Conv3x3d2:
    case OpKind::Conv5x5d1:
    case OpKind::Conv5x5d2:
    case OpKind::TransposedConv3x3:
    case OpKind::Conv3x3d1s2:
    case OpKind::Conv3x3d2s2:
    case OpKind::Conv5x5d1s2:
    case OpKind::Conv5x5d2s2:
        return true;
    default:
        return false;
    }
}

int op_kernel_size(OpKind kind) {
    switch (kind) {
    case OpKind::Conv1x1d1:
        return 1;
    case OpKind::Conv3x3d1:
    case OpKind::Conv3x3d2:
    case OpKind::Conv3x3d1s2:
    case OpKind::Conv3x3d2s2:
    case OpKind::TransposedConv3x3:
        return 3;
    case OpKind::Conv5x5d1:
    case OpKind::Conv5x5d2:
    case OpKind::Conv5x5d1s2:
    case OpKind::Conv5x5d2s2:
        return 5;
    default:
        return 0;
    }
}

const char* role_name(CandidateRole role) {
    switch (role) {
    case CandidateRole::GNormal:
        return "g_normal";
    case CandidateRole::GUp:
        return "g_up";
    case CandidateRole::DNormal:
        return "d_normal";
    case CandidateRole::DDown:
        return "d_down";
    }
    throw ContractError("role_name: unknown role");
}

std::optional<CandidateRole> role_from_name(std::string_view name) {
    if (name == "g_normal") return CandidateRole::GNormal;
    if (name == "g_up") return CandidateRole::GUp;
    if (name == "d_normal") return CandidateRole::DNormal;
    if (name == "d_down") return CandidateRole::DDown;
    return std::nullopt;
}

const std::vector<OpKind>& candidate_ops(CandidateRole role) {
    static const std::vector<OpKind> normal{OpKind::None,      OpKind::Identity,  OpKind::Conv1x1d1,
                                            OpKind::Conv3x3d1, OpKind::Conv3x3d2, OpKind::Conv5x5d1,
                                            OpKind::Conv5x5d2};
    static const std::vector<OpKind> up{OpKind::TransposedConv3x3, OpKind::NearestUp, OpKind::BilinearUp};
    static const std::vector<OpKind> down{OpKind::AvgPool,     OpKind::MaxPool,     OpKind::Conv3x3d1s2,
                                          OpKind::Conv3x3d2s2, OpKind::Conv5x5d1s2, OpKind::Conv5x5d2s2};
    switch (role) {
    case CandidateRole::GNormal:
    case CandidateRole::DNormal:
        return normal;
    case CandidateRole::GUp:
        return up;
    case CandidateRole::DDown:
        return down;
    }
    throw ContractError("candidate_ops: unknown role");
}

std::string candidate_set_version_hash() {
    std::string text;
    for (CandidateRole role : {CandidateRole::GNormal, CandidateRole::GUp, CandidateRole::DNormal,
                               CandidateRole::DDown}) {
        text += role_name(role);
        text += ':';
        for (OpKind k : candidate_ops(role)) {
            text += op_kind_name(k);
            text += ',';
        }
        text += ';';
    }
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

CellTemplate CellTemplate::up_cell() {
    CellTemplate c;
    c.kind = CellKind::Up;
    c.edges = {
        {0, 1, CandidateRole::GUp, 2},     {0, 2, CandidateRole::GUp, 2},
        {1, 3, CandidateRole::GNormal, 1}, {1, 4, CandidateRole::GNormal, 1},
        {2, 3, CandidateRole::GNormal, 1}, {2, 4, CandidateRole::GNormal, 1},
        {3, 4, CandidateRole::GNormal, 1},
    };
    return c;
}

CellTemplate CellTemplate::down_cell() {
    CellTemplate c;
    c.kind = CellKind::Down;
    c.edges = {
        {0, 1, CandidateRole::DNormal, 1}, {0, 2, CandidateRole::DNormal, 1},
        {0, 3, CandidateRole::DNormal, 1}, {1, 2, CandidateRole::DNormal, 1},
        {1, 3, CandidateRole::DNormal, 1}, {2, 4, CandidateRole::DDown, 2},
        {3, 4, CandidateRole::DDown, 2},
    };
    return c;
}

GeneratorTemplate build_generator_template(int base_channels, int noise_dim, int base_resolution,
                                           int img_channels) {
    if (base_channels < 1 || noise_dim < 1 || img_channels < 1)
        throw ConfigError("generator template: channels and noise_dim must be positive");
    if (base_resolution < 1)
        throw ConfigError("generator template: base_resolution must be >= 1");
    GeneratorTemplate t;
    t.base_channels = base_channels;
    t.noise_dim = noise_dim;
    t.base_resolution = base_resolution;
    t.img_channels = img_channels;
    t.cells = {CellTemplate::up_cell(), CellTemplate::up_cell(), CellTemplate::up_cell()};
    // node 3 of each earlier cell feeds the outputs of all strictly later
    // cells, at the resolution ratio between the two.
    t.skips = {
        {0, 3, 1, 2, CandidateRole::GUp},
        {0, 3, 2, 4, CandidateRole::GUp},
        {1, 3, 2, 2, CandidateRole::GUp},
    };
    return t;
}

DiscriminatorTemplate build_discriminator_template(int base_channels, int input_resolution,
                                                   int img_channels) {
    if (base_channels < 1 || img_channels < 1)
        throw ConfigError("discriminator template: channels must be positive");
    if (input_resolution < 4 || (input_resolution & (input_resolution - 1)) != 0)
        throw ConfigError("discriminator template: input_resolution must be a power of two >= 4, got " +
                          std::to_string(input_resolution));
    DiscriminatorTemplate t;
    t.base_channels = base_channels;
    t.input_resolution = input_resolution;
    t.img_channels = img_channels;
    // halve until resolution 2: 32 -> 16 -> 8 -> 4 -> 2 is four cells
    for (int r = input_resolution; r > 2; r /= 2) t.cells.push_back(CellTemplate::down_cell());
    return t;
}

NetworkTemplate build_network_template(int base_channels, int noise_dim, int base_resolution,
                                       int img_channels) {
    NetworkTemplate t;
    t.gen = build_generator_template(base_channels, noise_dim, base_resolution, img_channels);
    t.disc = build_discriminator_template(base_channels, base_resolution * 8, img_channels);
    return t;
}

namespace {

std::string edge_id(char prefix, int cell_1based, int from, int to) {
    std::ostringstream os;
    os << prefix << cell_1based << '.' << from << '-' << to;
    return os.str();
}

std::string skip_id(int cell_1based, int from_node, int to_cell_1based) {
    std::ostringstream os;
    os << 'g' << cell_1based << '.' << from_node << "-c" << to_cell_1based;
    return os.str();
}

} // namespace

std::vector<SearchableEdge> searchable_edges(const GeneratorTemplate& t) {
    std::vector<SearchableEdge> out;
    for (std::size_t c = 0; c < t.cells.size(); ++c) {
        for (const EdgeSpec& e : t.cells[c].edges) {
            SearchableEdge s;
            s.id = edge_id('g', static_cast<int>(c) + 1, e.from_node, e.to_node);
            s.role = e.role;
            s.scale = e.scale;
            s.cell = static_cast<int>(c);
            s.from_node = e.from_node;
            s.to_node = e.to_node;
            out.push_back(std::move(s));
        }
        for (const SkipEdgeSpec& k : t.skips) {
            if (k.from_cell != static_cast<int>(c)) continue;
            SearchableEdge s;
            s.id = skip_id(static_cast<int>(c) + 1, k.from_node, k.to_cell + 1);
            s.role = k.role;
            s.scale = k.scale;
            s.is_skip = true;
            s.cell = static_cast<int>(c);
            s.from_node = k.from_node;
            s.to_node = kCellOutputNode;
            s.to_cell = k.to_cell;
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<SearchableEdge> searchable_edges(const DiscriminatorTemplate& t) {
    std::vector<SearchableEdge> out;
    for (std::size_t c = 0; c < t.cells.size(); ++c)
        for (const EdgeSpec& e : t.cells[c].edges) {
            SearchableEdge s;
            s.id = edge_id('d', static_cast<int>(c) + 1, e.from_node, e.to_node);
            s.role = e.role;
            s.scale = e.scale;
            s.cell = static_cast<int>(c);
            s.from_node = e.from_node;
            s.to_node = e.to_node;
            out.push_back(std::move(s));
        }
    return out;
}

Cardinality count_architectures(const std::vector<SearchableEdge>& edges) {
    boost::multiprecision::cpp_int n = 1;
    double lg = 0.0;
    for (const SearchableEdge& e : edges) {
        const auto size = candidate_ops(e.role).size();
        n *= static_cast<unsigned>(size);
        lg += std::log10(static_cast<double>(size));
    }
    return {n.str(), lg};
}

Cardinality count_architectures(const NetworkTemplate& t) {
    auto edges = searchable_edges(t.gen);
    const auto d = searchable_edges(t.disc);
    edges.insert(edges.end(), d.begin(), d.end());
    return count_architectures(edges);
}

namespace {

void validate_cells(const std::vector<CellTemplate>& cells, char prefix, CellKind expected_kind,
                    std::vector<std::string>& out) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const CellTemplate& cell = cells[c];
        const std::string where = std::string(1, prefix) + std::to_string(c + 1);
        if (cell.kind != expected_kind)
            out.push_back("cell " + where + ": unexpected cell kind");
        bool incoming[kCellNodes] = {};
        for (const EdgeSpec& e : cell.edges) {
            if (e.from_node < 0 || e.to_node >= kCellNodes || e.from_node >= e.to_node) {
                out.push_back("cell " + where + ": DAG violation on edge " +
                              std::to_string(e.from_node) + "->" + std::to_string(e.to_node));
                continue;
            }
            incoming[e.to_node] = true;
            const bool resampling = e.role == CandidateRole::GUp || e.role == CandidateRole::DDown;
            if (e.scale > 1 && !resampling)
                out.push_back("cell " + where + ": scale > 1 on non-resampling edge " +
                              std::to_string(e.from_node) + "->" + std::to_string(e.to_node));
            if (e.scale == 1 && resampling)
                out.push_back("cell " + where + ": resampling edge " + std::to_string(e.from_node) +
                              "->" + std::to_string(e.to_node) + " must change scale");
            const bool gen_role = e.role == CandidateRole::GNormal || e.role == CandidateRole::GUp;
            if ((expected_kind == CellKind::Up) != gen_role)
                out.push_back("cell " + where + ": edge " + std::to_string(e.from_node) + "->" +
                              std::to_string(e.to_node) + " carries candidate role " +
                              role_name(e.role) + " foreign to its cell kind");
        }
        for (int n = 1; n < kCellNodes; ++n)
            if (!incoming[n])
                out.push_back("cell " + where + ": node " + std::to_string(n) + " has no incoming edge");
        // reachability of the output from the input
        bool reach[kCellNodes] = {true, false, false, false, false};
        for (int n = 1; n < kCellNodes; ++n)
            for (const EdgeSpec& e : cell.edges)
                if (e.to_node == n && e.from_node < e.to_node && reach[e.from_node]) reach[n] = true;
        if (!reach[kCellOutputNode])
            out.push_back("cell " + where + ": output node unreachable from input node");
    }
}

} // namespace

std::vector<std::string> validate_generator_template(const GeneratorTemplate& t) {
    std::vector<std::string> out;
    validate_cells(t.cells, 'g', CellKind::Up, out);
    for (const SkipEdgeSpec& k : t.skips) {
        if (k.to_cell <= k.from_cell)
            out.push_back("skip edge from cell " + std::to_string(k.from_cell + 1) +
                          " must target a strictly later cell");
        if (k.from_cell < 0 || k.to_cell >= static_cast<int>(t.cells.size()))
            out.push_back("skip edge references a cell outside the template");
        if (k.role != CandidateRole::GUp)
            out.push_back("skip edges must carry the g_up candidate set");
        const int expected_scale = 1 << (k.to_cell - k.from_cell);
        if (k.scale != expected_scale)
            out.push_back("skip edge c" + std::to_string(k.from_cell + 1) + "->c" +
                          std::to_string(k.to_cell + 1) + " has scale " + std::to_string(k.scale) +
                          ", expected " + std::to_string(expected_scale));
    }
    return out;
}

std::vector<std::string> validate_discriminator_template(const DiscriminatorTemplate& t) {
    std::vector<std::string> out;
    validate_cells(t.cells, 'd', CellKind::Down, out);
    const int r = t.input_resolution;
    if (r < 4 || (r & (r - 1)) != 0)
        out.push_back("discriminator input resolution must be a power of two >= 4");
    else if (static_cast<int>(t.cells.size()) != static_cast<int>(std::round(std::log2(r))) - 1)
        out.push_back("discriminator cell count does not halve the input down to resolution 2");
    return out;
}

std::vector<std::string> validate_template(const NetworkTemplate& t) {
    std::vector<std::string> out = validate_generator_template(t.gen);
    auto d = validate_discriminator_template(t.disc);
    out.insert(out.end(), d.begin(), d.end());
    if (t.gen.output_resolution() != t.disc.input_resolution)
        out.push_back("generator output resolution " + std::to_string(t.gen.output_resolution()) +
                      " does not match discriminator input resolution " +
                      std::to_string(t.disc.input_resolution));
    return out;
}

} // namespace advnas
