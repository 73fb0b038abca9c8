#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace advnas {

// Candidate operations. Index order inside each candidate set is versioned
// format: it defines the layout of architecture parameter vectors and the
// meaning of architecture files. Reordering is a format-breaking change.
enum class OpKind {
    None,
    Identity,
    Conv1x1d1,
    Conv3x3d1,
    Conv3x3d2,
    Conv5x5d1,
    Conv5x5d2,
    TransposedConv3x3,
    NearestUp,
    BilinearUp,
    AvgPool,
    MaxPool,
    Conv3x3d1s2,
    Conv3x3d2s2,
    Conv5x5d1s2,
    Conv5x5d2s2,
};

const char* op_kind_name(OpKind kind);
std::optional<OpKind> op_kind_from_name(std::string_view name);
bool op_has_weights(OpKind kind);
// Conv kernel extent (0 for non-conv kinds).
int op_kernel_size(OpKind kind);

enum class CandidateRole { GNormal, GUp, DNormal, DDown };

const char* role_name(CandidateRole role);
std::optional<CandidateRole> role_from_name(std::string_view name);

// g_normal == d_normal: [None, Identity, Conv1x1d1, Conv3x3d1, Conv3x3d2, Conv5x5d1, Conv5x5d2]
// g_up:                 [TransposedConv3x3, NearestUp, BilinearUp]
// d_down:               [AvgPool, MaxPool, Conv3x3d1s2, Conv3x3d2s2, Conv5x5d1s2, Conv5x5d2s2]
const std::vector<OpKind>& candidate_ops(CandidateRole role);

// Hash of the ordered candidate lists; stamped into architecture files so a
// reader can detect an incompatible candidate-set version.
std::string candidate_set_version_hash();

enum class CellKind { Up, Down };

// Cells are DAGs over nodes 0..4; node 0 is the input, node 4 the output.
inline constexpr int kCellNodes = 5;
inline constexpr int kCellInputNode = 0;
inline constexpr int kCellOutputNode = 4;

struct EdgeSpec {
    int from_node = 0;
    int to_node = 0;
    CandidateRole role = CandidateRole::GNormal;
    int scale = 1; // >1 only on up/down edges

    bool operator==(const EdgeSpec&) const = default;
};

struct CellTemplate {
    CellKind kind = CellKind::Up;
    std::vector<EdgeSpec> edges; // sorted by (from_node, to_node)

    // Up-Cell: 0->1, 0->2 upsampling; 1->3, 1->4, 2->3, 2->4, 3->4 normal.
    static CellTemplate up_cell();
    // Down-Cell: the index-reversed image (i -> 4-i) of the Up-Cell:
    // 0->1, 0->2, 0->3, 1->2, 1->3 normal; 2->4, 3->4 downsampling.
    static CellTemplate down_cell();
};

// Cross-cell skip edge: from node `from_node` of cell `from_cell` into the
// output node of cell `to_cell`, carrying the g_up candidate set at the
// resolution ratio `scale`.
struct SkipEdgeSpec {
    int from_cell = 0;
    int from_node = 3;
    int to_cell = 0;
    int scale = 2;
    CandidateRole role = CandidateRole::GUp;

    bool operator==(const SkipEdgeSpec&) const = default;
};

struct GeneratorTemplate {
    int base_channels = 0;
    int noise_dim = 0;
    int base_resolution = 0; // output resolution is base_resolution * 8
    int img_channels = 3;
    bool preactivation = true; // activation applied before weighted candidate ops
    std::vector<CellTemplate> cells;
    std::vector<SkipEdgeSpec> skips;

    int output_resolution() const { return base_resolution * 8; }
};

struct DiscriminatorTemplate {
    int base_channels = 0;
    int input_resolution = 0;
    int img_channels = 3;
    bool preactivation = true;
    std::vector<CellTemplate> cells; // each halves resolution; stops at 2
};

struct NetworkTemplate {
    GeneratorTemplate gen;
    DiscriminatorTemplate disc;
};

// Three up-cells (x8 upsampling) plus skip edges from node 3 of earlier cells
// into the outputs of strictly later cells.
GeneratorTemplate build_generator_template(int base_channels, int noise_dim, int base_resolution,
                                           int img_channels = 3);

// Chain of down-cells, each halving resolution, ending at resolution 2
// (4 cells for 32x32 input). input_resolution must be a power of two >= 4.
DiscriminatorTemplate build_discriminator_template(int base_channels, int input_resolution,
                                                   int img_channels = 3);

NetworkTemplate build_network_template(int base_channels, int noise_dim, int base_resolution,
                                       int img_channels = 3);

// One searchable edge with its stable identifier ("g1.0-1", "g1.3-c2",
// "d2.2-4"; cells are 1-based in identifiers, matching architecture files).
struct SearchableEdge {
    std::string id;
    CandidateRole role = CandidateRole::GNormal;
    int scale = 1;
    bool is_skip = false;
    int cell = 0; // 0-based owning cell (skip: source cell)
    int from_node = 0;
    int to_node = 0; // skip: output node of to_cell
    int to_cell = 0; // skip only
};

// Canonical enumeration order: per cell, internal edges sorted by
// (from, to), then that cell's outgoing skips sorted by target cell.
std::vector<SearchableEdge> searchable_edges(const GeneratorTemplate& t);
std::vector<SearchableEdge> searchable_edges(const DiscriminatorTemplate& t);

struct Cardinality {
    std::string exact; // exact decimal integer
    double log10 = 0.0;
};

// Product of candidate-set sizes over the given searchable edges.
Cardinality count_architectures(const std::vector<SearchableEdge>& edges);
// Generator (including skip edges) x discriminator.
Cardinality count_architectures(const NetworkTemplate& t);

// Structural checks; returns one human-readable violation per defect,
// empty when the template is valid.
std::vector<std::string> validate_template(const NetworkTemplate& t);
std::vector<std::string> validate_generator_template(const GeneratorTemplate& t);
std::vector<std::string> validate_discriminator_template(const DiscriminatorTemplate& t);

} // namespace advnas
