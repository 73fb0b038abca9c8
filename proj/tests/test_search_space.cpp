#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advnas/errors.hpp"
#include "advnas/search_space.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>

using namespace advnas;

namespace {

// Independent oracle: enumerate every per-edge assignment with an odometer.
std::uint64_t brute_force_count(const std::vector<SearchableEdge>& edges) {
    std::vector<std::size_t> sizes;
    for (const auto& e : edges) sizes.push_back(candidate_ops(e.role).size());
    std::vector<std::size_t> idx(sizes.size(), 0);
    std::uint64_t count = 0;
    while (true) {
        ++count;
        std::size_t pos = 0;
        while (pos < idx.size()) {
            if (++idx[pos] < sizes[pos]) break;
            idx[pos] = 0;
            ++pos;
        }
        if (pos == idx.size()) break;
        if (idx.empty()) break;
    }
    return idx.empty() ? 1 : count;
}

} // namespace

TEST_CASE("candidate sets have the versioned sizes and order") {
    const auto& normal = candidate_ops(CandidateRole::GNormal);
    REQUIRE(normal.size() == 7);
    CHECK(normal[0] == OpKind::None);
    CHECK(normal[1] == OpKind::Identity);
    CHECK(normal[2] == OpKind::Conv1x1d1);
    CHECK(normal[3] == OpKind::Conv3x3d1);
    CHECK(normal[4] == OpKind::Conv3x3d2);
    CHECK(normal[5] == OpKind::Conv5x5d1);
    CHECK(normal[6] == OpKind::Conv5x5d2);
    CHECK(candidate_ops(CandidateRole::DNormal) == normal);

    const auto& up = candidate_ops(CandidateRole::GUp);
    REQUIRE(up.size() == 3);
    CHECK(up[0] == OpKind::TransposedConv3x3);
    CHECK(up[1] == OpKind::NearestUp);
    CHECK(up[2] == OpKind::BilinearUp);

    const auto& down = candidate_ops(CandidateRole::DDown);
    REQUIRE(down.size() == 6);
    CHECK(down[0] == OpKind::AvgPool);
    CHECK(down[1] == OpKind::MaxPool);
    CHECK(down[2] == OpKind::Conv3x3d1s2);
    CHECK(down[3] == OpKind::Conv3x3d2s2);
    CHECK(down[4] == OpKind::Conv5x5d1s2);
    CHECK(down[5] == OpKind::Conv5x5d2s2);
}

TEST_CASE("op names round-trip") {
    for (CandidateRole role : {CandidateRole::GNormal, CandidateRole::GUp, CandidateRole::DDown})
        for (OpKind k : candidate_ops(role)) {
            auto back = op_kind_from_name(op_kind_name(k));
            REQUIRE(back.has_value());
            CHECK(*back == k);
        }
    CHECK(!op_kind_from_name("conv7x7").has_value());
    CHECK(candidate_set_version_hash().size() > 0);
}

TEST_CASE("down-cell is the index-reversed image of the up-cell") {
    const auto up = CellTemplate::up_cell();
    const auto down = CellTemplate::down_cell();
    std::vector<std::pair<int, int>> mapped;
    for (const EdgeSpec& e : up.edges) mapped.emplace_back(4 - e.to_node, 4 - e.from_node);
    std::sort(mapped.begin(), mapped.end());
    std::vector<std::pair<int, int>> down_edges;
    for (const EdgeSpec& e : down.edges) down_edges.emplace_back(e.from_node, e.to_node);
    std::sort(down_edges.begin(), down_edges.end());
    CHECK(mapped == down_edges);

    // the literal edge sets pinned by the space definition
    std::vector<std::pair<int, int>> up_expected{{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}};
    std::vector<std::pair<int, int>> up_actual;
    for (const EdgeSpec& e : up.edges) up_actual.emplace_back(e.from_node, e.to_node);
    CHECK(up_actual == up_expected);
    std::vector<std::pair<int, int>> down_expected{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 4}, {3, 4}};
    CHECK(down_edges == down_expected);

    // roles: up/down ops only on the resolution-changing edges
    for (const EdgeSpec& e : up.edges) {
        const bool is_up_edge = e.from_node == 0;
        CHECK(e.role == (is_up_edge ? CandidateRole::GUp : CandidateRole::GNormal));
        CHECK(e.scale == (is_up_edge ? 2 : 1));
    }
    for (const EdgeSpec& e : down.edges) {
        const bool is_down_edge = e.to_node == 4;
        CHECK(e.role == (is_down_edge ? CandidateRole::DDown : CandidateRole::DNormal));
        CHECK(e.scale == (is_down_edge ? 2 : 1));
    }
}

TEST_CASE("generator template: cells, skips, resolutions") {
    const auto t = build_generator_template(256, 128, 4);
    REQUIRE(t.cells.size() == 3);
    CHECK(t.output_resolution() == 32);
    // skip set {cell1:3->c2, cell1:3->c3, cell2:3->c3} (1-based), scales 2,4,2
    REQUIRE(t.skips.size() == 3);
    CHECK(t.skips[0] == SkipEdgeSpec{0, 3, 1, 2, CandidateRole::GUp});
    CHECK(t.skips[1] == SkipEdgeSpec{0, 3, 2, 4, CandidateRole::GUp});
    CHECK(t.skips[2] == SkipEdgeSpec{1, 3, 2, 2, CandidateRole::GUp});

    CHECK(build_generator_template(16, 16, 2).output_resolution() == 16);

    const auto edges = searchable_edges(t);
    REQUIRE(edges.size() == 24); // 3*7 internal + 3 skips
    CHECK(edges[0].id == "g1.0-1");
    CHECK(edges[6].id == "g1.3-4");
    CHECK(edges[7].id == "g1.3-c2");
    CHECK(edges[8].id == "g1.3-c3");
    CHECK(edges[8].scale == 4);
    CHECK(edges[16].id == "g2.3-c3");
    CHECK(edges[23].id == "g3.3-4");
}

TEST_CASE("discriminator template: halving chain and input validation") {
    const auto t = build_discriminator_template(64, 32);
    CHECK(t.cells.size() == 4); // 32 -> 16 -> 8 -> 4 -> 2
    CHECK(build_discriminator_template(16, 8).cells.size() == 2);
    CHECK(build_discriminator_template(16, 4).cells.size() == 1);
    CHECK_THROWS_AS(build_discriminator_template(16, 24), ConfigError);
    CHECK_THROWS_AS(build_discriminator_template(16, 2), ConfigError);
    const auto edges = searchable_edges(t);
    CHECK(edges.size() == 28);
    CHECK(edges[0].id == "d1.0-1");
    CHECK(edges[5].id == "d1.2-4");
    CHECK(edges[5].role == CandidateRole::DDown);
}

TEST_CASE("cardinality: single up-cell equals brute force 151263") {
    GeneratorTemplate t = build_generator_template(16, 16, 2);
    t.cells.resize(1);
    t.skips.clear();
    const auto edges = searchable_edges(t);
    REQUIRE(edges.size() == 7);
    const auto card = count_architectures(edges);
    CHECK(card.exact == "151263"); // 3^2 * 7^5
    CHECK(brute_force_count(edges) == 151263);
}

TEST_CASE("cardinality: brute force agreement on small edge subsets") {
    const auto t = build_network_template(16, 16, 4);
    auto gen_edges = searchable_edges(t.gen);
    auto disc_edges = searchable_edges(t.disc);
    std::vector<SearchableEdge> mixed;
    mixed.push_back(gen_edges[0]);  // up (3)
    mixed.push_back(gen_edges[2]);  // normal (7)
    mixed.push_back(gen_edges[7]);  // skip (3)
    mixed.push_back(disc_edges[5]); // down (6)
    mixed.push_back(disc_edges[1]); // normal (7)
    mixed.push_back(gen_edges[16]); // skip (3)
    const auto card = count_architectures(mixed);
    CHECK(card.exact == std::to_string(brute_force_count(mixed)));
}

TEST_CASE("cardinality: full default template closed form") {
    const auto t = build_network_template(256, 128, 4);
    const auto card = count_architectures(t);
    // 3^9 * 7^15 * 7^20 * 6^8 (generator incl. 3 skip edges x discriminator)
    CHECK(card.exact == "12523701162658506037725585535296524469504");
    CHECK(card.log10 == doctest::Approx(40.0977).epsilon(1e-4));
    // without the 3 skip edges the space is ~10^38.67
    auto edges = searchable_edges(t.gen);
    std::erase_if(edges, [](const SearchableEdge& e) { return e.is_skip; });
    const auto d = searchable_edges(t.disc);
    edges.insert(edges.end(), d.begin(), d.end());
    CHECK(count_architectures(edges).log10 == doctest::Approx(38.6664).epsilon(1e-4));
}

TEST_CASE("cardinality: empty template counts one") {
    CHECK(count_architectures(std::vector<SearchableEdge>{}).exact == "1");
}

TEST_CASE("validate_template: default is clean") {
    CHECK(validate_template(build_network_template(16, 16, 1)).empty());
    CHECK(validate_template(build_network_template(256, 128, 4)).empty());
}

TEST_CASE("validate_template: DAG violation reported") {
    auto t = build_network_template(16, 16, 4);
    t.gen.cells[1].edges.push_back({3, 1, CandidateRole::GNormal, 1});
    const auto violations = validate_generator_template(t.gen);
    REQUIRE(!violations.empty());
    bool found = false;
    for (const auto& v : violations)
        if (v.find("DAG violation") != std::string::npos && v.find("3->1") != std::string::npos)
            found = true;
    CHECK(found);
}

TEST_CASE("validate_template: missing incoming edge reported") {
    auto t = build_network_template(16, 16, 4);
    auto& edges = t.disc.cells[0].edges;
    std::erase_if(edges, [](const EdgeSpec& e) { return e.to_node == 1; });
    const auto violations = validate_discriminator_template(t.disc);
    bool found = false;
    for (const auto& v : violations)
        if (v.find("node 1 has no incoming edge") != std::string::npos) found = true;
    CHECK(found);
}
