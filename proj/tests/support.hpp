#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgcurr/graph_store.hpp"
#include "kgcurr/text.hpp"
#include "kgcurr/vocabulary.hpp"

namespace kgtest {

// Auditory brainstem subgraph used across suites.
inline kgcurr::KnowledgeGraph fig2_graph() {
    kgcurr::GraphBuilder b;
    const char* A = "AnatomicalStructure";
    b.add("CochlearNerve", A, "projects_to", "CochlearNuclei", A, "u1");
    b.add("VentralCochlearNucleus", A, "part_of", "CochlearNuclei", A, "u1");
    b.add("VentralCochlearNucleus", A, "contains", "OctopusCells", "CellularComponent", "u1");
    b.add("VentralCochlearNucleus", A, "contains", "BushyCells", "CellularComponent", "u1");
    b.add("SmallSphericalBushyCells", "CellularComponent", "located_in", "VentralCochlearNucleus", A, "u2");
    b.add("BushyCells", "CellularComponent", "forms_complex_with", "LargeEndBulbs", "CellularComponent", "u2");
    b.add("SmallSphericalBushyCells", "CellularComponent", "projects_to", "LateralSuperiorOlive", A, "u2");
    b.add("SmallSphericalBushyCells", "CellularComponent", "projects_to", "MedialSuperiorOlivaryNucleus", A, "u2");
    b.add("BushyCells", "CellularComponent", "receives_input_from", "CochlearNerve", A, "u3");
    b.add("OctopusCells", "CellularComponent", "receives_input_from", "CochlearNerve", A, "u3");
    return b.build();
}

inline std::string node_name(std::size_t i) { return "n" + std::to_string(i); }

/// Random directed graph on n nodes named n0..n{n-1}; each ordered pair gets
/// an edge with probability p, relation drawn from the vocabulary.
inline kgcurr::KnowledgeGraph random_graph(kgcurr::Rng& rng, std::size_t n, double p,
                                           bool categories_vary = false) {
    kgcurr::GraphBuilder b;
    std::vector<kgcurr::EntityCategory> cat(n, kgcurr::EntityCategory::ConceptualEntity);
    for (std::size_t i = 0; i < n; ++i) {
        if (categories_vary) cat[i] = kgcurr::kAllCategories[rng.below(kgcurr::kAllCategories.size())];
        b.add_entity(node_name(i), cat[i]);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || rng.uniform() >= p) continue;
            auto t = kgcurr::make_triple(node_name(i), kgcurr::category_label(cat[i]),
                                         kgcurr::Relation::from_index(rng.below(kgcurr::kRelations.size())).name(),
                                         node_name(j), kgcurr::category_label(cat[j]), "r", 5);
            b.add(std::move(t));
        }
    return b.build();
}

} // namespace kgtest
