#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "kgcurr/error.hpp"
#include "kgcurr/text.hpp"

namespace kgcurr {

enum class EntityCategory : std::uint8_t {
    AnatomicalStructure,
    MolecularEntity,
    CellularComponent,
    Process,
    ClinicalEntity,
    ConceptualEntity,
};

inline constexpr std::array<EntityCategory, 6> kAllCategories = {
    EntityCategory::AnatomicalStructure, EntityCategory::MolecularEntity,
    EntityCategory::CellularComponent,   EntityCategory::Process,
    EntityCategory::ClinicalEntity,      EntityCategory::ConceptualEntity,
};

inline constexpr std::string_view category_label(EntityCategory c) {
    switch (c) {
    case EntityCategory::AnatomicalStructure: return "AnatomicalStructure";
    case EntityCategory::MolecularEntity: return "MolecularEntity";
    case EntityCategory::CellularComponent: return "CellularComponent";
    case EntityCategory::Process: return "Process";
    case EntityCategory::ClinicalEntity: return "ClinicalEntity";
    case EntityCategory::ConceptualEntity: return "ConceptualEntity";
    }
    return "";
}

/// Human-facing form used in the extraction prompt ("Molecular Entity").
inline constexpr std::string_view category_display(EntityCategory c) {
    switch (c) {
    case EntityCategory::AnatomicalStructure: return "Anatomical Structure";
    case EntityCategory::MolecularEntity: return "Molecular Entity";
    case EntityCategory::CellularComponent: return "Cellular Component";
    case EntityCategory::Process: return "Process";
    case EntityCategory::ClinicalEntity: return "Clinical Entity";
    case EntityCategory::ConceptualEntity: return "Conceptual Entity";
    }
    return "";
}

/// Accepts "MolecularEntity", "Molecular Entity", "MOLECULAR_ENTITY" and the
/// like: comparison ignores case, spaces, underscores and hyphens.
inline std::optional<EntityCategory> try_parse_category(std::string_view label) {
    std::string squashed;
    for (char c : trim_view(label)) {
        if (c == ' ' || c == '_' || c == '-') continue;
        squashed.push_back(c);
    }
    for (EntityCategory c : kAllCategories) {
        if (iequals(squashed, category_label(c))) return c;
    }
    return std::nullopt;
}

inline EntityCategory parse_category(std::string_view label) {
    if (auto c = try_parse_category(label)) return *c;
    throw Error(ErrorCode::UnknownCategory, "'" + std::string(label) + "'");
}

enum class RelationGroup : std::uint8_t {
    AnatomicalConnectivity,
    MolecularCellular,
    FunctionalRepresentational,
    CausalClinical,
};

inline constexpr std::string_view group_label(RelationGroup g) {
    switch (g) {
    case RelationGroup::AnatomicalConnectivity: return "Anatomical&Connectivity";
    case RelationGroup::MolecularCellular: return "Molecular&Cellular";
    case RelationGroup::FunctionalRepresentational: return "Functional&Representational";
    case RelationGroup::CausalClinical: return "Causal&Clinical";
    }
    return "";
}

struct RelationInfo {
    std::string_view name;
    RelationGroup group;
    bool weak;
    std::string_view gloss; // verb phrase used when verbalizing a triple
};

inline constexpr std::array<RelationInfo, 40> kRelations = {{
    // Anatomical & Connectivity
    {"part_of", RelationGroup::AnatomicalConnectivity, true, "is part of"},
    {"contains", RelationGroup::AnatomicalConnectivity, false, "contains"},
    {"located_in", RelationGroup::AnatomicalConnectivity, true, "is located in"},
    {"connected_to", RelationGroup::AnatomicalConnectivity, false, "is connected to"},
    {"projects_to", RelationGroup::AnatomicalConnectivity, false, "projects to"},
    {"receives_input_from", RelationGroup::AnatomicalConnectivity, false, "receives input from"},
    {"receives_modulatory_input_from", RelationGroup::AnatomicalConnectivity, false,
     "receives modulatory input from"},
    {"innervates", RelationGroup::AnatomicalConnectivity, false, "innervates"},
    {"originates_from", RelationGroup::AnatomicalConnectivity, false, "originates from"},
    {"terminates_in", RelationGroup::AnatomicalConnectivity, false, "terminates in"},
    // Molecular & Cellular
    {"expressed_in", RelationGroup::MolecularCellular, false, "is expressed in"},
    {"synthesized_in", RelationGroup::MolecularCellular, false, "is synthesized in"},
    {"releases", RelationGroup::MolecularCellular, false, "releases"},
    {"binds_to", RelationGroup::MolecularCellular, false, "binds to"},
    {"activates", RelationGroup::MolecularCellular, false, "activates"},
    {"inhibits", RelationGroup::MolecularCellular, false, "inhibits"},
    {"modulates", RelationGroup::MolecularCellular, false, "modulates"},
    {"regulates", RelationGroup::MolecularCellular, false, "regulates"},
    {"transports", RelationGroup::MolecularCellular, false, "transports"},
    {"forms_complex_with", RelationGroup::MolecularCellular, false, "forms a complex with"},
    // Functional & Representational
    {"responds_to", RelationGroup::FunctionalRepresentational, false, "responds to"},
    {"fires_in_response_to", RelationGroup::FunctionalRepresentational, false,
     "fires in response to"},
    {"tuned_to", RelationGroup::FunctionalRepresentational, false, "is tuned to"},
    {"selective_for", RelationGroup::FunctionalRepresentational, false, "is selective for"},
    {"encodes_representation_of", RelationGroup::FunctionalRepresentational, false,
     "encodes a representation of"},
    {"participates_in", RelationGroup::FunctionalRepresentational, false, "participates in"},
    {"required_for", RelationGroup::FunctionalRepresentational, false, "is required for"},
    {"sufficient_for", RelationGroup::FunctionalRepresentational, false, "is sufficient for"},
    {"oscillates_at", RelationGroup::FunctionalRepresentational, false, "oscillates at"},
    {"mediates_signal_for", RelationGroup::FunctionalRepresentational, false,
     "mediates signals for"},
    // Causal & Clinical
    {"associated_with", RelationGroup::CausalClinical, true, "is associated with"},
    {"causes", RelationGroup::CausalClinical, false, "causes"},
    {"results_in", RelationGroup::CausalClinical, false, "results in"},
    {"impaired_in", RelationGroup::CausalClinical, false, "is impaired in"},
    {"degenerates_in", RelationGroup::CausalClinical, false, "degenerates in"},
    {"risk_factor_for", RelationGroup::CausalClinical, false, "is a risk factor for"},
    {"biomarker_of", RelationGroup::CausalClinical, false, "is a biomarker of"},
    {"symptom_of", RelationGroup::CausalClinical, false, "is a symptom of"},
    {"treated_by", RelationGroup::CausalClinical, false, "is treated by"},
    {"diagnosed_by", RelationGroup::CausalClinical, false, "is diagnosed by"},
}};

/// Handle into the closed relation vocabulary. Only constructible through
/// parsing or an index, so every instance names one of the 40 relations.
class Relation {
public:
    static Relation from_index(std::size_t index) {
        if (index >= kRelations.size())
            throw Error(ErrorCode::UnknownRelation, "index " + std::to_string(index));
        return Relation(static_cast<std::uint8_t>(index));
    }

    std::size_t index() const noexcept { return index_; }
    const RelationInfo& info() const noexcept { return kRelations[index_]; }
    std::string_view name() const noexcept { return info().name; }
    RelationGroup group() const noexcept { return info().group; }
    bool weak() const noexcept { return info().weak; }
    std::string_view gloss() const noexcept { return info().gloss; }

    friend bool operator==(Relation, Relation) = default;
    friend auto operator<=>(Relation, Relation) = default;

private:
    explicit Relation(std::uint8_t index) : index_(index) {}
    std::uint8_t index_;
};

/// Exact vocabulary lookup after trimming and lowercasing; spaces are read as
/// underscores ("projects to" -> projects_to).
inline std::optional<Relation> try_parse_relation(std::string_view name) {
    std::string key = to_lower(trim_view(name));
    for (char& c : key)
        if (c == ' ') c = '_';
    for (std::size_t i = 0; i < kRelations.size(); ++i) {
        if (kRelations[i].name == key) return Relation::from_index(i);
    }
    return std::nullopt;
}

inline Relation parse_relation(std::string_view name) {
    if (auto r = try_parse_relation(name)) return *r;
    throw Error(ErrorCode::UnknownRelation,
                "'" + std::string(name) + "' is not in the closed vocabulary");
}

} // namespace kgcurr
