#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kgcurr/error.hpp"
#include "kgcurr/graph_store.hpp"
#include "kgcurr/text.hpp"
#include "kgcurr/vocabulary.hpp"

namespace kgcurr {

// ---- chunking -------------------------------------------------------------

struct TextUnit {
    std::string id;
    std::string text;
    std::size_t token_begin = 0; // document token offsets, half-open
    std::size_t token_end = 0;

    friend bool operator==(const TextUnit&, const TextUnit&) = default;
};

/// Sliding window over whitespace tokens with stride window - overlap. The
/// final unit ends at the last token and may be shorter than the window.
inline std::vector<TextUnit> chunk_text(std::string_view document, std::size_t window_tokens,
                                        std::size_t overlap_tokens,
                                        std::string_view doc_id = "doc") {
    if (window_tokens == 0 || overlap_tokens >= window_tokens)
        throw Error(ErrorCode::InvalidWindow, "need 0 <= overlap < window (window=" +
                                                  std::to_string(window_tokens) +
                                                  ", overlap=" + std::to_string(overlap_tokens) + ")");
    const std::vector<std::string> tokens = split_whitespace(document);
    if (tokens.empty()) throw Error(ErrorCode::InvalidArgument, "document has no tokens");

    const std::size_t stride = window_tokens - overlap_tokens;
    std::vector<TextUnit> units;
    for (std::size_t start = 0;; start += stride) {
        const std::size_t end = std::min(start + window_tokens, tokens.size());
        TextUnit u;
        std::string idx = std::to_string(units.size());
        u.id = std::string(doc_id) + ":u" + std::string(idx.size() < 4 ? 4 - idx.size() : 0, '0') + idx;
        u.text = join(std::span<const std::string>(tokens.data() + start, end - start), " ");
        u.token_begin = start;
        u.token_end = end;
        units.push_back(std::move(u));
        if (end == tokens.size()) break;
    }
    return units;
}

// ---- prompt ---------------------------------------------------------------

struct DelimiterSet {
    std::string tuple_delim = "<|>";
    std::string record_delim = "##";
    std::string completion_delim = "<|COMPLETE|>";

    void validate() const {
        if (tuple_delim.empty() || record_delim.empty() || completion_delim.empty())
            throw Error(ErrorCode::InvalidArgument, "delimiters must be nonempty");
        if (tuple_delim == record_delim || tuple_delim == completion_delim ||
            record_delim == completion_delim)
            throw Error(ErrorCode::InvalidArgument, "delimiters must be pairwise distinct");
    }
};

inline std::vector<std::string> relation_vocabulary() {
    std::vector<std::string> out;
    for (const auto& r : kRelations) out.emplace_back(r.name);
    return out;
}

namespace detail {

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

inline constexpr std::string_view kExtractionTemplate =
    "-Role-\n"
    "You are an AI assistant specialized in extracting structured information from "
    "neuroscience textbook content to build a knowledge graph about the nervous system, "
    "brain function, and neural mechanisms.\n"
    "\n"
    "-Goal-\n"
    "Given neuroscience textbook content, a predefined list of entity types, and a "
    "predefined list of relations, identify every entity of those types and the "
    "scientifically meaningful relationships explicitly described among them within the "
    "text. Extract only information directly stated in the text—do not infer, "
    "generalize, or use external scientific knowledge.\n"
    "\n"
    "-Output Format-\n"
    "For each entity:\n"
    "  (\"entity\"{tuple_delimiter}name{tuple_delimiter}type{tuple_delimiter}description)"
    "{record_delimiter}\n"
    "\n"
    "For each relationship:\n"
    "  (\"relationship\"{tuple_delimiter}source{tuple_delimiter}target{tuple_delimiter}"
    "relation{tuple_delimiter}strength){record_delimiter}\n"
    "\n"
    "where strength: 7 = central, 5 = supporting, 3 = brief mention. Output ONLY tuples. "
    "End with {completion_delimiter}.\n"
    "\n"
    "-Entity Types-\n"
    "{entity_types}\n"
    "\n"
    "-Relations-\n"
    "{relation_list}\n"
    "\n"
    "-Example-\n"
    "Text:\n"
    "Dopaminergic neurons of the substantia nigra release dopamine onto the striatum. "
    "Degeneration of these neurons causes the motor symptoms of Parkinson disease.\n"
    "Output:\n"
    "(\"entity\"{tuple_delimiter}Substantia Nigra{tuple_delimiter}Anatomical Structure"
    "{tuple_delimiter}Midbrain nucleus containing dopaminergic neurons){record_delimiter}\n"
    "(\"entity\"{tuple_delimiter}Dopamine{tuple_delimiter}Molecular Entity{tuple_delimiter}"
    "Catecholamine neurotransmitter){record_delimiter}\n"
    "(\"entity\"{tuple_delimiter}Striatum{tuple_delimiter}Anatomical Structure"
    "{tuple_delimiter}Input nucleus of the basal ganglia){record_delimiter}\n"
    "(\"entity\"{tuple_delimiter}Parkinson Disease{tuple_delimiter}Clinical Entity"
    "{tuple_delimiter}Movement disorder caused by nigral degeneration){record_delimiter}\n"
    "(\"relationship\"{tuple_delimiter}Substantia Nigra{tuple_delimiter}Dopamine"
    "{tuple_delimiter}releases{tuple_delimiter}7){record_delimiter}\n"
    "(\"relationship\"{tuple_delimiter}Substantia Nigra{tuple_delimiter}Striatum"
    "{tuple_delimiter}projects_to{tuple_delimiter}5){record_delimiter}\n"
    "(\"relationship\"{tuple_delimiter}Substantia Nigra{tuple_delimiter}Parkinson Disease"
    "{tuple_delimiter}degenerates_in{tuple_delimiter}7){record_delimiter}\n"
    "{completion_delimiter}\n"
    "\n"
    "-Real Data-\n"
    "Text:\n"
    "{input_text}\n"
    "Output:\n";

} // namespace detail

/// Extraction system prompt for one text unit. The relation list is embedded
/// as a JSON array; delimiter placeholders are filled from `delims`.
inline std::string build_extraction_prompt(const TextUnit& unit,
                                           const std::vector<std::string>& vocab,
                                           const DelimiterSet& delims = {}) {
    delims.validate();
    nlohmann::json types = nlohmann::json::array();
    for (EntityCategory c : kAllCategories) types.push_back(std::string(category_display(c)));

    std::string p(detail::kExtractionTemplate);
    p = detail::replace_all(std::move(p), "{tuple_delimiter}", delims.tuple_delim);
    p = detail::replace_all(std::move(p), "{record_delimiter}", delims.record_delim);
    p = detail::replace_all(std::move(p), "{completion_delimiter}", delims.completion_delim);
    p = detail::replace_all(std::move(p), "{entity_types}", types.dump());
    p = detail::replace_all(std::move(p), "{relation_list}", nlohmann::json(vocab).dump());
    // Unit text goes in last so braces inside it are never treated as slots.
    return detail::replace_all(std::move(p), "{input_text}", unit.text);
}

// ---- records --------------------------------------------------------------

struct EntityRecord {
    std::string name;
    EntityCategory category;
    std::string description;

    friend bool operator==(const EntityRecord&, const EntityRecord&) = default;
};

struct RelationshipRecord {
    std::string source;
    std::string target;
    std::string relation;
    int strength;

    friend bool operator==(const RelationshipRecord&, const RelationshipRecord&) = default;
};

using ExtractionRecord = std::variant<EntityRecord, RelationshipRecord>;

enum class DiagnosticCode {
    NoCompletionDelimiter,
    MalformedRecord,
    UnknownKind,
    FieldCount,
    EmptyField,
    UnknownCategory,
    InvalidStrength,
    UnknownRelation,
    UndeclaredEntity,
};

inline const char* to_string(DiagnosticCode c) {
    switch (c) {
    case DiagnosticCode::NoCompletionDelimiter: return "NoCompletionDelimiter";
    case DiagnosticCode::MalformedRecord: return "MalformedRecord";
    case DiagnosticCode::UnknownKind: return "UnknownKind";
    case DiagnosticCode::FieldCount: return "FieldCount";
    case DiagnosticCode::EmptyField: return "EmptyField";
    case DiagnosticCode::UnknownCategory: return "UnknownCategory";
    case DiagnosticCode::InvalidStrength: return "InvalidStrength";
    case DiagnosticCode::UnknownRelation: return "UnknownRelation";
    case DiagnosticCode::UndeclaredEntity: return "UndeclaredEntity";
    }
    return "Unknown";
}

struct Diagnostic {
    std::optional<std::size_t> record_index;
    DiagnosticCode code;
    std::string message;
};

inline nlohmann::json diagnostic_to_json(const Diagnostic& d, std::string_view unit_id = {}) {
    nlohmann::json j{{"code", to_string(d.code)}, {"message", d.message}};
    j["record_index"] = d.record_index ? nlohmann::json(*d.record_index) : nlohmann::json(nullptr);
    if (!unit_id.empty()) j["unit_id"] = std::string(unit_id);
    return j;
}

struct ParseResult {
    std::vector<ExtractionRecord> records;
    std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline std::vector<std::string_view> split_on(std::string_view s, std::string_view delim) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t hit = s.find(delim, pos);
        if (hit == std::string_view::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, hit - pos));
        pos = hit + delim.size();
    }
}

inline std::string_view strip_quotes(std::string_view s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

inline std::optional<int> parse_small_int(std::string_view s) {
    if (s.empty() || s.size() > 3) return std::nullopt;
    int v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v;
}

} // namespace detail

/// Total parser for delimiter-based extraction output. Stops at the
/// completion delimiter; malformed records are skipped with a diagnostic.
inline ParseResult parse_extraction_output(std::string_view text, const DelimiterSet& delims = {}) {
    ParseResult result;
    auto diag = [&](std::optional<std::size_t> idx, DiagnosticCode code, std::string msg) {
        result.diagnostics.push_back({idx, code, std::move(msg)});
    };

    std::string_view body = text;
    if (const auto end = text.find(delims.completion_delim); end != std::string_view::npos) {
        body = text.substr(0, end);
    } else {
        diag(std::nullopt, DiagnosticCode::NoCompletionDelimiter, "no completion delimiter");
    }

    const auto segments = detail::split_on(body, delims.record_delim);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const std::string_view seg = trim_view(segments[i]);
        if (seg.empty()) continue;
        if (seg.size() < 2 || seg.front() != '(' || seg.back() != ')') {
            diag(i, DiagnosticCode::MalformedRecord, "record must be enclosed in parentheses");
            continue;
        }
        const auto raw_fields = detail::split_on(seg.substr(1, seg.size() - 2), delims.tuple_delim);
        std::vector<std::string> fields;
        fields.reserve(raw_fields.size());
        for (auto f : raw_fields) fields.emplace_back(trim_view(f));

        const std::string kind = to_lower(detail::strip_quotes(fields[0]));
        if (kind == "entity") {
            if (fields.size() != 4) {
                diag(i, DiagnosticCode::FieldCount,
                     "entity record needs 4 fields, got " + std::to_string(fields.size()));
                continue;
            }
            if (fields[1].empty()) {
                diag(i, DiagnosticCode::EmptyField, "entity name is empty");
                continue;
            }
            auto cat = try_parse_category(fields[2]);
            if (!cat) {
                diag(i, DiagnosticCode::UnknownCategory, "unknown entity type '" + fields[2] + "'");
                continue;
            }
            result.records.emplace_back(EntityRecord{fields[1], *cat, fields[3]});
        } else if (kind == "relationship") {
            if (fields.size() != 5) {
                diag(i, DiagnosticCode::FieldCount,
                     "relationship record needs 5 fields, got " + std::to_string(fields.size()));
                continue;
            }
            if (fields[1].empty() || fields[2].empty() || fields[3].empty()) {
                diag(i, DiagnosticCode::EmptyField, "relationship has an empty field");
                continue;
            }
            auto strength = detail::parse_small_int(fields[4]);
            if (!strength || !valid_strength(*strength)) {
                diag(i, DiagnosticCode::InvalidStrength, "strength '" + fields[4] + "' not in {3,5,7}");
                continue;
            }
            result.records.emplace_back(RelationshipRecord{fields[1], fields[2], fields[3], *strength});
        } else {
            diag(i, DiagnosticCode::UnknownKind, "unknown record kind '" + kind + "'");
        }
    }
    return result;
}

/// Writes records in the extraction output syntax; inverse of the parser for
/// records whose fields are trimmed and free of delimiters.
inline std::string serialize_records(const std::vector<ExtractionRecord>& records,
                                     const DelimiterSet& delims = {}) {
    std::string out;
    const std::string& t = delims.tuple_delim;
    for (const auto& rec : records) {
        if (const auto* e = std::get_if<EntityRecord>(&rec)) {
            out += "(\"entity\"" + t + e->name + t + std::string(category_display(e->category)) + t +
                   e->description + ")";
        } else {
            const auto& r = std::get<RelationshipRecord>(rec);
            out += "(\"relationship\"" + t + r.source + t + r.target + t + r.relation + t +
                   std::to_string(r.strength) + ")";
        }
        out += delims.record_delim;
        out += '\n';
    }
    out += delims.completion_delim;
    return out;
}

struct TripleConversion {
    std::vector<Triple> triples;
    std::vector<Diagnostic> diagnostics;
};

/// One candidate triple per relationship record. Endpoint categories come
/// from entity records of the same unit; undeclared endpoints default to
/// ConceptualEntity and are flagged.
inline TripleConversion records_to_triples(const std::vector<ExtractionRecord>& records,
                                           std::string_view unit_id) {
    TripleConversion out;
    std::unordered_map<std::string, EntityCategory> declared;
    for (const auto& rec : records) {
        if (const auto* e = std::get_if<EntityRecord>(&rec))
            declared.emplace(normalize_entity(e->name), e->category);
    }

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto* r = std::get_if<RelationshipRecord>(&records[i]);
        if (!r) continue;
        auto rel = try_parse_relation(r->relation);
        if (!rel) {
            out.diagnostics.push_back(
                {i, DiagnosticCode::UnknownRelation, "'" + r->relation + "' is not in the vocabulary"});
            continue;
        }
        std::string head = normalize_entity(r->source);
        std::string tail = normalize_entity(r->target);
        if (head.empty() || tail.empty()) {
            out.diagnostics.push_back({i, DiagnosticCode::EmptyField, "endpoint empty after normalization"});
            continue;
        }
        auto resolve = [&](const std::string& name) {
            if (auto it = declared.find(name); it != declared.end()) return it->second;
            out.diagnostics.push_back({i, DiagnosticCode::UndeclaredEntity,
                                       "'" + name + "' undeclared; defaulting to ConceptualEntity"});
            return EntityCategory::ConceptualEntity;
        };
        const EntityCategory hc = resolve(head);
        const EntityCategory tc = resolve(tail);
        out.triples.push_back(Triple{std::move(head), hc, *rel, std::move(tail), tc,
                                     {std::string(unit_id)}, r->strength, TripleStatus::candidate});
    }
    return out;
}

} // namespace kgcurr
