#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgcurr/error.hpp"
#include "kgcurr/graph_store.hpp"
#include "kgcurr/paths.hpp"

namespace kgcurr {

enum class Split { sft, rl, eval };

inline std::string_view split_label(Split s) {
    switch (s) {
    case Split::sft: return "sft";
    case Split::rl: return "rl";
    case Split::eval: return "eval";
    }
    return "";
}

inline std::optional<Split> try_parse_split(std::string_view s) {
    if (s == "sft") return Split::sft;
    if (s == "rl") return Split::rl;
    if (s == "eval") return Split::eval;
    return std::nullopt;
}

inline constexpr std::array<char, 4> kOptionLetters = {'A', 'B', 'C', 'D'};

inline std::optional<std::size_t> letter_index(char letter) {
    if (letter >= 'A' && letter <= 'D') return static_cast<std::size_t>(letter - 'A');
    return std::nullopt;
}

/// Multiple-choice item with its source path.
struct QaItem {
    std::string id;
    std::size_t hops = 0;
    ReasoningPath path;
    std::string question;
    std::array<std::string, 4> options; // A..D
    char gold = 'A';
    std::string cot_trace;
    Split split = Split::sft;

    const std::string& gold_text() const { return options[static_cast<std::size_t>(gold - 'A')]; }
};

/// Exactly four nonempty, pairwise distinct options and a gold letter in A..D.
inline bool is_well_formed(const QaItem& item) {
    if (!letter_index(item.gold)) return false;
    for (std::size_t i = 0; i < 4; ++i) {
        if (item.options[i].empty()) return false;
        for (std::size_t j = i + 1; j < 4; ++j)
            if (item.options[i] == item.options[j]) return false;
    }
    return item.hops == item.path.hops();
}

inline nlohmann::json qa_item_to_json(const QaItem& item) {
    nlohmann::json options = nlohmann::json::object();
    for (std::size_t i = 0; i < 4; ++i) options[std::string(1, kOptionLetters[i])] = item.options[i];
    nlohmann::json path = nlohmann::json::array();
    for (const Triple& t : item.path.triples)
        path.push_back({{"head", t.head}, {"relation", std::string(t.relation.name())}, {"tail", t.tail}});
    return {{"id", item.id},
            {"hops", item.hops},
            {"question", item.question},
            {"options", options},
            {"gold", std::string(1, item.gold)},
            {"cot_trace", item.cot_trace},
            {"path", path},
            {"split", std::string(split_label(item.split))}};
}

/// Inverse of qa_item_to_json. The item schema carries (head, relation, tail)
/// only, so reloaded path triples have ConceptualEntity categories.
inline QaItem qa_item_from_json(const nlohmann::json& obj, std::size_t line = 0) {
    if (!obj.is_object()) throw SchemaError(line, "expected a JSON object");
    QaItem item;
    item.id = detail::require_string(obj, "id", line);
    const auto& hops = detail::require(obj, "hops", line);
    if (!hops.is_number_unsigned()) throw SchemaError(line, "field 'hops' must be a positive integer");
    item.hops = hops.get<std::size_t>();
    item.question = detail::require_string(obj, "question", line);
    const auto& options = detail::require(obj, "options", line);
    if (!options.is_object() || options.size() != 4)
        throw SchemaError(line, "field 'options' must map exactly A..D");
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string key(1, kOptionLetters[i]);
        if (!options.contains(key) || !options[key].is_string())
            throw SchemaError(line, "option " + key + " missing");
        item.options[i] = options[key].get<std::string>();
    }
    const std::string gold = detail::require_string(obj, "gold", line);
    if (gold.size() != 1 || !letter_index(gold[0])) throw SchemaError(line, "gold must be one of A..D");
    item.gold = gold[0];
    item.cot_trace = detail::require_string(obj, "cot_trace", line);
    auto split = try_parse_split(detail::require_string(obj, "split", line));
    if (!split) throw SchemaError(line, "unknown split");
    item.split = *split;

    const auto& path = detail::require(obj, "path", line);
    if (!path.is_array() || path.empty()) throw SchemaError(line, "field 'path' must be a nonempty array");
    std::vector<Triple> triples;
    for (const auto& step : path) {
        const std::string head = detail::require_string(step, "head", line);
        const std::string rel = detail::require_string(step, "relation", line);
        const std::string tail = detail::require_string(step, "tail", line);
        try {
            triples.push_back(make_triple(head, "ConceptualEntity", rel, tail, "ConceptualEntity"));
        } catch (const Error& e) {
            throw SchemaError(line, e.what());
        }
    }
    try {
        item.path = make_path(std::move(triples));
    } catch (const Error& e) {
        throw SchemaError(line, e.what());
    }
    if (item.path.hops() != item.hops) throw SchemaError(line, "hops does not match path length");
    return item;
}

inline void write_items_jsonl(std::ostream& os, const std::vector<QaItem>& items) {
    for (const auto& item : items) os << qa_item_to_json(item).dump() << '\n';
}

inline std::vector<QaItem> read_items_jsonl(std::istream& is) {
    std::vector<QaItem> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw SchemaError(lineno, "malformed JSON");
        out.push_back(qa_item_from_json(obj, lineno));
    }
    return out;
}

inline std::vector<QaItem> load_items_jsonl(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    return read_items_jsonl(is);
}

} // namespace kgcurr
