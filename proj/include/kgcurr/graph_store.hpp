#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgcurr/error.hpp"
#include "kgcurr/text.hpp"
#include "kgcurr/vocabulary.hpp"

namespace kgcurr {

using json = nlohmann::json;

enum class TripleStatus { candidate, validated, rejected };

inline std::string_view status_label(TripleStatus s) {
    switch (s) {
    case TripleStatus::candidate: return "candidate";
    case TripleStatus::validated: return "validated";
    case TripleStatus::rejected: return "rejected";
    }
    return "";
}

inline std::optional<TripleStatus> try_parse_status(std::string_view s) {
    if (s == "candidate") return TripleStatus::candidate;
    if (s == "validated") return TripleStatus::validated;
    if (s == "rejected") return TripleStatus::rejected;
    return std::nullopt;
}

inline bool valid_strength(int s) { return s == 3 || s == 5 || s == 7; }

struct Triple {
    std::string head;
    EntityCategory head_category;
    Relation relation;
    std::string tail;
    EntityCategory tail_category;
    std::vector<std::string> provenance;
    int strength = 5;
    TripleStatus status = TripleStatus::validated;

    friend bool operator==(const Triple&, const Triple&) = default;
};

/// Builds a triple from surface strings, normalizing both entity names.
/// Throws UnknownRelation, UnknownCategory, EmptyEntity or InvalidStrength.
inline Triple make_triple(std::string_view head, std::string_view head_category,
                          std::string_view relation, std::string_view tail,
                          std::string_view tail_category, std::string provenance = {},
                          int strength = 5, TripleStatus status = TripleStatus::validated) {
    Triple t{normalize_entity(head),
             parse_category(head_category),
             parse_relation(relation),
             normalize_entity(tail),
             parse_category(tail_category),
             {},
             strength,
             status};
    if (!provenance.empty()) t.provenance.push_back(std::move(provenance));
    if (t.head.empty() || t.tail.empty())
        throw Error(ErrorCode::EmptyEntity, "head and tail must be nonempty after normalization");
    if (!valid_strength(strength))
        throw Error(ErrorCode::InvalidStrength, std::to_string(strength) + " not in {3,5,7}");
    return t;
}

inline std::string triple_key(std::string_view head, Relation r, std::string_view tail) {
    std::string key(head);
    key += '\x1f';
    key += r.name();
    key += '\x1f';
    key += tail;
    return key;
}

inline std::string triple_key(const Triple& t) { return triple_key(t.head, t.relation, t.tail); }

/// "head —relation→ tail"
inline std::string render_triple(const Triple& t) {
    return t.head + " —" + std::string(t.relation.name()) + "→ " + t.tail;
}

enum class Direction { out, in };

struct Entity {
    std::string name;
    EntityCategory category;

    friend bool operator==(const Entity&, const Entity&) = default;
    friend auto operator<=>(const Entity& a, const Entity& b) {
        if (auto c = a.name <=> b.name; c != 0) return c;
        return a.category <=> b.category;
    }
};

struct Edge {
    Relation relation;
    std::size_t neighbor; // entity id
    std::size_t triple;   // index into triples()

    friend bool operator==(const Edge&, const Edge&) = default;
};

class GraphBuilder;

/// Frozen, immutable graph. Safe to share across reader threads.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    const std::vector<Entity>& entities() const noexcept { return entities_; }
    const std::vector<Triple>& triples() const noexcept { return triples_; }
    std::size_t node_count() const noexcept { return entities_.size(); }
    std::size_t triple_count() const noexcept { return triples_.size(); }
    bool empty() const noexcept { return entities_.empty(); }

    std::optional<std::size_t> find_entity(std::string_view name) const {
        auto it = index_.find(normalize_entity(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t entity_id(std::string_view name) const {
        if (auto id = find_entity(name)) return *id;
        throw Error(ErrorCode::UnknownEntity, "'" + std::string(name) + "'");
    }

    const Entity& entity(std::size_t id) const { return entities_.at(id); }

    const std::vector<Edge>& out_edges(std::size_t id) const { return out_.at(id); }
    const std::vector<Edge>& in_edges(std::size_t id) const { return in_.at(id); }

    std::size_t degree(std::size_t id) const { return out_.at(id).size() + in_.at(id).size(); }

    /// Edges incident to `name` in the requested direction, insertion order.
    std::vector<std::pair<Relation, std::string>> neighbors(std::string_view name,
                                                            Direction dir) const {
        const std::size_t id = entity_id(name);
        const auto& edges = dir == Direction::out ? out_[id] : in_[id];
        std::vector<std::pair<Relation, std::string>> out;
        out.reserve(edges.size());
        for (const Edge& e : edges) out.emplace_back(e.relation, entities_[e.neighbor].name);
        return out;
    }

    /// True iff some edge from -> to exists, whatever its relation.
    bool has_edge(std::size_t from, std::size_t to) const {
        for (const Edge& e : out_.at(from))
            if (e.neighbor == to) return true;
        return false;
    }

    bool contains(std::string_view head, Relation r, std::string_view tail) const {
        return triple_index_.count(triple_key(normalize_entity(head), r, normalize_entity(tail))) != 0;
    }

    std::optional<std::size_t> find_triple(const Triple& t) const {
        auto it = triple_index_.find(triple_key(t));
        if (it == triple_index_.end()) return std::nullopt;
        return it->second;
    }

    /// Rebuilds adjacency from the triple list and compares with the stored lists.
    bool adjacency_consistent() const {
        std::vector<std::vector<Edge>> out(entities_.size()), in(entities_.size());
        for (std::size_t i = 0; i < triples_.size(); ++i) {
            const Triple& t = triples_[i];
            auto h = index_.find(t.head);
            auto tl = index_.find(t.tail);
            if (h == index_.end() || tl == index_.end()) return false;
            out[h->second].push_back({t.relation, tl->second, i});
            in[tl->second].push_back({t.relation, h->second, i});
        }
        return out == out_ && in == in_;
    }

    /// Structural equality: same entity set and same triple sequence.
    friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
        if (a.triples_ != b.triples_) return false;
        std::set<Entity> ea(a.entities_.begin(), a.entities_.end());
        std::set<Entity> eb(b.entities_.begin(), b.entities_.end());
        return ea == eb;
    }

private:
    friend class GraphBuilder;

    std::vector<Entity> entities_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Triple> triples_;
    std::unordered_map<std::string, std::size_t> triple_index_;
    std::vector<std::vector<Edge>> out_;
    std::vector<std::vector<Edge>> in_;
};

enum class AddOutcome { inserted, duplicate };

struct AddResult {
    AddOutcome outcome;
    std::size_t triple_index;
    bool category_conflict = false; // an endpoint was already registered with another category
};

/// Single-writer builder. Duplicate (head, relation, tail) triples collapse to
/// one, keeping the max strength and the union of provenance ids. An entity's
/// category is fixed by its first registration; later triples are rewritten to
/// agree with it.
class GraphBuilder {
public:
    GraphBuilder() = default;

    static GraphBuilder from(const KnowledgeGraph& g) {
        GraphBuilder b;
        b.graph_ = g;
        return b;
    }

    std::size_t add_entity(std::string_view name, EntityCategory category) {
        check_open();
        std::string key = normalize_entity(name);
        if (key.empty()) throw Error(ErrorCode::EmptyEntity, "entity name is empty");
        return register_entity(key, category).first;
    }

    AddResult add(Triple t) {
        check_open();
        t.head = normalize_entity(t.head);
        t.tail = normalize_entity(t.tail);
        if (t.head.empty() || t.tail.empty())
            throw Error(ErrorCode::EmptyEntity, "head and tail must be nonempty");
        if (!valid_strength(t.strength))
            throw Error(ErrorCode::InvalidStrength, std::to_string(t.strength) + " not in {3,5,7}");

        const std::string key = triple_key(t);
        if (auto it = graph_.triple_index_.find(key); it != graph_.triple_index_.end()) {
            Triple& existing = graph_.triples_[it->second];
            existing.strength = std::max(existing.strength, t.strength);
            for (auto& p : t.provenance) {
                if (std::find(existing.provenance.begin(), existing.provenance.end(), p) ==
                    existing.provenance.end())
                    existing.provenance.push_back(std::move(p));
            }
            return {AddOutcome::duplicate, it->second, false};
        }

        auto [h, h_conflict] = register_entity(t.head, t.head_category);
        auto [tl, t_conflict] = register_entity(t.tail, t.tail_category);
        t.head_category = graph_.entities_[h].category;
        t.tail_category = graph_.entities_[tl].category;

        const std::size_t idx = graph_.triples_.size();
        graph_.out_[h].push_back({t.relation, tl, idx});
        graph_.in_[tl].push_back({t.relation, h, idx});
        graph_.triple_index_.emplace(key, idx);
        graph_.triples_.push_back(std::move(t));
        return {AddOutcome::inserted, idx, h_conflict || t_conflict};
    }

    AddResult add(std::string_view head, std::string_view head_category, std::string_view relation,
                  std::string_view tail, std::string_view tail_category, std::string provenance = {},
                  int strength = 5) {
        return add(make_triple(head, head_category, relation, tail, tail_category,
                               std::move(provenance), strength));
    }

    const KnowledgeGraph& peek() const noexcept { return graph_; }
    bool frozen() const noexcept { return frozen_; }

    /// Freezes the builder; further mutation throws FrozenBuilder.
    KnowledgeGraph build() {
        check_open();
        frozen_ = true;
        return std::move(graph_);
    }

private:
    void check_open() const {
        if (frozen_) throw Error(ErrorCode::FrozenBuilder, "builder already frozen");
    }

    std::pair<std::size_t, bool> register_entity(const std::string& key, EntityCategory category) {
        if (auto it = graph_.index_.find(key); it != graph_.index_.end())
            return {it->second, graph_.entities_[it->second].category != category};
        const std::size_t id = graph_.entities_.size();
        graph_.entities_.push_back({key, category});
        graph_.index_.emplace(key, id);
        graph_.out_.emplace_back();
        graph_.in_.emplace_back();
        return {id, false};
    }

    KnowledgeGraph graph_;
    bool frozen_ = false;
};

struct GraphStats {
    std::size_t node_count = 0;
    std::size_t triple_count = 0;
    double avg_degree = 0.0; // triples per node
    std::map<std::string, std::size_t> degree_histogram; // entity -> in + out degree
};

inline GraphStats compute_stats(const KnowledgeGraph& g) {
    if (g.empty()) throw Error(ErrorCode::EmptyGraph, "graph has no nodes");
    GraphStats s;
    s.node_count = g.node_count();
    s.triple_count = g.triple_count();
    s.avg_degree = static_cast<double>(s.triple_count) / static_cast<double>(s.node_count);
    for (std::size_t i = 0; i < g.node_count(); ++i)
        s.degree_histogram[g.entity(i).name] = g.degree(i);
    return s;
}

inline json stats_report(const GraphStats& s) {
    return json{{"node_count", s.node_count},
                {"triple_count", s.triple_count},
                {"avg_degree", s.avg_degree}};
}

/// Entity ids of the ceil(fraction * |V|) highest-degree nodes; equal degrees
/// are ordered by entity name.
inline std::vector<std::size_t> hub_ids(const KnowledgeGraph& g, double fraction) {
    if (g.empty()) throw Error(ErrorCode::EmptyGraph, "graph has no nodes");
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "hub fraction must lie in (0, 1]");
    const double raw = fraction * static_cast<double>(g.node_count());
    auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    count = std::clamp<std::size_t>(count, 1, g.node_count());

    std::vector<std::size_t> ids(g.node_count());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        const auto da = g.degree(a), db = g.degree(b);
        if (da != db) return da > db;
        return g.entity(a).name < g.entity(b).name;
    });
    ids.resize(count);
    return ids;
}

inline std::set<std::string> top_degree_hubs(const KnowledgeGraph& g, double fraction) {
    std::set<std::string> out;
    for (std::size_t id : hub_ids(g, fraction)) out.insert(g.entity(id).name);
    return out;
}

// ---- JSONL ----------------------------------------------------------------

inline json triple_to_json(const Triple& t) {
    json prov;
    if (t.provenance.size() == 1)
        prov = t.provenance.front();
    else
        prov = t.provenance;
    return json{{"head", t.head},
                {"head_category", category_label(t.head_category)},
                {"relation", t.relation.name()},
                {"tail", t.tail},
                {"tail_category", category_label(t.tail_category)},
                {"provenance", prov},
                {"strength", t.strength},
                {"status", status_label(t.status)}};
}

namespace detail {

inline const json& require(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(line, std::string("missing field '") + key + "'");
    return *it;
}

inline std::string require_string(const json& obj, const char* key, std::size_t line) {
    const json& v = require(obj, key, line);
    if (!v.is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

} // namespace detail

/// Parses one triple object. Every failure, including vocabulary and category
/// violations, is reported as a SchemaError carrying `line`.
inline Triple triple_from_json(const json& obj, std::size_t line = 0) {
    if (!obj.is_object()) throw SchemaError(line, "expected a JSON object");
    const std::string head = detail::require_string(obj, "head", line);
    const std::string head_cat = detail::require_string(obj, "head_category", line);
    const std::string relation = detail::require_string(obj, "relation", line);
    const std::string tail = detail::require_string(obj, "tail", line);
    const std::string tail_cat = detail::require_string(obj, "tail_category", line);
    const json& prov = detail::require(obj, "provenance", line);
    const json& strength = detail::require(obj, "strength", line);
    const std::string status = detail::require_string(obj, "status", line);

    if (!strength.is_number_integer()) throw SchemaError(line, "field 'strength' must be an integer");
    auto st = try_parse_status(status);
    if (!st) throw SchemaError(line, "unknown status '" + status + "'");

    std::vector<std::string> provenance;
    if (prov.is_string()) {
        if (!prov.get<std::string>().empty()) provenance.push_back(prov.get<std::string>());
    } else if (prov.is_array()) {
        for (const auto& p : prov) {
            if (!p.is_string()) throw SchemaError(line, "provenance entries must be strings");
            provenance.push_back(p.get<std::string>());
        }
    } else {
        throw SchemaError(line, "field 'provenance' must be a string or array");
    }

    try {
        Triple t = make_triple(head, head_cat, relation, tail, tail_cat, {}, strength.get<int>(), *st);
        t.provenance = std::move(provenance);
        return t;
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(line, e.what());
    }
}

inline void write_triples_jsonl(std::ostream& os, const std::vector<Triple>& triples) {
    for (const Triple& t : triples) os << triple_to_json(t).dump() << '\n';
}

inline std::vector<Triple> read_triples_jsonl(std::istream& is) {
    std::vector<Triple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw SchemaError(lineno, "malformed JSON");
        out.push_back(triple_from_json(obj, lineno));
    }
    return out;
}

/// Graph JSONL: one triple per line, followed by `{"entity", "category"}`
/// lines for isolated nodes (they cannot be recovered from triples).
inline void write_graph_jsonl(std::ostream& os, const KnowledgeGraph& g) {
    write_triples_jsonl(os, g.triples());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.degree(i) != 0) continue;
        os << json{{"entity", g.entity(i).name}, {"category", category_label(g.entity(i).category)}}
                  .dump()
           << '\n';
    }
}

inline KnowledgeGraph read_graph_jsonl(std::istream& is) {
    GraphBuilder b;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw SchemaError(lineno, "malformed JSON");
        if (obj.is_object() && obj.contains("entity") && !obj.contains("head")) {
            const std::string name = detail::require_string(obj, "entity", lineno);
            auto cat = try_parse_category(detail::require_string(obj, "category", lineno));
            if (!cat) throw SchemaError(lineno, "unknown category");
            try {
                b.add_entity(name, *cat);
            } catch (const Error& e) {
                throw SchemaError(lineno, e.what());
            }
            continue;
        }
        Triple t = triple_from_json(obj, lineno);
        b.add(std::move(t));
    }
    return b.build();
}

inline void save_jsonl(const KnowledgeGraph& g, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    write_graph_jsonl(os, g);
    if (!os) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

inline KnowledgeGraph load_jsonl(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    return read_graph_jsonl(is);
}

inline void save_triples_jsonl(const std::vector<Triple>& triples, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    write_triples_jsonl(os, triples);
}

inline std::vector<Triple> load_triples_jsonl(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    return read_triples_jsonl(is);
}

/// Content hash of the canonical JSONL serialization.
inline std::string graph_fingerprint(const KnowledgeGraph& g) {
    std::ostringstream os;
    write_graph_jsonl(os, g);
    return hex64(fnv1a64(os.str()));
}

} // namespace kgcurr
