#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgcurr/error.hpp"
#include "kgcurr/graph_store.hpp"

namespace kgcurr {

inline constexpr std::size_t kMaxHops = 5;

/// k contiguous triples: triples[i].head == triples[i-1].tail, no entity repeated.
struct ReasoningPath {
    std::vector<Triple> triples;
    std::vector<std::string> concepts; // e_0 .. e_k
    double weight = 1.0;

    std::size_t hops() const noexcept { return triples.size(); }

    friend bool operator==(const ReasoningPath&, const ReasoningPath&) = default;
};

/// Builds a path from triples, filling concepts. Throws InvalidArgument when
/// the chain is broken or revisits an entity.
inline ReasoningPath make_path(std::vector<Triple> triples) {
    if (triples.empty()) throw Error(ErrorCode::InvalidArgument, "path needs at least one triple");
    ReasoningPath p;
    p.concepts.push_back(triples.front().head);
    for (std::size_t i = 0; i < triples.size(); ++i) {
        if (i > 0 && triples[i].head != triples[i - 1].tail)
            throw Error(ErrorCode::InvalidArgument, "path is not contiguous at hop " + std::to_string(i + 1));
        p.concepts.push_back(triples[i].tail);
    }
    std::vector<std::string> sorted = p.concepts;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw Error(ErrorCode::InvalidArgument, "path revisits an entity");
    p.triples = std::move(triples);
    return p;
}

inline bool is_valid_path(const ReasoningPath& p) {
    if (p.triples.empty() || p.concepts.size() != p.triples.size() + 1) return false;
    if (p.concepts.front() != p.triples.front().head) return false;
    for (std::size_t i = 0; i < p.triples.size(); ++i) {
        if (p.triples[i].tail != p.concepts[i + 1]) return false;
        if (i > 0 && p.triples[i].head != p.triples[i - 1].tail) return false;
    }
    std::set<std::string> seen(p.concepts.begin(), p.concepts.end());
    return seen.size() == p.concepts.size();
}

enum class HubPolicy { none, exclude_intermediate, downweight };

struct PruningConfig {
    double hub_fraction = 0.01;
    HubPolicy hub_policy = HubPolicy::exclude_intermediate;
    double hub_multiplier = 0.5; // per interior hub, downweight policy only
    double weak_relation_multiplier = 0.25;
    bool prune_transitive = true;

    void validate() const {
        if (!(hub_fraction > 0.0 && hub_fraction <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "hub_fraction must lie in (0, 1]");
        if (!(weak_relation_multiplier > 0.0 && weak_relation_multiplier <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "weak_relation_multiplier must lie in (0, 1]");
        if (!(hub_multiplier > 0.0 && hub_multiplier <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "hub_multiplier must lie in (0, 1]");
    }

    /// Every strategy off: plain simple-path enumeration with unit weights.
    static PruningConfig disabled() {
        PruningConfig c;
        c.hub_policy = HubPolicy::none;
        c.weak_relation_multiplier = 1.0;
        c.prune_transitive = false;
        return c;
    }
};

/// Product of the weak-edge multiplier over weak relations and, under the
/// downweight policy, the hub multiplier over interior hub nodes.
inline double path_weight(const ReasoningPath& path, const PruningConfig& cfg,
                          const std::set<std::string>& hubs = {}) {
    double w = 1.0;
    for (const Triple& t : path.triples)
        if (t.relation.weak()) w *= cfg.weak_relation_multiplier;
    if (cfg.hub_policy == HubPolicy::downweight && path.concepts.size() > 2) {
        for (std::size_t i = 1; i + 1 < path.concepts.size(); ++i)
            if (hubs.count(path.concepts[i])) w *= cfg.hub_multiplier;
    }
    return w;
}

/// True iff some edge e_0 -> e_k exists, of any relation. Defined for k >= 2.
inline bool is_transitively_redundant(const KnowledgeGraph& g, const ReasoningPath& path) {
    if (path.hops() < 2)
        throw Error(ErrorCode::InvalidArgument, "transitive redundancy is defined for k >= 2 only");
    return g.has_edge(g.entity_id(path.concepts.front()), g.entity_id(path.concepts.back()));
}

/// Streams simple directed paths of length [k_min, k_max] that survive
/// pruning. Depth-first from start entities in lexicographic order, out-edges
/// in insertion order; a path is yielded before its extensions.
class PathEnumerator {
public:
    PathEnumerator(const KnowledgeGraph& g, std::size_t k_min, std::size_t k_max, PruningConfig cfg = {})
        : g_(g), k_min_(k_min), k_max_(k_max), cfg_(cfg), on_path_(g.node_count(), false),
          is_hub_(g.node_count(), false) {
        if (k_min < 1 || k_min > k_max || k_max > kMaxHops)
            throw Error(ErrorCode::InvalidArgument, "need 1 <= k_min <= k_max <= 5");
        cfg_.validate();
        if (cfg_.hub_policy != HubPolicy::none && !g.empty()) {
            for (std::size_t id : hub_ids(g, cfg_.hub_fraction)) is_hub_[id] = true;
        }
        starts_.resize(g.node_count());
        for (std::size_t i = 0; i < starts_.size(); ++i) starts_[i] = i;
        std::sort(starts_.begin(), starts_.end(),
                  [&](std::size_t a, std::size_t b) { return g.entity(a).name < g.entity(b).name; });
    }

    std::set<std::string> hubs() const {
        std::set<std::string> out;
        for (std::size_t i = 0; i < is_hub_.size(); ++i)
            if (is_hub_[i]) out.insert(g_.entity(i).name);
        return out;
    }

    std::optional<ReasoningPath> next() {
        while (true) {
            if (stack_.empty()) {
                if (next_start_ >= starts_.size()) return std::nullopt;
                const std::size_t s = starts_[next_start_++];
                stack_.push_back({s, 0, false});
                on_path_[s] = true;
                continue;
            }
            Frame& top = stack_.back();
            const auto& edges = g_.out_edges(top.node);
            if (!top.terminal && path_.size() < k_max_ && top.edge_pos < edges.size()) {
                const Edge e = edges[top.edge_pos++];
                if (on_path_[e.neighbor]) continue;
                const bool hub_stop = cfg_.hub_policy == HubPolicy::exclude_intermediate && is_hub_[e.neighbor];
                stack_.push_back({e.neighbor, 0, hub_stop});
                on_path_[e.neighbor] = true;
                path_.push_back(e.triple);
                if (emit_ok()) return materialize();
                continue;
            }
            on_path_[top.node] = false;
            stack_.pop_back();
            if (!path_.empty() && !stack_.empty()) path_.pop_back();
        }
    }

private:
    struct Frame {
        std::size_t node;
        std::size_t edge_pos;
        bool terminal; // hub reached as an endpoint; may not be passed through
    };

    bool emit_ok() const {
        const std::size_t k = path_.size();
        if (k < k_min_) return false;
        if (k >= 2 && cfg_.prune_transitive && g_.has_edge(stack_.front().node, stack_.back().node))
            return false;
        return true;
    }

    ReasoningPath materialize() const {
        ReasoningPath p;
        p.triples.reserve(path_.size());
        p.concepts.reserve(path_.size() + 1);
        for (const Frame& f : stack_) p.concepts.push_back(g_.entity(f.node).name);
        for (std::size_t idx : path_) p.triples.push_back(g_.triples()[idx]);
        double w = 1.0;
        for (const Triple& t : p.triples)
            if (t.relation.weak()) w *= cfg_.weak_relation_multiplier;
        if (cfg_.hub_policy == HubPolicy::downweight) {
            for (std::size_t i = 1; i + 1 < stack_.size(); ++i)
                if (is_hub_[stack_[i].node]) w *= cfg_.hub_multiplier;
        }
        p.weight = w;
        return p;
    }

    const KnowledgeGraph& g_;
    std::size_t k_min_, k_max_;
    PruningConfig cfg_;
    std::vector<bool> on_path_;
    std::vector<bool> is_hub_;
    std::vector<std::size_t> starts_;
    std::size_t next_start_ = 0;
    std::vector<Frame> stack_;
    std::vector<std::size_t> path_; // triple indices
};

inline std::vector<ReasoningPath> enumerate_paths(const KnowledgeGraph& g, std::size_t k_min,
                                                  std::size_t k_max, const PruningConfig& cfg = {}) {
    std::vector<ReasoningPath> out;
    PathEnumerator it(g, k_min, k_max, cfg);
    while (auto p = it.next()) out.push_back(std::move(*p));
    return out;
}

} // namespace kgcurr
