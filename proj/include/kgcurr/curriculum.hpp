#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgcurr/error.hpp"
#include "kgcurr/graph_store.hpp"
#include "kgcurr/paths.hpp"
#include "kgcurr/qa_item.hpp"
#include "kgcurr/text.hpp"

namespace kgcurr {

// ---- sampling ---------------------------------------------------------------

struct StratumTarget {
    bool take_all = false;  // keep every surviving path (1-hop coverage)
    std::size_t count = 0;  // ignored when take_all
    std::size_t rl_count = 0; // first rl_count sampled items go to the rl split
    Split split = Split::sft; // split for the remaining items

    friend bool operator==(const StratumTarget&, const StratumTarget&) = default;
};

using CurriculumTargets = std::map<std::size_t, StratumTarget>;

/// 1-hop: every edge; 2-hop: 30,000 with 5,000 held out for RL; 3..5-hop:
/// 1,000 each for evaluation.
inline CurriculumTargets default_curriculum_targets() {
    CurriculumTargets t;
    t[1] = {true, 0, 0, Split::sft};
    t[2] = {false, 30000, 5000, Split::sft};
    for (std::size_t k = 3; k <= 5; ++k) t[k] = {false, 1000, 0, Split::eval};
    return t;
}

struct QaStub {
    std::string id;
    std::size_t hops = 0;
    ReasoningPath path;
    Split split = Split::sft;
};

struct CurriculumManifest {
    std::uint64_t seed = 0;
    std::string graph_fingerprint;
    std::map<std::pair<std::size_t, Split>, std::size_t> counts;
    std::map<std::size_t, std::string> item_files; // hop -> file name

    std::size_t stratum_total(std::size_t hops) const {
        std::size_t n = 0;
        for (const auto& [key, c] : counts)
            if (key.first == hops) n += c;
        return n;
    }

    friend bool operator==(const CurriculumManifest&, const CurriculumManifest&) = default;
};

inline nlohmann::json manifest_to_json(const CurriculumManifest& m) {
    nlohmann::json counts = nlohmann::json::array();
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& [key, c] : m.counts)
        counts.push_back({{"hops", key.first}, {"split", std::string(split_label(key.second))}, {"count", c}});
    std::set<std::size_t> hops;
    for (const auto& [key, c] : m.counts) hops.insert(key.first);
    for (std::size_t h : hops) strata[std::to_string(h)] = m.stratum_total(h);
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [h, f] : m.item_files) files[std::to_string(h)] = f;
    return {{"seed", m.seed},
            {"graph_fingerprint", m.graph_fingerprint},
            {"counts", counts},
            {"strata", strata},
            {"item_files", files}};
}

inline CurriculumManifest manifest_from_json(const nlohmann::json& j) {
    CurriculumManifest m;
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        m.graph_fingerprint = j.at("graph_fingerprint").get<std::string>();
        for (const auto& c : j.at("counts")) {
            auto split = try_parse_split(c.at("split").get<std::string>());
            if (!split) throw SchemaError(0, "unknown split in manifest");
            m.counts[{c.at("hops").get<std::size_t>(), *split}] = c.at("count").get<std::size_t>();
        }
        for (const auto& [h, f] : j.at("item_files").items())
            m.item_files[static_cast<std::size_t>(std::stoul(h))] = f.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(0, std::string("manifest: ") + e.what());
    }
    return m;
}

class StratumShortfallError : public Error {
public:
    using Shortfall = std::map<std::size_t, std::pair<std::size_t, std::size_t>>; // hop -> (have, need)

    explicit StratumShortfallError(Shortfall s)
        : Error(ErrorCode::StratumShortfall, describe(s)), shortfall_(std::move(s)) {}

    const Shortfall& shortfall() const noexcept { return shortfall_; }

private:
    static std::string describe(const Shortfall& s) {
        std::string msg;
        for (const auto& [hop, hn] : s) {
            if (!msg.empty()) msg += "; ";
            msg += std::to_string(hop) + "-hop: have " + std::to_string(hn.first) + ", need " +
                   std::to_string(hn.second);
        }
        return msg;
    }
    Shortfall shortfall_;
};

struct SampledCurriculum {
    std::vector<QaStub> stubs; // grouped by hop ascending, sampling order within a hop
    CurriculumManifest manifest;
};

namespace detail {

struct KeyedPath {
    double key;
    std::size_t seq;
    ReasoningPath path;
};

struct KeyedPathGreater {
    bool operator()(const KeyedPath& a, const KeyedPath& b) const {
        if (a.key != b.key) return a.key > b.key;
        return a.seq > b.seq;
    }
};

inline std::string item_id(std::size_t hops, std::size_t rank) {
    std::string r = std::to_string(rank);
    return "h" + std::to_string(hops) + "-" + std::string(r.size() < 6 ? 6 - r.size() : 0, '0') + r;
}

} // namespace detail

/// Weighted sampling without replacement per hop stratum, streamed in one
/// pass: each path draws key = ln(u) / weight and each stratum keeps its
/// `count` largest keys. `next()` on the source yields std::optional paths.
template <typename PathSource>
    requires requires(PathSource& s) { { s.next() } -> std::same_as<std::optional<ReasoningPath>>; }
SampledCurriculum sample_curriculum(PathSource& source, const CurriculumTargets& targets, std::uint64_t seed,
                                    std::string graph_fingerprint = {}) {
    Rng rng(seed);
    std::map<std::size_t, std::size_t> available;
    std::map<std::size_t, std::vector<ReasoningPath>> take_all;
    std::map<std::size_t, std::priority_queue<detail::KeyedPath, std::vector<detail::KeyedPath>,
                                              detail::KeyedPathGreater>>
        reservoirs;
    std::size_t seq = 0;

    while (std::optional<ReasoningPath> p = source.next()) {
        const std::size_t k = p->hops();
        auto target = targets.find(k);
        if (target == targets.end()) continue;
        ++available[k];
        if (target->second.take_all) {
            take_all[k].push_back(std::move(*p));
            continue;
        }
        if (target->second.count == 0) continue;
        const double w = p->weight > 0.0 ? p->weight : 1e-300;
        const double key = std::log(rng.uniform_open()) / w;
        auto& heap = reservoirs[k];
        if (heap.size() < target->second.count) {
            heap.push({key, seq++, std::move(*p)});
        } else if (key > heap.top().key) {
            heap.pop();
            heap.push({key, seq++, std::move(*p)});
        }
    }

    StratumShortfallError::Shortfall shortfall;
    for (const auto& [k, t] : targets) {
        if (!t.take_all && available[k] < t.count) shortfall[k] = {available[k], t.count};
        const std::size_t n = t.take_all ? available[k] : t.count;
        if (t.rl_count > n) shortfall[k] = {available[k], t.rl_count};
    }
    if (!shortfall.empty()) throw StratumShortfallError(std::move(shortfall));

    SampledCurriculum out;
    out.manifest.seed = seed;
    out.manifest.graph_fingerprint = std::move(graph_fingerprint);
    for (const auto& [k, t] : targets) {
        std::vector<ReasoningPath> chosen;
        if (t.take_all) {
            chosen = std::move(take_all[k]);
        } else {
            auto& heap = reservoirs[k];
            std::vector<detail::KeyedPath> items;
            while (!heap.empty()) {
                items.push_back(std::move(const_cast<detail::KeyedPath&>(heap.top())));
                heap.pop();
            }
            std::reverse(items.begin(), items.end()); // largest key first
            for (auto& kp : items) chosen.push_back(std::move(kp.path));
        }
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            const Split split = i < t.rl_count ? Split::rl : t.split;
            out.stubs.push_back({detail::item_id(k, i), k, std::move(chosen[i]), split});
            ++out.manifest.counts[{k, split}];
        }
        out.manifest.item_files[k] = "items_hop" + std::to_string(k) + ".jsonl";
    }
    return out;
}

/// Vector-backed path source.
class VectorPathSource {
public:
    explicit VectorPathSource(const std::vector<ReasoningPath>& paths) : paths_(paths) {}
    std::optional<ReasoningPath> next() {
        if (pos_ >= paths_.size()) return std::nullopt;
        return paths_[pos_++];
    }

private:
    const std::vector<ReasoningPath>& paths_;
    std::size_t pos_ = 0;
};

inline SampledCurriculum sample_curriculum(const std::vector<ReasoningPath>& paths,
                                           const CurriculumTargets& targets, std::uint64_t seed,
                                           std::string graph_fingerprint = {}) {
    VectorPathSource src(paths);
    return sample_curriculum(src, targets, seed, std::move(graph_fingerprint));
}

// ---- path -> text -----------------------------------------------------------

/// One line per hop: "Step i: <head> <relation gloss> <tail>."
inline std::string path_to_cot(const ReasoningPath& path) {
    std::string out;
    for (std::size_t i = 0; i < path.triples.size(); ++i) {
        const Triple& t = path.triples[i];
        if (i) out += '\n';
        out += "Step " + std::to_string(i + 1) + ": " + t.head + " " + std::string(t.relation.gloss()) + " " +
               t.tail + ".";
    }
    return out;
}

// ---- MCQ generation -----------------------------------------------------------

/// Text-generation backend for LLM-mode item authoring.
class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    virtual std::string generate(std::string_view prompt) const = 0;
};

enum class McqMode { template_mode, llm };

struct McqOptions {
    McqMode mode = McqMode::template_mode;
    std::uint64_t seed = 0;
    const GenerationClient* client = nullptr; // required for llm mode
};

struct McqResult {
    QaItem item;
    std::optional<std::string> diagnostic; // set when llm output fell back to the template
};

inline std::string template_question(const ReasoningPath& path) {
    const auto& t = path.triples;
    if (t.size() == 1)
        return "In the knowledge graph, " + t[0].head + " " + std::string(t[0].relation.gloss()) +
               " which of the following?";
    std::string q = "Starting from " + path.concepts.front() + ", follow " + std::to_string(t.size()) +
                    " relations in order: it " + std::string(t[0].relation.gloss()) + " an entity";
    for (std::size_t i = 1; i < t.size(); ++i) {
        q += ", which ";
        q += t[i].relation.gloss();
        q += i + 1 == t.size() ? " a final entity" : " another entity";
    }
    q += ". Which entity is reached at the end of this chain?";
    return q;
}

/// Entities that may serve as distractors: same category as e_k, not on the
/// path, and not an out-neighbour of e_{k-1} under any relation. Sorted by name.
inline std::vector<std::string> distractor_pool(const KnowledgeGraph& g, const ReasoningPath& path) {
    const std::size_t answer_id = g.entity_id(path.concepts.back());
    const std::size_t pre_id = g.entity_id(path.concepts[path.concepts.size() - 2]);
    const EntityCategory cat = g.entity(answer_id).category;
    std::set<std::size_t> excluded;
    for (const auto& c : path.concepts) excluded.insert(g.entity_id(c));
    for (const Edge& e : g.out_edges(pre_id)) excluded.insert(e.neighbor);

    std::vector<std::string> pool;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.entity(i).category == cat && !excluded.count(i)) pool.push_back(g.entity(i).name);
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

namespace detail {

inline QaItem template_item(const KnowledgeGraph& g, const QaStub& stub, std::uint64_t seed) {
    auto pool = distractor_pool(g, stub.path);
    if (pool.size() < 3)
        throw Error(ErrorCode::DistractorShortage,
                    "item " + stub.id + ": only " + std::to_string(pool.size()) + " valid distractors");
    Rng rng(mix_seed(seed, stub.id));
    rng.shuffle(pool);
    std::vector<std::string> options = {stub.path.concepts.back(), pool[0], pool[1], pool[2]};
    std::vector<std::size_t> order = {0, 1, 2, 3};
    rng.shuffle(order);

    QaItem item;
    item.id = stub.id;
    item.hops = stub.hops;
    item.path = stub.path;
    item.split = stub.split;
    item.question = template_question(stub.path);
    item.cot_trace = path_to_cot(stub.path);
    for (std::size_t slot = 0; slot < 4; ++slot) {
        item.options[slot] = options[order[slot]];
        if (order[slot] == 0) item.gold = kOptionLetters[slot];
    }
    return item;
}

} // namespace detail

inline std::string build_mcq_prompt(const QaStub& stub) {
    std::string p = "Write one multiple-choice question that can only be answered by reasoning through the "
                    "following knowledge-graph path, step by step.\n\nPath:\n";
    for (const Triple& t : stub.path.triples) p += "  " + render_triple(t) + "\n";
    p += "\nThe correct answer is: " + stub.path.concepts.back() + "\n";
    p += "Give four options A-D with exactly one correct, and a step-by-step reasoning trace that "
         "walks the path.\nReply with a single JSON object: "
         "{\"question\": str, \"options\": {\"A\": str, \"B\": str, \"C\": str, \"D\": str}, "
         "\"gold\": \"A\"|\"B\"|\"C\"|\"D\", \"cot_trace\": str}\n";
    return p;
}

/// Parses an LLM reply into the item fields; nullopt plus a reason on any
/// schema violation.
inline std::optional<QaItem> parse_mcq_reply(std::string_view reply, const QaStub& stub, std::string& reason) {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        reason = "no JSON object in reply";
        return std::nullopt;
    }
    auto j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        reason = "reply is not valid JSON";
        return std::nullopt;
    }
    QaItem item;
    item.id = stub.id;
    item.hops = stub.hops;
    item.path = stub.path;
    item.split = stub.split;
    auto str = [&](const nlohmann::json& obj, const char* key) -> std::optional<std::string> {
        if (!obj.contains(key) || !obj[key].is_string()) return std::nullopt;
        std::string v = trim(obj[key].get<std::string>());
        if (v.empty()) return std::nullopt;
        return v;
    };
    auto question = str(j, "question");
    auto cot = str(j, "cot_trace");
    auto gold = str(j, "gold");
    if (!question || !cot || !gold) {
        reason = "missing question, cot_trace or gold";
        return std::nullopt;
    }
    if (gold->size() != 1 || !letter_index((*gold)[0])) {
        reason = "gold is not a letter A-D";
        return std::nullopt;
    }
    if (!j.contains("options") || !j["options"].is_object() || j["options"].size() != 4) {
        reason = "options must map exactly A-D";
        return std::nullopt;
    }
    for (std::size_t i = 0; i < 4; ++i) {
        auto opt = str(j["options"], std::string(1, kOptionLetters[i]).c_str());
        if (!opt) {
            reason = "option " + std::string(1, kOptionLetters[i]) + " missing";
            return std::nullopt;
        }
        item.options[i] = *opt;
    }
    item.question = *question;
    item.cot_trace = *cot;
    item.gold = (*gold)[0];
    if (!is_well_formed(item)) {
        reason = "options are not pairwise distinct";
        return std::nullopt;
    }
    return item;
}

/// Template mode: asks for e_k given e_0 and the relation chain; distractors
/// come from distractor_pool, letters from a seeded shuffle. LLM mode: schema
/// checked client output, falling back to the template with a diagnostic.
inline McqResult generate_mcq(const KnowledgeGraph& g, const QaStub& stub, const McqOptions& opts = {}) {
    if (stub.path.hops() == 0) throw Error(ErrorCode::InvalidArgument, "empty path");
    if (opts.mode == McqMode::llm) {
        if (!opts.client) throw Error(ErrorCode::InvalidArgument, "llm mode needs a generation client");
        std::string reason;
        if (auto item = parse_mcq_reply(opts.client->generate(build_mcq_prompt(stub)), stub, reason))
            return {std::move(*item), std::nullopt};
        return {detail::template_item(g, stub, opts.seed), "item " + stub.id + ": " + reason};
    }
    return {detail::template_item(g, stub, opts.seed), std::nullopt};
}

inline McqResult generate_mcq(const KnowledgeGraph& g, const ReasoningPath& path, const McqOptions& opts = {}) {
    return generate_mcq(g, QaStub{detail::item_id(path.hops(), 0), path.hops(), path, Split::sft}, opts);
}

} // namespace kgcurr
