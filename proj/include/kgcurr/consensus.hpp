#pragma once

#include <array>
#include <exception>
#include <atomic>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgcurr/error.hpp"
#include "kgcurr/graph_store.hpp"
#include "kgcurr/text.hpp"

namespace kgcurr {

enum class Decision { yes, no, unparseable };

inline std::string_view decision_label(Decision d) {
    switch (d) {
    case Decision::yes: return "yes";
    case Decision::no: return "no";
    case Decision::unparseable: return "unparseable";
    }
    return "";
}

struct Verdict {
    Decision decision = Decision::unparseable;
    std::string rationale;
};

/// Judges see the triple (for rule-table and replay lookups) and the rendered
/// prompt (for real models). Implementations must tolerate concurrent calls.
class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual std::string name() const = 0;
    /// Raw verdict text. Throws Error(JudgeUnavailable) when no answer can be had.
    virtual std::string judge(const Triple& triple, std::string_view prompt) const = 0;
};

inline constexpr std::string_view kNoContextSentinel = "no source context available";
inline constexpr std::string_view kFinalLineMarker =
    "Final line: reply with exactly one word, Yes or No.";

inline std::string build_validation_prompt(const Triple& t, std::string_view context) {
    std::string p;
    p += "You are checking a candidate fact extracted from a neuroscience textbook.\n\n";
    p += "Candidate triple:\n  ";
    p += render_triple(t);
    p += "\n(head type: ";
    p += category_display(t.head_category);
    p += "; tail type: ";
    p += category_display(t.tail_category);
    p += ")\n\nSource context:\n<<<\n";
    const std::string_view ctx = trim_view(context);
    p += ctx.empty() ? kNoContextSentinel : ctx;
    p += "\n>>>\n\n";
    p += "Decide whether the triple is factually accurate in the context of the textbook. "
         "First give a short reasoning trace. Then end your reply with a final line that "
         "contains only Yes or No.\n";
    p += kFinalLineMarker;
    return p;
}

/// Reads the decision from the last nonempty line: a standalone yes or no,
/// case-insensitive, surrounding punctuation ignored. Both or neither present
/// gives unparseable. Earlier lines become the rationale.
inline Verdict parse_verdict(std::string_view raw) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        const std::size_t nl = raw.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? raw.size() : nl;
        lines.push_back(raw.substr(pos, end - pos));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    std::optional<std::size_t> last;
    for (std::size_t i = lines.size(); i-- > 0;) {
        if (!trim_view(lines[i]).empty()) {
            last = i;
            break;
        }
    }
    Verdict v;
    if (!last) return v;

    std::string rationale;
    for (std::size_t i = 0; i < *last; ++i) {
        if (!rationale.empty()) rationale += '\n';
        rationale += lines[i];
    }
    v.rationale = trim(rationale);

    bool saw_yes = false, saw_no = false;
    for (const auto& tok : normalize_tokens(lines[*last])) {
        if (tok == "yes") saw_yes = true;
        if (tok == "no") saw_no = true;
    }
    if (saw_yes != saw_no) v.decision = saw_yes ? Decision::yes : Decision::no;
    return v;
}

// ---- judge implementations -------------------------------------------------

/// Deterministic judge driven by a rule table keyed by (head, relation, tail).
/// Unlisted triples get the default answer.
class MockJudge final : public JudgeClient {
public:
    explicit MockJudge(std::string name, Decision default_decision = Decision::yes)
        : name_(std::move(name)), default_(default_decision) {}

    void set(const Triple& t, Decision d) { rules_[triple_key(t)] = render(d); }
    void set_raw(const Triple& t, std::string raw) { rules_[triple_key(t)] = std::move(raw); }

    std::string name() const override { return name_; }

    std::string judge(const Triple& t, std::string_view) const override {
        if (auto it = rules_.find(triple_key(t)); it != rules_.end()) return it->second;
        return render(default_);
    }

    /// Rule lines: {"head", "relation", "tail", "verdict"} where verdict is
    /// "yes", "no", or any other raw reply text.
    static MockJudge from_jsonl(std::string name, std::istream& is,
                                Decision default_decision = Decision::yes) {
        MockJudge judge(std::move(name), default_decision);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (trim_view(line).empty()) continue;
            auto obj = nlohmann::json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.is_object()) throw SchemaError(lineno, "malformed JSON");
            const std::string head = detail::require_string(obj, "head", lineno);
            const std::string rel = detail::require_string(obj, "relation", lineno);
            const std::string tail = detail::require_string(obj, "tail", lineno);
            const std::string verdict = detail::require_string(obj, "verdict", lineno);
            auto r = try_parse_relation(rel);
            if (!r) throw SchemaError(lineno, "unknown relation '" + rel + "'");
            const std::string key = triple_key(normalize_entity(head), *r, normalize_entity(tail));
            const std::string lowered = to_lower(trim_view(verdict));
            if (lowered == "yes")
                judge.rules_[key] = render(Decision::yes);
            else if (lowered == "no")
                judge.rules_[key] = render(Decision::no);
            else
                judge.rules_[key] = verdict;
        }
        return judge;
    }

private:
    static std::string render(Decision d) {
        switch (d) {
        case Decision::yes: return "Mock judge: rule table accepts this triple.\nYes";
        case Decision::no: return "Mock judge: rule table rejects this triple.\nNo";
        case Decision::unparseable: return "Mock judge: undecided.";
        }
        return {};
    }

    std::string name_;
    Decision default_;
    std::unordered_map<std::string, std::string> rules_;
};

struct TranscriptEntry {
    Triple triple;
    std::string judge;
    std::string prompt;
    std::string raw_response;
    Decision verdict;
};

inline nlohmann::json transcript_to_json(const TranscriptEntry& e) {
    return {{"triple", triple_to_json(e.triple)},
            {"judge", e.judge},
            {"prompt", e.prompt},
            {"raw_response", e.raw_response},
            {"verdict", std::string(decision_label(e.verdict))}};
}

inline std::vector<TranscriptEntry> read_transcripts_jsonl(std::istream& is) {
    std::vector<TranscriptEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) throw SchemaError(lineno, "malformed JSON");
        TranscriptEntry e{triple_from_json(detail::require(obj, "triple", lineno), lineno),
                          detail::require_string(obj, "judge", lineno),
                          detail::require_string(obj, "prompt", lineno),
                          detail::require_string(obj, "raw_response", lineno), Decision::unparseable};
        e.verdict = parse_verdict(e.raw_response).decision;
        out.push_back(std::move(e));
    }
    return out;
}

/// Replays recorded judge answers keyed by (judge name, prompt).
class ReplayJudge final : public JudgeClient {
public:
    ReplayJudge(std::string name, const std::vector<TranscriptEntry>& transcripts)
        : name_(std::move(name)) {
        for (const auto& e : transcripts)
            if (e.judge == name_) answers_.emplace(e.prompt, e.raw_response);
    }

    std::string name() const override { return name_; }

    std::string judge(const Triple& t, std::string_view prompt) const override {
        if (auto it = answers_.find(std::string(prompt)); it != answers_.end()) return it->second;
        throw Error(ErrorCode::JudgeUnavailable,
                    "no recorded answer from '" + name_ + "' for " + render_triple(t));
    }

private:
    std::string name_;
    std::unordered_map<std::string, std::string> answers_;
};

// ---- consensus --------------------------------------------------------------

struct ConsensusOptions {
    /// Source snippet for a candidate; empty when unavailable.
    std::function<std::string(const Triple&)> context_for;
    std::size_t max_in_flight = 1;
    /// Transcript log; receives one JSON line per judge call, in candidate order.
    std::ostream* transcript = nullptr;
};

struct ConsensusStats {
    std::size_t kept = 0;
    std::size_t rejected = 0;
    /// agreement[a][b]: count of candidates judged a by the first judge and b
    /// by the second, indexed by Decision.
    std::array<std::array<std::size_t, 3>, 3> agreement{};
};

struct ConsensusResult {
    std::vector<Triple> validated;
    std::vector<Triple> rejected;
    std::vector<std::pair<Decision, Decision>> decisions; // per candidate, input order
    ConsensusStats stats;
};

/// Thrown when a judge gives up mid-batch. Transcripts of every finished
/// candidate have been written before the throw.
class JudgeUnavailableError : public Error {
public:
    JudgeUnavailableError(const std::string& message, std::size_t completed)
        : Error(ErrorCode::JudgeUnavailable, message), completed_(completed) {}
    std::size_t completed() const noexcept { return completed_; }

private:
    std::size_t completed_;
};

namespace detail {

struct JudgedCandidate {
    bool done = false;
    std::string prompt;
    std::string raw_a, raw_b;
    Decision a = Decision::unparseable, b = Decision::unparseable;
};

} // namespace detail

/// Keeps a candidate iff both judges answer yes; unparseable counts as no.
/// Judge calls may run concurrently; results are reduced by candidate index.
inline ConsensusResult consensus_filter(const std::vector<Triple>& candidates,
                                        const JudgeClient& judge_a, const JudgeClient& judge_b,
                                        const ConsensusOptions& opts = {}) {
    std::vector<detail::JudgedCandidate> slots(candidates.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex failure_mu;
    std::string failure;
    std::exception_ptr fatal;

    auto work = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= candidates.size()) return;
            auto& s = slots[i];
            const Triple& t = candidates[i];
            try {
                s.prompt = build_validation_prompt(t, opts.context_for ? opts.context_for(t) : "");
                s.raw_a = judge_a.judge(t, s.prompt);
                s.raw_b = judge_b.judge(t, s.prompt);
            } catch (const Error& e) {
                std::lock_guard lock(failure_mu);
                if (e.code() != ErrorCode::JudgeUnavailable && !fatal) fatal = std::current_exception();
                if (!failed.exchange(true)) failure = e.what();
                return;
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!fatal) fatal = std::current_exception();
                failed = true;
                return;
            }
            s.a = parse_verdict(s.raw_a).decision;
            s.b = parse_verdict(s.raw_b).decision;
            s.done = true;
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(opts.max_in_flight, candidates.size()));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    if (fatal) std::rethrow_exception(fatal);

    ConsensusResult result;
    std::size_t completed = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& s = slots[i];
        if (!s.done) continue;
        ++completed;
        if (opts.transcript) {
            *opts.transcript << transcript_to_json({candidates[i], judge_a.name(), s.prompt, s.raw_a, s.a}).dump()
                             << '\n';
            *opts.transcript << transcript_to_json({candidates[i], judge_b.name(), s.prompt, s.raw_b, s.b}).dump()
                             << '\n';
        }
        if (failed) continue;
        result.decisions.emplace_back(s.a, s.b);
        result.stats.agreement[static_cast<std::size_t>(s.a)][static_cast<std::size_t>(s.b)]++;
        Triple t = candidates[i];
        if (s.a == Decision::yes && s.b == Decision::yes) {
            t.status = TripleStatus::validated;
            result.validated.push_back(std::move(t));
        } else {
            t.status = TripleStatus::rejected;
            result.rejected.push_back(std::move(t));
        }
    }
    if (opts.transcript) opts.transcript->flush();
    if (failed) throw JudgeUnavailableError(failure, completed);

    result.stats.kept = result.validated.size();
    result.stats.rejected = result.rejected.size();
    return result;
}

inline nlohmann::json consensus_stats_to_json(const ConsensusStats& s, std::string_view judge_a,
                                              std::string_view judge_b) {
    nlohmann::json matrix = nlohmann::json::object();
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            matrix[std::string(decision_label(static_cast<Decision>(a)))]
                  [std::string(decision_label(static_cast<Decision>(b)))] = s.agreement[a][b];
        }
    }
    return {{"kept", s.kept},
            {"rejected", s.rejected},
            {"judge_a", std::string(judge_a)},
            {"judge_b", std::string(judge_b)},
            {"agreement", matrix}};
}

inline constexpr std::string_view kExpansionProvenance = "expansion";

struct ExpansionReport {
    KnowledgeGraph graph;
    std::size_t added = 0;
    std::size_t duplicate = 0;
    std::size_t rejected = 0;
    ConsensusStats consensus;
};

/// Re-validates proposed triples with the same two-judge filter and merges
/// the survivors into a copy of `seed`.
inline ExpansionReport ingest_expansion(std::vector<Triple> proposed, const JudgeClient& judge_a,
                                        const JudgeClient& judge_b, const KnowledgeGraph& seed,
                                        const ConsensusOptions& opts = {}) {
    for (auto& t : proposed) {
        t.provenance = {std::string(kExpansionProvenance)};
        t.status = TripleStatus::candidate;
    }
    ConsensusResult filtered = consensus_filter(proposed, judge_a, judge_b, opts);

    ExpansionReport report;
    report.rejected = filtered.rejected.size();
    report.consensus = filtered.stats;
    GraphBuilder builder = GraphBuilder::from(seed);
    for (auto& t : filtered.validated) {
        if (builder.add(std::move(t)).outcome == AddOutcome::inserted)
            ++report.added;
        else
            ++report.duplicate;
    }
    report.graph = builder.build();
    return report;
}

inline nlohmann::json expansion_report_to_json(const ExpansionReport& r) {
    return {{"added", r.added},
            {"duplicate", r.duplicate},
            {"rejected", r.rejected},
            {"node_count", r.graph.node_count()},
            {"triple_count", r.graph.triple_count()}};
}

} // namespace kgcurr
