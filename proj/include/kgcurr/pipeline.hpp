#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgcurr/config.hpp"
#include "kgcurr/consensus.hpp"
#include "kgcurr/curriculum.hpp"
#include "kgcurr/error.hpp"
#include "kgcurr/eval.hpp"
#include "kgcurr/extraction.hpp"
#include "kgcurr/graph_store.hpp"
#include "kgcurr/grpo.hpp"
#include "kgcurr/paths.hpp"
#include "kgcurr/qa_item.hpp"
#include "kgcurr/remote.hpp"
#include "kgcurr/reward.hpp"

namespace kgcurr {

namespace fs = std::filesystem;

/// 0 success, 1 usage, 2 schema or input, 3 remote service.
inline int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::JudgeUnavailable:
    case ErrorCode::PolicyUnavailable:
    case ErrorCode::RemoteUnavailable: return 3;
    default: return 2;
    }
}

// ---- files ------------------------------------------------------------------

inline std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open '" + p.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot write '" + p.string() + "'");
    os << content;
}

inline std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
    std::vector<nlohmann::json> out;
    std::istringstream is(read_file(p));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw SchemaError(lineno, p.filename().string() + ": malformed JSON");
        out.push_back(std::move(j));
    }
    return out;
}

inline std::string jsonl(const std::vector<nlohmann::json>& rows) {
    std::string s;
    for (const auto& r : rows) s += r.dump() + "\n";
    return s;
}

// ---- run context --------------------------------------------------------------

class Run {
public:
    explicit Run(PipelineConfig cfg) : cfg_(std::move(cfg)), hash_(config_hash(cfg_)) {
        dir_ = fs::path(cfg_.output_dir) / ("run-" + hash_);
        fs::create_directories(dir_);
        write_file(dir_ / "config.json", config_to_json(cfg_).dump(2) + "\n");
    }

    const PipelineConfig& config() const { return cfg_; }
    const std::string& hash() const { return hash_; }
    const fs::path& dir() const { return dir_; }
    fs::path file(const std::string& name) const { return dir_ / name; }

    fs::path require(const std::string& name, const std::string& stage) const {
        const fs::path p = file(name);
        if (!fs::exists(p))
            throw Error(ErrorCode::IoError, stage + ": missing input '" + name + "' in " + dir_.string());
        return p;
    }

    /// manifests/<stage>.json: config hash, seed, inputs, outputs with content hashes.
    void write_manifest(const std::string& stage, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, const nlohmann::json& summary) const {
        nlohmann::json outs = nlohmann::json::array();
        for (const auto& o : outputs) {
            const fs::path p = file(o);
            outs.push_back({{"file", o}, {"fnv1a64", fs::exists(p) ? hex64(fnv1a64(read_file(p))) : std::string()}});
        }
        nlohmann::json m = {{"stage", stage}, {"config_hash", hash_}, {"seed", cfg_.seed},
                            {"inputs", inputs}, {"outputs", outs},     {"summary", summary}};
        write_file(dir_ / "manifests" / (stage + ".json"), m.dump(2) + "\n");
    }

private:
    PipelineConfig cfg_;
    std::string hash_;
    fs::path dir_;
};

// ---- clients ------------------------------------------------------------------

inline std::unique_ptr<JudgeClient> make_judge(const JudgeConfig& jc, bool mock) {
    if (mock || !jc.endpoint) {
        const Decision def = jc.mock_default == "no" ? Decision::no : Decision::yes;
        if (jc.mock_rules.empty()) return std::make_unique<MockJudge>(jc.name, def);
        std::istringstream is(read_file(jc.mock_rules));
        return std::make_unique<MockJudge>(MockJudge::from_jsonl(jc.name, is, def));
    }
    return std::make_unique<RemoteJudge>(jc.name, std::make_shared<ChatClient>(*jc.endpoint));
}

/// Produces raw extraction output for a text unit.
class ExtractionClient {
public:
    virtual ~ExtractionClient() = default;
    virtual std::string extract(const TextUnit& unit, std::string_view prompt) const = 0;
};

/// Replays responses keyed by unit id; units without one get an empty reply.
class MockExtractionClient final : public ExtractionClient {
public:
    void add(std::string unit_id, std::string response) { responses_[std::move(unit_id)] = std::move(response); }

    static MockExtractionClient from_jsonl(const fs::path& p) {
        MockExtractionClient c;
        std::size_t lineno = 0;
        for (const auto& j : read_jsonl(p)) {
            ++lineno;
            if (!j.is_object()) throw SchemaError(lineno, "expected an object");
            c.add(detail::require_string(j, "unit_id", lineno), detail::require_string(j, "response", lineno));
        }
        return c;
    }

    std::string extract(const TextUnit& unit, std::string_view) const override {
        auto it = responses_.find(unit.id);
        return it == responses_.end() ? std::string() : it->second;
    }

private:
    std::map<std::string, std::string> responses_;
};

class RemoteExtractionClient final : public ExtractionClient {
public:
    explicit RemoteExtractionClient(std::shared_ptr<const ChatClient> client) : client_(std::move(client)) {}
    std::string extract(const TextUnit&, std::string_view prompt) const override {
        return client_->complete({std::string(prompt), 0.0, 1.0, 2048, false}).text;
    }

private:
    std::shared_ptr<const ChatClient> client_;
};

inline std::unique_ptr<ExtractionClient> make_extraction_client(const PipelineConfig& c, bool mock) {
    if (mock || !c.extraction_endpoint) {
        if (c.extraction_mock_responses.empty()) return std::make_unique<MockExtractionClient>();
        return std::make_unique<MockExtractionClient>(MockExtractionClient::from_jsonl(c.extraction_mock_responses));
    }
    return std::make_unique<RemoteExtractionClient>(std::make_shared<ChatClient>(*c.extraction_endpoint));
}

// ---- units ----------------------------------------------------------------------

inline nlohmann::json unit_to_json(const TextUnit& u) {
    return {{"id", u.id}, {"text", u.text}, {"token_begin", u.token_begin}, {"token_end", u.token_end}};
}

inline std::vector<TextUnit> read_units(const fs::path& p) {
    std::vector<TextUnit> out;
    std::size_t lineno = 0;
    for (const auto& j : read_jsonl(p)) {
        ++lineno;
        TextUnit u;
        u.id = detail::require_string(j, "id", lineno);
        u.text = detail::require_string(j, "text", lineno);
        try {
            u.token_begin = j.at("token_begin").get<std::size_t>();
            u.token_end = j.at("token_end").get<std::size_t>();
        } catch (const nlohmann::json::exception&) {
            throw SchemaError(lineno, "token offsets missing or not integers");
        }
        out.push_back(std::move(u));
    }
    return out;
}

inline std::vector<fs::path> corpus_files(const std::string& corpus) {
    if (corpus.empty()) throw Error(ErrorCode::ConfigError, "chunk: paths.corpus is not set");
    const fs::path root(corpus);
    if (!fs::exists(root)) throw Error(ErrorCode::IoError, "chunk: corpus '" + corpus + "' does not exist");
    std::vector<fs::path> files;
    if (fs::is_directory(root)) {
        for (const auto& e : fs::directory_iterator(root))
            if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(root);
    }
    if (files.empty()) throw Error(ErrorCode::IoError, "chunk: no .txt files under '" + corpus + "'");
    return files;
}

// ---- stages ---------------------------------------------------------------------

inline nlohmann::json stage_chunk(const Run& run) {
    const auto& c = run.config();
    std::vector<nlohmann::json> rows;
    std::size_t docs = 0;
    for (const auto& f : corpus_files(c.corpus)) {
        ++docs;
        for (const auto& u : chunk_text(read_file(f), c.window_tokens, c.overlap_tokens, f.stem().string()))
            rows.push_back(unit_to_json(u));
    }
    write_file(run.file("units.jsonl"), jsonl(rows));
    nlohmann::json summary = {{"documents", docs}, {"units", rows.size()}};
    run.write_manifest("chunk", {c.corpus}, {"units.jsonl"}, summary);
    return summary;
}

inline nlohmann::json stage_extract(const Run& run, bool mock) {
    const auto units = read_units(run.require("units.jsonl", "extract"));
    const auto client = make_extraction_client(run.config(), mock || run.config().mock);
    const DelimiterSet delims;
    std::vector<nlohmann::json> raw_rows, diag_rows;
    std::vector<Triple> candidates;
    for (const auto& u : units) {
        const std::string prompt = build_extraction_prompt(u, relation_vocabulary(), delims);
        const std::string raw = client->extract(u, prompt);
        raw_rows.push_back({{"unit_id", u.id}, {"response", raw}});
        ParseResult parsed = parse_extraction_output(raw, delims);
        TripleConversion conv = records_to_triples(parsed.records, u.id);
        for (const auto& d : parsed.diagnostics) diag_rows.push_back(diagnostic_to_json(d, u.id));
        for (const auto& d : conv.diagnostics) diag_rows.push_back(diagnostic_to_json(d, u.id));
        for (auto& t : conv.triples) candidates.push_back(std::move(t));
    }
    write_file(run.file("extraction_raw.jsonl"), jsonl(raw_rows));
    write_file(run.file("extraction_diagnostics.jsonl"), jsonl(diag_rows));
    std::ostringstream os;
    write_triples_jsonl(os, candidates);
    write_file(run.file("candidates.jsonl"), os.str());
    nlohmann::json summary = {{"units", units.size()}, {"candidates", candidates.size()}, {"diagnostics", diag_rows.size()}};
    run.write_manifest("extract", {"units.jsonl"}, {"extraction_raw.jsonl", "extraction_diagnostics.jsonl", "candidates.jsonl"},
                       summary);
    return summary;
}

/// Collapses repeated candidates: first occurrence order, max strength,
/// provenance union.
inline std::vector<Triple> dedupe_candidates(const std::vector<Triple>& candidates) {
    std::vector<Triple> out;
    std::map<std::string, std::size_t> index;
    for (const auto& t : candidates) {
        auto [it, fresh] = index.emplace(triple_key(t), out.size());
        if (fresh) {
            out.push_back(t);
            continue;
        }
        Triple& kept = out[it->second];
        kept.strength = std::max(kept.strength, t.strength);
        for (const auto& p : t.provenance)
            if (std::find(kept.provenance.begin(), kept.provenance.end(), p) == kept.provenance.end())
                kept.provenance.push_back(p);
    }
    return out;
}

inline nlohmann::json stage_validate(const Run& run, bool mock) {
    const auto& c = run.config();
    const auto raw = load_triples_jsonl(run.require("candidates.jsonl", "validate").string());
    const auto candidates = dedupe_candidates(raw);
    std::map<std::string, std::string> unit_text;
    if (fs::exists(run.file("units.jsonl")))
        for (const auto& u : read_units(run.file("units.jsonl"))) unit_text[u.id] = u.text;

    const bool m = mock || c.mock;
    const auto judge_a = make_judge(c.judge_a, m);
    const auto judge_b = make_judge(c.judge_b, m);
    std::ostringstream transcript;
    ConsensusOptions opts;
    opts.max_in_flight = c.max_in_flight;
    opts.transcript = &transcript;
    opts.context_for = [&](const Triple& t) -> std::string {
        for (const auto& p : t.provenance)
            if (auto it = unit_text.find(p); it != unit_text.end()) return it->second;
        return {};
    };
    ConsensusResult result;
    try {
        result = consensus_filter(candidates, *judge_a, *judge_b, opts);
    } catch (...) {
        write_file(run.file("judge_transcripts.jsonl"), transcript.str());
        throw;
    }
    write_file(run.file("judge_transcripts.jsonl"), transcript.str());

    GraphBuilder builder;
    for (auto t : result.validated) {
        t.status = TripleStatus::validated;
        builder.add(std::move(t));
    }
    const KnowledgeGraph g = builder.build();
    save_jsonl(g, run.file("seed_kg.jsonl").string());
    std::ostringstream rejected;
    write_triples_jsonl(rejected, result.rejected);
    write_file(run.file("rejected.jsonl"), rejected.str());
    nlohmann::json summary = consensus_stats_to_json(result.stats, judge_a->name(), judge_b->name());
    summary["candidates"] = candidates.size();
    summary["node_count"] = g.node_count();
    summary["triple_count"] = g.triple_count();
    write_file(run.file("consensus.json"), summary.dump(2) + "\n");
    run.write_manifest("validate", {"candidates.jsonl", "units.jsonl"},
                       {"seed_kg.jsonl", "rejected.jsonl", "judge_transcripts.jsonl", "consensus.json"}, summary);
    return summary;
}

inline nlohmann::json stage_expand_ingest(const Run& run, bool mock) {
    const auto& c = run.config();
    if (c.expansion.empty()) throw Error(ErrorCode::ConfigError, "expand-ingest: paths.expansion is not set");
    const KnowledgeGraph seed = load_jsonl(run.require("seed_kg.jsonl", "expand-ingest").string());
    auto proposed = load_triples_jsonl(c.expansion);
    const bool m = mock || c.mock;
    const auto judge_a = make_judge(c.judge_a, m);
    const auto judge_b = make_judge(c.judge_b, m);
    std::ostringstream transcript;
    ConsensusOptions opts;
    opts.max_in_flight = c.max_in_flight;
    opts.transcript = &transcript;
    ExpansionReport report;
    try {
        report = ingest_expansion(std::move(proposed), *judge_a, *judge_b, seed, opts);
    } catch (...) {
        write_file(run.file("expansion_transcripts.jsonl"), transcript.str());
        throw;
    }
    write_file(run.file("expansion_transcripts.jsonl"), transcript.str());
    save_jsonl(report.graph, run.file("merged_kg.jsonl").string());
    nlohmann::json summary = expansion_report_to_json(report);
    write_file(run.file("expansion.json"), summary.dump(2) + "\n");
    run.write_manifest("expand-ingest", {"seed_kg.jsonl", c.expansion},
                       {"merged_kg.jsonl", "expansion_transcripts.jsonl", "expansion.json"}, summary);
    return summary;
}

/// The merged graph when expansion has run, else the seed graph.
inline std::pair<KnowledgeGraph, std::string> current_graph(const Run& run, const std::string& stage) {
    if (fs::exists(run.file("merged_kg.jsonl")))
        return {load_jsonl(run.file("merged_kg.jsonl").string()), "merged_kg.jsonl"};
    return {load_jsonl(run.require("seed_kg.jsonl", stage).string()), "seed_kg.jsonl"};
}

inline nlohmann::json stage_stats(const Run& run) {
    auto [g, name] = current_graph(run, "stats");
    nlohmann::json summary = stats_report(compute_stats(g));
    summary["graph"] = name;
    write_file(run.file("stats.json"), summary.dump(2) + "\n");
    run.write_manifest("stats", {name}, {"stats.json"}, summary);
    return summary;
}

inline nlohmann::json stage_paths(const Run& run) {
    auto [g, name] = current_graph(run, "paths");
    const auto& cfg = run.config().pruning;
    PathEnumerator it(g, 1, kMaxHops, cfg);
    std::map<std::size_t, std::size_t> counts;
    std::map<std::size_t, double> weight;
    while (auto p = it.next()) {
        ++counts[p->hops()];
        weight[p->hops()] += p->weight;
    }
    nlohmann::json per_hop = nlohmann::json::object();
    for (std::size_t k = 1; k <= kMaxHops; ++k)
        per_hop[std::to_string(k)] = {{"paths", counts[k]}, {"total_weight", weight[k]}};
    const auto hubs = it.hubs();
    nlohmann::json summary = {{"graph", name},
                              {"per_hop", per_hop},
                              {"hubs", std::vector<std::string>(hubs.begin(), hubs.end())},
                              {"hub_policy", detail::hub_policy_label(cfg.hub_policy)},
                              {"prune_transitive", cfg.prune_transitive}};
    write_file(run.file("paths_summary.json"), summary.dump(2) + "\n");
    run.write_manifest("paths", {name}, {"paths_summary.json"}, summary);
    return summary;
}

inline std::string items_file_name(std::size_t hops) { return "items_hop" + std::to_string(hops) + ".jsonl"; }

inline nlohmann::json stage_curriculum(const Run& run, bool mock) {
    const auto& c = run.config();
    auto [g, name] = current_graph(run, "curriculum");
    if (c.targets.empty()) throw Error(ErrorCode::ConfigError, "curriculum: no targets configured");
    const std::size_t k_min = c.targets.begin()->first, k_max = c.targets.rbegin()->first;
    PathEnumerator source(g, k_min, k_max, c.pruning);
    SampledCurriculum sampled = sample_curriculum(source, c.targets, c.seed, graph_fingerprint(g));

    std::unique_ptr<GenerationClient> gen;
    McqOptions mcq;
    mcq.seed = c.seed;
    if (c.mcq_mode == McqMode::llm && !(mock || c.mock)) {
        if (!c.generation_endpoint) throw Error(ErrorCode::ConfigError, "curriculum: llm mode needs generation_endpoint");
        gen = std::make_unique<RemoteGenerationClient>(std::make_shared<ChatClient>(*c.generation_endpoint));
        mcq.mode = McqMode::llm;
        mcq.client = gen.get();
    }

    std::map<std::size_t, std::vector<QaItem>> by_hop;
    std::vector<nlohmann::json> diags;
    for (const auto& stub : sampled.stubs) {
        try {
            McqResult r = generate_mcq(g, stub, mcq);
            if (r.diagnostic) diags.push_back({{"item_id", stub.id}, {"code", "LlmFallback"}, {"message", *r.diagnostic}});
            by_hop[stub.hops].push_back(std::move(r.item));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DistractorShortage) throw;
            diags.push_back({{"item_id", stub.id}, {"code", "DistractorShortage"}, {"message", e.what()}});
        }
    }

    CurriculumManifest manifest;
    manifest.seed = c.seed;
    manifest.graph_fingerprint = sampled.manifest.graph_fingerprint;
    std::vector<std::string> outputs;
    for (const auto& [k, t] : c.targets) {
        std::ostringstream os;
        write_items_jsonl(os, by_hop[k]);
        write_file(run.file(items_file_name(k)), os.str());
        manifest.item_files[k] = items_file_name(k);
        for (const auto& item : by_hop[k]) ++manifest.counts[{k, item.split}];
        outputs.push_back(items_file_name(k));
    }
    write_file(run.file("curriculum_manifest.json"), manifest_to_json(manifest).dump(2) + "\n");
    write_file(run.file("mcq_diagnostics.jsonl"), jsonl(diags));
    outputs.push_back("curriculum_manifest.json");
    outputs.push_back("mcq_diagnostics.jsonl");
    nlohmann::json summary = manifest_to_json(manifest);
    summary["dropped"] = diags.size();
    run.write_manifest("curriculum", {name}, outputs, summary);
    return summary;
}

inline std::vector<QaItem> load_curriculum_items(const Run& run, const std::string& stage) {
    const auto manifest = manifest_from_json(nlohmann::json::parse(read_file(run.require("curriculum_manifest.json", stage))));
    std::vector<QaItem> items;
    for (const auto& [k, f] : manifest.item_files)
        for (auto& item : load_items_jsonl(run.require(f, stage).string())) items.push_back(std::move(item));
    return items;
}

/// Scores {item_id, completion} lines against the curriculum items.
inline nlohmann::json stage_score(const Run& run, const std::string& completions_path) {
    std::map<std::string, QaItem> items;
    for (auto& item : load_curriculum_items(run, "score")) items.emplace(item.id, std::move(item));
    std::vector<nlohmann::json> rows;
    double total = 0.0;
    std::size_t correct = 0, lineno = 0;
    for (const auto& j : read_jsonl(completions_path)) {
        ++lineno;
        const std::string id = detail::require_string(j, "item_id", lineno);
        const std::string completion = detail::require_string(j, "completion", lineno);
        auto it = items.find(id);
        if (it == items.end()) throw SchemaError(lineno, "score: unknown item_id '" + id + "'");
        const auto b = total_reward(completion, it->second, run.config().reward);
        nlohmann::json row = reward_to_json(b);
        row["item_id"] = id;
        rows.push_back(std::move(row));
        total += b.total;
        correct += b.correct ? 1 : 0;
    }
    write_file(run.file("scores.jsonl"), jsonl(rows));
    nlohmann::json summary = {{"scored", rows.size()},
                              {"correct", correct},
                              {"mean_total", rows.empty() ? 0.0 : total / static_cast<double>(rows.size())}};
    run.write_manifest("score", {completions_path}, {"scores.jsonl"}, summary);
    return summary;
}

inline nlohmann::json toy_policy_to_json(const TabularToyPolicy& p, const std::vector<QaItem>& items) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& item : items) {
        const auto& l = p.logits(item.id);
        out[item.id] = std::vector<double>(l.begin(), l.end());
    }
    return out;
}

inline nlohmann::json stage_grpo(const Run& run, bool mock) {
    const auto& c = run.config();
    std::vector<QaItem> items;
    std::vector<std::string> inputs;
    if (c.synthetic_items > 0) {
        items = synthetic_two_hop_items(c.synthetic_items, c.seed);
        inputs.push_back("synthetic:" + std::to_string(c.synthetic_items));
    } else {
        for (auto& item : load_curriculum_items(run, "grpo"))
            if (item.split == Split::rl) items.push_back(std::move(item));
        inputs.push_back("curriculum_manifest.json");
        if (items.empty()) throw Error(ErrorCode::InvalidArgument, "grpo: curriculum has no rl items");
    }

    std::unique_ptr<Policy> policy;
    const std::string kind = (mock || c.mock) ? std::string("toy") : c.policy;
    if (kind == "toy") {
        policy = std::make_unique<TabularToyPolicy>();
    } else if (kind == "recorded") {
        if (c.recorded_transcript.empty()) throw Error(ErrorCode::ConfigError, "grpo: recorded_transcript is not set");
        std::istringstream is(read_file(c.recorded_transcript));
        policy = std::make_unique<RecordedPolicy>(RecordedPolicy::from_jsonl(is));
    } else {
        if (!c.policy_endpoint) throw Error(ErrorCode::ConfigError, "grpo: remote policy needs policy_endpoint");
        policy = std::make_unique<RemotePolicy>(std::make_shared<ChatClient>(*c.policy_endpoint));
    }

    std::ostringstream transcript;
    TrainOptions opts;
    opts.reward = default_reward_fn(c.reward);
    opts.transcript = &transcript;
    const TrainStats stats = run_training(items, *policy, c.grpo, opts);

    std::ostringstream os;
    write_train_stats_jsonl(os, stats);
    write_file(run.file("train_stats.jsonl"), os.str());
    write_file(run.file("grpo_transcript.jsonl"), transcript.str());
    std::vector<std::string> outputs = {"train_stats.jsonl", "grpo_transcript.jsonl"};
    if (const auto* toy = dynamic_cast<const TabularToyPolicy*>(policy.get())) {
        write_file(run.file("policy_final.json"), toy_policy_to_json(*toy, items).dump() + "\n");
        outputs.push_back("policy_final.json");
    }
    nlohmann::json summary = {{"policy", policy->name()},
                              {"items", items.size()},
                              {"epochs", c.grpo.epochs},
                              {"steps_per_epoch", steps_per_epoch(items.size(), c.grpo)},
                              {"steps", stats.steps.size()}};
    summary["initial_accuracy"] = stats.initial_accuracy ? nlohmann::json(*stats.initial_accuracy) : nlohmann::json(nullptr);
    summary["final_accuracy"] = stats.final_accuracy ? nlohmann::json(*stats.final_accuracy) : nlohmann::json(nullptr);
    run.write_manifest("grpo", inputs, outputs, summary);
    return summary;
}

/// Each input is (label, eval JSONL path).
inline nlohmann::json stage_eval(const Run& run, const std::vector<std::pair<std::string, std::string>>& inputs) {
    if (inputs.empty()) throw Error(ErrorCode::InvalidArgument, "eval: no record files given");
    std::vector<EvalReport> reports;
    nlohmann::json all = nlohmann::json::array();
    std::vector<std::string> in_names;
    for (const auto& [label, path] : inputs) {
        reports.push_back(build_report(load_eval_jsonl(path), label, run.config().fit_method));
        all.push_back(report_to_json(reports.back()));
        in_names.push_back(path);
    }
    write_file(run.file("eval_report.json"), all.dump(2) + "\n");
    write_file(run.file("eval_report.md"), reports_to_markdown(reports));
    write_file(run.file("eval_series.csv"), reports_to_csv(reports));
    nlohmann::json summary = {{"reports", all}};
    run.write_manifest("eval", in_names, {"eval_report.json", "eval_report.md", "eval_series.csv"}, summary);
    return summary;
}

// ---- quiz bundle --------------------------------------------------------------------

inline nlohmann::json quiz_metadata(const CurriculumManifest& m) {
    nlohmann::json hops = nlohmann::json::array();
    for (const auto& [k, f] : m.item_files) hops.push_back(k);
    nlohmann::json relations = nlohmann::json::object();
    for (const auto& r : kRelations) relations[std::string(r.name)] = std::string(r.gloss);
    return {{"format", "kgcurr-quiz-bundle"},
            {"version", 1},
            {"hop_levels", hops},
            {"option_letters", {"A", "B", "C", "D"}},
            {"relation_glosses", relations},
            {"answer_format", "<answer>X</answer>"}};
}

inline nlohmann::json stage_quiz_export(const Run& run) {
    const std::string manifest_text = read_file(run.require("curriculum_manifest.json", "quiz-export"));
    const auto manifest = manifest_from_json(nlohmann::json::parse(manifest_text));
    const fs::path bundle = run.file("quiz_bundle");
    fs::create_directories(bundle);
    std::vector<std::string> outputs = {"quiz_bundle/manifest.json", "quiz_bundle/metadata.json"};
    write_file(bundle / "manifest.json", manifest_text);
    for (const auto& [k, f] : manifest.item_files) {
        write_file(bundle / f, read_file(run.require(f, "quiz-export")));
        outputs.push_back("quiz_bundle/" + f);
    }
    write_file(bundle / "metadata.json", quiz_metadata(manifest).dump(2) + "\n");
    nlohmann::json summary = {{"bundle", bundle.string()}, {"files", outputs.size()}};
    run.write_manifest("quiz-export", {"curriculum_manifest.json"}, outputs, summary);
    return summary;
}

struct QuizBundle {
    CurriculumManifest manifest;
    nlohmann::json metadata;
    std::map<std::size_t, std::vector<QaItem>> items;
};

/// Loads a bundle, rejecting it when item files disagree with manifest counts.
inline QuizBundle load_quiz_bundle(const fs::path& dir) {
    QuizBundle b;
    b.manifest = manifest_from_json(nlohmann::json::parse(read_file(dir / "manifest.json")));
    b.metadata = nlohmann::json::parse(read_file(dir / "metadata.json"));
    std::map<std::pair<std::size_t, Split>, std::size_t> seen;
    for (const auto& [k, f] : b.manifest.item_files) {
        b.items[k] = load_items_jsonl((dir / f).string());
        for (const auto& item : b.items[k]) {
            if (item.hops != k) throw SchemaError(0, f + ": item " + item.id + " has the wrong hop count");
            ++seen[{k, item.split}];
        }
    }
    if (seen != b.manifest.counts) throw SchemaError(0, "bundle item counts do not match the manifest");
    return b;
}

} // namespace kgcurr
