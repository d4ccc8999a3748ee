#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgcurr/curriculum.hpp"
#include "kgcurr/error.hpp"
#include "kgcurr/eval.hpp"
#include "kgcurr/grpo.hpp"
#include "kgcurr/paths.hpp"
#include "kgcurr/remote.hpp"
#include "kgcurr/reward.hpp"

namespace kgcurr {

struct JudgeConfig {
    std::string name;
    std::optional<ChatEndpoint> endpoint; // absent: mock
    std::string mock_rules;               // optional rule JSONL for the mock judge
    std::string mock_default = "yes";     // verdict for triples the rules omit

    friend bool operator==(const JudgeConfig&, const JudgeConfig&) = default;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    bool mock = false;

    // paths
    std::string corpus;         // text file or directory of *.txt
    std::string output_dir = "runs";
    std::string expansion;      // proposed expansion triples (JSONL)

    // chunker
    std::size_t window_tokens = 300;
    std::size_t overlap_tokens = 50;

    // extraction
    std::optional<ChatEndpoint> extraction_endpoint;
    std::string extraction_mock_responses; // JSONL {unit_id, response}

    // consensus
    JudgeConfig judge_a{"judge-a", std::nullopt, "", "yes"};
    JudgeConfig judge_b{"judge-b", std::nullopt, "", "yes"};
    std::size_t max_in_flight = 1;

    // paths + curriculum
    PruningConfig pruning;
    CurriculumTargets targets = default_curriculum_targets();
    McqMode mcq_mode = McqMode::template_mode;
    std::optional<ChatEndpoint> generation_endpoint;

    // reward + training
    RewardConfig reward;
    GrpoConfig grpo;
    std::string policy = "toy";     // toy | recorded | remote
    std::string recorded_transcript; // RecordedPolicy input
    std::optional<ChatEndpoint> policy_endpoint;
    std::size_t synthetic_items = 0; // > 0: train on a synthetic 2-hop set instead of rl items

    // eval
    FitMethod fit_method = FitMethod::endpoint;
};

namespace detail {

/// Reads an object's keys, recording which were consumed so leftovers can be
/// reported as unknown.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw Error(ErrorCode::ConfigError, where_ + ": expected an object");
    }

    const nlohmann::json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (const auto* v = get(key)) {
            try {
                out = v->get<T>();
            } catch (const nlohmann::json::exception&) {
                throw Error(ErrorCode::ConfigError, where_ + "." + key + ": wrong type");
            }
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw Error(ErrorCode::ConfigError, where_ + ": unknown key '" + k + "'");
    }

    const std::string& where() const { return where_; }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

inline nlohmann::json endpoint_to_json(const std::optional<ChatEndpoint>& e) {
    if (!e) return nullptr;
    return {{"base_url", e->base_url},       {"model", e->model},
            {"api_key_env", e->api_key_env}, {"timeout_seconds", e->timeout_seconds},
            {"max_retries", e->max_retries}, {"backoff_ms", e->backoff_ms}};
}

inline std::optional<ChatEndpoint> endpoint_from_json(const nlohmann::json* j, const std::string& where) {
    if (!j || j->is_null()) return std::nullopt;
    StrictObject o(*j, where);
    ChatEndpoint e;
    o.read("base_url", e.base_url);
    o.read("model", e.model);
    o.read("api_key_env", e.api_key_env);
    o.read("timeout_seconds", e.timeout_seconds);
    o.read("max_retries", e.max_retries);
    o.read("backoff_ms", e.backoff_ms);
    o.finish();
    if (e.base_url.empty() || e.model.empty())
        throw Error(ErrorCode::ConfigError, where + ": base_url and model are required");
    return e;
}

inline const char* hub_policy_label(HubPolicy p) {
    switch (p) {
    case HubPolicy::none: return "none";
    case HubPolicy::exclude_intermediate: return "exclude_intermediate";
    case HubPolicy::downweight: return "downweight";
    }
    return "";
}

inline nlohmann::json judge_to_json(const JudgeConfig& j) {
    return {{"name", j.name},
            {"endpoint", endpoint_to_json(j.endpoint)},
            {"mock_rules", j.mock_rules},
            {"mock_default", j.mock_default}};
}

inline JudgeConfig judge_from_json(const nlohmann::json* j, JudgeConfig def, const std::string& where) {
    if (!j) return def;
    StrictObject o(*j, where);
    o.read("name", def.name);
    def.endpoint = endpoint_from_json(o.get("endpoint"), where + ".endpoint");
    o.read("mock_rules", def.mock_rules);
    o.read("mock_default", def.mock_default);
    o.finish();
    if (def.mock_default != "yes" && def.mock_default != "no")
        throw Error(ErrorCode::ConfigError, where + ".mock_default must be yes or no");
    return def;
}

} // namespace detail

/// Full config with every default made explicit; keys are sorted on dump, so
/// the text is canonical.
inline nlohmann::json config_to_json(const PipelineConfig& c) {
    using detail::endpoint_to_json;
    nlohmann::json targets = nlohmann::json::object();
    for (const auto& [k, t] : c.targets)
        targets[std::to_string(k)] = {{"take_all", t.take_all},
                                      {"count", t.count},
                                      {"rl_count", t.rl_count},
                                      {"split", std::string(split_label(t.split))}};
    const auto& r = c.reward;
    const auto& p = c.pruning;
    return {
        {"seed", c.seed},
        {"mock", c.mock},
        {"paths", {{"corpus", c.corpus}, {"output_dir", c.output_dir}, {"expansion", c.expansion}}},
        {"chunker", {{"window_tokens", c.window_tokens}, {"overlap_tokens", c.overlap_tokens}}},
        {"extraction",
         {{"endpoint", endpoint_to_json(c.extraction_endpoint)}, {"mock_responses", c.extraction_mock_responses}}},
        {"consensus",
         {{"judge_a", detail::judge_to_json(c.judge_a)},
          {"judge_b", detail::judge_to_json(c.judge_b)},
          {"max_in_flight", c.max_in_flight}}},
        {"pruning",
         {{"hub_fraction", p.hub_fraction},
          {"hub_policy", detail::hub_policy_label(p.hub_policy)},
          {"hub_multiplier", p.hub_multiplier},
          {"weak_relation_multiplier", p.weak_relation_multiplier},
          {"prune_transitive", p.prune_transitive}}},
        {"curriculum",
         {{"targets", targets},
          {"mcq_mode", c.mcq_mode == McqMode::llm ? "llm" : "template"},
          {"generation_endpoint", endpoint_to_json(c.generation_endpoint)}}},
        {"reward",
         {{"l_soft", r.l_soft},
          {"l_max", r.l_max},
          {"cov_coeff", r.cov_coeff},
          {"hit_bonus", r.hit_bonus},
          {"hit_threshold", r.hit_threshold},
          {"path_cap", r.path_cap},
          {"correct_reward", r.correct_reward},
          {"incorrect_reward", r.incorrect_reward},
          {"repetition_dead_zone", r.repetition_dead_zone},
          {"repetition_ramp_width", r.repetition_ramp_width}}},
        {"grpo", [&] {
             nlohmann::json g = grpo_config_to_json(c.grpo);
             g.erase("seed");
             g["policy"] = c.policy;
             g["recorded_transcript"] = c.recorded_transcript;
             g["policy_endpoint"] = endpoint_to_json(c.policy_endpoint);
             g["synthetic_items"] = c.synthetic_items;
             return g;
         }()},
        {"eval", {{"fit_method", c.fit_method == FitMethod::endpoint ? "endpoint" : "log_least_squares"}}},
    };
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    using detail::StrictObject;
    PipelineConfig c;
    StrictObject root(j, "config");
    root.read("seed", c.seed);
    root.read("mock", c.mock);

    if (const auto* v = root.get("paths")) {
        StrictObject o(*v, "paths");
        o.read("corpus", c.corpus);
        o.read("output_dir", c.output_dir);
        o.read("expansion", c.expansion);
        o.finish();
    }
    if (const auto* v = root.get("chunker")) {
        StrictObject o(*v, "chunker");
        o.read("window_tokens", c.window_tokens);
        o.read("overlap_tokens", c.overlap_tokens);
        o.finish();
    }
    if (const auto* v = root.get("extraction")) {
        StrictObject o(*v, "extraction");
        c.extraction_endpoint = detail::endpoint_from_json(o.get("endpoint"), "extraction.endpoint");
        o.read("mock_responses", c.extraction_mock_responses);
        o.finish();
    }
    if (const auto* v = root.get("consensus")) {
        StrictObject o(*v, "consensus");
        c.judge_a = detail::judge_from_json(o.get("judge_a"), c.judge_a, "consensus.judge_a");
        c.judge_b = detail::judge_from_json(o.get("judge_b"), c.judge_b, "consensus.judge_b");
        o.read("max_in_flight", c.max_in_flight);
        o.finish();
    }
    if (const auto* v = root.get("pruning")) {
        StrictObject o(*v, "pruning");
        o.read("hub_fraction", c.pruning.hub_fraction);
        std::string policy = detail::hub_policy_label(c.pruning.hub_policy);
        o.read("hub_policy", policy);
        if (policy == "none")
            c.pruning.hub_policy = HubPolicy::none;
        else if (policy == "exclude_intermediate")
            c.pruning.hub_policy = HubPolicy::exclude_intermediate;
        else if (policy == "downweight")
            c.pruning.hub_policy = HubPolicy::downweight;
        else
            throw Error(ErrorCode::ConfigError, "pruning.hub_policy: unknown value '" + policy + "'");
        o.read("hub_multiplier", c.pruning.hub_multiplier);
        o.read("weak_relation_multiplier", c.pruning.weak_relation_multiplier);
        o.read("prune_transitive", c.pruning.prune_transitive);
        o.finish();
    }
    if (const auto* v = root.get("curriculum")) {
        StrictObject o(*v, "curriculum");
        if (const auto* t = o.get("targets")) {
            if (!t->is_object()) throw Error(ErrorCode::ConfigError, "curriculum.targets: expected an object");
            c.targets.clear();
            for (const auto& [key, val] : t->items()) {
                std::size_t hop = 0;
                try {
                    hop = std::stoul(key);
                } catch (const std::exception&) {
                    throw Error(ErrorCode::ConfigError, "curriculum.targets: key '" + key + "' is not a hop count");
                }
                if (hop < 1 || hop > kMaxHops)
                    throw Error(ErrorCode::ConfigError, "curriculum.targets: hop " + key + " outside 1..5");
                StrictObject to(val, "curriculum.targets." + key);
                StratumTarget st;
                to.read("take_all", st.take_all);
                to.read("count", st.count);
                to.read("rl_count", st.rl_count);
                std::string split = "sft";
                to.read("split", split);
                auto s = try_parse_split(split);
                if (!s) throw Error(ErrorCode::ConfigError, to.where() + ".split: unknown split '" + split + "'");
                st.split = *s;
                to.finish();
                c.targets[hop] = st;
            }
        }
        std::string mode = "template";
        o.read("mcq_mode", mode);
        if (mode == "template")
            c.mcq_mode = McqMode::template_mode;
        else if (mode == "llm")
            c.mcq_mode = McqMode::llm;
        else
            throw Error(ErrorCode::ConfigError, "curriculum.mcq_mode: unknown value '" + mode + "'");
        c.generation_endpoint = detail::endpoint_from_json(o.get("generation_endpoint"), "curriculum.generation_endpoint");
        o.finish();
    }
    if (const auto* v = root.get("reward")) {
        StrictObject o(*v, "reward");
        auto& r = c.reward;
        o.read("l_soft", r.l_soft);
        o.read("l_max", r.l_max);
        o.read("cov_coeff", r.cov_coeff);
        o.read("hit_bonus", r.hit_bonus);
        o.read("hit_threshold", r.hit_threshold);
        o.read("path_cap", r.path_cap);
        o.read("correct_reward", r.correct_reward);
        o.read("incorrect_reward", r.incorrect_reward);
        o.read("repetition_dead_zone", r.repetition_dead_zone);
        o.read("repetition_ramp_width", r.repetition_ramp_width);
        o.finish();
    }
    if (const auto* v = root.get("grpo")) {
        StrictObject o(*v, "grpo");
        auto& g = c.grpo;
        o.read("n_generations", g.n_generations);
        o.read("kl_beta", g.kl_beta);
        o.read("clip_epsilon", g.clip_epsilon);
        o.read("learning_rate", g.learning_rate);
        o.read("toy_step_size", g.toy_step_size);
        o.read("temperature", g.temperature);
        o.read("top_p", g.top_p);
        o.read("epochs", g.epochs);
        o.read("max_completion", g.max_completion);
        o.read("grad_accum", g.grad_accum);
        o.read("per_device_batch", g.per_device_batch);
        o.read("advantage_guard", g.advantage_guard);
        o.read("policy", c.policy);
        o.read("recorded_transcript", c.recorded_transcript);
        c.policy_endpoint = detail::endpoint_from_json(o.get("policy_endpoint"), "grpo.policy_endpoint");
        o.read("synthetic_items", c.synthetic_items);
        o.finish();
        if (c.policy != "toy" && c.policy != "recorded" && c.policy != "remote")
            throw Error(ErrorCode::ConfigError, "grpo.policy: unknown value '" + c.policy + "'");
    }
    if (const auto* v = root.get("eval")) {
        StrictObject o(*v, "eval");
        std::string m = "endpoint";
        o.read("fit_method", m);
        if (m == "endpoint")
            c.fit_method = FitMethod::endpoint;
        else if (m == "log_least_squares")
            c.fit_method = FitMethod::log_least_squares;
        else
            throw Error(ErrorCode::ConfigError, "eval.fit_method: unknown value '" + m + "'");
        o.finish();
    }
    root.finish();
    c.grpo.seed = c.seed;

    try {
        c.pruning.validate();
        c.reward.validate();
        c.grpo.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    if (c.window_tokens == 0 || c.overlap_tokens >= c.window_tokens)
        throw Error(ErrorCode::ConfigError, "chunker: need 0 <= overlap_tokens < window_tokens");
    if (c.max_in_flight == 0) throw Error(ErrorCode::ConfigError, "consensus.max_in_flight must be >= 1");
    return c;
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    auto j = nlohmann::json::parse(ss.str(), nullptr, false, /*ignore_comments=*/true);
    if (j.is_discarded()) throw Error(ErrorCode::ConfigError, "config '" + path + "' is not valid JSON");
    return config_from_json(j);
}

/// Hash of the canonical config, excluding where artifacts are written.
inline std::string config_hash(const PipelineConfig& c) {
    nlohmann::json j = config_to_json(c);
    j["paths"].erase("output_dir");
    return hex64(fnv1a64(j.dump()));
}

} // namespace kgcurr
