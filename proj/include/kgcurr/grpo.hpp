#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kgcurr/curriculum.hpp"
#include "kgcurr/error.hpp"
#include "kgcurr/qa_item.hpp"
#include "kgcurr/reward.hpp"
#include "kgcurr/text.hpp"

namespace kgcurr {

struct GrpoConfig {
    std::size_t n_generations = 4;
    double kl_beta = 0.12;
    double clip_epsilon = 0.2;
    double learning_rate = 2e-6;   // gradient-based policies
    double toy_step_size = 128.0;  // TabularToyPolicy logit step
    double temperature = 0.6;
    double top_p = 0.9;
    std::size_t epochs = 3;
    std::size_t max_completion = 1792;
    std::size_t grad_accum = 16;
    std::size_t per_device_batch = 1;
    double advantage_guard = 1e-6;
    std::uint64_t seed = 0;

    std::size_t prompts_per_step() const { return grad_accum * per_device_batch; }

    void validate() const {
        if (n_generations < 2) throw Error(ErrorCode::GroupTooSmall, "n_generations must be >= 2");
        if (!(clip_epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip_epsilon must be > 0");
        if (kl_beta < 0.0) throw Error(ErrorCode::InvalidArgument, "kl_beta must be >= 0");
        if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
        if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must lie in (0, 1]");
        if (prompts_per_step() == 0) throw Error(ErrorCode::InvalidArgument, "prompts per step must be >= 1");
        if (max_completion == 0) throw Error(ErrorCode::InvalidArgument, "max_completion must be >= 1");
    }

    friend bool operator==(const GrpoConfig&, const GrpoConfig&) = default;
};

inline nlohmann::json grpo_config_to_json(const GrpoConfig& c) {
    return {{"n_generations", c.n_generations}, {"kl_beta", c.kl_beta},
            {"clip_epsilon", c.clip_epsilon},   {"learning_rate", c.learning_rate},
            {"toy_step_size", c.toy_step_size}, {"temperature", c.temperature},
            {"top_p", c.top_p},                 {"epochs", c.epochs},
            {"max_completion", c.max_completion}, {"grad_accum", c.grad_accum},
            {"per_device_batch", c.per_device_batch}, {"advantage_guard", c.advantage_guard},
            {"seed", c.seed}};
}

// ---- math -------------------------------------------------------------------

/// (R - mean) / population std; all zeros when std < guard.
inline std::vector<double> group_advantages(const std::vector<double>& rewards, double guard = 1e-6) {
    if (rewards.size() < 2)
        throw Error(ErrorCode::GroupTooSmall, "group needs at least 2 rewards, got " + std::to_string(rewards.size()));
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (!(sd >= guard)) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
    return out;
}

inline double clipped_term(double ratio, double advantage, double epsilon) {
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

/// True when the clipped branch is strictly smaller than the unclipped one.
inline bool clip_binds(double ratio, double advantage, double epsilon) {
    return (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon);
}

/// exp(d) - d - 1 with d = ref_logprob - policy_logprob.
inline double kl_estimate(double policy_logprob, double ref_logprob) {
    const double d = ref_logprob - policy_logprob;
    return std::expm1(d) - d;
}

// ---- policies -----------------------------------------------------------------

struct PolicySample {
    std::string text;
    std::vector<double> token_logprobs;

    double total_logprob() const { return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0); }
};

struct GroupBatch;

class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    virtual PolicySample sample(const QaItem& prompt, double temperature, double top_p, std::size_t max_tokens,
                                Rng& rng) = 0;
    virtual double logprob(const QaItem& prompt, std::string_view completion) const = 0;
    virtual bool updatable() const { return false; }
    virtual void apply_update(const std::vector<GroupBatch>&, const GrpoConfig&) {
        throw Error(ErrorCode::UpdateUnsupported, name() + " does not support updates");
    }
    virtual std::unique_ptr<Policy> clone() const = 0;
    /// Probability of sampling the gold letter, when the policy can compute it.
    virtual std::optional<double> expected_accuracy(const std::vector<QaItem>&, const GrpoConfig&) const {
        return std::nullopt;
    }
};

/// Temperature-scaled softmax restricted to the smallest descending-probability
/// prefix whose mass reaches top_p, renormalized.
inline std::array<double, 4> sampling_distribution(const std::array<double, 4>& logits, double temperature,
                                                   double top_p) {
    std::array<double, 4> p{};
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t i = 0; i < 4; ++i) z += p[i] = std::exp((logits[i] - mx) / temperature);
    for (double& v : p) v /= z;
    std::array<std::size_t, 4> order = {0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    std::array<double, 4> q{};
    double mass = 0.0, kept = 0.0;
    for (std::size_t i : order) {
        q[i] = p[i];
        kept += p[i];
        mass += p[i];
        if (mass >= top_p) break;
    }
    for (double& v : q) v /= kept;
    return q;
}

inline std::array<double, 4> softmax4(const std::array<double, 4>& logits) {
    return sampling_distribution(logits, 1.0, 1.0);
}

inline std::string truncate_tokens(std::string_view text, std::size_t max_tokens) {
    std::size_t count = 0, i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i >= text.size()) break;
        if (count == max_tokens) return std::string(trim_view(text.substr(0, i)));
        ++count;
        while (i < text.size() && !is_space(text[i])) ++i;
    }
    return std::string(text);
}

/// Categorical distribution over the four options per prompt id, with a fixed
/// trace: "<think>\n{cot_trace}\n</think>\n<answer>{X}</answer>".
class TabularToyPolicy final : public Policy {
public:
    using Logits = std::array<double, 4>;

    std::string name() const override { return "toy"; }

    static std::string completion_for(const QaItem& prompt, char letter) {
        return "<think>\n" + prompt.cot_trace + "\n</think>\n<answer>" + std::string(1, letter) + "</answer>";
    }

    const Logits& logits(const std::string& prompt_id) const {
        static const Logits zero{};
        auto it = logits_.find(prompt_id);
        return it == logits_.end() ? zero : it->second;
    }

    void set_logits(const std::string& prompt_id, const Logits& l) { logits_[prompt_id] = l; }

    PolicySample sample(const QaItem& prompt, double temperature, double top_p, std::size_t max_tokens,
                        Rng& rng) override {
        const auto q = sampling_distribution(logits(prompt.id), temperature, top_p);
        const std::size_t k = rng.categorical(std::span<const double>(q.data(), q.size()));
        PolicySample s;
        s.text = truncate_tokens(completion_for(prompt, kOptionLetters[k]), max_tokens);
        s.token_logprobs = {logprob(prompt, s.text)};
        return s;
    }

    /// log of the total model probability (T = 1) of letters whose completion,
    /// truncated to the same length, reproduces `completion`; -inf if none.
    double logprob(const QaItem& prompt, std::string_view completion) const override {
        const auto mask = matching_letters(prompt, completion);
        const auto pi = softmax4(logits(prompt.id));
        double mass = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            if (mask[i]) mass += pi[i];
        return mass > 0.0 ? std::log(mass) : -std::numeric_limits<double>::infinity();
    }

    bool updatable() const override { return true; }

    void apply_update(const std::vector<GroupBatch>& groups, const GrpoConfig& cfg) override;

    std::unique_ptr<Policy> clone() const override { return std::make_unique<TabularToyPolicy>(*this); }

    std::optional<double> expected_accuracy(const std::vector<QaItem>& items, const GrpoConfig& cfg) const override {
        if (items.empty()) return std::nullopt;
        double acc = 0.0;
        for (const auto& item : items)
            acc += sampling_distribution(logits(item.id), cfg.temperature, cfg.top_p)[*letter_index(item.gold)];
        return acc / static_cast<double>(items.size());
    }

    /// Equal when every prompt has the same effective logits; absent rows are zero.
    friend bool operator==(const TabularToyPolicy& a, const TabularToyPolicy& b) {
        for (const auto& [id, l] : a.logits_)
            if (b.logits(id) != l) return false;
        for (const auto& [id, l] : b.logits_)
            if (a.logits(id) != l) return false;
        return true;
    }

    std::array<bool, 4> matching_letters(const QaItem& prompt, std::string_view completion) const {
        std::array<bool, 4> mask{};
        const std::size_t n = count_whitespace_tokens(completion);
        for (std::size_t i = 0; i < 4; ++i)
            mask[i] = truncate_tokens(completion_for(prompt, kOptionLetters[i]), n) == trim_view(completion);
        return mask;
    }

private:
    std::map<std::string, Logits> logits_;
};

/// Replays recorded completions per prompt id in order, cycling.
class RecordedPolicy final : public Policy {
public:
    struct Entry {
        std::string completion;
        double logprob = 0.0;
    };

    std::string name() const override { return "recorded"; }

    void add(const std::string& prompt_id, std::string completion, double lp) {
        entries_[prompt_id].push_back({std::move(completion), lp});
    }

    /// Lines of {"prompt_id", "completion", "logprob"}; other keys ignored.
    static RecordedPolicy from_jsonl(std::istream& is) {
        RecordedPolicy p;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (trim_view(line).empty()) continue;
            auto obj = nlohmann::json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.is_object()) throw SchemaError(lineno, "malformed JSON");
            const std::string id = detail::require_string(obj, "prompt_id", lineno);
            const std::string completion = detail::require_string(obj, "completion", lineno);
            double lp = 0.0;
            if (obj.contains("logprob")) {
                if (!obj["logprob"].is_number()) throw SchemaError(lineno, "field 'logprob' must be a number");
                lp = obj["logprob"].get<double>();
            }
            p.add(id, completion, lp);
        }
        return p;
    }

    PolicySample sample(const QaItem& prompt, double, double, std::size_t max_tokens, Rng&) override {
        auto it = entries_.find(prompt.id);
        if (it == entries_.end() || it->second.empty())
            throw Error(ErrorCode::PolicyUnavailable, "no recorded completions for prompt " + prompt.id);
        std::size_t& pos = cursor_[prompt.id];
        const Entry& e = it->second[pos % it->second.size()];
        ++pos;
        return {truncate_tokens(e.completion, max_tokens), {e.logprob}};
    }

    double logprob(const QaItem& prompt, std::string_view completion) const override {
        auto it = entries_.find(prompt.id);
        if (it != entries_.end())
            for (const auto& e : it->second)
                if (e.completion == completion) return e.logprob;
        throw Error(ErrorCode::PolicyUnavailable, "completion was not recorded for prompt " + prompt.id);
    }

    std::unique_ptr<Policy> clone() const override { return std::make_unique<RecordedPolicy>(*this); }

private:
    std::map<std::string, std::vector<Entry>> entries_;
    std::map<std::string, std::size_t> cursor_;
};

// ---- step -----------------------------------------------------------------------

struct GroupBatch {
    std::string prompt_id;
    std::vector<std::string> completions;
    std::vector<RewardBreakdown> rewards;
    std::vector<double> advantages;
    std::vector<double> ratios;
    std::vector<double> policy_logprobs;
    std::vector<double> ref_logprobs;
    std::vector<double> kl_estimates;
    std::vector<bool> clipped;
    double loss = 0.0;
    const QaItem* item = nullptr; // valid for the duration of the step
};

inline void TabularToyPolicy::apply_update(const std::vector<GroupBatch>& groups, const GrpoConfig& cfg) {
    std::size_t total = 0;
    for (const auto& g : groups) total += g.completions.size();
    if (total == 0) return;
    std::map<std::string, Logits> grads;
    for (const auto& g : groups) {
        if (!g.item) throw Error(ErrorCode::InvalidArgument, "group batch lacks its prompt item");
        const auto pi = softmax4(logits(g.prompt_id));
        Logits& grad = grads[g.prompt_id];
        for (std::size_t i = 0; i < g.completions.size(); ++i) {
            const auto mask = matching_letters(*g.item, g.completions[i]);
            double mass = 0.0;
            for (std::size_t k = 0; k < 4; ++k)
                if (mask[k]) mass += pi[k];
            if (mass <= 0.0) continue;
            const double d = g.ref_logprobs[i] - g.policy_logprobs[i];
            const double surrogate = g.clipped[i] ? 0.0 : -g.advantages[i] * g.ratios[i];
            const double coeff = (surrogate + cfg.kl_beta * -std::expm1(d)) / static_cast<double>(total);
            // d log(mass) / d logits = mask * pi / mass - pi
            for (std::size_t k = 0; k < 4; ++k) grad[k] += coeff * ((mask[k] ? pi[k] / mass : 0.0) - pi[k]);
        }
    }
    for (const auto& [id, grad] : grads) {
        Logits l = logits(id);
        for (std::size_t k = 0; k < 4; ++k) l[k] -= cfg.toy_step_size * grad[k];
        logits_[id] = l;
    }
}

using RewardFn = std::function<RewardBreakdown(std::string_view completion, const QaItem& item)>;

inline RewardFn default_reward_fn(RewardConfig cfg = {}) {
    cfg.validate();
    return [cfg](std::string_view completion, const QaItem& item) { return total_reward(completion, item, cfg); };
}

/// Reward function returning `value` for every completion.
inline RewardFn constant_reward_fn(double value) {
    return [value](std::string_view, const QaItem&) {
        RewardBreakdown b;
        b.r_correct = value;
        b.total = value;
        return b;
    };
}

struct StepResult {
    std::vector<GroupBatch> groups;
    double loss = 0.0;
};

/// One optimizer step: N samples per prompt, rewards, per-group advantages,
/// loss = -mean(clipped terms) + beta * mean(KL), averaged over every
/// completion of the step. Updates the policy when it is updatable.
inline StepResult grpo_step(const std::vector<const QaItem*>& prompts, Policy& policy, const Policy& ref,
                            const RewardFn& reward, const GrpoConfig& cfg, Rng& rng,
                            std::ostream* transcript = nullptr) {
    cfg.validate();
    StepResult out;
    double surrogate_sum = 0.0, kl_sum = 0.0;
    std::size_t count = 0;
    for (const QaItem* item : prompts) {
        GroupBatch g;
        g.prompt_id = item->id;
        g.item = item;
        std::vector<double> totals;
        for (std::size_t i = 0; i < cfg.n_generations; ++i) {
            PolicySample s = policy.sample(*item, cfg.temperature, cfg.top_p, cfg.max_completion, rng);
            const double lp = s.total_logprob();
            const double ref_lp = ref.logprob(*item, s.text);
            if (!std::isfinite(lp) || !std::isfinite(ref_lp))
                throw Error(ErrorCode::PolicyUnavailable, "non-finite log-probability for prompt " + item->id);
            g.rewards.push_back(reward(s.text, *item));
            totals.push_back(g.rewards.back().total);
            g.policy_logprobs.push_back(lp);
            g.ref_logprobs.push_back(ref_lp);
            if (transcript)
                *transcript << nlohmann::json{{"prompt_id", item->id}, {"completion", s.text}, {"logprob", lp}}.dump()
                            << '\n';
            g.completions.push_back(std::move(s.text));
        }
        g.advantages = group_advantages(totals, cfg.advantage_guard);
        double group_surrogate = 0.0, group_kl = 0.0;
        for (std::size_t i = 0; i < cfg.n_generations; ++i) {
            // Ratio against the frozen reference; the policy is unchanged
            // within a step so current and sampling logprobs coincide.
            const double r = std::exp(g.policy_logprobs[i] - g.ref_logprobs[i]);
            g.ratios.push_back(r);
            g.clipped.push_back(clip_binds(r, g.advantages[i], cfg.clip_epsilon));
            g.kl_estimates.push_back(kl_estimate(g.policy_logprobs[i], g.ref_logprobs[i]));
            group_surrogate += clipped_term(r, g.advantages[i], cfg.clip_epsilon);
            group_kl += g.kl_estimates.back();
        }
        const double n = static_cast<double>(cfg.n_generations);
        g.loss = -group_surrogate / n + cfg.kl_beta * group_kl / n;
        surrogate_sum += group_surrogate;
        kl_sum += group_kl;
        count += cfg.n_generations;
        out.groups.push_back(std::move(g));
    }
    if (count > 0) out.loss = -surrogate_sum / count + cfg.kl_beta * kl_sum / count;
    if (policy.updatable()) policy.apply_update(out.groups, cfg);
    return out;
}

// ---- training -------------------------------------------------------------------

struct StepRecord {
    std::size_t epoch = 0;
    std::size_t step = 0; // global, 0-based
    std::size_t prompts = 0;
    double mean_reward = 0.0;
    double mean_abs_advantage = 0.0;
    double clip_fraction = 0.0;
    double mean_kl = 0.0;
    double loss = 0.0;
    std::optional<double> accuracy; // after the update

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrainStats {
    std::vector<StepRecord> steps;
    std::optional<double> initial_accuracy;
    std::optional<double> final_accuracy;

    friend bool operator==(const TrainStats&, const TrainStats&) = default;
};

inline nlohmann::json step_record_to_json(const StepRecord& r) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"step", r.step},
                        {"prompts", r.prompts},
                        {"mean_reward", r.mean_reward},
                        {"mean_abs_advantage", r.mean_abs_advantage},
                        {"clip_fraction", r.clip_fraction},
                        {"mean_kl", r.mean_kl},
                        {"loss", r.loss}};
    j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
    return j;
}

inline void write_train_stats_jsonl(std::ostream& os, const TrainStats& s) {
    for (const auto& r : s.steps) os << step_record_to_json(r).dump() << '\n';
}

inline std::size_t steps_per_epoch(std::size_t items, const GrpoConfig& cfg) {
    const std::size_t b = cfg.prompts_per_step();
    return (items + b - 1) / b;
}

struct TrainOptions {
    RewardFn reward;                    // default: total_reward with default RewardConfig
    std::ostream* transcript = nullptr; // sampled completions, RecordedPolicy format
    const Policy* reference = nullptr;  // default: frozen clone of the initial policy
};

/// Epochs of seeded shuffles, batched prompts_per_step prompts at a time,
/// one grpo_step per batch.
inline TrainStats run_training(const std::vector<QaItem>& items, Policy& policy, const GrpoConfig& cfg,
                               const TrainOptions& opts = {}) {
    cfg.validate();
    if (items.empty()) throw Error(ErrorCode::InvalidArgument, "run_training needs at least one item");
    const RewardFn reward = opts.reward ? opts.reward : default_reward_fn();
    std::unique_ptr<Policy> owned_ref;
    const Policy* ref = opts.reference;
    if (!ref) {
        owned_ref = policy.clone();
        ref = owned_ref.get();
    }

    TrainStats stats;
    stats.initial_accuracy = policy.expected_accuracy(items, cfg);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(items.size());
    std::size_t global = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.prompts_per_step()) {
            std::vector<const QaItem*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.prompts_per_step()); ++i)
                batch.push_back(&items[order[i]]);
            const StepResult step = grpo_step(batch, policy, *ref, reward, cfg, rng, opts.transcript);

            StepRecord rec;
            rec.epoch = epoch;
            rec.step = global++;
            rec.prompts = batch.size();
            rec.loss = step.loss;
            double n = 0.0;
            for (const auto& g : step.groups) {
                for (std::size_t i = 0; i < g.completions.size(); ++i) {
                    rec.mean_reward += g.rewards[i].total;
                    rec.mean_abs_advantage += std::abs(g.advantages[i]);
                    rec.clip_fraction += g.clipped[i] ? 1.0 : 0.0;
                    rec.mean_kl += g.kl_estimates[i];
                    n += 1.0;
                }
            }
            if (n > 0.0) {
                rec.mean_reward /= n;
                rec.mean_abs_advantage /= n;
                rec.clip_fraction /= n;
                rec.mean_kl /= n;
            }
            rec.accuracy = policy.expected_accuracy(items, cfg);
            stats.steps.push_back(rec);
        }
    }
    stats.final_accuracy = policy.expected_accuracy(items, cfg);
    return stats;
}

// ---- synthetic curriculum ---------------------------------------------------------

/// n 2-hop rl items over disjoint entity chains "<stem> i a -> i b -> i c" with
/// distractors "i d", "i e", "i f"; gold letter drawn from the seed.
inline std::vector<QaItem> synthetic_two_hop_items(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<QaItem> items;
    items.reserve(n);
    const auto projects = parse_relation("projects_to");
    const auto contains = parse_relation("contains");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string stem = "nucleus " + std::to_string(i) + " ";
        std::vector<Triple> triples = {
            make_triple(stem + "a", "AnatomicalStructure", projects.name(), stem + "b", "AnatomicalStructure"),
            make_triple(stem + "b", "AnatomicalStructure", contains.name(), stem + "c", "CellularComponent")};
        QaItem item;
        item.id = detail::item_id(2, i);
        item.hops = 2;
        item.path = make_path(std::move(triples));
        item.split = Split::rl;
        item.question = template_question(item.path);
        item.cot_trace = path_to_cot(item.path);
        const std::size_t gold = rng.below(4);
        const std::array<std::string, 3> wrong = {stem + "d", stem + "e", stem + "f"};
        for (std::size_t k = 0, w = 0; k < 4; ++k) item.options[k] = k == gold ? stem + "c" : wrong[w++];
        item.gold = kOptionLetters[gold];
        items.push_back(std::move(item));
    }
    return items;
}

} // namespace kgcurr
