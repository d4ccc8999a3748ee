#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "kgcurr/error.hpp"
#include "kgcurr/paths.hpp"
#include "kgcurr/qa_item.hpp"
#include "kgcurr/text.hpp"

namespace kgcurr {

struct Completion {
    std::string raw;
    std::optional<std::string> think;
    std::optional<char> answer; // A..D
    std::size_t token_count = 0; // whitespace tokens of raw
};

namespace detail {

inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Standalone single-character tokens with their preceding word, if any.
struct LetterToken {
    char letter;
    std::string previous_word;
    bool parenthesized;
};

inline std::vector<LetterToken> letter_tokens(std::string_view s) {
    std::vector<LetterToken> out;
    std::string prev;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_alnum(s[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_alnum(s[j])) ++j;
        const std::string_view word = s.substr(i, j - i);
        if (word.size() == 1) {
            const bool paren = i > 0 && s[i - 1] == '(' && j < s.size() && s[j] == ')';
            out.push_back({word[0], prev, paren});
        }
        prev = to_lower(word);
        i = j;
    }
    return out;
}

} // namespace detail

/// Maps free answer text to a single option letter:
///  1. the whole text, minus brackets/punctuation, is one letter a-d/A-D;
///  2. exactly one distinct standalone capital A-D appears;
///  3. a lowercase a-d follows "option", "answer" or "choice", or sits in "(x)".
/// Anything else is absent.
inline std::optional<char> normalize_answer_letter(std::string_view text) {
    std::string core;
    for (char c : trim_view(text))
        if (!is_punct(c) && !is_space(c)) core.push_back(c);
    if (core.size() == 1) {
        const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(core[0])));
        if (letter_index(up)) return up;
    }
    const auto tokens = detail::letter_tokens(text);
    std::set<char> capitals;
    for (const auto& t : tokens)
        if (t.letter >= 'A' && t.letter <= 'D') capitals.insert(t.letter);
    if (capitals.size() == 1) return *capitals.begin();
    if (capitals.size() > 1) return std::nullopt;

    std::set<char> cued;
    for (const auto& t : tokens) {
        if (t.letter < 'a' || t.letter > 'd') continue;
        if (t.parenthesized || t.previous_word == "option" || t.previous_word == "answer" ||
            t.previous_word == "choice")
            cued.insert(static_cast<char>(t.letter - 'a' + 'A'));
    }
    if (cued.size() == 1) return *cued.begin();
    return std::nullopt;
}

/// First <think>...</think> block, then the first <answer>...</answer> block
/// after it (after the start when there is no think block).
inline Completion parse_tagged_completion(std::string_view raw) {
    Completion c;
    c.raw = std::string(raw);
    c.token_count = count_whitespace_tokens(raw);

    constexpr std::string_view think_open = "<think>", think_close = "</think>";
    constexpr std::string_view ans_open = "<answer>", ans_close = "</answer>";

    std::size_t answer_from = 0;
    if (const auto open = raw.find(think_open); open != std::string_view::npos) {
        const std::size_t body = open + think_open.size();
        if (const auto close = raw.find(think_close, body); close != std::string_view::npos) {
            c.think = std::string(raw.substr(body, close - body));
            answer_from = close + think_close.size();
        }
    }
    if (const auto open = raw.find(ans_open, answer_from); open != std::string_view::npos) {
        const std::size_t body = open + ans_open.size();
        if (const auto close = raw.find(ans_close, body); close != std::string_view::npos)
            c.answer = normalize_answer_letter(raw.substr(body, close - body));
    }
    return c;
}

struct RewardConfig {
    std::size_t l_soft = 1280;
    std::size_t l_max = 1792;
    double cov_coeff = 0.8;
    double hit_bonus = 0.3;
    std::size_t hit_threshold = 2;
    double path_cap = 0.8;
    double correct_reward = 1.0;
    double incorrect_reward = -1.0;
    // Repetition ramp: rho = 1 - clamp((r3 - dead_zone) / ramp_width, 0, 1)
    double repetition_dead_zone = 0.2;
    double repetition_ramp_width = 0.6;

    void validate() const {
        if (l_soft >= l_max) throw Error(ErrorCode::InvalidArgument, "l_soft must be < l_max");
        if (repetition_ramp_width <= 0.0)
            throw Error(ErrorCode::InvalidArgument, "repetition_ramp_width must be positive");
    }
};

struct CoverageResult {
    double fraction = 0.0;
    std::size_t hits = 0;
};

/// A concept is hit when its normalized word sequence occurs contiguously in
/// the trace tokens. fraction = hits / number of path concepts.
inline CoverageResult coverage(const std::vector<std::string>& think_tokens, const ReasoningPath& path) {
    CoverageResult r;
    if (path.concepts.empty()) return r;
    for (const auto& concept_name : path.concepts) {
        const auto needle = normalize_tokens(concept_name);
        if (needle.empty() || needle.size() > think_tokens.size()) continue;
        const auto it = std::search(think_tokens.begin(), think_tokens.end(), needle.begin(), needle.end());
        if (it != think_tokens.end()) ++r.hits;
    }
    r.fraction = static_cast<double>(r.hits) / static_cast<double>(path.concepts.size());
    return r;
}

/// r3 = 1 - distinct/total trigrams (0 below three tokens); rho ramps from 1
/// to 0 as r3 moves across [dead_zone, dead_zone + ramp_width].
inline double repetition_penalty(const std::vector<std::string>& tokens, const RewardConfig& cfg = {}) {
    double r3 = 0.0;
    if (tokens.size() >= 3) {
        std::set<std::tuple<std::string_view, std::string_view, std::string_view>> distinct;
        const std::size_t total = tokens.size() - 2;
        for (std::size_t i = 0; i < total; ++i) distinct.emplace(tokens[i], tokens[i + 1], tokens[i + 2]);
        r3 = 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
    }
    return 1.0 - std::clamp((r3 - cfg.repetition_dead_zone) / cfg.repetition_ramp_width, 0.0, 1.0);
}

struct PathReward {
    double value = 0.0;
    double coverage = 0.0;
    std::size_t hits = 0;
    double rho = 0.0;
    bool gate_open = false;
};

/// Gated, capped path-alignment term. Zero unless the answer is correct and a
/// think block exists.
inline PathReward r_path(const Completion& c, const ReasoningPath& path, bool answer_correct,
                         const RewardConfig& cfg = {}) {
    PathReward out;
    if (!answer_correct || !c.think) return out;
    const auto tokens = normalize_tokens(*c.think);
    const auto cov = coverage(tokens, path);
    out.gate_open = true;
    out.coverage = cov.fraction;
    out.hits = cov.hits;
    out.rho = repetition_penalty(tokens, cfg);
    const double bonus = cov.hits >= cfg.hit_threshold ? cfg.hit_bonus : 0.0;
    out.value = std::min((cfg.cov_coeff * cov.fraction + bonus) * out.rho, cfg.path_cap);
    return out;
}

struct CorrectnessReward {
    double value = 0.0;
    double length_penalty = 0.0;
    bool correct = false;
};

inline double length_penalty(std::size_t token_count, const RewardConfig& cfg) {
    const double over = static_cast<double>(token_count) - static_cast<double>(cfg.l_soft);
    return std::clamp(over / static_cast<double>(cfg.l_max - cfg.l_soft), 0.0, 1.0);
}

inline CorrectnessReward r_correct(const Completion& c, char gold, const RewardConfig& cfg = {}) {
    cfg.validate();
    CorrectnessReward out;
    out.correct = c.answer.has_value() && *c.answer == gold;
    out.length_penalty = length_penalty(c.token_count, cfg);
    out.value = (out.correct ? cfg.correct_reward : cfg.incorrect_reward) - out.length_penalty;
    return out;
}

struct RewardBreakdown {
    double r_correct = 0.0;
    double length_penalty = 0.0;
    double r_path = 0.0;
    double total = 0.0;
    double coverage = 0.0;
    std::size_t hits = 0;
    double rho = 0.0;
    bool gate_open = false;
    bool correct = false;
};

inline RewardBreakdown total_reward(std::string_view raw, char gold, const ReasoningPath& path,
                                    const RewardConfig& cfg = {}) {
    const Completion c = parse_tagged_completion(raw);
    const auto rc = r_correct(c, gold, cfg);
    const auto rp = r_path(c, path, rc.correct, cfg);
    RewardBreakdown b;
    b.r_correct = rc.value;
    b.length_penalty = rc.length_penalty;
    b.correct = rc.correct;
    b.r_path = rp.value;
    b.coverage = rp.coverage;
    b.hits = rp.hits;
    b.rho = rp.rho;
    b.gate_open = rp.gate_open;
    b.total = b.r_correct + b.r_path;
    return b;
}

inline RewardBreakdown total_reward(std::string_view raw, const QaItem& item, const RewardConfig& cfg = {}) {
    return total_reward(raw, item.gold, item.path, cfg);
}

inline nlohmann::json reward_to_json(const RewardBreakdown& b) {
    return {{"r_correct", b.r_correct}, {"length_penalty", b.length_penalty},
            {"r_path", b.r_path},       {"total", b.total},
            {"coverage", b.coverage},   {"hits", b.hits},
            {"rho", b.rho},             {"gate_open", b.gate_open},
            {"correct", b.correct}};
}

} // namespace kgcurr
