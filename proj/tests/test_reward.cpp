#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "kgcurr/curriculum.hpp"
#include "kgcurr/reward.hpp"

using namespace kgcurr;

namespace {

ReasoningPath parkinson_path() {
    return make_path({make_triple("Substantia Nigra", "AnatomicalStructure", "releases", "Dopamine", "MolecularEntity"),
                      make_triple("Dopamine", "MolecularEntity", "modulates", "Striatum", "AnatomicalStructure"),
                      make_triple("Striatum", "AnatomicalStructure", "projects_to", "Motor Cortex",
                                  "AnatomicalStructure")});
}

std::string wrap(const std::string& think, const std::string& answer) {
    return "<think>" + think + "</think>\n<answer>" + answer + "</answer>";
}

std::string filler(std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += " w" + std::to_string(i);
    return s;
}

// Independent evaluation of the reward formula from raw ingredients.
double oracle_total(bool correct, std::size_t tokens, double cov, std::size_t hits, double rho,
                    const RewardConfig& c = {}) {
    const double pen = std::clamp((static_cast<double>(tokens) - c.l_soft) / double(c.l_max - c.l_soft), 0.0, 1.0);
    const double rc = (correct ? 1.0 : -1.0) - pen;
    const double rp = correct ? std::min((0.8 * cov + (hits >= 2 ? 0.3 : 0.0)) * rho, 0.8) : 0.0;
    return rc + rp;
}

} // namespace

TEST(ParseCompletion, Examples) {
    auto c = parse_tagged_completion("<think>x</think><answer>B</answer>");
    EXPECT_EQ(c.think, "x");
    EXPECT_EQ(c.answer, 'B');
    EXPECT_EQ(parse_tagged_completion("<think>x</think><answer>The answer is C.</answer>").answer, 'C');
    c = parse_tagged_completion("no tags at all");
    EXPECT_FALSE(c.think);
    EXPECT_FALSE(c.answer);
    EXPECT_EQ(c.token_count, 4u);
}

TEST(ParseCompletion, TagEdgeCases) {
    EXPECT_FALSE(parse_tagged_completion("<think>unterminated <answer>A</answer>").think);
    EXPECT_EQ(parse_tagged_completion("<think>unterminated <answer>A</answer>").answer, 'A');
    const auto c = parse_tagged_completion("<answer>D</answer><think>t</think><answer>B</answer>");
    EXPECT_EQ(c.think, "t");
    EXPECT_EQ(c.answer, 'B');
    EXPECT_FALSE(parse_tagged_completion("<think>t</think><answer>B").answer);
    EXPECT_EQ(parse_tagged_completion("<think></think><answer>a</answer>").think, "");
}

TEST(AnswerLetter, Normalization) {
    EXPECT_EQ(normalize_answer_letter("B"), 'B');
    EXPECT_EQ(normalize_answer_letter(" (c) "), 'C');
    EXPECT_EQ(normalize_answer_letter("option (b)"), 'B');
    EXPECT_EQ(normalize_answer_letter("I choose option d"), 'D');
    EXPECT_EQ(normalize_answer_letter("D. Motor cortex"), 'D');
    EXPECT_FALSE(normalize_answer_letter("A or B"));
    EXPECT_FALSE(normalize_answer_letter("a dopamine neuron"));
    EXPECT_FALSE(normalize_answer_letter("E"));
    EXPECT_FALSE(normalize_answer_letter(""));
}

TEST(NormalizeTokens, Examples) {
    EXPECT_EQ(normalize_tokens("Substantia Nigra, dopamine."),
              (std::vector<std::string>{"substantia", "nigra", "dopamine"}));
    EXPECT_TRUE(normalize_tokens("").empty());
    EXPECT_EQ(normalize_tokens("GABA-ergic"), (std::vector<std::string>{"gaba", "ergic"}));
}

TEST(NormalizeTokens, Idempotent) {
    Rng rng(101);
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        const auto len = rng.below(60);
        for (std::size_t k = 0; k < len; ++k) s += static_cast<char>(32 + rng.below(95));
        const auto once = normalize_tokens(s);
        std::string joined;
        for (const auto& t : once) joined += t + " ";
        EXPECT_EQ(normalize_tokens(joined), once);
    }
}

TEST(Coverage, Examples) {
    const auto p = parkinson_path();
    const auto three = coverage(normalize_tokens("The substantia nigra releases dopamine which acts on the striatum."), p);
    EXPECT_DOUBLE_EQ(three.fraction, 0.75);
    EXPECT_EQ(three.hits, 3u);
    const auto none = coverage({}, p);
    EXPECT_DOUBLE_EQ(none.fraction, 0.0);
    EXPECT_EQ(none.hits, 0u);
    const auto full = coverage(normalize_tokens(path_to_cot(p)), p);
    EXPECT_DOUBLE_EQ(full.fraction, 1.0);
    EXPECT_EQ(full.hits, 4u);
}

TEST(Coverage, ContiguousPhraseOnly) {
    const auto p = parkinson_path();
    EXPECT_EQ(coverage(normalize_tokens("motor output from the cortex"), p).hits, 0u);
    EXPECT_EQ(coverage(normalize_tokens("MOTOR, cortex!"), p).hits, 1u);
}

TEST(Repetition, Examples) {
    EXPECT_DOUBLE_EQ(repetition_penalty(normalize_tokens("a b c d e f g")), 1.0);
    std::vector<std::string> same(50, "dopamine");
    const double r3 = 1.0 - 1.0 / 48.0;
    EXPECT_NEAR(r3, 0.979, 1e-3);
    EXPECT_DOUBLE_EQ(repetition_penalty(same), 0.0);
    EXPECT_DOUBLE_EQ(repetition_penalty(normalize_tokens("a b a b a b")), 0.5);
    EXPECT_DOUBLE_EQ(repetition_penalty(normalize_tokens("a a")), 1.0);
}

TEST(PathReward, CapBinds) {
    const auto p = parkinson_path();
    const auto c = parse_tagged_completion(wrap("substantia nigra releases dopamine into the striatum", "A"));
    const auto r = r_path(c, p, true);
    EXPECT_DOUBLE_EQ(r.coverage, 0.75);
    EXPECT_EQ(r.hits, 3u);
    EXPECT_DOUBLE_EQ(r.rho, 1.0);
    EXPECT_DOUBLE_EQ(r.value, 0.8);
    EXPECT_TRUE(r.gate_open);
}

TEST(PathReward, HalfCoverageWithBonus) {
    const auto p = parkinson_path();
    const auto c = parse_tagged_completion(wrap("dopamine reaches the motor cortex", "A"));
    const auto r = r_path(c, p, true);
    EXPECT_DOUBLE_EQ(r.coverage, 0.5);
    EXPECT_EQ(r.hits, 2u);
    EXPECT_NEAR(r.value, 0.8 * 0.5 + 0.3, 1e-12);
}

TEST(PathReward, GateClosedWhenWrongOrNoThink) {
    const auto p = parkinson_path();
    const auto c = parse_tagged_completion(wrap(path_to_cot(p), "A"));
    EXPECT_DOUBLE_EQ(r_path(c, p, false).value, 0.0);
    EXPECT_FALSE(r_path(c, p, false).gate_open);
    EXPECT_DOUBLE_EQ(r_path(parse_tagged_completion("<answer>A</answer>"), p, true).value, 0.0);
}

TEST(CorrectReward, LengthRamp) {
    RewardConfig cfg;
    const auto short_right = parse_tagged_completion(wrap(filler(790), "A"));
    ASSERT_LE(short_right.token_count, cfg.l_soft);
    EXPECT_DOUBLE_EQ(r_correct(short_right, 'A', cfg).value, 1.0);
    EXPECT_DOUBLE_EQ(r_correct(short_right, 'A', cfg).length_penalty, 0.0);

    Completion at_cap{"", std::nullopt, 'B', cfg.l_max};
    EXPECT_DOUBLE_EQ(r_correct(at_cap, 'A', cfg).value, -2.0);
    Completion mid{"", std::nullopt, 'A', (cfg.l_soft + cfg.l_max) / 2};
    EXPECT_DOUBLE_EQ(r_correct(mid, 'A', cfg).value, 0.5);
    Completion none{"", std::nullopt, std::nullopt, 10};
    EXPECT_DOUBLE_EQ(r_correct(none, 'A', cfg).value, -1.0);

    RewardConfig bad;
    bad.l_soft = bad.l_max;
    EXPECT_THROW((void)r_correct(mid, 'A', bad), Error);
}

TEST(TotalReward, Compositions) {
    const auto p = parkinson_path();
    const auto perfect = total_reward(wrap(path_to_cot(p), "C"), 'C', p);
    EXPECT_DOUBLE_EQ(perfect.total, 1.8);
    EXPECT_DOUBLE_EQ(perfect.r_correct + perfect.r_path, perfect.total);
    EXPECT_DOUBLE_EQ(total_reward(wrap(path_to_cot(p), "B"), 'C', p).total, -1.0);
    const auto long_wrong = total_reward(wrap(filler(1800), "B"), 'C', p);
    EXPECT_DOUBLE_EQ(long_wrong.total, -2.0);
}

TEST(RewardProperties, BoundsOverRandomBytes) {
    const auto p = parkinson_path();
    Rng rng(103);
    const std::vector<std::string> pieces = {"<think>", "</think>", "<answer>", "</answer>", "A", "B", "C", "D",
                                             "substantia nigra", "dopamine", "striatum", "motor cortex", " ", "x"};
    for (int i = 0; i < 5000; ++i) {
        std::string raw;
        const auto len = rng.below(80);
        for (std::size_t k = 0; k < len; ++k)
            raw += rng.below(4) ? pieces[rng.below(pieces.size())] : std::string(1, static_cast<char>(rng.below(256)));
        if (rng.below(10) == 0) raw += filler(rng.below(2500));
        const char gold = kOptionLetters[rng.below(4)];
        const auto b = total_reward(raw, gold, p);
        ASSERT_GE(b.total, -2.0 - 1e-12);
        ASSERT_LE(b.total, 1.8 + 1e-12);
        ASSERT_GE(b.r_path, 0.0);
        ASSERT_LE(b.r_path, 0.8);
        ASSERT_GE(b.length_penalty, 0.0);
        ASSERT_LE(b.length_penalty, 1.0);
        if (!b.correct || !b.gate_open) {
            ASSERT_EQ(b.r_path, 0.0);
        }
        ASSERT_NEAR(b.total, oracle_total(b.correct, parse_tagged_completion(raw).token_count, b.coverage, b.hits, b.rho),
                    1e-12);
        const auto again = total_reward(raw, gold, p);
        ASSERT_EQ(reward_to_json(again), reward_to_json(b));
    }
}

TEST(RewardProperties, CoverageMonotonicity) {
    const auto p = parkinson_path();
    Rng rng(107);
    const std::vector<std::string> names = {"substantia nigra", "dopamine", "striatum", "motor cortex"};
    for (int i = 0; i < 500; ++i) {
        std::vector<int> present(4);
        std::string trace = "reasoning starts";
        for (int k = 0; k < 4; ++k)
            if ((present[k] = static_cast<int>(rng.below(2)))) trace += " then " + names[k] + " step" + std::to_string(k);
        for (int k = 0; k < 4; ++k) {
            if (present[k]) continue;
            const std::string more = trace + " also " + names[k] + " note" + std::to_string(k);
            const auto before = total_reward(wrap(trace, "A"), 'A', p);
            const auto after = total_reward(wrap(more, "A"), 'A', p);
            ASSERT_DOUBLE_EQ(before.rho, 1.0);
            ASSERT_DOUBLE_EQ(after.rho, 1.0);
            EXPECT_GE(after.coverage, before.coverage);
            EXPECT_GE(after.r_path, before.r_path);
        }
    }
}

TEST(RewardProperties, LengthMonotonicity) {
    RewardConfig cfg;
    for (char ans : {'A', 'B'}) {
        double prev = 10.0;
        for (std::size_t n = 0; n <= 2000; n += 17) {
            Completion c{"", std::string("t"), ans, n};
            const double v = r_correct(c, 'A', cfg).value;
            EXPECT_LE(v, prev);
            prev = v;
        }
    }
}
