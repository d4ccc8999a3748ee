#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "kgcurr/config.hpp"

using namespace kgcurr;

namespace {

nlohmann::json parse(const char* text) { return nlohmann::json::parse(text); }

ErrorCode code_of(const nlohmann::json& j) {
    try {
        (void)config_from_json(j);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST(Config, EmptyObjectGivesDefaults) {
    const auto c = config_from_json(nlohmann::json::object());
    const PipelineConfig d;
    EXPECT_EQ(config_to_json(c), config_to_json(d));
    EXPECT_EQ(c.window_tokens, 300u);
    EXPECT_EQ(c.overlap_tokens, 50u);
    EXPECT_EQ(c.grpo.n_generations, 4u);
    EXPECT_DOUBLE_EQ(c.grpo.kl_beta, 0.12);
    EXPECT_EQ(c.targets, default_curriculum_targets());
}

TEST(Config, RoundTripThroughJson) {
    auto c = config_from_json(parse(R"({"seed": 9, "grpo": {"epochs": 2, "policy": "recorded"},
        "pruning": {"hub_policy": "downweight", "hub_multiplier": 0.25},
        "consensus": {"judge_a": {"endpoint": {"base_url": "http://h:1/v1", "model": "m"}}},
        "eval": {"fit_method": "log_least_squares"}})"));
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.grpo.seed, 9u);
    EXPECT_EQ(c.grpo.epochs, 2u);
    EXPECT_EQ(c.pruning.hub_policy, HubPolicy::downweight);
    ASSERT_TRUE(c.judge_a.endpoint.has_value());
    EXPECT_EQ(c.judge_a.endpoint->model, "m");
    const auto again = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(again), config_to_json(c));
    EXPECT_EQ(config_hash(again), config_hash(c));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
    EXPECT_EQ(code_of(parse(R"({"sed": 1})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"grpo": {"kl_beat": 0.1}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"curriculum": {"targets": {"2": {"cnt": 3}}}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"consensus": {"judge_b": {"verdict": "yes"}}})")), ErrorCode::ConfigError);
}

TEST(Config, InvalidValuesRejected) {
    EXPECT_EQ(code_of(parse(R"({"grpo": {"n_generations": 1}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"grpo": {"policy": "magic"}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"chunker": {"window_tokens": 50, "overlap_tokens": 50}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"pruning": {"hub_policy": "sometimes"}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"curriculum": {"targets": {"7": {"count": 1}}}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"seed": "seven"})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"consensus": {"max_in_flight": 0}})")), ErrorCode::ConfigError);
    EXPECT_EQ(code_of(parse(R"({"eval": {"fit_method": "spline"}})")), ErrorCode::ConfigError);
}

TEST(Config, HashStableAndSensitive) {
    PipelineConfig a;
    const auto h = config_hash(a);
    EXPECT_EQ(h.size(), 16u);
    EXPECT_EQ(config_hash(PipelineConfig{}), h);
    PipelineConfig moved = a;
    moved.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(moved), h);
    PipelineConfig reseeded = a;
    reseeded.seed = 1;
    EXPECT_NE(config_hash(reseeded), h);
    PipelineConfig tweaked = a;
    tweaked.reward.cov_coeff = 0.31;
    EXPECT_NE(config_hash(tweaked), h);
}

TEST(Config, EveryDefaultAppearsOnce) {
    const auto j = config_to_json(PipelineConfig{});
    for (const char* section : {"paths", "chunker", "extraction", "consensus", "pruning", "curriculum", "reward", "grpo", "eval"})
        EXPECT_TRUE(j.contains(section)) << section;
    EXPECT_FALSE(j["grpo"].contains("seed"));
    EXPECT_EQ(j["grpo"]["clip_epsilon"], 0.2);
    EXPECT_EQ(j["reward"].size(), 10u);
}

TEST(Config, LoadFromFile) {
    const auto dir = std::filesystem::temp_directory_path() / "kgcurr_config_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "c.json").string();
    {
        std::ofstream os(path);
        os << "{\n  // comment lines are allowed\n  \"seed\": 3\n}\n";
    }
    EXPECT_EQ(load_config(path).seed, 3u);
    {
        std::ofstream os(path);
        os << "{ not json";
    }
    EXPECT_THROW((void)load_config(path), Error);
    try {
        (void)load_config((dir / "missing.json").string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IoError);
    }
    std::filesystem::remove_all(dir);
}

TEST(Config, DemoConfigLoads) {
    const auto c = load_config(std::string(KGCURR_SOURCE_DIR) + "/demo/config.json");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.grpo.grad_accum, 4u);
    EXPECT_EQ(c.targets.at(2).rl_count, 16u);
}
