#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <thread>

#include "kgcurr/remote.hpp"

using namespace kgcurr;

namespace {

std::string reply_body(const std::string& text, const std::vector<double>& lps = {}) {
    nlohmann::json choice = {{"message", {{"role", "assistant"}, {"content", text}}}};
    if (!lps.empty()) {
        nlohmann::json content = nlohmann::json::array();
        for (double lp : lps) content.push_back({{"token", "t"}, {"logprob", lp}});
        choice["logprobs"] = {{"content", content}};
    }
    return nlohmann::json{{"choices", nlohmann::json::array({choice})}}.dump();
}

struct Scripted {
    int status;
    std::string body;
};

// Local chat-completions server replaying a fixed script of responses.
class FakeServer {
public:
    explicit FakeServer(std::deque<Scripted> script) : script_(std::move(script)) {
        srv_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            requests_.push_back(nlohmann::json::parse(req.body));
            auth_.push_back(req.get_header_value("Authorization"));
            Scripted s = script_.empty() ? Scripted{500, "exhausted"} : script_.front();
            if (!script_.empty()) script_.pop_front();
            res.status = s.status;
            res.set_content(s.body, "application/json");
        });
        port_ = srv_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { srv_.listen_after_bind(); });
        srv_.wait_until_ready();
    }
    ~FakeServer() {
        srv_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    std::size_t hits() {
        std::lock_guard lock(mu_);
        return requests_.size();
    }
    nlohmann::json request(std::size_t i) {
        std::lock_guard lock(mu_);
        return requests_.at(i);
    }
    std::string auth(std::size_t i) {
        std::lock_guard lock(mu_);
        return auth_.at(i);
    }

private:
    httplib::Server srv_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mu_;
    std::deque<Scripted> script_;
    std::vector<nlohmann::json> requests_;
    std::vector<std::string> auth_;
};

struct SleepLog {
    std::shared_ptr<std::vector<long>> ms = std::make_shared<std::vector<long>>();
    ChatClient::Sleeper sleeper() const {
        auto log = ms;
        return [log](std::chrono::milliseconds d) { log->push_back(static_cast<long>(d.count())); };
    }
};

ChatEndpoint endpoint_for(const std::string& url, int retries = 3) {
    ChatEndpoint e;
    e.base_url = url;
    e.model = "test-model";
    e.api_key_env = "KGCURR_TEST_KEY";
    e.timeout_seconds = 5;
    e.max_retries = retries;
    e.backoff_ms = 10;
    return e;
}

QaItem sample_item() {
    QaItem q;
    q.id = "q1";
    q.question = "Which structure is reached?";
    q.options = {"alpha", "beta", "gamma", "delta"};
    q.gold = 'B';
    q.path = make_path({make_triple("x", "Process", "causes", "beta", "Process")});
    return q;
}

} // namespace

TEST(ChatClient, SuccessfulRequestShape) {
    ::setenv("KGCURR_TEST_KEY", "sekret", 1);
    FakeServer srv({{200, reply_body("hello", {-0.5, -0.25})}});
    SleepLog log;
    ChatClient client(endpoint_for(srv.url()), log.sleeper());
    const auto reply = client.complete({"prompt text", 0.6, 0.9, 64, true});
    EXPECT_EQ(reply.text, "hello");
    EXPECT_EQ(reply.token_logprobs, (std::vector<double>{-0.5, -0.25}));
    EXPECT_EQ(reply.attempts, 1);
    EXPECT_TRUE(log.ms->empty());
    const auto req = srv.request(0);
    EXPECT_EQ(req["model"], "test-model");
    EXPECT_EQ(req["messages"][0]["content"], "prompt text");
    EXPECT_EQ(req["max_tokens"], 64);
    EXPECT_TRUE(req["logprobs"].get<bool>());
    EXPECT_EQ(srv.auth(0), "Bearer sekret");
    ::unsetenv("KGCURR_TEST_KEY");
}

TEST(ChatClient, RetriesWithExponentialBackoff) {
    FakeServer srv({{503, "busy"}, {429, "slow down"}, {200, reply_body("ok")}});
    SleepLog log;
    ChatClient client(endpoint_for(srv.url()), log.sleeper());
    const auto reply = client.complete({"p"});
    EXPECT_EQ(reply.text, "ok");
    EXPECT_EQ(reply.attempts, 3);
    EXPECT_EQ(*log.ms, (std::vector<long>{10, 20}));
    EXPECT_EQ(srv.hits(), 3u);
}

TEST(ChatClient, GivesUpAfterMaxRetries) {
    FakeServer srv({{500, "a"}, {500, "b"}, {500, "c"}, {500, "d"}, {200, reply_body("late")}});
    SleepLog log;
    ChatClient client(endpoint_for(srv.url(), 2), log.sleeper());
    try {
        (void)client.complete({"p"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RemoteUnavailable);
        EXPECT_NE(std::string(e.what()).find("HTTP 500"), std::string::npos);
    }
    EXPECT_EQ(srv.hits(), 3u);
    EXPECT_EQ(*log.ms, (std::vector<long>{10, 20}));
}

TEST(ChatClient, ClientErrorsAreNotRetried) {
    FakeServer srv({{400, "bad"}, {200, reply_body("never")}});
    SleepLog log;
    ChatClient client(endpoint_for(srv.url()), log.sleeper());
    EXPECT_THROW((void)client.complete({"p"}), Error);
    EXPECT_EQ(srv.hits(), 1u);
    EXPECT_TRUE(log.ms->empty());
}

TEST(ChatClient, MalformedReplyAndUnreachableHost) {
    FakeServer srv({{200, "{\"choices\": []}"}});
    SleepLog log;
    ChatClient client(endpoint_for(srv.url()), log.sleeper());
    try {
        (void)client.complete({"p"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RemoteUnavailable);
    }
    auto e = endpoint_for("http://127.0.0.1:1/v1", 1);
    e.timeout_seconds = 1;
    ChatClient dead(e, log.sleeper());
    try {
        (void)dead.complete({"p"});
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::RemoteUnavailable);
    }
}

TEST(ChatClient, ConfigValidation) {
    EXPECT_THROW(ChatClient(endpoint_for("localhost:8000")), Error);
    auto e = endpoint_for("http://localhost:8000/v1");
    e.model.clear();
    EXPECT_THROW(ChatClient{e}, Error);
    EXPECT_THROW((void)ChatClient::parse_reply("not json"), Error);
    EXPECT_EQ(ChatClient::parse_reply(reply_body("x")).text, "x");
}

TEST(RemoteAdapters, JudgeMapsFailuresToJudgeUnavailable) {
    FakeServer srv({{200, reply_body("Yes")}, {404, "gone"}});
    auto client = std::make_shared<const ChatClient>(endpoint_for(srv.url(), 0), SleepLog{}.sleeper());
    RemoteJudge judge("remote-a", client);
    const auto t = make_triple("a", "Process", "causes", "b", "Process");
    EXPECT_EQ(judge.judge(t, "is this right?"), "Yes");
    try {
        (void)judge.judge(t, "again?");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::JudgeUnavailable);
    }
}

TEST(RemoteAdapters, PolicyRecordsLogprobsAndRejectsUpdates) {
    FakeServer srv({{200, reply_body("<think>x</think><answer>B</answer>", {-0.1, -0.2, -0.3})}});
    auto client = std::make_shared<const ChatClient>(endpoint_for(srv.url(), 0), SleepLog{}.sleeper());
    RemotePolicy policy(client);
    const auto item = sample_item();
    Rng rng(1);
    const auto s = policy.sample(item, 0.6, 0.9, 1792, rng);
    EXPECT_NEAR(policy.logprob(item, s.text), -0.6, 1e-12);
    EXPECT_FALSE(policy.updatable());
    EXPECT_THROW(policy.apply_update({}, GrpoConfig{}), Error);
    try {
        (void)policy.logprob(item, "unseen");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::PolicyUnavailable);
    }
    const auto prompt = srv.request(0)["messages"][0]["content"].get<std::string>();
    EXPECT_NE(prompt.find("B. beta"), std::string::npos);
    EXPECT_NE(prompt.find("<answer></answer>"), std::string::npos);
    try {
        (void)policy.sample(item, 0.6, 0.9, 1792, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::PolicyUnavailable);
    }
}

TEST(RemoteAdapters, GenerationClientPassesPrompt) {
    FakeServer srv({{200, reply_body("generated")}});
    RemoteGenerationClient gen(std::make_shared<const ChatClient>(endpoint_for(srv.url(), 0), SleepLog{}.sleeper()));
    EXPECT_EQ(gen.generate("make a question"), "generated");
    EXPECT_EQ(srv.request(0)["messages"][0]["content"], "make a question");
}
