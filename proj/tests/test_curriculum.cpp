#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "kgcurr/curriculum.hpp"
#include "kgcurr/reward.hpp"
#include "support.hpp"

using namespace kgcurr;

namespace {

std::vector<ReasoningPath> two_hop_fixture(std::size_t n, double weight = 1.0) {
    std::vector<ReasoningPath> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = std::to_string(i);
        auto p = make_path({make_triple("a" + s, "Process", "causes", "b" + s, "Process"),
                            make_triple("b" + s, "Process", "causes", "c" + s, "Process")});
        p.weight = weight;
        out.push_back(std::move(p));
    }
    return out;
}

class FixedClient final : public GenerationClient {
public:
    explicit FixedClient(std::string reply) : reply_(std::move(reply)) {}
    std::string generate(std::string_view) const override { return reply_; }

private:
    std::string reply_;
};

// Rich graph where every category has many members.
KnowledgeGraph distractor_rich_graph(Rng& rng) {
    return kgtest::random_graph(rng, 40, 0.06, true);
}

} // namespace

TEST(Sampling, ShortfallReportsHaveAndNeed) {
    CurriculumTargets t;
    t[2] = {false, 10, 0, Split::sft};
    try {
        (void)sample_curriculum(two_hop_fixture(7), t, 1);
        FAIL();
    } catch (const StratumShortfallError& e) {
        EXPECT_EQ(e.code(), ErrorCode::StratumShortfall);
        ASSERT_EQ(e.shortfall().size(), 1u);
        EXPECT_EQ(e.shortfall().at(2), (std::pair<std::size_t, std::size_t>{7, 10}));
    }
}

TEST(Sampling, ShortfallListsEveryStratum) {
    const auto g = kgtest::fig2_graph();
    const auto paths = enumerate_paths(g, 1, 5, PruningConfig::disabled());
    CurriculumTargets t;
    for (std::size_t k = 2; k <= 5; ++k) t[k] = {false, 1000, 0, Split::eval};
    try {
        (void)sample_curriculum(paths, t, 3);
        FAIL();
    } catch (const StratumShortfallError& e) {
        EXPECT_EQ(e.shortfall().size(), 4u);
    }
}

TEST(Sampling, DeterministicManifests) {
    Rng rng(73);
    const auto g = kgtest::random_graph(rng, 12, 0.3);
    const auto paths = enumerate_paths(g, 1, 5, PruningConfig::disabled());
    CurriculumTargets t;
    t[1] = {true, 0, 0, Split::sft};
    t[2] = {false, 20, 5, Split::sft};
    t[3] = {false, 15, 0, Split::eval};
    const auto fp = graph_fingerprint(g);
    const auto a = sample_curriculum(paths, t, 99, fp);
    const auto b = sample_curriculum(paths, t, 99, fp);
    EXPECT_EQ(a.manifest, b.manifest);
    ASSERT_EQ(a.stubs.size(), b.stubs.size());
    for (std::size_t i = 0; i < a.stubs.size(); ++i) {
        EXPECT_EQ(a.stubs[i].id, b.stubs[i].id);
        EXPECT_EQ(a.stubs[i].path, b.stubs[i].path);
        EXPECT_EQ(a.stubs[i].split, b.stubs[i].split);
    }
    const auto c = sample_curriculum(paths, t, 100, fp);
    bool differs = false;
    for (std::size_t i = 0; i < a.stubs.size(); ++i) differs |= !(a.stubs[i].path == c.stubs[i].path);
    EXPECT_TRUE(differs);
}

TEST(Sampling, UniformInclusionWithinThreeSigma) {
    const auto paths = two_hop_fixture(20);
    CurriculumTargets t;
    t[2] = {false, 5, 0, Split::sft};
    const int resamples = 10000;
    std::map<std::string, int> hits;
    for (int r = 0; r < resamples; ++r) {
        for (const auto& s : sample_curriculum(paths, t, static_cast<std::uint64_t>(r)).stubs)
            ++hits[s.path.concepts.front()];
    }
    const double p = 5.0 / 20.0;
    const double mean = resamples * p;
    const double sigma = std::sqrt(resamples * p * (1 - p));
    ASSERT_EQ(hits.size(), 20u);
    double chi2 = 0.0;
    for (const auto& [name, c] : hits) {
        EXPECT_NEAR(c, mean, 3 * sigma) << name;
        chi2 += (c - mean) * (c - mean) / (sigma * sigma);
    }
    EXPECT_LT(chi2, 43.82); // 0.999 quantile, 19 degrees of freedom
}

TEST(Sampling, HeavierPathsIncludedMoreOften) {
    auto paths = two_hop_fixture(10);
    for (std::size_t i = 0; i < 5; ++i) paths[i].weight = 0.0625;
    CurriculumTargets t;
    t[2] = {false, 3, 0, Split::sft};
    int light = 0, heavy = 0;
    for (int r = 0; r < 2000; ++r)
        for (const auto& s : sample_curriculum(paths, t, static_cast<std::uint64_t>(r) + 11).stubs) {
            const int idx = std::stoi(s.path.concepts.front().substr(1));
            (idx < 5 ? light : heavy)++;
        }
    EXPECT_GT(heavy, 4 * light);
}

TEST(Sampling, SplitPlanAndManifestArithmetic) {
    Rng rng(79);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = kgtest::random_graph(rng, 12, 0.35);
        const auto paths = enumerate_paths(g, 1, 5, PruningConfig::disabled());
        std::map<std::size_t, std::size_t> avail;
        for (const auto& p : paths) ++avail[p.hops()];
        if (avail[2] < 4 || avail[3] < 2) continue;
        CurriculumTargets t;
        t[1] = {true, 0, 0, Split::sft};
        t[2] = {false, avail[2] / 2 + 1, avail[2] / 4, Split::sft};
        t[3] = {false, avail[3] / 2, 0, Split::eval};
        const auto sc = sample_curriculum(paths, t, static_cast<std::uint64_t>(trial));
        const auto& m = sc.manifest;
        EXPECT_EQ(m.stratum_total(1), avail[1]);
        EXPECT_EQ(m.stratum_total(2), t[2].count);
        EXPECT_EQ(m.counts.at({2, Split::rl}) + (m.counts.count({2, Split::sft}) ? m.counts.at({2, Split::sft}) : 0),
                  m.stratum_total(2));
        if (t[2].rl_count) {
            EXPECT_EQ(m.counts.at({2, Split::rl}), t[2].rl_count);
        }
        std::map<std::pair<std::size_t, Split>, std::size_t> recount;
        std::set<std::string> ids;
        for (const auto& s : sc.stubs) {
            ++recount[{s.hops, s.split}];
            EXPECT_TRUE(ids.insert(s.id).second);
            EXPECT_EQ(s.hops, s.path.hops());
        }
        EXPECT_EQ(recount, m.counts);
        EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
    }
}

TEST(Sampling, DefaultTargets) {
    const auto t = default_curriculum_targets();
    EXPECT_TRUE(t.at(1).take_all);
    EXPECT_EQ(t.at(2).count, 30000u);
    EXPECT_EQ(t.at(2).rl_count, 5000u);
    for (std::size_t k = 3; k <= 5; ++k) {
        EXPECT_EQ(t.at(k).count, 1000u);
        EXPECT_EQ(t.at(k).split, Split::eval);
    }
}

TEST(Cot, OneSentencePerHopAndFullCoverage) {
    Rng rng(83);
    for (int trial = 0; trial < 40; ++trial) {
        const auto g = kgtest::random_graph(rng, 10, 0.3);
        for (const auto& p : enumerate_paths(g, 1, 5, PruningConfig::disabled())) {
            const auto cot = path_to_cot(p);
            EXPECT_EQ(static_cast<std::size_t>(std::count(cot.begin(), cot.end(), '\n')) + 1, p.hops());
            for (const auto& c : p.concepts) EXPECT_NE(cot.find(c), std::string::npos);
            const auto cov = coverage(normalize_tokens(cot), p);
            EXPECT_DOUBLE_EQ(cov.fraction, 1.0);
            EXPECT_EQ(cov.hits, p.hops() + 1);
        }
    }
}

TEST(Cot, ReleasesExample) {
    const auto p = make_path({make_triple("Substantia Nigra", "AnatomicalStructure", "releases", "Dopamine",
                                          "MolecularEntity")});
    const auto cot = path_to_cot(p);
    EXPECT_NE(cot.find("substantia nigra"), std::string::npos);
    EXPECT_NE(cot.find("dopamine"), std::string::npos);
    EXPECT_NE(cot.find("releases"), std::string::npos);
}

TEST(Mcq, Fig2OneHopDistractors) {
    const auto g = kgtest::fig2_graph();
    const auto p = make_path({g.triples()[0]});
    ASSERT_EQ(p.concepts.back(), "cochlearnuclei");
    EXPECT_EQ(distractor_pool(g, p),
              (std::vector<std::string>{"lateralsuperiorolive", "medialsuperiorolivarynucleus",
                                        "ventralcochlearnucleus"}));
    const auto r = generate_mcq(g, p, {McqMode::template_mode, 5, nullptr});
    EXPECT_FALSE(r.diagnostic);
    EXPECT_EQ(r.item.gold_text(), "cochlearnuclei");
    EXPECT_TRUE(is_well_formed(r.item));
    const std::set<std::string> opts(r.item.options.begin(), r.item.options.end());
    EXPECT_EQ(opts, (std::set<std::string>{"cochlearnuclei", "lateralsuperiorolive", "medialsuperiorolivarynucleus",
                                           "ventralcochlearnucleus"}));
}

TEST(Mcq, DistractorShortage) {
    GraphBuilder b;
    b.add("x", "Process", "results_in", "Epilepsy", "ClinicalEntity");
    b.add_entity("Migraine", EntityCategory::ClinicalEntity);
    b.add_entity("Stroke", EntityCategory::ClinicalEntity);
    const auto g = b.build();
    try {
        (void)generate_mcq(g, make_path({g.triples()[0]}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DistractorShortage);
    }
}

TEST(Mcq, SeededLettersDeterministicAndBalanced) {
    Rng rng(89);
    const auto g = distractor_rich_graph(rng);
    const auto paths = enumerate_paths(g, 1, 1, PruningConfig::disabled());
    std::map<char, int> golds;
    int made = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        QaStub stub{detail::item_id(1, i), 1, paths[i], Split::sft};
        McqResult a, b;
        try {
            a = generate_mcq(g, stub, {McqMode::template_mode, 17, nullptr});
        } catch (const Error&) {
            continue;
        }
        b = generate_mcq(g, stub, {McqMode::template_mode, 17, nullptr});
        EXPECT_EQ(a.item.options, b.item.options);
        EXPECT_EQ(a.item.gold, b.item.gold);
        ++golds[a.item.gold];
        ++made;
    }
    ASSERT_GT(made, 40);
    for (char c : kOptionLetters) EXPECT_GT(golds[c], made / 10) << c;
}

TEST(Mcq, TemplateAnswerability) {
    Rng rng(97);
    for (int trial = 0; trial < 15; ++trial) {
        const auto g = distractor_rich_graph(rng);
        const auto paths = enumerate_paths(g, 1, 3, PruningConfig::disabled());
        for (std::size_t i = 0; i < paths.size(); i += 3) {
            const auto& p = paths[i];
            McqResult r;
            try {
                r = generate_mcq(g, QaStub{detail::item_id(p.hops(), i), p.hops(), p, Split::eval},
                                 {McqMode::template_mode, 1, nullptr});
            } catch (const Error& e) {
                ASSERT_EQ(e.code(), ErrorCode::DistractorShortage);
                continue;
            }
            ASSERT_TRUE(is_well_formed(r.item));
            const auto& pre = p.concepts[p.concepts.size() - 2];
            const auto rel = p.triples.back().relation;
            int reachable = 0;
            for (const auto& opt : r.item.options)
                if (g.contains(pre, rel, opt)) ++reachable;
            EXPECT_EQ(reachable, 1);
            EXPECT_TRUE(g.contains(pre, rel, r.item.gold_text()));
            EXPECT_EQ(r.item.cot_trace, path_to_cot(p));
        }
    }
}

TEST(Mcq, LlmModeAcceptsValidReply) {
    const auto g = kgtest::fig2_graph();
    const auto p = make_path({g.triples()[0]});
    FixedClient client(R"(Here you go: {"question":"Where does the cochlear nerve project?",
        "options":{"A":"cochlear nuclei","B":"thalamus","C":"retina","D":"cerebellum"},
        "gold":"A","cot_trace":"The cochlear nerve projects to the cochlear nuclei."})");
    const auto r = generate_mcq(g, p, {McqMode::llm, 0, &client});
    EXPECT_FALSE(r.diagnostic);
    EXPECT_EQ(r.item.gold, 'A');
    EXPECT_EQ(r.item.options[2], "retina");
}

TEST(Mcq, LlmModeFallsBackWithDiagnostic) {
    const auto g = kgtest::fig2_graph();
    const auto p = make_path({g.triples()[0]});
    for (const std::string& reply :
         {std::string("no json here"), std::string(R"({"question":"q","options":{"A":"x","B":"x","C":"y","D":"z"},"gold":"A","cot_trace":"t"})"),
          std::string(R"({"question":"q","options":{"A":"w","B":"x","C":"y","D":"z"},"gold":"E","cot_trace":"t"})")}) {
        FixedClient client(reply);
        const auto r = generate_mcq(g, p, {McqMode::llm, 0, &client});
        EXPECT_TRUE(r.diagnostic.has_value()) << reply;
        EXPECT_EQ(r.item.gold_text(), "cochlearnuclei");
    }
    EXPECT_THROW((void)generate_mcq(g, p, {McqMode::llm, 0, nullptr}), Error);
}

TEST(QaItemJson, RoundTripAndSchemaErrors) {
    const auto g = kgtest::fig2_graph();
    const auto item = generate_mcq(g, make_path({g.triples()[0]})).item;
    std::stringstream ss;
    write_items_jsonl(ss, {item, item});
    const auto back = read_items_jsonl(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(qa_item_to_json(back[1]), qa_item_to_json(item));

    auto j = qa_item_to_json(item);
    j["gold"] = "Q";
    std::stringstream bad;
    bad << qa_item_to_json(item).dump() << "\n" << j.dump() << "\n";
    try {
        (void)read_items_jsonl(bad);
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}
