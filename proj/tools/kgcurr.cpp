#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "kgcurr/pipeline.hpp"

namespace {

std::pair<std::string, std::string> split_label(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) return {kgcurr::fs::path(arg).stem().string(), arg};
    return {arg.substr(0, eq), arg.substr(eq + 1)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kgcurr: knowledge-graph curriculum toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    bool mock = false;
    std::string output_dir;
    app.add_option("-c,--config", config_path, "pipeline config (JSON)")->required();
    app.add_flag("--mock", mock, "use deterministic mock clients for every external service");
    app.add_option("-o,--output-dir", output_dir, "override paths.output_dir");

    auto* chunk = app.add_subcommand("chunk", "split the corpus into overlapping text units");
    auto* extract = app.add_subcommand("extract", "extract candidate triples from text units");
    auto* validate = app.add_subcommand("validate", "two-judge consensus filter into the seed graph");
    auto* expand = app.add_subcommand("expand-ingest", "re-validate and merge expansion triples");
    auto* stats = app.add_subcommand("stats", "graph statistics");
    auto* paths = app.add_subcommand("paths", "enumerate and count reasoning paths");
    auto* curriculum = app.add_subcommand("curriculum", "sample paths and write QA items");
    auto* score = app.add_subcommand("score", "score completions against curriculum items");
    auto* grpo = app.add_subcommand("grpo", "run the group-relative policy optimization loop");
    auto* eval = app.add_subcommand("eval", "hop-stratified accuracy report");
    auto* quiz = app.add_subcommand("quiz-export", "write the static quiz bundle");

    std::string completions;
    score->add_option("completions", completions, "JSONL of {item_id, completion}")->required();
    std::vector<std::string> records;
    eval->add_option("records", records, "[label=]path to JSONL of {item_id, hops, gold, raw_completion}")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        kgcurr::PipelineConfig cfg = kgcurr::load_config(config_path);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (mock) cfg.mock = true;
        const kgcurr::Run run(cfg);

        nlohmann::json summary;
        if (*chunk) summary = kgcurr::stage_chunk(run);
        else if (*extract) summary = kgcurr::stage_extract(run, mock);
        else if (*validate) summary = kgcurr::stage_validate(run, mock);
        else if (*expand) summary = kgcurr::stage_expand_ingest(run, mock);
        else if (*stats) summary = kgcurr::stage_stats(run);
        else if (*paths) summary = kgcurr::stage_paths(run);
        else if (*curriculum) summary = kgcurr::stage_curriculum(run, mock);
        else if (*score) summary = kgcurr::stage_score(run, completions);
        else if (*grpo) summary = kgcurr::stage_grpo(run, mock);
        else if (*eval) {
            std::vector<std::pair<std::string, std::string>> inputs;
            for (const auto& r : records) inputs.push_back(split_label(r));
            summary = kgcurr::stage_eval(run, inputs);
        } else if (*quiz) summary = kgcurr::stage_quiz_export(run);

        summary["run_dir"] = run.dir().string();
        std::cout << summary.dump(2) << '\n';
        return 0;
    } catch (const kgcurr::Error& e) {
        std::cerr << "kgcurr: " << e.what() << '\n';
        return kgcurr::exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "kgcurr: malformed JSON: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "kgcurr: " << e.what() << '\n';
        return 2;
    }
}
