#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kgcurr/error.hpp"
#include "kgcurr/qa_item.hpp"
#include "kgcurr/reward.hpp"

namespace kgcurr {

inline std::optional<char> extract_answer(std::string_view raw) { return parse_tagged_completion(raw).answer; }

struct EvalRecord {
    std::string item_id;
    std::size_t hops = 0;
    char gold = 'A';
    std::optional<char> predicted;
    bool correct = false;

    friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

inline EvalRecord make_eval_record(std::string item_id, std::size_t hops, char gold, std::string_view raw) {
    EvalRecord r{std::move(item_id), hops, gold, extract_answer(raw), false};
    r.correct = r.predicted && *r.predicted == gold;
    return r;
}

/// Lines of {item_id, hops, gold, raw_completion}.
inline std::vector<EvalRecord> read_eval_jsonl(std::istream& is) {
    std::vector<EvalRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) throw SchemaError(lineno, "malformed JSON");
        const std::string id = detail::require_string(obj, "item_id", lineno);
        const auto& hops = detail::require(obj, "hops", lineno);
        if (!hops.is_number_unsigned() || hops.get<std::size_t>() == 0)
            throw SchemaError(lineno, "field 'hops' must be a positive integer");
        const std::string gold = detail::require_string(obj, "gold", lineno);
        if (gold.size() != 1 || !letter_index(gold[0])) throw SchemaError(lineno, "gold must be one of A..D");
        const std::string raw = detail::require_string(obj, "raw_completion", lineno);
        out.push_back(make_eval_record(id, hops.get<std::size_t>(), gold[0], raw));
    }
    return out;
}

inline std::vector<EvalRecord> load_eval_jsonl(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    return read_eval_jsonl(is);
}

/// Accuracy lost per extra hop between the 3- and 5-hop strata, in points.
inline double degradation_rate(double acc3, double acc5) { return (acc3 - acc5) / (5.0 - 3.0); }

enum class FitMethod { endpoint, log_least_squares };

struct PerStepFit {
    double p = 0.0;
    bool degenerate = false;
};

/// Fits Acc(k) = Acc(3) * (1 - p)^(k - 3).
///   endpoint:          p = 1 - (acc5 / acc3)^(1/2)
///   log_least_squares: ln(1 - p) = sum (k-3) ln(acc_k/acc3) / sum (k-3)^2 over k in {4, 5} present
/// Degenerate (p = 0, flagged) when accuracy rises with depth.
inline PerStepFit fit_per_step_error(const std::map<std::size_t, double>& acc_by_hop,
                                     FitMethod method = FitMethod::endpoint) {
    auto it3 = acc_by_hop.find(3);
    if (it3 == acc_by_hop.end() || !(it3->second > 0.0))
        throw Error(ErrorCode::InvalidArgument, "per-step fit needs a positive 3-hop accuracy");
    const double acc3 = it3->second;
    for (const auto& [k, a] : acc_by_hop)
        if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "per-step fit needs positive accuracies");

    double log_decay = 0.0;
    if (method == FitMethod::endpoint) {
        auto it5 = acc_by_hop.find(5);
        if (it5 == acc_by_hop.end()) throw Error(ErrorCode::InvalidArgument, "endpoint fit needs 5-hop accuracy");
        log_decay = std::log(it5->second / acc3) / 2.0;
    } else {
        double num = 0.0, den = 0.0;
        for (const auto& [k, a] : acc_by_hop) {
            if (k <= 3) continue;
            const double x = static_cast<double>(k - 3);
            num += x * std::log(a / acc3);
            den += x * x;
        }
        if (den == 0.0) throw Error(ErrorCode::InvalidArgument, "least-squares fit needs 4- or 5-hop accuracy");
        log_decay = num / den;
    }
    if (log_decay > 0.0) return {0.0, true};
    return {-std::expm1(log_decay), false};
}

struct HopCount {
    std::size_t correct = 0;
    std::size_t total = 0;

    friend bool operator==(const HopCount&, const HopCount&) = default;
};

struct EvalReport {
    std::string label = "model";
    std::map<std::size_t, double> accuracy; // percent, hop levels with records
    std::map<std::size_t, HopCount> counts;
    double average = 0.0;
    std::optional<double> delta;
    std::optional<PerStepFit> per_step_error;
    std::vector<std::size_t> empty_strata; // 3..5 levels without records

    friend bool operator==(const EvalReport& a, const EvalReport& b) {
        const auto fit_eq = [](const std::optional<PerStepFit>& x, const std::optional<PerStepFit>& y) {
            if (x.has_value() != y.has_value()) return false;
            return !x || (x->p == y->p && x->degenerate == y->degenerate);
        };
        return a.label == b.label && a.accuracy == b.accuracy && a.counts == b.counts && a.average == b.average &&
               a.delta == b.delta && fit_eq(a.per_step_error, b.per_step_error) && a.empty_strata == b.empty_strata;
    }
};

/// Report from per-hop accuracies already in percent.
inline EvalReport report_from_accuracies(std::string label, const std::map<std::size_t, double>& accuracy,
                                         FitMethod method = FitMethod::endpoint) {
    EvalReport r;
    r.label = std::move(label);
    r.accuracy = accuracy;
    for (std::size_t k = 3; k <= 5; ++k)
        if (!accuracy.count(k)) r.empty_strata.push_back(k);
    if (!accuracy.empty()) {
        for (const auto& [k, a] : accuracy) r.average += a;
        r.average /= static_cast<double>(accuracy.size());
    }
    if (accuracy.count(3) && accuracy.count(5)) {
        r.delta = degradation_rate(accuracy.at(3), accuracy.at(5));
        bool positive = true;
        for (const auto& [k, a] : accuracy)
            if (k >= 3 && k <= 5 && !(a > 0.0)) positive = false;
        if (positive) {
            std::map<std::size_t, double> fit_in;
            for (const auto& [k, a] : accuracy)
                if (k >= 3 && k <= 5) fit_in[k] = a;
            r.per_step_error = fit_per_step_error(fit_in, method);
        }
    }
    return r;
}

inline EvalReport build_report(const std::vector<EvalRecord>& records, std::string label = "model",
                               FitMethod method = FitMethod::endpoint) {
    std::map<std::size_t, HopCount> counts;
    for (const auto& rec : records) {
        auto& c = counts[rec.hops];
        ++c.total;
        if (rec.correct) ++c.correct;
    }
    std::map<std::size_t, double> accuracy;
    for (const auto& [k, c] : counts)
        accuracy[k] = 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.total);
    EvalReport r = report_from_accuracies(std::move(label), accuracy, method);
    r.counts = std::move(counts);
    return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json acc = nlohmann::json::object(), counts = nlohmann::json::object();
    for (const auto& [k, a] : r.accuracy) acc[std::to_string(k)] = a;
    for (const auto& [k, c] : r.counts) counts[std::to_string(k)] = {{"correct", c.correct}, {"total", c.total}};
    nlohmann::json j = {{"label", r.label},
                        {"accuracy", acc},
                        {"counts", counts},
                        {"average", r.average},
                        {"empty_strata", r.empty_strata}};
    j["delta"] = r.delta ? nlohmann::json(*r.delta) : nlohmann::json(nullptr);
    if (r.per_step_error) {
        j["per_step_error"] = r.per_step_error->p;
        j["degenerate_fit"] = r.per_step_error->degenerate;
    } else {
        j["per_step_error"] = nullptr;
        j["degenerate_fit"] = false;
    }
    return j;
}

namespace detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace detail

/// Markdown table: one row per report, hop columns 3..5, average, delta, p.
inline std::string reports_to_markdown(const std::vector<EvalReport>& reports) {
    std::string md = "| Model | 3-hop Acc (%) | 4-hop Acc (%) | 5-hop Acc (%) | Avg (%) | delta (pp/hop) | p |\n";
    md += "|---|---|---|---|---|---|---|\n";
    for (const auto& r : reports) {
        md += "| " + r.label;
        for (std::size_t k = 3; k <= 5; ++k) {
            auto it = r.accuracy.find(k);
            md += " | " + (it == r.accuracy.end() ? std::string("-") : detail::fixed(it->second, 1));
        }
        md += " | " + detail::fixed(r.average, 1);
        md += " | " + (r.delta ? detail::fixed(*r.delta, 2) : std::string("-"));
        md += " | " + (r.per_step_error ? detail::fixed(r.per_step_error->p, 3) : std::string("-"));
        md += " |\n";
    }
    return md;
}

/// CSV series "model,hops,accuracy" for hop-vs-accuracy plots.
inline std::string reports_to_csv(const std::vector<EvalReport>& reports) {
    std::string csv = "model,hops,accuracy\n";
    for (const auto& r : reports)
        for (const auto& [k, a] : r.accuracy) csv += r.label + "," + std::to_string(k) + "," + detail::fixed(a, 4) + "\n";
    return csv;
}

} // namespace kgcurr
