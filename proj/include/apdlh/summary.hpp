#pragma once

#include "apdlh/fault.hpp"
#include "apdlh/scoring.hpp"
#include "apdlh/stats.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace apdlh {

struct TypeBreakdown {
    int n = 0;
    double R = 0;
    double Q = 0;
};

// Majority-failed cases per category, shaped (total, static, thermal, modal).
struct FailureDistribution {
    int total = 0;
    int static_cases = 0;
    int thermal_cases = 0;
    int modal_cases = 0;

    bool operator==(const FailureDistribution&) const = default;
};

struct StrategySummary {
    std::string strategy;
    int N = 0;
    int repeats = 0;
    int completed = 0;
    double R = 0;
    Interval R_ci;
    double Q = 0;
    double Z = 0;
    std::map<Category, TypeBreakdown> per_type;
    Quartiles q_quartiles;
    double majority_case_rate = 0;
    std::vector<int> failed_case_ids;  // majority-failed, ascending
    FailureDistribution failures;
    std::map<int, double> R_by_repeat;
};

using CategoryOf = std::map<int, Category>;

// Records of one strategy. Throws UnevenRepeats unless every case appears with
// the same set of repeat indices, EmptySample for no records.
StrategySummary aggregate(const std::vector<ScoredRun>& runs, const CategoryOf& categories);

enum class Metric { Q, T };

std::string_view to_string(Metric m) noexcept;
std::optional<Metric> parse_metric(std::string_view s) noexcept;

struct PairComparison {
    std::string a;
    std::string b;
    Metric metric = Metric::Q;
    double delta = 0;  // Cliff's delta of a over b
    EffectLabel label = EffectLabel::Negligible;
    double prob_superiority = 0.5;
    double u = 0;
    double p = 1;
    MwMode mode = MwMode::NormalApprox;
};

PairComparison compare(const std::string& a, const std::vector<ScoredRun>& runs_a, const std::string& b,
                       const std::vector<ScoredRun>& runs_b, Metric metric);

struct SensitivityPair {
    std::string a;
    std::string b;
    double run_delta = 0;
    double task_delta = 0;
    bool same_sign = true;
};

struct SensitivityReport {
    std::vector<std::string> run_ranking;
    std::vector<std::string> task_ranking;
    std::vector<SensitivityPair> pairs;
    bool ranking_match = false;
    bool insufficient_tasks = false;
    std::string note;
};

// Repeats the pairwise comparisons on per-task mean q and checks the
// strategy ranking (pairwise-win count, ties by mean) survives.
SensitivityReport per_task_sensitivity(const std::map<std::string, std::vector<ScoredRun>>& by_strategy);

struct BenchmarkReport {
    std::vector<StrategySummary> summaries;  // canonical strategy order
    std::vector<PairComparison> comparisons;
    SensitivityReport sensitivity;
};

// Pure function of the scored runs and the case categories.
BenchmarkReport build_report(const std::vector<ScoredRun>& runs, const CategoryOf& categories);

std::map<std::string, std::vector<ScoredRun>> group_by_strategy(const std::vector<ScoredRun>& runs);

nlohmann::json to_json(const StrategySummary& s);
nlohmann::json to_json(const PairComparison& c);
nlohmann::json to_json(const SensitivityReport& r);
nlohmann::json to_json(const BenchmarkReport& r);

std::string render_json(const BenchmarkReport& r);
std::string render_csv(const BenchmarkReport& r);
std::string render_markdown(const BenchmarkReport& r);

}  // namespace apdlh
