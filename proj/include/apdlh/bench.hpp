#pragma once

#include "apdlh/corpus.hpp"
#include "apdlh/gateway.hpp"
#include "apdlh/orchestrator.hpp"
#include "apdlh/scoring.hpp"
#include "apdlh/summary.hpp"

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace apdlh {

// Everything besides the plan that shapes a case-run's collaborators.
struct RunEnvironment {
    CompetenceTable competence = CompetenceTable::benchmark_default();
    double stop_propensity = 0.5;
    BackendConfig backend;
    std::optional<GatewayConfig> gateway;  // set: the gateway model replaces the scripted one
    std::chrono::milliseconds tool_timeout{30000};
};

Collaborators make_collaborators(const RunEnvironment& env, std::uint64_t seed, int repeat);

struct BenchmarkPlan {
    std::filesystem::path corpus_path;  // empty: the default corpus generated from `seed`
    std::vector<Policy> strategies = {Policy::NoRecovery, Policy::RuleOnly, Policy::ModelOnly};
    int repeats = 3;
    std::uint64_t seed = 42;
    std::filesystem::path out_dir;
    int parallelism = 1;
    bool oracle_scorer = true;
    std::filesystem::path ratings;  // rater sheet; replaces the oracle scorer when set
    std::shared_ptr<std::atomic<long>> step_allowance;
    RunEnvironment env;
};

nlohmann::json to_json(const BenchmarkPlan& plan);

struct PlannedRun {
    int case_id = 0;
    Policy strategy = Policy::NoRecovery;
    int repeat = 1;
    std::string run_id;
};

// Repeats are numbered from 1.
std::vector<PlannedRun> expand_plan(const Corpus& corpus, const std::vector<Policy>& strategies, int repeats,
                                    std::uint64_t seed);

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvariant = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInterrupted = 3;

struct BenchResult {
    int exit_code = kExitOk;
    std::vector<CaseRunRecord> records;  // plan order
    std::vector<ScoredRun> scored;       // canonical order
    std::vector<std::string> errors;
};

std::filesystem::path record_path(const std::filesystem::path& out_dir, const std::string& run_id);

// Runs one planned case-run under out_dir (resuming or short-circuiting as
// the checkpoint allows) and stores its record.
CaseRunRecord execute_planned_run(const TaskSpec& task, const PlannedRun& run, std::uint64_t seed,
                                  const RunEnvironment& env, const std::filesystem::path& out_dir,
                                  std::shared_ptr<std::atomic<long>> step_allowance = {});

// Oracle-scored run: t from the artifact count, a from the stored trace.
ScoredRun score_with_oracle(const CaseRunRecord& record, const TaskSpec& task, const std::filesystem::path& out_dir);

// cmd_run. Never throws for configuration problems; they come back as exit 2.
BenchResult run_benchmark(const BenchmarkPlan& plan, std::ostream& log);

struct LintSummary {
    int traces = 0;
    int pairing_violations = 0;
    int budget_violations = 0;
    int structure_violations = 0;
    std::vector<std::string> details;

    bool clean() const noexcept { return pairing_violations + budget_violations + structure_violations == 0; }
};

// Lints every trace named by a stored record under runs_dir.
LintSummary lint_runs(const std::filesystem::path& runs_dir);

std::vector<CaseRunRecord> load_records(const std::filesystem::path& runs_dir);

// cmd_report: exit 2 when runs_dir holds no scored runs.
int cmd_report(const std::filesystem::path& runs_dir, const std::string& format, std::ostream& out,
               std::ostream& err);

CategoryOf categories_of(const Corpus& corpus);

}  // namespace apdlh
