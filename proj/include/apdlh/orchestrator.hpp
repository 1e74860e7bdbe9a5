#pragma once

#include "apdlh/conversation.hpp"
#include "apdlh/corpus.hpp"
#include "apdlh/model_client.hpp"
#include "apdlh/recovery.hpp"
#include "apdlh/solver.hpp"
#include "apdlh/tools.hpp"
#include "apdlh/trace.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace apdlh {

enum class RunStatus { Running, Succeeded, Failed, Escalated };
enum class Phase { Generate, Execute, Recover, Finished };

std::string_view to_string(RunStatus s) noexcept;
std::string_view to_string(Phase p) noexcept;

inline constexpr int kCheckpointSchema = 1;
inline constexpr int kDefaultTokenBudget = 8192;

struct RunState {
    std::string run_id;
    int case_id = 0;
    Policy strategy = Policy::NoRecovery;
    int repeat = 0;
    std::uint64_t seed = 0;  // benchmark seed; the model client sees run_seed(seed, repeat)

    int attempt = 0;     // solver executions so far
    int react_iter = 0;  // model thoughts so far
    int forced_used = 0;
    std::vector<Turn> conversation;  // as kept by the context manager
    std::vector<Turn> pending;       // appended since the last trace event
    std::string script;
    bool exec_by_model = true;
    std::optional<SimOutcome> last_outcome;
    std::vector<FailureSignature> failures;
    std::optional<LadderLevel> ladder_pos;
    Phase phase = Phase::Generate;
    RunStatus status = RunStatus::Running;
    std::int64_t next_seq = 0;
    bool intervention_required = false;
    long token_estimate = 0;  // every turn ever appended, before context management
    int call_counter = 0;
    std::string stop_reason;

    bool terminal() const noexcept { return phase == Phase::Finished; }
    bool operator==(const RunState&) const = default;
};

nlohmann::json to_json(const RunState& s);
// Throws CorruptCheckpoint on anything that does not round-trip.
RunState run_state_from_json(const nlohmann::json& j);

void checkpoint_save(const RunState& state, const std::filesystem::path& path);
RunState checkpoint_resume(const std::filesystem::path& path);

struct CaseRunRecord {
    std::string run_id;
    int case_id = 0;
    std::string strategy;
    int repeat_index = 0;
    std::uint64_t seed = 0;
    std::string status;
    int completed = 0;
    int attempts = 0;
    int retries = 0;
    bool intervention_required = false;
    int images = 0;
    std::string trace_ref;  // relative to the run output directory
    long token_estimate = 0;

    bool operator==(const CaseRunRecord&) const = default;
};

nlohmann::json to_json(const CaseRunRecord& r);
CaseRunRecord case_run_record_from_json(const nlohmann::json& j);

std::string make_run_id(int case_id, Policy strategy, int repeat, std::uint64_t seed);
std::uint64_t run_seed(std::uint64_t seed, int repeat);

struct Collaborators {
    std::shared_ptr<const ModelClient> model;
    std::shared_ptr<const SolverBackend> backend;
};

struct RunOptions {
    std::filesystem::path out_dir;  // traces/, checkpoints/ and artifacts/ live under it
    int token_budget = kDefaultTokenBudget;
    std::chrono::milliseconds tool_timeout{30000};
    bool create_artifacts = true;
    // Test hook: every step takes one unit; a step that finds none left throws
    // RunInterrupted before touching any state.
    std::shared_ptr<std::atomic<long>> step_allowance;
};

std::filesystem::path trace_path(const std::filesystem::path& out_dir, const std::string& run_id);
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, const std::string& run_id);
std::string trace_ref(const std::string& run_id);

// The recovery recursion for one case-run, one step at a time. Each step ends
// with at least one trace event and a checkpoint.
class Orchestrator {
public:
    Orchestrator(std::shared_ptr<const TaskSpec> task, StrategyConfig config, Collaborators collaborators,
                 RunOptions options, RunState state);

    static RunState initial_state(const TaskSpec& task, Policy strategy, int repeat, std::uint64_t seed);

    // Advances one step; false once the run is terminal.
    bool step();
    CaseRunRecord run();

    const RunState& state() const noexcept { return state_; }
    CaseRunRecord record() const;

private:
    void append(Turn turn);
    void emit(EventKind kind, nlohmann::json payload);
    void finish(RunStatus status, std::string reason);
    std::string next_call_id();
    ToolContext tool_context() const;

    void do_generate();
    void do_execute();
    void do_recover();
    void do_model_repair(LadderLevel level, bool stop_requested);

    std::shared_ptr<const TaskSpec> task_;
    StrategyConfig config_;
    Collaborators collab_;
    RunOptions options_;
    RunState state_;
    StateTracker tracker_;
    std::unique_ptr<TraceWriter> writer_;
};

CaseRunRecord record_from_state(const RunState& state);

// Runs (or resumes) the case-run identified by (task, strategy, repeat, seed)
// under options.out_dir. A terminal checkpoint short-circuits to its record.
CaseRunRecord run_case(const TaskSpec& task, const StrategyConfig& config, const Collaborators& collaborators,
                       const RunOptions& options, int repeat, std::uint64_t seed);

// Category background handed to the model at the context-enrichment rung.
std::string enrichment_text(const TaskSpec& task, const std::vector<FailureSignature>& failures);

}  // namespace apdlh
