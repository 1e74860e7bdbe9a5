#pragma once

#include "apdlh/apdl.hpp"
#include "apdlh/corpus.hpp"

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace apdlh {

struct SimOutcome {
    bool success = false;
    std::vector<std::string> images;  // artifact paths; non-empty iff success
    SolverLog log;
    int solve_steps = 0;

    bool operator==(const SimOutcome&) const = default;
};

nlohmann::json to_json(const SimOutcome& o);
SimOutcome sim_outcome_from_json(const nlohmann::json& j);

// Where and under which attempt number a script executes. Artifact names embed
// (case, attempt); the directory separates concurrent case-runs.
struct ExecutionContext {
    int attempt = 1;
    std::filesystem::path artifact_dir;  // empty: record names only, create no files
};

enum class BackendId { Simulated, ExternalCommand, Fallback };

std::string_view to_string(BackendId id) noexcept;
std::optional<BackendId> parse_backend_id(std::string_view s) noexcept;

class SolverBackend {
public:
    virtual ~SolverBackend() = default;

    // Deterministic for fixed (script, task, ctx). Must be callable
    // concurrently from several case-runs.
    virtual SimOutcome execute(const ApdlScript& script, const TaskSpec& task,
                               const ExecutionContext& ctx) const = 0;
    virtual BackendId backend_id() const noexcept = 0;
};

// Predicate-based stand-in for MAPDL. Evaluates the task's injected faults in
// FaultClass order and fails on the first one the script leaves unresolved.
class SimulatedBackend final : public SolverBackend {
public:
    explicit SimulatedBackend(BackendId id = BackendId::Simulated) : id_(id) {}

    SimOutcome execute(const ApdlScript& script, const TaskSpec& task,
                       const ExecutionContext& ctx) const override;
    BackendId backend_id() const noexcept override { return id_; }

private:
    BackendId id_;
};

// Runs `<command> <script-path>` and adapts its output. Lines of the form
// "IMAGE WRITTEN: <path>" count as artifacts; a zero exit code with at least
// one artifact is a success.
class ExternalCommandBackend final : public SolverBackend {
public:
    ExternalCommandBackend(std::filesystem::path command, std::filesystem::path workdir);

    SimOutcome execute(const ApdlScript& script, const TaskSpec& task,
                       const ExecutionContext& ctx) const override;
    BackendId backend_id() const noexcept override { return BackendId::ExternalCommand; }

    static bool available(const std::filesystem::path& command);

private:
    std::filesystem::path command_;
    std::filesystem::path workdir_;
};

struct BackendConfig {
    std::vector<BackendId> preference;
    std::filesystem::path external_command;
    std::filesystem::path workdir;
};

// First available backend in preference order; Simulated when none is.
std::shared_ptr<const SolverBackend> select_backend(const BackendConfig& config);

// ---- fault predicates -----------------------------------------------------

// Minimum element size the task's mesh accepts: twice the nominal size, or
// four times it when the mesh fault resists rule patching.
double mesh_threshold(const TaskSpec& task);

// Elements accepted by the task's analysis category.
const std::set<std::string>& compatible_elements(Category c);

// True when the script cures `fault` for `task`.
bool fault_resolved(FaultClass fault, const ApdlScript& script, const TaskSpec& task);

std::string artifact_name(int case_id, int attempt, int index);

}  // namespace apdlh
