#pragma once

#include "apdlh/recovery.hpp"
#include "apdlh/solver.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace apdlh {

struct ToolCall {
    std::string id;
    std::string name;
    nlohmann::json args = nlohmann::json::object();
};

enum class ToolStatus { Ok, PermissionDenied, Error, TimedOut };

std::string_view to_string(ToolStatus s) noexcept;

struct ToolResult {
    std::string call_id;
    ToolStatus status = ToolStatus::Ok;
    nlohmann::json payload = nlohmann::json::object();
    std::string message;
};

// Everything a tool may touch while executing one call.
struct ToolContext {
    std::shared_ptr<const SolverBackend> backend;
    std::shared_ptr<const TaskSpec> task;
    ExecutionContext exec;
    std::optional<SolverLog> last_log;
    std::chrono::milliseconds timeout{30000};
};

inline constexpr std::string_view kToolReadErrorLog = "read_error_log";
inline constexpr std::string_view kToolRunSolver = "run_solver";
inline constexpr std::string_view kToolPatchScript = "patch_script";

const std::vector<std::string>& registered_tools();

// Whether the strategy's permit set allows `tool`.
bool tool_permitted(std::string_view tool, const StrategyConfig& config);

// Validate -> Permit -> Execute. Throws UnknownTool for unregistered names and
// SchemaViolation for bad arguments; a permit denial or a timeout comes back
// as a ToolResult status, never as an exception.
ToolResult tool_dispatch(const ToolCall& call, const StrategyConfig& config, const ToolContext& ctx);

}  // namespace apdlh
