#include "apdlh/tools.hpp"

#include "apdlh/errors.hpp"

#include <future>
#include <map>
#include <thread>

namespace apdlh {

using nlohmann::json;

std::string_view to_string(ToolStatus s) noexcept {
    switch (s) {
        case ToolStatus::Ok: return "ok";
        case ToolStatus::PermissionDenied: return "permission_denied";
        case ToolStatus::Error: return "error";
        case ToolStatus::TimedOut: return "timed_out";
    }
    return "error";
}

namespace {

struct ArgSpec {
    const char* name;
    json::value_t type;
};

const std::map<std::string, std::vector<ArgSpec>, std::less<>>& schemas() {
    static const std::map<std::string, std::vector<ArgSpec>, std::less<>> kSchemas = {
        {std::string(kToolReadErrorLog), {}},
        {std::string(kToolRunSolver), {{"script", json::value_t::string}}},
        {std::string(kToolPatchScript), {{"script", json::value_t::string}, {"failure", json::value_t::string}}},
    };
    return kSchemas;
}

void validate(const ToolCall& call, const std::vector<ArgSpec>& spec) {
    if (!call.args.is_object()) throw SchemaViolation(call.name + ": arguments must be an object");
    for (const auto& a : spec) {
        if (!call.args.contains(a.name)) throw SchemaViolation(call.name + ": missing argument '" + a.name + "'");
        if (call.args.at(a.name).type() != a.type) {
            throw SchemaViolation(call.name + ": argument '" + a.name + "' has the wrong type");
        }
    }
    for (const auto& [key, _] : call.args.items()) {
        const bool known = std::any_of(spec.begin(), spec.end(), [&](const ArgSpec& a) { return key == a.name; });
        if (!known) throw SchemaViolation(call.name + ": unexpected argument '" + key + "'");
    }
}

// Tool bodies run detached from the caller's stack, so they own copies of
// everything they read.
ToolResult run_body(const ToolCall& call, const ToolContext& ctx) {
    ToolResult r;
    r.call_id = call.id;
    if (call.name == kToolReadErrorLog) {
        if (!ctx.last_log || ctx.last_log->exit_status != ExitStatus::Failure) {
            r.status = ToolStatus::Error;
            r.message = "no failed execution to read";
            return r;
        }
        r.payload = json{{"log", ctx.last_log->lines}};
        return r;
    }
    if (call.name == kToolRunSolver) {
        if (!ctx.backend || !ctx.task) throw std::logic_error("run_solver needs a backend and a task");
        try {
            const auto script = parse_script(call.args.at("script").get<std::string>());
            r.payload = to_json(ctx.backend->execute(script, *ctx.task, ctx.exec));
        } catch (const Error& e) {
            r.status = ToolStatus::Error;
            r.message = e.what();
        }
        return r;
    }
    if (call.name == kToolPatchScript) {
        const auto cls = parse_fault_class(call.args.at("failure").get<std::string>());
        FailureSignature sig;
        sig.fault_class = cls.value_or(FaultClass::Unknown);
        sig.message = call.args.value("message", std::string());
        if (ctx.last_log && ctx.last_log->exit_status == ExitStatus::Failure) sig = extract_failure(*ctx.last_log);
        try {
            const auto patch = rule_patch(parse_script(call.args.at("script").get<std::string>()), sig);
            json rules = json::array();
            for (auto id : patch.rules_applied) rules.push_back(std::string(to_string(id)));
            r.payload = json{{"script", render_script(patch.patched)}, {"rules_applied", rules}, {"changed", patch.changed}};
        } catch (const Error& e) {
            r.status = ToolStatus::Error;
            r.message = e.what();
        }
        return r;
    }
    throw UnknownTool(call.name);
}

}  // namespace

const std::vector<std::string>& registered_tools() {
    static const std::vector<std::string> kTools = {std::string(kToolReadErrorLog), std::string(kToolRunSolver),
                                                    std::string(kToolPatchScript)};
    return kTools;
}

bool tool_permitted(std::string_view tool, const StrategyConfig& config) {
    if (tool == kToolReadErrorLog) return config.log_tool_enabled;
    if (tool == kToolPatchScript) return config.policy == Policy::RuleOnly || config.policy == Policy::FullLadder;
    return tool == kToolRunSolver;
}

ToolResult tool_dispatch(const ToolCall& call, const StrategyConfig& config, const ToolContext& ctx) {
    auto schema = schemas().find(call.name);
    if (schema == schemas().end()) throw UnknownTool("unknown tool '" + call.name + "'");
    validate(call, schema->second);

    if (!tool_permitted(call.name, config)) {
        ToolResult r;
        r.call_id = call.id;
        r.status = ToolStatus::PermissionDenied;
        r.message = call.name + " is not permitted under " + std::string(to_string(config.policy));
        return r;
    }

    auto promise = std::make_shared<std::promise<ToolResult>>();
    auto future = promise->get_future();
    std::thread worker([promise, call, ctx]() {
        try {
            promise->set_value(run_body(call, ctx));
        } catch (...) {
            promise->set_exception(std::current_exception());
        }
    });
    if (future.wait_for(ctx.timeout) == std::future_status::timeout) {
        worker.detach();
        ToolResult r;
        r.call_id = call.id;
        r.status = ToolStatus::TimedOut;
        r.message = call.name + " exceeded " + std::to_string(ctx.timeout.count()) + " ms";
        return r;
    }
    worker.join();
    return future.get();
}

}  // namespace apdlh
