#include "apdlh/gateway.hpp"

#include "apdlh/digest.hpp"
#include "apdlh/errors.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

namespace apdlh {

using nlohmann::json;

namespace {

std::atomic<bool> g_network_allowed{true};
std::atomic<std::size_t> g_network_attempts{0};

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

UrlParts split_url(const std::string& url) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, kUrl)) throw GatewayUnavailable("invalid gateway base_url '" + url + "'");
    return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

std::filesystem::path fixture_path(const std::filesystem::path& dir, const std::string& hash) {
    return dir / (hash + ".json");
}

std::string live_complete(const GenerationRequest& request, const GatewayConfig& config) {
    ++g_network_attempts;
    const char* token = std::getenv(config.auth_token_env.c_str());
    if (token == nullptr || *token == '\0') {
        throw AuthMissing("environment variable " + config.auth_token_env + " is not set");
    }
    if (!g_network_allowed) throw GatewayUnavailable("network access disabled by guard");

    const auto url = split_url(config.base_url);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(config.timeout_s);
    const auto usecs = static_cast<time_t>((config.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    const json body{{"model", config.model_name}, {"prompt", request.prompt}, {"temperature", config.temperature}};
    httplib::Headers headers{{"Authorization", std::string("Bearer ") + token}};
    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) {
        throw GatewayUnavailable("gateway request failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw GatewayUnavailable("gateway returned HTTP " + std::to_string(res->status));
    }
    try {
        return json::parse(res->body).at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw GatewayUnavailable(std::string("malformed gateway response: ") + e.what());
    }
}

}  // namespace

void set_network_allowed(bool allowed) noexcept { g_network_allowed = allowed; }
bool network_allowed() noexcept { return g_network_allowed; }
std::size_t network_attempts() noexcept { return g_network_attempts; }

std::string request_hash(const std::string& model_name, const std::string& prompt) {
    return digest_of({model_name, prompt});
}

void write_fixture(const std::filesystem::path& dir, const std::string& model_name, const std::string& prompt,
                   const std::string& text) {
    std::filesystem::create_directories(dir);
    std::ofstream out(fixture_path(dir, request_hash(model_name, prompt)), std::ios::binary | std::ios::trunc);
    out << json{{"model", model_name}, {"prompt", prompt}, {"text", text}}.dump(2) << "\n";
}

std::string external_complete(const GenerationRequest& request, const GatewayConfig& config) {
    if (config.mode == GatewayMode::Replay) {
        const auto path = fixture_path(config.fixture_dir, request_hash(config.model_name, request.prompt));
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ReplayMiss("no replay fixture " + path.filename().string());
        try {
            return json::parse(in).at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw ReplayMiss("unreadable replay fixture " + path.filename().string() + ": " + e.what());
        }
    }
    auto text = live_complete(request, config);
    if (config.mode == GatewayMode::Record) write_fixture(config.fixture_dir, config.model_name, request.prompt, text);
    return text;
}

std::string strip_code_fences(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string out;
    bool fenced = text.find("```") != std::string::npos;
    bool inside = !fenced;
    while (std::getline(in, line)) {
        if (line.rfind("```", 0) == 0) {
            inside = !inside;
            continue;
        }
        if (inside) out += line + "\n";
    }
    return out;
}

GatewayModelClient::GatewayModelClient(GatewayConfig config) : config_(std::move(config)) {}

std::string GatewayModelClient::generation_prompt(const TaskSpec& task) {
    return "Write a complete ANSYS MAPDL APDL script for the task below. Reply with APDL commands only, one per "
           "line, and finish with at least one post-processing plot command.\n\nTask (" +
           std::string(to_string(task.category)) + "): " + task.prompt + "\n";
}

std::string GatewayModelClient::repair_prompt(const ApdlScript& script, const FailureSignature& sig,
                                              const TaskSpec& task, const RepairRequest& request) {
    std::string p = "The APDL script below failed in MAPDL. Read the error log, diagnose the failure and reply with "
                    "the complete corrected script, APDL commands only.\n\nTask: " +
                    task.prompt + "\n\nScript:\n" + render_script(script) + "\nError log:\n" + request.error_log +
                    "\nFailure: " + std::string(to_string(sig.fault_class)) + ": " + sig.message + "\n";
    if (request.enrichment) p += "\nAdditional context:\n" + *request.enrichment + "\n";
    return p;
}

ApdlScript GatewayModelClient::generate_initial(const TaskSpec& task) const {
    return parse_script(strip_code_fences(external_complete({generation_prompt(task)}, config_)));
}

ApdlScript GatewayModelClient::repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                                      const RepairRequest& request) const {
    return parse_script(strip_code_fences(external_complete({repair_prompt(script, sig, task, request)}, config_)));
}

}  // namespace apdlh
