#pragma once

#include "apdlh/model_client.hpp"

#include <cstddef>
#include <filesystem>
#include <string>

namespace apdlh {

enum class GatewayMode {
    Live,    // POST to the gateway
    Replay,  // serve recorded fixtures only; never touches the network
    Record,  // live call, then store the response as a fixture
};

struct GatewayConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080/v1/complete
    std::string auth_token_env = "APDLH_GATEWAY_TOKEN";
    std::string model_name;
    double timeout_s = 60.0;
    double temperature = 0.0;
    GatewayMode mode = GatewayMode::Live;
    std::filesystem::path fixture_dir;
};

struct GenerationRequest {
    std::string prompt;
};

// Replay key: SHA-256 over (model_name, prompt).
std::string request_hash(const std::string& model_name, const std::string& prompt);

// Completion text for `request`. Live mode sends {model, prompt, temperature}
// with a bearer token read from config.auth_token_env and expects {text}.
// Errors: AuthMissing, GatewayUnavailable, ReplayMiss.
std::string external_complete(const GenerationRequest& request, const GatewayConfig& config);

// Writes a replay fixture for (model_name, prompt).
void write_fixture(const std::filesystem::path& dir, const std::string& model_name, const std::string& prompt,
                   const std::string& text);

// Process-wide network guard. When disallowed, live calls throw
// GatewayUnavailable before opening a socket; every attempted live call is
// counted either way.
void set_network_allowed(bool allowed) noexcept;
bool network_allowed() noexcept;
std::size_t network_attempts() noexcept;

// ModelClient backed by the gateway. Responses are parsed as APDL after
// stripping markdown code fences.
class GatewayModelClient final : public ModelClient {
public:
    explicit GatewayModelClient(GatewayConfig config);

    ApdlScript generate_initial(const TaskSpec& task) const override;
    ApdlScript repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                      const RepairRequest& request) const override;
    std::string name() const override { return "gateway:" + config_.model_name; }

    static std::string generation_prompt(const TaskSpec& task);
    static std::string repair_prompt(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                                     const RepairRequest& request);

private:
    GatewayConfig config_;
};

std::string strip_code_fences(const std::string& text);

}  // namespace apdlh
