#pragma once

#include "apdlh/bench.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace apdlh {

struct ModuleDescriptor {
    std::string key;
    std::string description;
};

// Unknown keys are rejected, never defaulted.
class ModuleRegistry {
public:
    void add(ModuleDescriptor d);
    const ModuleDescriptor* find(const std::string& key) const;
    std::vector<std::string> keys() const;

    // Ships the single "mapdl" module.
    static ModuleRegistry with_default_modules();

private:
    std::map<std::string, ModuleDescriptor> modules_;
};

struct ServiceConfig {
    std::filesystem::path out_dir;
    Corpus corpus;
    std::uint64_t default_seed = 42;
    RunEnvironment env;
    int workers = 2;
    ModuleRegistry registry = ModuleRegistry::with_default_modules();
};

// HTTP front end over the same case-run path as the CLI:
//   POST /v1/modules/{key}/runs   202 {run_ids}; 400 MALFORMED_BODY, 404 MODULE_NOT_FOUND, 409 DUPLICATE_RUN
//   GET  /v1/runs/{id}            status, record and scores; 404 RUN_NOT_FOUND
//   GET  /v1/runs/{id}/trace      JSONL
//   GET  /v1/reports/summary      per-strategy aggregate over finished runs
class BenchService {
public:
    explicit BenchService(ServiceConfig config);
    ~BenchService();
    BenchService(const BenchService&) = delete;
    BenchService& operator=(const BenchService&) = delete;

    // Binds (port 0 picks a free one), serves on a background thread, and
    // returns the bound port.
    int start(const std::string& host, int port);
    // Blocks until stop() is called from elsewhere.
    void serve_forever(const std::string& host, int port);
    void stop();
    // Blocks until no run is queued or executing.
    void wait_idle();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace apdlh
