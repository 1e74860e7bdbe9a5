#pragma once

#include "apdlh/apdl.hpp"
#include "apdlh/corpus.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace apdlh {

struct RepairRequest {
    int attempt = 1;  // execution attempt whose failure is being repaired
    std::string error_log;
    std::optional<std::string> enrichment;
};

// f_LLM: produces the first-pass script and repairs failed ones. Implementations
// must be safe to call concurrently from independent case-runs.
class ModelClient {
public:
    virtual ~ModelClient() = default;

    virtual ApdlScript generate_initial(const TaskSpec& task) const = 0;
    virtual ApdlScript repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                              const RepairRequest& request) const = 0;

    // Whether the model proposes to stop after the given failed attempt.
    virtual bool requests_stop_after_failure(const TaskSpec& /*task*/, int /*attempt*/) const { return false; }

    virtual std::string name() const = 0;
};

// Probability that the scripted repair model fixes each failure class.
struct CompetenceTable {
    std::map<FaultClass, double> p;

    double operator[](FaultClass c) const;
    static CompetenceTable benchmark_default();
};

// Category template with one defect per injected fault; clean tasks get a
// defect-free script. `seed` only varies the header comment.
ApdlScript scripted_generate_initial(const TaskSpec& task, std::uint64_t seed);

// The defect-free template for the task (what a perfect first pass emits).
ApdlScript reference_script(const TaskSpec& task);

// Plot directives in the reference script; the oracle scorer compares the
// artifact count against it.
int expected_plot_count(const TaskSpec& task);

struct RepairOutcome {
    ApdlScript script;
    bool corrected = false;
};

// Corrects the defect behind sig.fault_class with probability
// competence[class], drawn deterministically from (seed, case_id, attempt).
// HardGeom is never corrected.
RepairOutcome scripted_repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                              const CompetenceTable& competence, std::uint64_t seed, int attempt);

class ScriptedModelClient final : public ModelClient {
public:
    ScriptedModelClient(CompetenceTable competence, std::uint64_t seed, double stop_propensity = 0.5);

    ApdlScript generate_initial(const TaskSpec& task) const override;
    ApdlScript repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                      const RepairRequest& request) const override;
    bool requests_stop_after_failure(const TaskSpec& task, int attempt) const override;
    std::string name() const override { return "scripted"; }

private:
    CompetenceTable competence_;
    std::uint64_t seed_;
    double stop_propensity_;
};

// Local-first client: calls `local`, and falls back to `external` when the
// local output does not parse as APDL.
class EscalatingModelClient final : public ModelClient {
public:
    EscalatingModelClient(std::shared_ptr<const ModelClient> local, std::shared_ptr<const ModelClient> external);

    ApdlScript generate_initial(const TaskSpec& task) const override;
    ApdlScript repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                      const RepairRequest& request) const override;
    bool requests_stop_after_failure(const TaskSpec& task, int attempt) const override;
    std::string name() const override;

private:
    std::shared_ptr<const ModelClient> local_;
    std::shared_ptr<const ModelClient> external_;
};

}  // namespace apdlh
