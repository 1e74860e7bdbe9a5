#pragma once

#include "apdlh/fault.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace apdlh {

struct Geometry {
    std::string shape;
    double length_mm = 0;
    double width_mm = 0;
    double height_mm = 0;
    double load = 0;            // N for structural tasks, W/m^2 heat flux for thermal
    std::string load_unit;      // "N" or "W/m2"
    double element_size_mm = 0; // nominal ESIZE of the first-pass script

    bool operator==(const Geometry&) const = default;
};

struct FaultProfile {
    std::vector<FaultClass> injected_faults;  // ordered by predicate evaluation order
    std::set<FaultClass> rule_resolvable;
    std::set<FaultClass> model_resolvable;

    bool injects(FaultClass c) const;
    bool operator==(const FaultProfile&) const = default;
};

struct TaskSpec {
    int case_id = 0;
    Category category = Category::Static;
    std::string prompt;
    Geometry geometry;
    FaultProfile fault_profile;
    bool hard = false;

    bool operator==(const TaskSpec&) const = default;
};

inline constexpr int kCorpusVersion = 1;

struct Corpus {
    int corpus_version = kCorpusVersion;
    std::uint64_t seed = 0;
    std::vector<TaskSpec> tasks;

    // Throws std::out_of_range for an unknown id.
    const TaskSpec& task(int case_id) const;

    bool operator==(const Corpus&) const = default;
};

// Case ids that carry an unresolvable geometry fault in the default corpus.
inline constexpr std::array<int, 3> kHardCaseIds = {8, 21, 35};

Corpus generate_default_corpus(std::uint64_t seed);

void to_json(nlohmann::json& j, const TaskSpec& t);
void from_json(const nlohmann::json& j, TaskSpec& t);
nlohmann::json corpus_to_json(const Corpus& c);
Corpus corpus_from_json(const nlohmann::json& j);

// Pretty-printed, newline-terminated. Byte-identical for equal corpora.
std::string serialize_corpus(const Corpus& c);
void save_corpus(const Corpus& c, const std::filesystem::path& path);

// Throws MalformedCorpus on schema violations, duplicate ids, or a broken
// FaultProfile subset invariant. A category histogram other than 35/10/5 is
// not an error for custom corpora; see category_warnings().
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::string_view text);

std::vector<std::string> category_warnings(const Corpus& c);

// Checks every TaskSpec/FaultProfile invariant; returns human-readable problems.
std::vector<std::string> validate_corpus(const Corpus& c);

}  // namespace apdlh
