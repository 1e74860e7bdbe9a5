#include "apdlh/corpus.hpp"

#include "apdlh/digest.hpp"
#include "apdlh/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace apdlh {

using nlohmann::json;

bool FaultProfile::injects(FaultClass c) const {
    return std::find(injected_faults.begin(), injected_faults.end(), c) != injected_faults.end();
}

const TaskSpec& Corpus::task(int case_id) const {
    for (const auto& t : tasks) {
        if (t.case_id == case_id) return t;
    }
    throw std::out_of_range("no task with case_id " + std::to_string(case_id));
}

namespace {

using Rng = std::mt19937_64;

// Engine output is fully specified by the standard; the reductions below are
// ours so the corpus is identical across standard library implementations.
std::uint64_t below(Rng& rng, std::uint64_t n) { return rng() % n; }

template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[below(rng, i)]);
    }
}

constexpr std::array<int, 10> kModalIds = {4, 9, 14, 19, 24, 29, 34, 39, 44, 49};
constexpr std::array<int, 5> kThermalIds = {10, 20, 30, 40, 50};

Category category_for(int id) {
    if (std::find(kModalIds.begin(), kModalIds.end(), id) != kModalIds.end()) return Category::Modal;
    if (std::find(kThermalIds.begin(), kThermalIds.end(), id) != kThermalIds.end()) {
        return Category::Thermal;
    }
    return Category::Static;
}

bool is_hard_id(int id) {
    return std::find(kHardCaseIds.begin(), kHardCaseIds.end(), id) != kHardCaseIds.end();
}

std::vector<FaultClass> fault_pool(Category c) {
    switch (c) {
        case Category::Static:
            return {FaultClass::MeshFail, FaultClass::ConvFail, FaultClass::MissingResults};
        case Category::Thermal:
            return {FaultClass::ElemTypeFail, FaultClass::ConvFail};
        case Category::Modal:
            return {FaultClass::MeshFail, FaultClass::MissingResults};
    }
    return {};
}

std::string fmt_int(double v) { return std::to_string(static_cast<long long>(std::llround(v))); }

std::string shape_words(const std::string& shape) {
    std::string out = shape;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

std::string make_prompt(Category cat, const Geometry& g) {
    const std::string dims =
        fmt_int(g.length_mm) + " x " + fmt_int(g.width_mm) + " x " + fmt_int(g.height_mm) + " mm";
    std::ostringstream p;
    switch (cat) {
        case Category::Static:
            p << "Run a linear static analysis of a steel " << shape_words(g.shape) << " (" << dims
              << ") fixed at x = 0 with a " << fmt_int(g.load)
              << " N transverse load on the free end. Plot total displacement and von Mises stress.";
            break;
        case Category::Modal:
            p << "Compute the first six natural frequencies and mode shapes of a steel "
              << shape_words(g.shape) << " (" << dims
              << ") clamped at x = 0. Plot the displacement of the first mode.";
            break;
        case Category::Thermal:
            p << "Solve steady-state heat conduction in an aluminium " << shape_words(g.shape) << " ("
              << dims << ") held at 20 C on the x = 0 face with a " << fmt_int(g.load)
              << " W/m2 heat flux on the opposite face. Plot the temperature field.";
            break;
    }
    return p.str();
}

Geometry draw_geometry(Category cat, Rng& rng) {
    static const std::vector<std::string> kStatic = {"cantilever_beam", "simply_supported_beam",
                                                     "plate", "bracket", "pressure_vessel",
                                                     "assembly"};
    static const std::vector<std::string> kModal = {"cantilever_beam", "plate", "cylinder"};
    static const std::vector<std::string> kThermal = {"plate", "block", "fin"};
    const auto& shapes = cat == Category::Static ? kStatic : cat == Category::Modal ? kModal : kThermal;

    Geometry g;
    g.shape = shapes[below(rng, shapes.size())];
    g.length_mm = 200.0 + 50.0 * static_cast<double>(below(rng, 17));
    g.width_mm = 20.0 + 10.0 * static_cast<double>(below(rng, 9));
    g.height_mm = 10.0 + 5.0 * static_cast<double>(below(rng, 9));
    if (cat == Category::Thermal) {
        g.load = 1000.0 + 500.0 * static_cast<double>(below(rng, 39));
        g.load_unit = "W/m2";
    } else {
        g.load = 500.0 + 100.0 * static_cast<double>(below(rng, 46));
        g.load_unit = "N";
    }
    g.element_size_mm = std::max(2.0, std::round(std::min(g.width_mm, g.height_mm) / 5.0));
    return g;
}

struct FaultDraw {
    std::map<int, FaultProfile> profiles;
};

// Draws fault profiles for the non-hard tasks. Redraws until the structural
// guarantees hold: at least one task that a single rule patch fixes, and at
// least one faulty task that a single rule patch cannot fix.
FaultDraw draw_faults(std::uint64_t seed, const std::vector<TaskSpec>& tasks) {
    std::vector<int> candidates;
    for (const auto& t : tasks) {
        if (!t.hard) candidates.push_back(t.case_id);
    }
    const auto faulty_count = static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(candidates.size())));

    for (std::uint64_t round = 0; round < 10000; ++round) {
        Rng rng(mix64(seed, 0xfa017ULL + round));
        auto ids = candidates;
        shuffle_in_place(ids, rng);
        ids.resize(faulty_count);
        std::sort(ids.begin(), ids.end());

        std::map<int, std::vector<FaultClass>> injected;
        std::vector<std::pair<int, FaultClass>> instances;
        for (int id : ids) {
            auto pool = fault_pool(category_for(id));
            shuffle_in_place(pool, rng);
            const std::size_t k = 1 + below(rng, 2);
            pool.resize(std::min(k, pool.size()));
            std::sort(pool.begin(), pool.end());
            injected[id] = pool;
            for (auto c : pool) instances.emplace_back(id, c);
        }

        const auto total = instances.size();
        const auto rule_count = static_cast<std::size_t>(std::lround(0.6 * static_cast<double>(total)));
        const auto resistant_needed = total - rule_count;

        // Only mesh and element-type defects have rule-resistant variants.
        std::vector<std::pair<int, FaultClass>> eligible;
        for (const auto& inst : instances) {
            if (inst.second == FaultClass::MeshFail || inst.second == FaultClass::ElemTypeFail) {
                eligible.push_back(inst);
            }
        }
        if (eligible.size() < resistant_needed) continue;
        shuffle_in_place(eligible, rng);
        eligible.resize(resistant_needed);

        FaultDraw draw;
        for (const auto& [id, faults] : injected) {
            FaultProfile p;
            p.injected_faults = faults;
            for (auto c : faults) {
                p.model_resolvable.insert(c);
                const bool resistant =
                    std::find(eligible.begin(), eligible.end(), std::make_pair(id, c)) != eligible.end();
                if (!resistant) p.rule_resolvable.insert(c);
            }
            draw.profiles[id] = std::move(p);
        }

        bool rule_fixes_one = false;
        bool rule_misses_one = false;
        for (const auto& [id, p] : draw.profiles) {
            const bool single_fixable = p.injected_faults.size() == 1 && p.rule_resolvable.size() == 1;
            rule_fixes_one = rule_fixes_one || single_fixable;
            rule_misses_one = rule_misses_one || !single_fixable;
        }
        if (rule_fixes_one && rule_misses_one) return draw;
    }
    throw std::logic_error("fault assignment did not converge");
}

}  // namespace

Corpus generate_default_corpus(std::uint64_t seed) {
    Corpus corpus;
    corpus.seed = seed;
    Rng geometry_rng(mix64(seed, 0x6e0ULL));
    for (int id = 1; id <= 50; ++id) {
        TaskSpec t;
        t.case_id = id;
        t.category = category_for(id);
        t.hard = is_hard_id(id);
        t.geometry = draw_geometry(t.category, geometry_rng);
        if (t.hard) {
            // Thin-wall variant of the drawn shape; meshing sensitive by construction.
            t.geometry.height_mm = 2.0;
            t.geometry.element_size_mm = 2.0;
            t.fault_profile.injected_faults = {FaultClass::MeshFail, FaultClass::HardGeom};
            t.fault_profile.rule_resolvable = {FaultClass::MeshFail};
            t.fault_profile.model_resolvable = {FaultClass::MeshFail};
        }
        t.prompt = make_prompt(t.category, t.geometry);
        corpus.tasks.push_back(std::move(t));
    }
    auto draw = draw_faults(seed, corpus.tasks);
    for (auto& t : corpus.tasks) {
        if (auto it = draw.profiles.find(t.case_id); it != draw.profiles.end()) {
            t.fault_profile = it->second;
        }
    }
    return corpus;
}

namespace {

json faults_to_json(const std::vector<FaultClass>& faults) {
    json arr = json::array();
    for (auto c : faults) arr.push_back(std::string(to_string(c)));
    return arr;
}

json faults_to_json(const std::set<FaultClass>& faults) {
    return faults_to_json(std::vector<FaultClass>(faults.begin(), faults.end()));
}

FaultClass fault_from_json(const json& j) {
    if (!j.is_string()) throw MalformedCorpus("fault class must be a string");
    auto c = parse_fault_class(j.get<std::string>());
    if (!c || *c == FaultClass::Unknown) {
        throw MalformedCorpus("unknown fault class '" + j.get<std::string>() + "'");
    }
    return *c;
}

void require_exact_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw MalformedCorpus(where + " must be an object");
    for (const char* k : keys) {
        if (!j.contains(k)) throw MalformedCorpus(where + " is missing key '" + k + "'");
    }
    if (j.size() != keys.size()) throw MalformedCorpus(where + " has unexpected keys");
}

double number_field(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        throw MalformedCorpus(std::string("geometry.") + key + " must be a number");
    }
    return j.at(key).get<double>();
}

}  // namespace

void to_json(json& j, const TaskSpec& t) {
    j = json{
        {"case_id", t.case_id},
        {"category", std::string(to_string(t.category))},
        {"prompt", t.prompt},
        {"geometry",
         {{"shape", t.geometry.shape},
          {"length_mm", t.geometry.length_mm},
          {"width_mm", t.geometry.width_mm},
          {"height_mm", t.geometry.height_mm},
          {"load", t.geometry.load},
          {"load_unit", t.geometry.load_unit},
          {"element_size_mm", t.geometry.element_size_mm}}},
        {"fault_profile",
         {{"injected_faults", faults_to_json(t.fault_profile.injected_faults)},
          {"rule_resolvable", faults_to_json(t.fault_profile.rule_resolvable)},
          {"model_resolvable", faults_to_json(t.fault_profile.model_resolvable)}}},
        {"hard", t.hard},
    };
}

void from_json(const json& j, TaskSpec& t) {
    require_exact_keys(j, {"case_id", "category", "prompt", "geometry", "fault_profile", "hard"}, "task");
    if (!j.at("case_id").is_number_integer()) throw MalformedCorpus("case_id must be an integer");
    t.case_id = j.at("case_id").get<int>();
    const std::string where = "task " + std::to_string(t.case_id);
    if (!j.at("category").is_string()) throw MalformedCorpus(where + ": category must be a string");
    auto cat = parse_category(j.at("category").get<std::string>());
    if (!cat) throw MalformedCorpus(where + ": unknown category");
    t.category = *cat;
    if (!j.at("prompt").is_string()) throw MalformedCorpus(where + ": prompt must be a string");
    t.prompt = j.at("prompt").get<std::string>();
    if (!j.at("hard").is_boolean()) throw MalformedCorpus(where + ": hard must be a boolean");
    t.hard = j.at("hard").get<bool>();

    const auto& g = j.at("geometry");
    require_exact_keys(g, {"shape", "length_mm", "width_mm", "height_mm", "load", "load_unit", "element_size_mm"},
                       where + " geometry");
    if (!g.at("shape").is_string() || !g.at("load_unit").is_string()) {
        throw MalformedCorpus(where + ": geometry shape/load_unit must be strings");
    }
    t.geometry.shape = g.at("shape").get<std::string>();
    t.geometry.length_mm = number_field(g, "length_mm");
    t.geometry.width_mm = number_field(g, "width_mm");
    t.geometry.height_mm = number_field(g, "height_mm");
    t.geometry.load = number_field(g, "load");
    t.geometry.load_unit = g.at("load_unit").get<std::string>();
    t.geometry.element_size_mm = number_field(g, "element_size_mm");

    const auto& fp = j.at("fault_profile");
    require_exact_keys(fp, {"injected_faults", "rule_resolvable", "model_resolvable"}, where + " fault_profile");
    t.fault_profile = {};
    for (const char* key : {"injected_faults", "rule_resolvable", "model_resolvable"}) {
        if (!fp.at(key).is_array()) throw MalformedCorpus(where + ": " + key + " must be an array");
    }
    for (const auto& c : fp.at("injected_faults")) t.fault_profile.injected_faults.push_back(fault_from_json(c));
    for (const auto& c : fp.at("rule_resolvable")) t.fault_profile.rule_resolvable.insert(fault_from_json(c));
    for (const auto& c : fp.at("model_resolvable")) t.fault_profile.model_resolvable.insert(fault_from_json(c));
}

json corpus_to_json(const Corpus& c) {
    json tasks = json::array();
    for (const auto& t : c.tasks) tasks.push_back(t);
    return json{{"corpus_version", c.corpus_version}, {"seed", c.seed}, {"tasks", tasks}};
}

Corpus corpus_from_json(const json& j) {
    require_exact_keys(j, {"corpus_version", "seed", "tasks"}, "corpus");
    if (!j.at("corpus_version").is_number_integer() || j.at("corpus_version").get<int>() != kCorpusVersion) {
        throw MalformedCorpus("unsupported corpus_version");
    }
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
        throw MalformedCorpus("seed must be an integer");
    }
    if (!j.at("tasks").is_array()) throw MalformedCorpus("tasks must be an array");
    Corpus c;
    c.corpus_version = j.at("corpus_version").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("tasks")) c.tasks.push_back(tj.get<TaskSpec>());
    if (auto problems = validate_corpus(c); !problems.empty()) {
        throw MalformedCorpus(problems.front());
    }
    return c;
}

std::string serialize_corpus(const Corpus& c) { return corpus_to_json(c).dump(2) + "\n"; }

void save_corpus(const Corpus& c, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write corpus to " + path.string());
    out << serialize_corpus(c);
}

Corpus parse_corpus(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedCorpus(std::string("corpus is not valid JSON: ") + e.what());
    }
    try {
        return corpus_from_json(j);
    } catch (const json::exception& e) {
        throw MalformedCorpus(std::string("corpus schema violation: ") + e.what());
    }
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedCorpus("cannot open corpus file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_corpus(buf.str());
}

std::vector<std::string> category_warnings(const Corpus& c) {
    std::map<Category, int> hist;
    for (const auto& t : c.tasks) ++hist[t.category];
    if (hist[Category::Static] == 35 && hist[Category::Modal] == 10 && hist[Category::Thermal] == 5) {
        return {};
    }
    return {"category histogram (static " + std::to_string(hist[Category::Static]) + ", modal " +
            std::to_string(hist[Category::Modal]) + ", thermal " + std::to_string(hist[Category::Thermal]) +
            ") differs from the standard 35/10/5 split"};
}

std::vector<std::string> validate_corpus(const Corpus& c) {
    std::vector<std::string> problems;
    std::set<int> seen;
    for (const auto& t : c.tasks) {
        const std::string where = "task " + std::to_string(t.case_id);
        if (t.case_id < 1) problems.push_back(where + ": case_id must be positive");
        if (!seen.insert(t.case_id).second) problems.push_back("duplicate case_id " + std::to_string(t.case_id));
        if (t.prompt.empty()) problems.push_back(where + ": empty prompt");
        const auto& fp = t.fault_profile;
        std::set<FaultClass> injected(fp.injected_faults.begin(), fp.injected_faults.end());
        if (injected.size() != fp.injected_faults.size()) problems.push_back(where + ": repeated injected fault");
        if (!std::is_sorted(fp.injected_faults.begin(), fp.injected_faults.end())) {
            problems.push_back(where + ": injected faults out of evaluation order");
        }
        for (auto f : fp.rule_resolvable) {
            if (!injected.count(f)) problems.push_back(where + ": rule_resolvable not a subset of injected faults");
        }
        for (auto f : fp.model_resolvable) {
            if (!injected.count(f)) problems.push_back(where + ": model_resolvable not a subset of injected faults");
        }
        if (t.hard) {
            const bool has_unresolvable = std::any_of(injected.begin(), injected.end(), [&](FaultClass f) {
                return !fp.rule_resolvable.count(f) && !fp.model_resolvable.count(f);
            });
            if (!has_unresolvable) problems.push_back(where + ": hard task without an unresolvable fault");
        }
        if (t.geometry.element_size_mm <= 0) problems.push_back(where + ": element size must be positive");
    }
    return problems;
}

}  // namespace apdlh
