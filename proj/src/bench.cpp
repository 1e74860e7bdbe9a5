#include "apdlh/bench.hpp"

#include "apdlh/errors.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

namespace apdlh {

using nlohmann::json;
namespace fs = std::filesystem;

Collaborators make_collaborators(const RunEnvironment& env, std::uint64_t seed, int repeat) {
    Collaborators c;
    if (env.gateway) {
        c.model = std::make_shared<GatewayModelClient>(*env.gateway);
    } else {
        c.model = std::make_shared<ScriptedModelClient>(env.competence, run_seed(seed, repeat), env.stop_propensity);
    }
    c.backend = select_backend(env.backend);
    return c;
}

json to_json(const BenchmarkPlan& plan) {
    json strategies = json::array();
    for (auto s : plan.strategies) strategies.push_back(std::string(to_string(s)));
    return json{{"corpus", plan.corpus_path.string()},
                {"strategies", strategies},
                {"repeats", plan.repeats},
                {"seed", plan.seed},
                {"parallelism", plan.parallelism},
                {"scorer", plan.ratings.empty() ? "oracle" : "ratings"}};
}

std::vector<PlannedRun> expand_plan(const Corpus& corpus, const std::vector<Policy>& strategies, int repeats,
                                    std::uint64_t seed) {
    std::vector<PlannedRun> out;
    for (const auto& task : corpus.tasks) {
        for (auto s : strategies) {
            for (int r = 1; r <= repeats; ++r) {
                out.push_back({task.case_id, s, r, make_run_id(task.case_id, s, r, seed)});
            }
        }
    }
    return out;
}

fs::path record_path(const fs::path& out_dir, const std::string& run_id) {
    return out_dir / "records" / (run_id + ".json");
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw std::runtime_error("cannot write " + tmp);
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

CaseRunRecord execute_planned_run(const TaskSpec& task, const PlannedRun& run, std::uint64_t seed,
                                  const RunEnvironment& env, const fs::path& out_dir,
                                  std::shared_ptr<std::atomic<long>> step_allowance) {
    const auto rec_path = record_path(out_dir, run.run_id);
    if (fs::exists(rec_path)) return case_run_record_from_json(json::parse(read_text(rec_path)));

    RunOptions opts;
    opts.out_dir = out_dir;
    opts.tool_timeout = env.tool_timeout;
    opts.step_allowance = std::move(step_allowance);
    const auto config = StrategyConfig::for_policy(run.strategy);
    const auto record = run_case(task, config, make_collaborators(env, seed, run.repeat), opts, run.repeat, seed);
    write_text(rec_path, to_json(record).dump(2) + "\n");
    return record;
}

ScoredRun score_with_oracle(const CaseRunRecord& record, const TaskSpec& task, const fs::path& out_dir) {
    const auto trace = read_trace(out_dir / record.trace_ref);
    return score_run(record, trace, oracle_completion_score(record, expected_plot_count(task)));
}

CategoryOf categories_of(const Corpus& corpus) {
    CategoryOf out;
    for (const auto& t : corpus.tasks) out[t.case_id] = t.category;
    return out;
}

BenchResult run_benchmark(const BenchmarkPlan& plan, std::ostream& log) {
    BenchResult res;
    Corpus corpus;
    std::vector<RaterRow> sheet;
    try {
        if (plan.strategies.empty()) throw ConfigError("no strategies given");
        if (plan.repeats < 1) throw ConfigError("repeats must be at least 1");
        if (plan.parallelism < 1) throw ConfigError("parallelism must be at least 1");
        if (plan.out_dir.empty()) throw ConfigError("no output directory given");
        if (!plan.oracle_scorer && plan.ratings.empty()) throw ConfigError("no scorer: pass --oracle-scorer or --ratings");
        corpus = plan.corpus_path.empty() ? generate_default_corpus(plan.seed) : load_corpus(plan.corpus_path);
        if (!plan.ratings.empty()) sheet = load_rater_sheet(plan.ratings);
        for (const auto& w : category_warnings(corpus)) log << "warning: " << w << '\n';
    } catch (const Error& e) {
        res.exit_code = kExitConfig;
        res.errors.push_back(e.what());
        log << "config error: " << e.what() << '\n';
        return res;
    }

    fs::create_directories(plan.out_dir);
    write_text(plan.out_dir / "corpus.json", serialize_corpus(corpus));
    write_text(plan.out_dir / "plan.json", to_json(plan).dump(2) + "\n");

    const auto runs = expand_plan(corpus, plan.strategies, plan.repeats, plan.seed);
    std::vector<std::optional<CaseRunRecord>> records(runs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> interrupted{false};
    std::mutex err_mu;

    const auto worker = [&]() {
        for (;;) {
            if (interrupted.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            const auto& run = runs[i];
            try {
                records[i] = execute_planned_run(corpus.task(run.case_id), run, plan.seed, plan.env, plan.out_dir,
                                                 plan.step_allowance);
            } catch (const RunInterrupted&) {
                interrupted = true;
                return;
            } catch (const std::exception& e) {
                std::lock_guard lock(err_mu);
                res.errors.push_back("run " + run.run_id + " (case " + std::to_string(run.case_id) + ", " +
                                     std::string(to_string(run.strategy)) + ", repeat " +
                                     std::to_string(run.repeat) + "): " + e.what());
            }
        }
    };
    const int n_workers = std::min<int>(plan.parallelism, static_cast<int>(std::max<std::size_t>(runs.size(), 1)));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (interrupted) {
        res.exit_code = kExitInterrupted;
        log << "interrupted; rerun the same command to resume\n";
        return res;
    }
    if (!res.errors.empty()) {
        std::sort(res.errors.begin(), res.errors.end());
        for (const auto& e : res.errors) log << "error: " << e << '\n';
        res.exit_code = kExitInvariant;
        return res;
    }

    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& rec = *records[i];
        res.records.push_back(rec);
        const auto& task = corpus.task(rec.case_id);
        ScoredRun s = score_with_oracle(rec, task, plan.out_dir);
        if (!plan.ratings.empty()) {
            auto t = consensus_t(sheet, rec.case_id, rec.strategy, rec.repeat_index);
            if (!t) {
                res.exit_code = kExitConfig;
                res.errors.push_back("no rating for case " + std::to_string(rec.case_id) + " " + rec.strategy +
                                     " repeat " + std::to_string(rec.repeat_index));
                log << "config error: " << res.errors.back() << '\n';
                return res;
            }
            s = score_run(rec, read_trace(plan.out_dir / rec.trace_ref), *t);
        }
        res.scored.push_back(s);
    }
    sort_scored_runs(res.scored);
    save_scored_runs(plan.out_dir / "scored_runs.csv", res.scored);

    const auto lint = lint_runs(plan.out_dir);
    if (!lint.clean()) {
        for (const auto& d : lint.details) log << "lint: " << d << '\n';
        res.errors.insert(res.errors.end(), lint.details.begin(), lint.details.end());
        res.exit_code = kExitInvariant;
    }

    const auto report = build_report(res.scored, categories_of(corpus));
    write_text(plan.out_dir / "report.md", render_markdown(report));
    write_text(plan.out_dir / "report.json", render_json(report));
    write_text(plan.out_dir / "summary.csv", render_csv(report));
    log << "completed " << res.records.size() << " case-runs; outputs in " << plan.out_dir.string() << '\n';
    return res;
}

std::vector<CaseRunRecord> load_records(const fs::path& runs_dir) {
    std::vector<CaseRunRecord> out;
    const auto dir = runs_dir / "records";
    if (!fs::is_directory(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(case_run_record_from_json(json::parse(read_text(f))));
    return out;
}

LintSummary lint_runs(const fs::path& runs_dir) {
    LintSummary sum;
    for (const auto& rec : load_records(runs_dir)) {
        auto policy = parse_policy(rec.strategy);
        if (!policy) {
            ++sum.structure_violations;
            sum.details.push_back(rec.run_id + ": unknown strategy " + rec.strategy);
            continue;
        }
        ++sum.traces;
        std::vector<TraceEvent> events;
        try {
            events = read_trace(runs_dir / rec.trace_ref);
        } catch (const Error& e) {
            ++sum.structure_violations;
            sum.details.push_back(rec.run_id + ": " + e.what());
            continue;
        }
        const auto r = lint_trace(events, StrategyConfig::for_policy(*policy));
        sum.pairing_violations += static_cast<int>(r.pairing_violations.size());
        sum.budget_violations += static_cast<int>(r.budget_violations.size());
        sum.structure_violations += static_cast<int>(r.structure_violations.size());
        for (const auto* list : {&r.pairing_violations, &r.budget_violations, &r.structure_violations}) {
            for (const auto& v : *list) sum.details.push_back(rec.run_id + ": " + v);
        }
    }
    return sum;
}

int cmd_report(const fs::path& runs_dir, const std::string& format, std::ostream& out, std::ostream& err) {
    const auto csv = runs_dir / "scored_runs.csv";
    if (!fs::exists(csv)) {
        err << "no scored runs in " << runs_dir.string() << '\n';
        return kExitConfig;
    }
    try {
        const auto runs = load_scored_runs(csv);
        if (runs.empty()) {
            err << "scored-run CSV is empty\n";
            return kExitConfig;
        }
        const auto corpus = load_corpus(runs_dir / "corpus.json");
        const auto report = build_report(runs, categories_of(corpus));
        if (format == "md") out << render_markdown(report);
        else if (format == "json") out << render_json(report);
        else if (format == "csv") out << render_csv(report);
        else {
            err << "unknown format '" << format << "'\n";
            return kExitConfig;
        }
    } catch (const Error& e) {
        err << "report: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}

}  // namespace apdlh
