#include "apdlh/service.hpp"

#include "apdlh/errors.hpp"

#include <httplib.h>

#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

namespace apdlh {

using nlohmann::json;

void ModuleRegistry::add(ModuleDescriptor d) {
    const auto key = d.key;
    modules_[key] = std::move(d);
}

const ModuleDescriptor* ModuleRegistry::find(const std::string& key) const {
    auto it = modules_.find(key);
    return it == modules_.end() ? nullptr : &it->second;
}

std::vector<std::string> ModuleRegistry::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : modules_) out.push_back(k);
    return out;
}

ModuleRegistry ModuleRegistry::with_default_modules() {
    ModuleRegistry r;
    r.add({"mapdl", "APDL script generation and recovery against the MAPDL solver backend"});
    return r;
}

namespace {

struct Entry {
    PlannedRun run;
    std::uint64_t seed = 0;
    std::string state = "queued";  // queued, running, succeeded, failed, escalated, error
    std::optional<CaseRunRecord> record;
    std::optional<ScoredRun> scored;
    std::string error;
};

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
}

bool terminal(const std::string& state) { return state != "queued" && state != "running"; }

}  // namespace

struct BenchService::Impl {
    ServiceConfig config;
    httplib::Server server;
    std::thread listener;

    std::mutex mu;
    std::condition_variable cv_work;
    std::condition_variable cv_idle;
    std::map<std::string, Entry> entries;
    std::deque<std::string> queue;
    int busy = 0;
    bool stopping = false;
    std::vector<std::thread> workers;

    explicit Impl(ServiceConfig c) : config(std::move(c)) {
        routes();
        const int n = std::max(1, config.workers);
        for (int i = 0; i < n; ++i) workers.emplace_back([this] { work(); });
    }

    ~Impl() {
        server.stop();
        if (listener.joinable()) listener.join();
        {
            std::lock_guard lock(mu);
            stopping = true;
        }
        cv_work.notify_all();
        for (auto& w : workers) w.join();
    }

    void work() {
        for (;;) {
            std::string id;
            Entry snapshot;
            {
                std::unique_lock lock(mu);
                cv_work.wait(lock, [&] { return stopping || !queue.empty(); });
                if (stopping) return;
                id = queue.front();
                queue.pop_front();
                ++busy;
                entries.at(id).state = "running";
                snapshot = entries.at(id);
            }
            Entry done = snapshot;
            try {
                const auto& task = config.corpus.task(snapshot.run.case_id);
                done.record = execute_planned_run(task, snapshot.run, snapshot.seed, config.env, config.out_dir);
                done.scored = score_with_oracle(*done.record, task, config.out_dir);
                done.state = done.record->status;
            } catch (const std::exception& e) {
                done.state = "error";
                done.error = e.what();
            }
            {
                std::lock_guard lock(mu);
                entries[id] = std::move(done);
                --busy;
            }
            cv_idle.notify_all();
        }
    }

    // Parses a submission into planned runs; throws std::invalid_argument with
    // a client-facing message.
    std::vector<std::pair<PlannedRun, std::uint64_t>> parse_submission(const json& body) const {
        if (!body.is_object()) throw std::invalid_argument("body must be a JSON object");
        std::vector<std::pair<PlannedRun, std::uint64_t>> out;
        const auto strategy_of = [](const json& j) {
            if (!j.is_string()) throw std::invalid_argument("strategy must be a string");
            auto p = parse_policy(j.get<std::string>());
            if (!p) throw std::invalid_argument("unknown strategy '" + j.get<std::string>() + "'");
            return *p;
        };
        const auto int_of = [](const json& j, const char* what) {
            if (!j.is_number_integer()) throw std::invalid_argument(std::string(what) + " must be an integer");
            return j.get<long long>();
        };
        const auto known_case = [&](long long id) {
            for (const auto& t : config.corpus.tasks) {
                if (t.case_id == id) return static_cast<int>(id);
            }
            throw std::invalid_argument("unknown case_id " + std::to_string(id));
        };
        const auto seed_of = [&](const json& j) -> std::uint64_t {
            if (!j.contains("seed")) return config.default_seed;
            if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer()) {
                throw std::invalid_argument("seed must be a non-negative integer");
            }
            const auto s = j.at("seed").get<long long>();
            if (s < 0) throw std::invalid_argument("seed must be a non-negative integer");
            return j.at("seed").get<std::uint64_t>();
        };

        if (body.contains("plan")) {
            const auto& plan = body.at("plan");
            if (!plan.is_object() || !plan.contains("strategies") || !plan.at("strategies").is_array()) {
                throw std::invalid_argument("plan needs a strategies array");
            }
            std::vector<Policy> strategies;
            for (const auto& s : plan.at("strategies")) strategies.push_back(strategy_of(s));
            const int repeats = plan.contains("repeats") ? static_cast<int>(int_of(plan.at("repeats"), "repeats")) : 3;
            if (repeats < 1 || strategies.empty()) throw std::invalid_argument("plan needs strategies and repeats >= 1");
            const auto seed = seed_of(plan);
            Corpus subset;
            if (plan.contains("case_ids")) {
                if (!plan.at("case_ids").is_array()) throw std::invalid_argument("case_ids must be an array");
                for (const auto& id : plan.at("case_ids")) {
                    subset.tasks.push_back(config.corpus.task(known_case(int_of(id, "case_id"))));
                }
            } else {
                subset = config.corpus;
            }
            for (auto& r : expand_plan(subset, strategies, repeats, seed)) out.emplace_back(std::move(r), seed);
            return out;
        }
        if (!body.contains("case_id") || !body.contains("strategy")) {
            throw std::invalid_argument("expected {case_id, strategy[, seed, repeat]} or {plan: {...}}");
        }
        PlannedRun r;
        r.case_id = known_case(int_of(body.at("case_id"), "case_id"));
        r.strategy = strategy_of(body.at("strategy"));
        r.repeat = body.contains("repeat") ? static_cast<int>(int_of(body.at("repeat"), "repeat")) : 1;
        if (r.repeat < 1) throw std::invalid_argument("repeat must be >= 1");
        const auto seed = seed_of(body);
        r.run_id = make_run_id(r.case_id, r.strategy, r.repeat, seed);
        out.emplace_back(std::move(r), seed);
        return out;
    }

    json status_json(const std::string& id, const Entry& e) const {
        json j{{"run_id", id},
               {"case_id", e.run.case_id},
               {"strategy", std::string(to_string(e.run.strategy))},
               {"repeat", e.run.repeat},
               {"seed", e.seed},
               {"status", e.state}};
        if (e.record) j["record"] = to_json(*e.record);
        if (e.scored) {
            j["scores"] = json{{"completed", e.scored->completed}, {"t", e.scored->t}, {"a", e.scored->a},
                               {"e", e.scored->e},                 {"q", e.scored->q}, {"retries", e.scored->retries}};
        }
        if (!e.error.empty()) j["error"] = e.error;
        return j;
    }

    json summary_json() {
        std::vector<ScoredRun> done;
        {
            std::lock_guard lock(mu);
            for (const auto& [_, e] : entries) {
                if (terminal(e.state) && e.scored) done.push_back(*e.scored);
            }
        }
        json out = json::object();
        if (done.empty()) return out;
        sort_scored_runs(done);
        for (const auto& [name, runs] : group_by_strategy(done)) {
            int completed = 0, zero_touch = 0;
            double q = 0;
            for (const auto& r : runs) {
                completed += r.completed;
                zero_touch += r.a == 3;
                q += r.q;
            }
            const double n = static_cast<double>(runs.size());
            out[name] = json{{"N", runs.size()}, {"completed", completed}, {"R", completed / n}, {"Q", q / n},
                             {"Z", zero_touch / n}};
        }
        return out;
    }

    void routes() {
        server.Post(R"(/v1/modules/([^/]+)/runs)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string key = req.matches[1];
            if (!config.registry.find(key)) {
                send_error(res, 404, "MODULE_NOT_FOUND", "no module registered under '" + key + "'");
                return;
            }
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) {
                send_error(res, 400, "MALFORMED_BODY", "body is not valid JSON");
                return;
            }
            std::vector<std::pair<PlannedRun, std::uint64_t>> runs;
            try {
                runs = parse_submission(body);
            } catch (const std::exception& e) {
                send_error(res, 400, "MALFORMED_BODY", e.what());
                return;
            }
            json ids = json::array();
            {
                std::lock_guard lock(mu);
                std::set<std::string> fresh;
                for (const auto& [r, _] : runs) {
                    if (entries.count(r.run_id) || !fresh.insert(r.run_id).second) {
                        send_error(res, 409, "DUPLICATE_RUN", "run " + r.run_id + " was already submitted");
                        return;
                    }
                }
                for (auto& [r, seed] : runs) {
                    ids.push_back(r.run_id);
                    Entry e;
                    e.run = r;
                    e.seed = seed;
                    entries.emplace(r.run_id, std::move(e));
                    queue.push_back(r.run_id);
                }
            }
            cv_work.notify_all();
            res.status = 202;
            res.set_content(json{{"module", key}, {"run_ids", ids}, {"status", "queued"}}.dump(), "application/json");
        });

        server.Get(R"(/v1/runs/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            std::optional<Entry> e;
            {
                std::lock_guard lock(mu);
                auto it = entries.find(id);
                if (it != entries.end()) e = it->second;
            }
            if (!e) {
                send_error(res, 404, "RUN_NOT_FOUND", "unknown run " + id);
                return;
            }
            std::ifstream in(trace_path(config.out_dir, id), std::ios::binary);
            std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
            res.status = 200;
            res.set_content(text, "application/x-ndjson");
        });

        server.Get(R"(/v1/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            std::lock_guard lock(mu);
            auto it = entries.find(id);
            if (it == entries.end()) {
                send_error(res, 404, "RUN_NOT_FOUND", "unknown run " + id);
                return;
            }
            res.status = 200;
            res.set_content(status_json(id, it->second).dump(), "application/json");
        });

        server.Get("/v1/reports/summary", [this](const httplib::Request&, httplib::Response& res) {
            res.status = 200;
            res.set_content(summary_json().dump(), "application/json");
        });

        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            const std::string code = res.status == 404 ? "NOT_FOUND" : "HTTP_" + std::to_string(res.status);
            res.set_content(json{{"code", code}, {"message", "no such endpoint"}}.dump(), "application/json");
        });
    }
};

BenchService::BenchService(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    std::filesystem::create_directories(impl_->config.out_dir);
}

BenchService::~BenchService() = default;

int BenchService::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void BenchService::serve_forever(const std::string& host, int port) {
    if (!impl_->server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    impl_->server.listen_after_bind();
}

void BenchService::stop() { impl_->server.stop(); }

void BenchService::wait_idle() {
    std::unique_lock lock(impl_->mu);
    impl_->cv_idle.wait(lock, [&] { return impl_->queue.empty() && impl_->busy == 0; });
}

}  // namespace apdlh
