#include "apdlh/summary.hpp"

#include "apdlh/errors.hpp"
#include "apdlh/recovery.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace apdlh {

using nlohmann::json;

namespace {

int strategy_rank(const std::string& s) {
    auto p = parse_policy(s);
    return p ? static_cast<int>(*p) : 100;
}

std::vector<std::string> canonical_order(const std::map<std::string, std::vector<ScoredRun>>& by) {
    std::vector<std::string> names;
    for (const auto& [k, _] : by) names.push_back(k);
    std::sort(names.begin(), names.end(), [](const auto& x, const auto& y) {
        return std::pair(strategy_rank(x), x) < std::pair(strategy_rank(y), y);
    });
    return names;
}

std::vector<double> metric_values(const std::vector<ScoredRun>& runs, Metric m) {
    std::vector<double> v;
    v.reserve(runs.size());
    for (const auto& r : runs) v.push_back(m == Metric::Q ? r.q : r.t);
    return v;
}

std::string fmt(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

StrategySummary aggregate(const std::vector<ScoredRun>& runs, const CategoryOf& categories) {
    if (runs.empty()) throw EmptySample("aggregate needs at least one record");
    StrategySummary s;
    s.strategy = runs.front().strategy;

    std::map<int, std::set<int>> repeats_of;
    for (const auto& r : runs) {
        if (r.strategy != s.strategy) throw std::invalid_argument("aggregate takes one strategy at a time");
        if (!repeats_of[r.case_id].insert(r.repeat).second) {
            throw UnevenRepeats("case " + std::to_string(r.case_id) + " repeat " + std::to_string(r.repeat) +
                                " appears twice");
        }
    }
    const auto& reference = repeats_of.begin()->second;
    for (const auto& [id, reps] : repeats_of) {
        if (reps != reference) throw UnevenRepeats("case " + std::to_string(id) + " has a different repeat set");
    }

    s.N = static_cast<int>(runs.size());
    s.repeats = static_cast<int>(reference.size());
    int zero_touch = 0;
    double q_sum = 0;
    std::vector<double> qs;
    std::map<Category, std::pair<int, double>> type_acc;  // completed, q sum
    std::map<int, int> case_completed;
    std::map<int, std::pair<int, int>> by_repeat;  // completed, n
    for (const auto& r : runs) {
        auto cat = categories.find(r.case_id);
        if (cat == categories.end()) throw ConfigError("no category known for case " + std::to_string(r.case_id));
        s.completed += r.completed;
        zero_touch += r.a == 3 ? 1 : 0;
        q_sum += r.q;
        qs.push_back(r.q);
        auto& tb = s.per_type[cat->second];
        tb.n += 1;
        type_acc[cat->second].first += r.completed;
        type_acc[cat->second].second += r.q;
        case_completed[r.case_id] += r.completed;
        by_repeat[r.repeat].first += r.completed;
        by_repeat[r.repeat].second += 1;
    }
    s.R = static_cast<double>(s.completed) / s.N;
    s.R_ci = binomial_ci(s.completed, s.N);
    s.Q = q_sum / s.N;
    s.Z = static_cast<double>(zero_touch) / s.N;
    for (auto& [cat, tb] : s.per_type) {
        tb.R = static_cast<double>(type_acc[cat].first) / tb.n;
        tb.Q = type_acc[cat].second / tb.n;
    }
    s.q_quartiles = quartiles(qs);
    for (const auto& [rep, cn] : by_repeat) s.R_by_repeat[rep] = static_cast<double>(cn.first) / cn.second;

    int majority = 0;
    for (const auto& [id, done] : case_completed) {
        if (2 * done > s.repeats) {
            ++majority;
            continue;
        }
        s.failed_case_ids.push_back(id);
        ++s.failures.total;
        switch (categories.at(id)) {
            case Category::Static: ++s.failures.static_cases; break;
            case Category::Thermal: ++s.failures.thermal_cases; break;
            case Category::Modal: ++s.failures.modal_cases; break;
        }
    }
    s.majority_case_rate = static_cast<double>(majority) / static_cast<double>(case_completed.size());
    return s;
}

std::string_view to_string(Metric m) noexcept { return m == Metric::Q ? "q" : "t"; }

std::optional<Metric> parse_metric(std::string_view s) noexcept {
    if (s == "q") return Metric::Q;
    if (s == "t") return Metric::T;
    return std::nullopt;
}

PairComparison compare(const std::string& a, const std::vector<ScoredRun>& runs_a, const std::string& b,
                       const std::vector<ScoredRun>& runs_b, Metric metric) {
    const auto x = metric_values(runs_a, metric);
    const auto y = metric_values(runs_b, metric);
    PairComparison c;
    c.a = a;
    c.b = b;
    c.metric = metric;
    c.delta = cliffs_delta(x, y);
    c.label = effect_label(c.delta);
    c.prob_superiority = prob_superiority(c.delta);
    c.mode = x.size() + y.size() <= kMaxExactPooled ? MwMode::Exact : MwMode::NormalApprox;
    const auto mw = mann_whitney_u(x, y, c.mode);
    c.u = mw.u;
    c.p = mw.p;
    return c;
}

std::map<std::string, std::vector<ScoredRun>> group_by_strategy(const std::vector<ScoredRun>& runs) {
    std::map<std::string, std::vector<ScoredRun>> out;
    for (const auto& r : runs) out[r.strategy].push_back(r);
    return out;
}

namespace {

std::vector<std::string> rank_by_wins(const std::vector<std::string>& names,
                                      const std::map<std::string, std::vector<double>>& samples) {
    std::map<std::string, int> wins;
    std::map<std::string, double> means;
    for (const auto& n : names) {
        wins[n] = 0;
        means[n] = mean(samples.at(n));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            const double d = cliffs_delta(samples.at(names[i]), samples.at(names[j]));
            if (d > 0) ++wins[names[i]];
            if (d < 0) ++wins[names[j]];
        }
    }
    auto order = names;
    std::stable_sort(order.begin(), order.end(), [&](const auto& x, const auto& y) {
        if (wins[x] != wins[y]) return wins[x] > wins[y];
        return means[x] > means[y];
    });
    return order;
}

}  // namespace

SensitivityReport per_task_sensitivity(const std::map<std::string, std::vector<ScoredRun>>& by_strategy) {
    SensitivityReport rep;
    const auto names = canonical_order(by_strategy);
    if (names.empty()) {
        rep.insufficient_tasks = true;
        rep.note = "no strategies";
        return rep;
    }

    std::map<std::string, std::vector<double>> run_level;
    std::map<std::string, std::map<int, std::pair<double, int>>> task_acc;
    for (const auto& n : names) {
        for (const auto& r : by_strategy.at(n)) {
            run_level[n].push_back(r.q);
            auto& acc = task_acc[n][r.case_id];
            acc.first += r.q;
            acc.second += 1;
        }
    }
    std::set<int> shared;
    for (const auto& [id, _] : task_acc[names.front()]) shared.insert(id);
    for (const auto& n : names) {
        std::set<int> ids;
        for (const auto& [id, _] : task_acc[n]) {
            if (shared.count(id)) ids.insert(id);
        }
        shared = std::move(ids);
    }

    rep.run_ranking = rank_by_wins(names, run_level);
    if (shared.size() < 2) {
        rep.insufficient_tasks = true;
        rep.note = "fewer than two shared tasks; per-task comparison skipped";
        return rep;
    }
    std::map<std::string, std::vector<double>> task_level;
    for (const auto& n : names) {
        for (int id : shared) {
            const auto& acc = task_acc[n][id];
            task_level[n].push_back(acc.first / acc.second);
        }
    }
    rep.task_ranking = rank_by_wins(names, task_level);
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            SensitivityPair p;
            p.a = names[j];
            p.b = names[i];
            p.run_delta = cliffs_delta(run_level[p.a], run_level[p.b]);
            p.task_delta = cliffs_delta(task_level[p.a], task_level[p.b]);
            const auto sign = [](double d) { return (d > 0) - (d < 0); };
            p.same_sign = sign(p.run_delta) == sign(p.task_delta);
            rep.pairs.push_back(p);
        }
    }
    rep.ranking_match = rep.run_ranking == rep.task_ranking;
    rep.note = rep.ranking_match ? "ranking unchanged at task level" : "ranking differs at task level";
    return rep;
}

BenchmarkReport build_report(const std::vector<ScoredRun>& runs, const CategoryOf& categories) {
    BenchmarkReport rep;
    const auto by = group_by_strategy(runs);
    const auto names = canonical_order(by);
    for (const auto& n : names) rep.summaries.push_back(aggregate(by.at(n), categories));
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            rep.comparisons.push_back(compare(names[j], by.at(names[j]), names[i], by.at(names[i]), Metric::Q));
        }
    }
    rep.sensitivity = per_task_sensitivity(by);
    return rep;
}

json to_json(const StrategySummary& s) {
    json per_type = json::object();
    for (const auto& [cat, tb] : s.per_type) {
        per_type[std::string(to_string(cat))] = json{{"n", tb.n}, {"R", tb.R}, {"Q", tb.Q}};
    }
    json by_rep = json::object();
    for (const auto& [rep, r] : s.R_by_repeat) by_rep[std::to_string(rep)] = r;
    return json{{"strategy", s.strategy},
                {"N", s.N},
                {"repeats", s.repeats},
                {"completed", s.completed},
                {"R", s.R},
                {"R_ci", {s.R_ci.lo, s.R_ci.hi}},
                {"Q", s.Q},
                {"Z", s.Z},
                {"per_type", per_type},
                {"q_quartiles", {{"q1", s.q_quartiles.q1}, {"median", s.q_quartiles.median}, {"q3", s.q_quartiles.q3}}},
                {"majority_case_rate", s.majority_case_rate},
                {"failed_case_ids", s.failed_case_ids},
                {"failure_distribution",
                 {{"total", s.failures.total},
                  {"static", s.failures.static_cases},
                  {"thermal", s.failures.thermal_cases},
                  {"modal", s.failures.modal_cases}}},
                {"R_by_repeat", by_rep}};
}

json to_json(const PairComparison& c) {
    return json{{"a", c.a},
                {"b", c.b},
                {"metric", std::string(to_string(c.metric))},
                {"delta", c.delta},
                {"label", std::string(to_string(c.label))},
                {"prob_superiority", c.prob_superiority},
                {"U", c.u},
                {"p", c.p},
                {"p_mode", c.mode == MwMode::Exact ? "exact" : "normal"}};
}

json to_json(const SensitivityReport& r) {
    json pairs = json::array();
    for (const auto& p : r.pairs) {
        pairs.push_back(json{{"a", p.a}, {"b", p.b}, {"run_delta", p.run_delta}, {"task_delta", p.task_delta},
                             {"same_sign", p.same_sign}});
    }
    return json{{"run_ranking", r.run_ranking},   {"task_ranking", r.task_ranking},
                {"pairs", pairs},                 {"ranking_match", r.ranking_match},
                {"insufficient_tasks", r.insufficient_tasks}, {"note", r.note}};
}

json to_json(const BenchmarkReport& r) {
    json sums = json::array();
    for (const auto& s : r.summaries) sums.push_back(to_json(s));
    json comps = json::array();
    for (const auto& c : r.comparisons) comps.push_back(to_json(c));
    return json{{"strategies", sums}, {"comparisons", comps}, {"sensitivity", to_json(r.sensitivity)}};
}

std::string render_json(const BenchmarkReport& r) { return to_json(r).dump(2) + "\n"; }

std::string render_csv(const BenchmarkReport& r) {
    std::ostringstream out;
    out << "strategy,N,R,R_ci_lo,R_ci_hi,Q,Z,q_median,q_q1,q_q3,majority_case_rate,"
           "failed_total,failed_static,failed_thermal,failed_modal\n";
    for (const auto& s : r.summaries) {
        out << s.strategy << ',' << s.N << ',' << fmt(s.R, 4) << ',' << fmt(s.R_ci.lo, 3) << ','
            << fmt(s.R_ci.hi, 3) << ',' << fmt(s.Q, 4) << ',' << fmt(s.Z, 4) << ',' << fmt(s.q_quartiles.median, 2)
            << ',' << fmt(s.q_quartiles.q1, 2) << ',' << fmt(s.q_quartiles.q3, 2) << ','
            << fmt(s.majority_case_rate, 4) << ',' << s.failures.total << ',' << s.failures.static_cases << ','
            << s.failures.thermal_cases << ',' << s.failures.modal_cases << '\n';
    }
    return out.str();
}

std::string render_markdown(const BenchmarkReport& r) {
    std::ostringstream out;
    out << "# Benchmark report\n\n## Overall results\n\n"
        << "| Strategy | N | R | 95% CI | Q | Z | median q | IQR | majority-case rate |\n"
        << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& s : r.summaries) {
        out << "| " << s.strategy << " | " << s.N << " | " << fmt(s.R, 4) << " | " << fmt(s.R_ci.lo, 3) << "–"
            << fmt(s.R_ci.hi, 3) << " | " << fmt(s.Q, 2) << " | " << fmt(s.Z, 4) << " | "
            << fmt(s.q_quartiles.median, 2) << " | " << fmt(s.q_quartiles.q1, 2) << "–" << fmt(s.q_quartiles.q3, 2)
            << " | " << fmt(s.majority_case_rate, 4) << " |\n";
    }

    out << "\n## Failed-case distribution\n\n"
        << "| Strategy | Total | Static | Thermal | Modal | Case ids |\n|---|---|---|---|---|---|\n";
    for (const auto& s : r.summaries) {
        std::string ids;
        for (int id : s.failed_case_ids) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
        out << "| " << s.strategy << " | " << s.failures.total << " | " << s.failures.static_cases << " | "
            << s.failures.thermal_cases << " | " << s.failures.modal_cases << " | " << ids << " |\n";
    }

    out << "\n## By simulation type\n\n| Strategy | Type | n | R | Q |\n|---|---|---|---|---|\n";
    for (const auto& s : r.summaries) {
        for (const auto& [cat, tb] : s.per_type) {
            out << "| " << s.strategy << " | " << to_string(cat) << " | " << tb.n << " | " << fmt(tb.R, 4) << " | "
                << fmt(tb.Q, 2) << " |\n";
        }
    }

    out << "\n## Pairwise comparisons (q)\n\n"
        << "| A vs B | delta | effect | P(A>B) | U | p | p method |\n|---|---|---|---|---|---|---|\n";
    for (const auto& c : r.comparisons) {
        char p[32];
        std::snprintf(p, sizeof p, "%.3g", c.p);
        out << "| " << c.a << " vs " << c.b << " | " << fmt(c.delta, 3) << " | " << to_string(c.label) << " | "
            << fmt(c.prob_superiority, 3) << " | " << fmt(c.u, 1) << " | " << p << " | "
            << (c.mode == MwMode::Exact ? "exact" : "normal") << " |\n";
    }

    const auto& sens = r.sensitivity;
    out << "\n## Per-task sensitivity\n\n";
    const auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : " > ") + x;
        return s;
    };
    out << "- run-level ranking: " << join(sens.run_ranking) << "\n";
    if (sens.insufficient_tasks) {
        out << "- insufficient tasks: " << sens.note << "\n";
    } else {
        out << "- task-level ranking: " << join(sens.task_ranking) << "\n"
            << "- ranking match: " << (sens.ranking_match ? "yes" : "no") << "\n";
        for (const auto& p : sens.pairs) {
            out << "- " << p.a << " vs " << p.b << ": run delta " << fmt(p.run_delta, 3) << ", task delta "
                << fmt(p.task_delta, 3) << (p.same_sign ? "" : " (sign flips)") << "\n";
        }
    }
    return out.str();
}

}  // namespace apdlh
