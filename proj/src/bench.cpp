#include "skillpatch/bench.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "skillpatch/common.hpp"

namespace skillpatch::bench {

namespace {

constexpr std::uint64_t kTaskStream = 20;
constexpr std::uint64_t kEpisodeStream = 21;
constexpr std::uint64_t kTrainStream = 30;
constexpr std::uint64_t kDoorStream = 40;

TrialRecord record_of(Method m, const orch::EpisodeLog& log, const TrialCell& cell, bool obstacle)
{
    TrialRecord r;
    r.method = m;
    r.shape = world::to_string(cell.shape);
    r.start_cell = cell.start_cell;
    r.obstacle = obstacle;
    r.outcome = log.outcome;
    r.error = log.error;
    r.seed = log.seed;
    r.anomalies = log.anomaly_step >= 0 ? 1 : 0;
    r.log = orch::to_json(log, true);
    return r;
}

world::TaskConfig task_config(const ExperimentSpec& spec, const TrialCell& cell)
{
    world::TaskConfig tc;
    tc.shape = cell.shape;
    tc.start_cell = cell.start_cell;
    tc.goal_cell = orch::goal_cell_for(cell.shape);
    tc.obstacle = spec.obstacle;
    tc.eps_percept = spec.config.eps_percept;
    tc.tol_insert = spec.config.tol_insert;
    tc.seed = task_seed(spec.seed, cell.index);
    return tc;
}

/// Fixed single demonstration for the baseline: exact perception at start cell 0.
dmp::DemoSource dmp_source()
{
    dmp::DemoSource src;
    src.task.shape = world::Shape::Rect;
    src.task.start_cell = 0;
    src.task.goal_cell = 5;
    src.task.obstacle = true;
    src.task.eps_percept = 0.0;
    src.seed = 1;
    return src;
}

orch::OrchestratorConfig training_config(const ExperimentSpec& spec)
{
    orch::OrchestratorConfig cfg = spec.config;
    cfg.obstacle = spec.obstacle;
    return cfg;
}

Json dmp_trace(world::WorldState w, const std::vector<world::Action>& actions)
{
    Json trace = Json::array();
    for (std::size_t t = 0; t < actions.size(); ++t) {
        w = world::step(w, actions[t]).world;
        trace.push_back(world::trace_record(static_cast<int>(t), w, actions[t], false));
    }
    return trace;
}

std::string fmt_fraction(int num, int den)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", den > 0 ? static_cast<double>(num) / den : 0.0);
    return buf;
}

}  // namespace

const char* to_string(Method m)
{
    switch (m) {
        case Method::Planner: return "planner";
        case Method::Dmp: return "dmp";
        case Method::Patched: return "patched";
    }
    return "?";
}

Method parse_method(const std::string& name)
{
    for (Method m : {Method::Planner, Method::Dmp, Method::Patched}) {
        if (name == to_string(m)) return m;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown method '" + name + "'");
}

void ExperimentSpec::validate() const
{
    if (trials_per_shape < 0 || trials_per_shape > 7) throw Error(ErrorCode::InvalidConfig, "trials_per_shape must be in [0, 7]");
    if (demos < 1) throw Error(ErrorCode::InvalidConfig, "demos must be at least 1");
    for (int c : demo_counts) {
        if (c < 1) throw Error(ErrorCode::InvalidConfig, "demo counts must be at least 1");
    }
    if (door_trials < 0) throw Error(ErrorCode::InvalidConfig, "door_trials must be non-negative");
    config.validate();
    dmp.validate();
}

Json to_json(const ExperimentSpec& s)
{
    Json shapes = Json::array();
    for (auto sh : s.shapes) shapes.push_back(world::to_string(sh));
    const dmp::DmpConfig& d = s.dmp;
    return Json{{"version", kConfigVersion},
                {"method", to_string(s.method)},
                {"shapes", shapes},
                {"trials_per_shape", s.trials_per_shape},
                {"obstacle", s.obstacle},
                {"demos", s.demos},
                {"demo_counts", s.demo_counts},
                {"seed", s.seed},
                {"door_trials", s.door_trials},
                {"orchestrator", orch::to_json(s.config)},
                {"dmp",
                 {{"alpha_z", d.alpha_z},
                  {"beta_z", d.beta_z},
                  {"tau", d.tau},
                  {"alpha_x", d.alpha_x},
                  {"K", d.K},
                  {"ridge_lambda", d.ridge_lambda},
                  {"z_amplitude_scale", d.z_amplitude_scale},
                  {"amplitude_guard", d.amplitude_guard}}}};
}

ExperimentSpec experiment_spec_from_json(const Json& j)
{
    ExperimentSpec s;
    try {
        const int version = j.value("version", kConfigVersion);
        if (version != kConfigVersion) {
            throw Error(ErrorCode::InvalidConfig, "unsupported config version " + std::to_string(version));
        }
        if (j.contains("method")) s.method = parse_method(j.at("method").get<std::string>());
        if (j.contains("shapes")) {
            s.shapes.clear();
            for (const auto& v : j.at("shapes")) s.shapes.push_back(world::shape_from_string(v.get<std::string>()));
        }
        s.trials_per_shape = j.value("trials_per_shape", s.trials_per_shape);
        s.obstacle = j.value("obstacle", s.obstacle);
        s.demos = j.value("demos", s.demos);
        if (j.contains("demo_counts")) s.demo_counts = j.at("demo_counts").get<std::vector<int>>();
        s.seed = j.value("seed", s.seed);
        s.door_trials = j.value("door_trials", s.door_trials);
        if (j.contains("orchestrator")) s.config = orch::orchestrator_config_from_json(j.at("orchestrator"));
        if (j.contains("dmp")) {
            const Json& d = j.at("dmp");
            s.dmp.alpha_z = d.value("alpha_z", s.dmp.alpha_z);
            s.dmp.beta_z = d.value("beta_z", s.dmp.beta_z);
            s.dmp.tau = d.value("tau", s.dmp.tau);
            s.dmp.alpha_x = d.value("alpha_x", s.dmp.alpha_x);
            s.dmp.K = d.value("K", s.dmp.K);
            s.dmp.ridge_lambda = d.value("ridge_lambda", s.dmp.ridge_lambda);
            s.dmp.z_amplitude_scale = d.value("z_amplitude_scale", s.dmp.z_amplitude_scale);
            s.dmp.amplitude_guard = d.value("amplitude_guard", s.dmp.amplitude_guard);
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("experiment config: ") + e.what());
    }
    s.validate();
    return s;
}

Counts ResultTable::counts() const
{
    Counts c;
    for (const TrialRecord& r : rows) {
        switch (r.outcome.kind) {
            case world::Outcome::Kind::Success: ++c.success; break;
            case world::Outcome::Kind::PartialSuccess: ++c.partial; break;
            case world::Outcome::Kind::Failure: ++c.failure; break;
        }
        c.hit_obstacle += r.outcome.reason == world::Outcome::Reason::HitObstacle;
        c.not_in_hole += r.outcome.reason == world::Outcome::Reason::NotInHole;
    }
    return c;
}

Counts ResultTable::counts(Method m) const
{
    ResultTable sub;
    for (const TrialRecord& r : rows) {
        if (r.method == m) sub.rows.push_back(r);
    }
    return sub.counts();
}

std::vector<TrialCell> trial_matrix(const ExperimentSpec& spec)
{
    std::vector<TrialCell> cells;
    for (world::Shape sh : spec.shapes) {
        const int goal = orch::goal_cell_for(sh);
        int taken = 0;
        for (int c = 0; c < 8 && taken < spec.trials_per_shape; ++c) {
            if (c == goal) continue;
            cells.push_back({sh, c, static_cast<int>(sh) * 8 + c});
            ++taken;
        }
    }
    return cells;
}

std::uint64_t task_seed(std::uint64_t master, int index)
{
    return derive_seed(master, kTaskStream, static_cast<std::uint64_t>(index));
}

std::uint64_t episode_seed(std::uint64_t master, int index)
{
    return derive_seed(master, kEpisodeStream, static_cast<std::uint64_t>(index));
}

std::uint64_t training_seed(std::uint64_t master, int demos)
{
    return derive_seed(master, kTrainStream, static_cast<std::uint64_t>(demos));
}

ResultTable run_experiment(const ExperimentSpec& spec, const orch::SessionArtifacts* artifacts)
{
    spec.validate();
    ResultTable table;
    const auto cells = trial_matrix(spec);
    if (cells.empty()) return table;

    std::optional<orch::SessionArtifacts> trained;
    std::optional<dmp::DmpModel> primitive;
    if (spec.method == Method::Patched && !artifacts) {
        trained = orch::run_training(spec.demos, training_config(spec), training_seed(spec.seed, spec.demos));
        artifacts = &*trained;
    }
    if (spec.method == Method::Patched) table.skill_trained = artifacts->skill.has_value();
    if (spec.method == Method::Dmp) primitive = dmp::train_baseline(dmp_source(), spec.dmp).model;

    for (const TrialCell& cell : cells) {
        const std::uint64_t es = episode_seed(spec.seed, cell.index);
        TrialRecord rec;
        rec.method = spec.method;
        rec.shape = world::to_string(cell.shape);
        rec.start_cell = cell.start_cell;
        rec.obstacle = spec.obstacle;
        rec.seed = es;
        rec.outcome = world::Outcome::failure(world::Outcome::Reason::None);
        try {
            const orch::Task task = orch::build_task(task_config(spec, cell), task_seed(spec.seed, cell.index));
            switch (spec.method) {
                case Method::Planner:
                    rec = record_of(spec.method, orch::pure_planner_episode(task, spec.config, es), cell, spec.obstacle);
                    break;
                case Method::Patched:
                    rec = record_of(spec.method, orch::test_episode(task, *artifacts, spec.config, es), cell, spec.obstacle);
                    break;
                case Method::Dmp: {
                    dmp::EpisodeOptions opt;
                    opt.rrt = spec.config.rrt;
                    const dmp::DmpEpisode ep = dmp::baseline_episode(task.world, orch::model_of(task), *primitive, es, opt);
                    rec.outcome = ep.outcome;
                    rec.log = Json{{"mode", orch::to_string(orch::EpisodeMode::DmpBaseline)},
                                   {"seed", es},
                                   {"task", task.config},
                                   {"outcome", ep.outcome},
                                   {"grasped", ep.grasped},
                                   {"actions", ep.actions},
                                   {"trace", dmp_trace(task.world, ep.actions)}};
                    break;
                }
            }
        } catch (const Error& e) {
            rec.error = e.what();
            rec.log = Json{{"seed", es}, {"error", rec.error}};
        }
        if (spec.method == Method::Patched) rec.demos = artifacts->demos.demos.size();
        table.rows.push_back(std::move(rec));
    }
    return table;
}

ResultTable demo_sweep(const ExperimentSpec& spec)
{
    spec.validate();
    if (spec.demo_counts.empty()) throw Error(ErrorCode::InvalidConfig, "demo_counts must not be empty");
    ResultTable table;
    ExperimentSpec one = spec;
    one.method = Method::Patched;
    for (int n : spec.demo_counts) {
        one.demos = n;
        const ResultTable t = run_experiment(one);
        SweepRow row{n, t.counts().success, t.counts().total()};
        for (TrialRecord r : t.rows) {
            r.demos = n;
            table.rows.push_back(std::move(r));
        }
        table.sweep.push_back(row);
        table.skill_trained = table.skill_trained || t.skill_trained;
    }
    return table;
}

ResultTable run_door(const ExperimentSpec& spec)
{
    spec.validate();
    ResultTable table;
    orch::SessionArtifacts artifacts;
    const auto scripted = orch::scripted_demos(spec.config.demo);
    for (int i = 0; i < spec.door_trials; ++i) {
        const std::uint64_t ts = derive_seed(spec.seed, kDoorStream, static_cast<std::uint64_t>(i));
        auto [w, scene] = world::make_door_task(ts);
        const orch::Task task{w, scene, {}};
        const std::uint64_t es = derive_seed(ts, 1, 0);
        const orch::EpisodeLog log = orch::train_episode(task, artifacts, spec.config, scripted, es);
        TrialRecord r;
        r.method = Method::Planner;
        r.shape = "door";
        r.start_cell = i;
        r.outcome = log.outcome;
        r.error = log.error;
        r.seed = es;
        r.anomalies = log.anomaly_step >= 0 ? 1 : 0;
        r.log = orch::to_json(log, true);
        table.rows.push_back(std::move(r));
    }
    // training only happens when a demonstration was requested
    if (!artifacts.demos.demos.empty()) {
        orch::train_skill(artifacts, spec.config, derive_seed(spec.seed, kDoorStream + 1, 0));
        table.skill_trained = true;
    }
    return table;
}

std::string results_csv(const ResultTable& table)
{
    std::ostringstream out;
    out << "method,shape,start_cell,obstacle,outcome,reason,seed\n";
    for (const TrialRecord& r : table.rows) {
        out << to_string(r.method) << ',' << r.shape << ',' << r.start_cell << ',' << (r.obstacle ? "true" : "false")
            << ',' << world::to_string(r.outcome.kind) << ',' << world::to_string(r.outcome.reason) << ',' << r.seed
            << '\n';
    }
    return out.str();
}

std::string sweep_csv(const ResultTable& table)
{
    std::ostringstream out;
    out << "demos,success,trials,fraction\n";
    for (const SweepRow& s : table.sweep) {
        out << s.demos << ',' << s.success << ',' << s.trials << ',' << fmt_fraction(s.success, s.trials) << '\n';
    }
    return out.str();
}

std::string summary_text(const ResultTable& table)
{
    std::ostringstream out;
    out << "method   trials  success  partial  failure  hit_obstacle  not_in_hole  success_fraction\n";
    for (Method m : {Method::Planner, Method::Dmp, Method::Patched}) {
        const Counts c = table.counts(m);
        if (c.total() == 0) continue;
        char line[160];
        std::snprintf(line, sizeof line, "%-8s %6d %8d %8d %8d %13d %12d  %s\n", to_string(m), c.total(), c.success,
                      c.partial, c.failure, c.hit_obstacle, c.not_in_hole, fmt_fraction(c.success, c.total()).c_str());
        out << line;
    }
    int anomalies = 0;
    for (const TrialRecord& r : table.rows) anomalies += r.anomalies;
    out << "anomalies " << anomalies << "\n";
    out << "skill_trained " << (table.skill_trained ? "yes" : "no") << "\n";
    for (const SweepRow& s : table.sweep) {
        out << "demos " << s.demos << ": " << s.success << "/" << s.trials << " (" << fmt_fraction(s.success, s.trials)
            << ")\n";
    }
    return out.str();
}

std::string episodes_jsonl(const ResultTable& table)
{
    std::string text;
    for (const TrialRecord& r : table.rows) {
        Json j = r.log.is_object() ? r.log : Json::object();
        j["method"] = to_string(r.method);
        j["demos"] = r.demos;
        text += j.dump() + "\n";
    }
    return text;
}

void emit_report(const ResultTable& table, const std::string& dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "episodes", ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir + ": " + ec.message());
    write_file((fs::path(dir) / "results.csv").string(), results_csv(table));
    write_file((fs::path(dir) / "summary.txt").string(), summary_text(table));
    if (!table.sweep.empty()) write_file((fs::path(dir) / "sweep.csv").string(), sweep_csv(table));
    for (Method m : {Method::Planner, Method::Dmp, Method::Patched}) {
        ResultTable sub;
        for (const TrialRecord& r : table.rows) {
            if (r.method == m) sub.rows.push_back(r);
        }
        if (sub.rows.empty()) continue;
        write_file((fs::path(dir) / "episodes" / (std::string(to_string(m)) + ".jsonl")).string(), episodes_jsonl(sub));
    }
}

}  // namespace skillpatch::bench
