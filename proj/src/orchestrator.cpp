#include "skillpatch/orchestrator.hpp"

#include <algorithm>
#include <random>

#include "skillpatch/common.hpp"

namespace skillpatch::orch {

using planner::ModelState;
using planner::Plan;
using world::Action;
using world::WorldState;

const char* to_string(EpisodeMode m)
{
    switch (m) {
        case EpisodeMode::TrainEpisode: return "TrainEpisode";
        case EpisodeMode::TestEpisode: return "TestEpisode";
        case EpisodeMode::PurePlanner: return "PurePlanner";
        case EpisodeMode::DmpBaseline: return "DmpBaseline";
    }
    return "?";
}

void OrchestratorConfig::validate() const
{
    gate.validate();
    if (tau < 0.0 || tau > 1.0) throw Error(ErrorCode::InvalidConfig, "tau must lie in [0, 1]");
    if (gp_cap < 1 || skill_step_cap < 0 || max_training_episodes_per_demo < 1) {
        throw Error(ErrorCode::InvalidConfig, "caps must be positive");
    }
    if (!(tol_insert > 0.0) || eps_percept < 0.0) throw Error(ErrorCode::InvalidConfig, "bad perception or tolerance");
}

Json to_json(const OrchestratorConfig& c)
{
    return Json{{"gate", {{"p", c.gate.p}, {"k0", c.gate.k0}, {"sigma_floor", c.gate.sigma_floor}, {"cumulative", c.gate.cumulative}}},
                {"tau", c.tau},
                {"gp_cap", c.gp_cap},
                {"gp_restarts", c.gp_fit.restarts},
                {"gp_max_iterations", c.gp_fit.max_iterations},
                {"refit_gp_every_demo", c.refit_gp_every_demo},
                {"demo_beta", c.demo.beta},
                {"demo_max_steps", c.demo.max_steps},
                {"vae", {{"learning_rate", c.skill.vae.learning_rate},
                         {"epochs", c.skill.vae.epochs},
                         {"batch_size", c.skill.vae.batch_size},
                         {"augmentation", c.skill.vae.augmentation}}},
                {"k_folds", c.skill.k_folds},
                {"skill_step_cap", c.skill_step_cap},
                {"online_switch", c.online_switch},
                {"rrt", {{"restarts", c.rrt.restarts}, {"iterations", c.rrt.iterations}, {"step", c.rrt.step}}},
                {"eps_percept", c.eps_percept},
                {"tol_insert", c.tol_insert},
                {"obstacle", c.obstacle},
                {"max_training_episodes_per_demo", c.max_training_episodes_per_demo}};
}

OrchestratorConfig orchestrator_config_from_json(const Json& j)
{
    OrchestratorConfig c;
    try {
        if (j.contains("gate")) {
            const Json& g = j.at("gate");
            c.gate.p = g.value("p", c.gate.p);
            c.gate.k0 = g.value("k0", c.gate.k0);
            c.gate.sigma_floor = g.value("sigma_floor", c.gate.sigma_floor);
            c.gate.cumulative = g.value("cumulative", c.gate.cumulative);
        }
        c.tau = j.value("tau", c.tau);
        c.gp_cap = j.value("gp_cap", c.gp_cap);
        c.gp_fit.restarts = j.value("gp_restarts", c.gp_fit.restarts);
        c.gp_fit.max_iterations = j.value("gp_max_iterations", c.gp_fit.max_iterations);
        c.refit_gp_every_demo = j.value("refit_gp_every_demo", c.refit_gp_every_demo);
        c.demo.beta = j.value("demo_beta", c.demo.beta);
        c.demo.max_steps = j.value("demo_max_steps", c.demo.max_steps);
        if (j.contains("vae")) {
            const Json& v = j.at("vae");
            c.skill.vae.learning_rate = v.value("learning_rate", c.skill.vae.learning_rate);
            c.skill.vae.epochs = v.value("epochs", c.skill.vae.epochs);
            c.skill.vae.batch_size = v.value("batch_size", c.skill.vae.batch_size);
            c.skill.vae.augmentation = v.value("augmentation", c.skill.vae.augmentation);
        }
        c.skill.k_folds = j.value("k_folds", c.skill.k_folds);
        c.skill_step_cap = j.value("skill_step_cap", c.skill_step_cap);
        c.online_switch = j.value("online_switch", c.online_switch);
        if (j.contains("rrt")) {
            const Json& r = j.at("rrt");
            c.rrt.restarts = r.value("restarts", c.rrt.restarts);
            c.rrt.iterations = r.value("iterations", c.rrt.iterations);
            c.rrt.step = r.value("step", c.rrt.step);
        }
        c.eps_percept = j.value("eps_percept", c.eps_percept);
        c.tol_insert = j.value("tol_insert", c.tol_insert);
        c.obstacle = j.value("obstacle", c.obstacle);
        c.max_training_episodes_per_demo = j.value("max_training_episodes_per_demo", c.max_training_episodes_per_demo);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("bad orchestrator config: ") + e.what());
    }
    c.validate();
    return c;
}

DemoProvider scripted_demos(const skill::DemoOptions& options)
{
    return [options](const WorldState& w, const skill::FeatureFrame& frame, std::uint64_t seed) {
        return skill::collect_demo(w, frame, options, seed).demo;
    };
}

Json to_json(const EpisodeLog& log, bool with_trace)
{
    Json j{{"mode", to_string(log.mode)},
           {"seed", log.seed},
           {"task", log.task},
           {"outcome", log.outcome},
           {"anomaly_step", log.anomaly_step},
           {"switch_step", log.switch_step},
           {"switch_reason", log.switch_reason},
           {"fallback", log.fallback},
           {"plan_length", log.plan_length},
           {"skill_steps", log.skill_steps},
           {"demo_collected", log.demo_collected}};
    if (!log.error.empty()) j["error"] = log.error;
    if (with_trace) {
        j["actions"] = log.actions;
        j["trace"] = log.trace;
    }
    return j;
}

Task build_task(const world::TaskConfig& config, std::uint64_t seed)
{
    auto [w, scene] = world::make_task(config, seed);
    return {w, scene, config};
}

planner::ApproxModel model_of(const Task& task)
{
    if (task.world.door) return planner::ApproxModel::from_scene(task.scene, task.world.board, task.world.piece_shape, 0);
    return planner::ApproxModel::from_scene(task.scene, task.world.board, task.config.shape, task.config.goal_cell);
}

int goal_cell_for(world::Shape shape)
{
    switch (shape) {
        case world::Shape::Rect: return 5;
        case world::Shape::Circle: return 2;
        case world::Shape::Square: return 7;
    }
    return 5;
}

namespace {

int goal_of(const Task& t) { return t.world.door ? 0 : t.config.goal_cell; }

/// Runs one action in the world and gates it against the model's one-step prediction
/// from the observed state, with the believed grasp from `belief`.
anomaly::Gate gated_step(WorldState& w, const ModelState& belief, const Action& a, const planner::ApproxModel& model,
                         const OrchestratorConfig& config)
{
    const ModelState from{w.ee, belief.attached, belief.grasp_offset};
    const planner::Prediction pred = planner::predict(model, from, a);
    const world::StepResult r = world::step(w, a);
    anomaly::TransitionSample s{w.ee, a, pred.state.ee, r.world.ee, pred.contact_predicted, r.obs.contact};
    w = r.world;
    return anomaly::gate_transition(s, config.gate);
}

struct Executor {
    WorldState& w;
    EpisodeLog& log;
    const planner::ApproxModel& model;
    const OrchestratorConfig& config;
    const StepObserver* observer{nullptr};

    void record(const Action& a, bool anomaly)
    {
        log.actions.push_back(a);
        log.trace.push_back(world::trace_record(static_cast<int>(log.actions.size()) - 1, w, a, anomaly));
        if (observer && *observer) (*observer)(w, a, anomaly);
    }

    /// Executes plan actions from `begin`; stops after the first anomaly when `stop_on_anomaly`.
    /// Returns the index of the anomalous action, or -1.
    int run(const Plan& plan, std::size_t begin, bool stop_on_anomaly)
    {
        for (std::size_t t = begin; t < plan.actions.size(); ++t) {
            const bool bad = gated_step(w, plan.waypoints[t], plan.actions[t], model, config) == anomaly::Gate::Unexpected;
            record(plan.actions[t], bad);
            if (bad && log.anomaly_step < 0) log.anomaly_step = static_cast<int>(log.actions.size()) - 1;
            if (bad && stop_on_anomaly) return static_cast<int>(t);
        }
        return -1;
    }

    void run_skill(const skill::SkillBundle& sk, const skill::FeatureFrame& frame)
    {
        for (int k = 0; k < config.skill_step_cap; ++k) {
            if (world::check_outcome(w, w.goal_hole) == world::Outcome::success()) break;
            const Action a = skill::predict_action(sk.forest, skill::features(sk.vae, world::observe(w), frame),
                                                   w.params.limits);
            w = world::step(w, a).world;
            record(a, false);
            ++log.skill_steps;
        }
    }
};

EpisodeLog start_log(EpisodeMode mode, const Task& task, std::uint64_t seed)
{
    EpisodeLog log;
    log.mode = mode;
    log.seed = seed;
    log.task = task.config;
    return log;
}

std::optional<Plan> plan_or_log(const planner::ApproxModel& model, const ModelState& s, const planner::GoalSet& goal,
                                const OrchestratorConfig& config, std::uint64_t seed, EpisodeLog& log)
{
    try {
        Plan p = planner::plan_task(model, s, goal, config.rrt, seed);
        if (p.empty()) {
            log.error = "empty plan";
            return std::nullopt;
        }
        return p;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::PlanNotFound) throw;
        log.error = e.what();
        return std::nullopt;
    }
}

/// Samples I_SKILL for a pose whose ee the model considers collision free, and plans there.
std::optional<Plan> plan_to_initiation(const planner::ApproxModel& model, const ModelState& from,
                                       const skill::SkillBundle& sk, const skill::FeatureFrame& frame,
                                       const OrchestratorConfig& config, std::uint64_t seed)
{
    const auto ws = world::workspace();
    const auto accept = [&](const Pose4& rel) {
        const Pose4 p = skill::from_skill_frame(rel, frame);
        if (p.x < ws.x_lo || p.x > ws.x_hi || p.y < ws.y_lo || p.y > ws.y_hi) return false;
        return planner::collision_free({p, from.attached, from.grasp_offset}, model);
    };
    try {
        const Pose4 rel = skill::sample_initiation(sk.initiation, derive_seed(seed, 31, 0), accept);
        Plan p = planner::plan_task(model, from, {planner::PoseTarget{skill::from_skill_frame(rel, frame)}, "I_skill"},
                                    config.rrt, derive_seed(seed, 31, 1));
        if (p.empty()) return std::nullopt;
        return p;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SamplingExhausted && e.code() != ErrorCode::PlanNotFound) throw;
        return std::nullopt;
    }
}

}  // namespace

EpisodeLog train_episode(const Task& task, SessionArtifacts& artifacts, const OrchestratorConfig& config,
                         const DemoProvider& demos, std::uint64_t seed, const StepObserver& observer)
{
    EpisodeLog log = start_log(EpisodeMode::TrainEpisode, task, seed);
    const planner::ApproxModel model = model_of(task);
    WorldState w = task.world;
    const auto plan = plan_or_log(model, {w.ee, false, {}}, {}, config, seed, log);
    if (!plan) {
        log.outcome = world::check_outcome(w, goal_of(task));
        artifacts.logs.push_back(to_json(log));
        return log;
    }
    log.plan_length = static_cast<int>(plan->actions.size());
    Executor ex{w, log, model, config, &observer};
    for (std::size_t t = 0; t < plan->actions.size(); ++t) {
        const bool bad = gated_step(w, plan->waypoints[t], plan->actions[t], model, config) == anomaly::Gate::Unexpected;
        ex.record(plan->actions[t], bad);
        if (!bad) {
            artifacts.datasets.expected.push_back(w.ee);
            continue;
        }
        artifacts.datasets.unexpected.push_back(w.ee);
        log.anomaly_step = static_cast<int>(t);
        if (w.grasped && !w.door) {
            const skill::FeatureFrame frame{model.board.hole_centers[static_cast<std::size_t>(model.goal_hole)],
                                            plan->waypoints[t + 1].grasp_offset.yaw};
            try {
                const DemoProvider& provider = demos ? demos : scripted_demos(config.demo);
                artifacts.demos.demos.push_back(provider(w, frame, derive_seed(seed, 5, 0)));
                log.demo_collected = true;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::DemoFailed && e.code() != ErrorCode::NotApplicable) throw;
                ++artifacts.demos.failed;
                log.error = e.what();
            }
        }
        break;
    }
    log.outcome = world::check_outcome(w, goal_of(task));
    if (log.demo_collected && config.refit_gp_every_demo) refit_gp(artifacts, config, derive_seed(seed, 6, 0));
    artifacts.logs.push_back(to_json(log));
    return log;
}

void refit_gp(SessionArtifacts& artifacts, const OrchestratorConfig& config, std::uint64_t seed)
{
    const auto& d = artifacts.datasets;
    if (d.expected.empty() && d.unexpected.empty()) return;
    const auto [X, y] = anomaly::training_set(d, config.gp_cap);
    artifacts.gp = anomaly::fit_gp(X, y, config.gp_fit, seed);
}

void train_skill(SessionArtifacts& artifacts, const OrchestratorConfig& config, std::uint64_t seed)
{
    if (artifacts.demos.demos.empty()) return;
    artifacts.skill = skill::train_skill(artifacts.demos, config.skill, seed);
}

EpisodeLog test_episode(const Task& task, const SessionArtifacts& artifacts, const OrchestratorConfig& config,
                        std::uint64_t seed)
{
    EpisodeLog log = start_log(EpisodeMode::TestEpisode, task, seed);
    const planner::ApproxModel model = model_of(task);
    WorldState w = task.world;
    std::optional<Plan> plan = plan_or_log(model, {w.ee, false, {}}, {}, config, seed, log);
    if (!plan) {
        log.outcome = world::check_outcome(w, goal_of(task));
        return log;
    }
    Executor ex{w, log, model, config};
    const skill::SkillBundle* sk = artifacts.skill ? &*artifacts.skill : nullptr;
    const world::Vec2 hole_hat = model.board.hole_centers[static_cast<std::size_t>(std::max(0, model.goal_hole))];

    bool to_initiation = false;
    std::size_t lift = planner::grasp_lift_end(*plan);
    if (sk && artifacts.gp && !task.world.door && lift < plan->actions.size() &&
        anomaly::plan_crosses_failure(*artifacts.gp, *plan, config.tau)) {
        const ModelState& held = plan->waypoints[lift];
        const skill::FeatureFrame frame{hole_hat, held.grasp_offset.yaw};
        if (auto tail = plan_to_initiation(model, held, *sk, frame, config, seed)) {
            Plan patched = planner::plan_prefix(*plan, lift);
            planner::concat(patched, *tail);
            plan = std::move(patched);
            to_initiation = true;
            log.switch_reason = "predicted";
            log.switch_step = static_cast<int>(lift);
        } else {
            log.fallback = true;
        }
    }
    log.plan_length = static_cast<int>(plan->actions.size());

    const bool can_switch = sk && config.online_switch && !to_initiation && !task.world.door;
    const int bad = ex.run(*plan, 0, can_switch);
    if (bad >= 0 && can_switch && w.grasped) {
        // unexpected transition mid-plan: go to the skill's initiation set from here
        const ModelState& belief = plan->waypoints[static_cast<std::size_t>(bad) + 1];
        const skill::FeatureFrame frame{hole_hat, belief.grasp_offset.yaw};
        log.switch_reason = "online";
        log.switch_step = bad + 1;
        if (auto tail = plan_to_initiation(model, {w.ee, belief.attached, belief.grasp_offset}, *sk, frame, config,
                                           derive_seed(seed, 32, 0))) {
            ex.run(*tail, 0, false);
        } else {
            log.fallback = true;
        }
        ex.run_skill(*sk, frame);
    } else if (to_initiation && w.grasped) {
        ex.run_skill(*sk, {hole_hat, plan->waypoints[lift].grasp_offset.yaw});
    }
    log.outcome = world::check_outcome(w, goal_of(task));
    return log;
}

EpisodeLog pure_planner_episode(const Task& task, const OrchestratorConfig& config, std::uint64_t seed)
{
    EpisodeLog log = start_log(EpisodeMode::PurePlanner, task, seed);
    const planner::ApproxModel model = model_of(task);
    WorldState w = task.world;
    const auto plan = plan_or_log(model, {w.ee, false, {}}, {}, config, seed, log);
    if (plan) {
        log.plan_length = static_cast<int>(plan->actions.size());
        Executor ex{w, log, model, config};
        ex.run(*plan, 0, false);
    }
    log.outcome = world::check_outcome(w, goal_of(task));
    return log;
}

SessionArtifacts run_training(int n_demos, const OrchestratorConfig& config, std::uint64_t seed, const DemoProvider& demos,
                              const StepObserver& observer)
{
    if (n_demos < 1) throw Error(ErrorCode::InvalidConfig, "n_demos must be at least 1");
    config.validate();
    SessionArtifacts a;
    a.demos.beta = config.demo.beta;
    const int cap = n_demos * config.max_training_episodes_per_demo;
    std::size_t fitted_on = 0;
    for (int i = 0; i < cap && static_cast<int>(a.demos.demos.size()) < n_demos; ++i) {
        Rng rng(derive_seed(seed, 11, static_cast<std::uint64_t>(i)));
        world::TaskConfig cfg;
        cfg.shape = static_cast<world::Shape>(std::uniform_int_distribution<int>(0, 2)(rng));
        cfg.goal_cell = goal_cell_for(cfg.shape);
        const int pick = std::uniform_int_distribution<int>(0, 6)(rng);
        cfg.start_cell = pick < cfg.goal_cell ? pick : pick + 1;
        cfg.obstacle = config.obstacle;
        cfg.eps_percept = config.eps_percept;
        cfg.tol_insert = config.tol_insert;
        cfg.seed = derive_seed(seed, 12, static_cast<std::uint64_t>(i));
        try {
            const Task task = build_task(cfg, cfg.seed);
            train_episode(task, a, config, demos, derive_seed(seed, 13, static_cast<std::uint64_t>(i)), observer);
            if (a.gp) fitted_on = a.datasets.expected.size() + a.datasets.unexpected.size();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Unplaceable) throw;
        }
    }
    train_skill(a, config, derive_seed(seed, 14, 0));
    if (!a.gp || fitted_on != a.datasets.expected.size() + a.datasets.unexpected.size()) {
        refit_gp(a, config, derive_seed(seed, 15, 0));
    }
    return a;
}

}  // namespace skillpatch::orch
