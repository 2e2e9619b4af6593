#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skillpatch/anomaly.hpp"
#include "skillpatch/io.hpp"
#include "skillpatch/planner.hpp"
#include "skillpatch/skill.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch::orch {

enum class EpisodeMode { TrainEpisode, TestEpisode, PurePlanner, DmpBaseline };
const char* to_string(EpisodeMode m);

struct OrchestratorConfig {
    anomaly::GateParams gate{};
    double tau{0.75};
    int gp_cap{150};
    anomaly::FitOptions gp_fit{};
    bool refit_gp_every_demo{true};
    skill::DemoOptions demo{};
    skill::SkillTrainSpec skill{};
    int skill_step_cap{300};
    bool online_switch{true};
    planner::RrtParams rrt{};
    double eps_percept{0.01};
    double tol_insert{0.004};
    bool obstacle{false};
    int max_training_episodes_per_demo{6};

    void validate() const;
};

Json to_json(const OrchestratorConfig& c);
/// Missing keys keep their defaults.
OrchestratorConfig orchestrator_config_from_json(const Json& j);

struct SessionArtifacts {
    anomaly::FailureDatasets datasets;
    skill::DemoSet demos;
    std::optional<anomaly::GpModel> gp;
    std::optional<skill::SkillBundle> skill;
    std::vector<Json> logs;
};

/// Produces a demonstration from the anomalous state. The default is the scripted expert.
using DemoProvider =
    std::function<skill::Demonstration(const world::WorldState&, const skill::FeatureFrame&, std::uint64_t seed)>;
DemoProvider scripted_demos(const skill::DemoOptions& options);

/// Called after every executed training-episode action with the resulting world.
using StepObserver = std::function<void(const world::WorldState&, const world::Action&, bool anomaly)>;

struct EpisodeLog {
    EpisodeMode mode{EpisodeMode::TestEpisode};
    std::uint64_t seed{0};
    world::TaskConfig task{};
    world::Outcome outcome{};
    int anomaly_step{-1};
    int switch_step{-1};
    std::string switch_reason{"none"};  // none | predicted | online
    bool fallback{false};               // initiation replanning failed; original goal kept
    std::string error{};
    int plan_length{0};
    int skill_steps{0};
    bool demo_collected{false};
    std::vector<world::Action> actions{};
    std::vector<Json> trace{};
};

Json to_json(const EpisodeLog& log, bool with_trace = false);

struct Task {
    world::WorldState world;
    world::PerceivedScene scene;
    world::TaskConfig config;
};

Task build_task(const world::TaskConfig& config, std::uint64_t seed);
planner::ApproxModel model_of(const Task& task);

/// Training episode: execute the plan, gate every transition, stop at the first
/// anomaly and ask for a demonstration.
EpisodeLog train_episode(const Task& task, SessionArtifacts& artifacts, const OrchestratorConfig& config,
                         const DemoProvider& demos, std::uint64_t seed, const StepObserver& observer = {});

/// Fits the GP on the current datasets.
void refit_gp(SessionArtifacts& artifacts, const OrchestratorConfig& config, std::uint64_t seed);
/// Fits the VAE, forest and initiation set on the collected demonstrations.
void train_skill(SessionArtifacts& artifacts, const OrchestratorConfig& config, std::uint64_t seed);

/// Test episode. Without a skill it behaves exactly as the pure planner.
EpisodeLog test_episode(const Task& task, const SessionArtifacts& artifacts, const OrchestratorConfig& config,
                        std::uint64_t seed);

EpisodeLog pure_planner_episode(const Task& task, const OrchestratorConfig& config, std::uint64_t seed);

/// Training episodes over seeded random shapes and start cells until `n_demos`
/// demonstrations are collected; then trains the skill and the GP.
SessionArtifacts run_training(int n_demos, const OrchestratorConfig& config, std::uint64_t seed,
                              const DemoProvider& demos = {}, const StepObserver& observer = {});

/// Goal hole per piece shape.
int goal_cell_for(world::Shape shape);

}  // namespace skillpatch::orch
