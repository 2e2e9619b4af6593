#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skillpatch/io.hpp"
#include "skillpatch/planner.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch::dmp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DmpConfig {
    double alpha_z{25.0};
    double beta_z{25.0 / 4.0};
    double tau{0.0};  // <= 0: the demonstration's duration
    double alpha_x{4.605170185988092};  // ln 100: phase reaches 0.01 at t = tau
    int K{20};
    double ridge_lambda{1e-6};
    double z_amplitude_scale{0.5};  // applied to dimension 2 when present
    double amplitude_guard{1e-6};

    void validate() const;  // throws InvalidConfig
};

/// Canonical phase x(t) = exp(-alpha_x t / tau).
double phase(double t, double tau, const DmpConfig& config);

/// Centres c_k = exp(-alpha_x k / (K - 1)), from 1 down to the end of the phase.
Vec centers(const DmpConfig& config);
/// h_k = 1 / (c_{k+1} - c_k)^2, the last one repeated.
Vec widths(const DmpConfig& config);
Vec basis(double x, const DmpConfig& config);

struct DimWeights {
    Vec w;  // K basis weights
    double w0{0.0};  // offset weight on psi_0
};

/// alpha_z beta_z (sum_k psi_k w_k x / sum_k psi_k + w0 psi_0).
double forcing(double x, const DimWeights& weights, const DmpConfig& config);

/// Ridge-regression row for phase x: the forcing is row . [w; w0].
Vec feature_row(double x, const DmpConfig& config);

struct DmpModel {
    DmpConfig config;
    double tau{1.0};
    std::vector<DimWeights> weights;
    Vec y0_demo;
    Vec goal_demo;
    std::vector<double> residual_rms;  // per dimension, on the training forcing targets

    int dims() const { return static_cast<int>(weights.size()); }
    static DmpModel zero(int dims, double tau, const DmpConfig& config = {});
};

/// `t` strictly increasing, Y one row per sample. Derivatives by finite differences.
DmpModel fit_dmp(const Vec& t, const Mat& Y, const DmpConfig& config = {});

struct Rollout {
    Vec t;
    Mat Y;
};

/// Euler integration of the transformed system with goal-amplitude scaling.
Rollout rollout(const DmpModel& model, const Vec& y0, const Vec& goal, double dt, int steps);
/// Default discretisation: dt = 0.01 tau for `duration` tau-units.
Rollout rollout(const DmpModel& model, const Vec& y0, const Vec& goal, double duration = 3.0);

/// Per-sample scale applied to dimension d's forcing for a new start and goal.
double amplitude_scale(const DmpModel& model, int d, double y0, double goal);

Json to_json(const DmpModel& model);
DmpModel dmp_from_json(const Json& j);
/// t,x,y,z,yaw rows; yaw is filled from `yaw` (or 0).
std::string rollout_csv(const Rollout& r, const std::vector<double>& yaw = {});

// ---------------------------------------------------------------------------
// Baseline episodes

struct DemoSource {
    world::TaskConfig task{};  // fixed training cell
    std::uint64_t seed{0};
    double step_seconds{0.1};
};

struct DmpTrainResult {
    DmpModel model;
    Vec t;
    Mat Y;  // recorded end-effector positions after the lift
};

/// Records an exact-perception planner run at the training cell after the
/// grasp-and-lift, and fits one DMP per Cartesian axis.
DmpTrainResult train_baseline(const DemoSource& source, const DmpConfig& config = {});

struct EpisodeOptions {
    double duration{2.0};  // rollout length in tau units
    planner::RrtParams rrt{};
};

struct DmpEpisode {
    world::Outcome outcome;
    std::vector<world::Action> actions;
    world::WorldState final_world;
    bool grasped{false};
};

/// The planner grasps and lifts; the DMP carries and inserts toward the perceived hole.
DmpEpisode baseline_episode(const world::WorldState& w0, const planner::ApproxModel& model, const DmpModel& dmp,
                            std::uint64_t seed, const EpisodeOptions& options = {});

}  // namespace skillpatch::dmp
