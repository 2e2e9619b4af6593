#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skillpatch/common.hpp"
#include "skillpatch/io.hpp"
#include "skillpatch/vae.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch::skill {

using world::Action;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Features and frames

/// What the agent believes about the task when it records or acts: the perceived
/// goal-hole centre and the yaw of the piece relative to the gripper.
struct FeatureFrame {
    world::Vec2 hole_hat{0.0, 0.0};
    double grasp_yaw{0.0};
};

/// Pose in the skill frame: (x, y) relative to the perceived hole, absolute z, held-piece yaw.
Pose4 to_skill_frame(const Pose4& ee, const FeatureFrame& frame);
Pose4 from_skill_frame(const Pose4& rel, const FeatureFrame& frame);

constexpr int kFeatureDim = vae::kLatent + 4;

/// mu_z of the raster concatenated with the skill-frame end-effector pose.
Vec features(const vae::VaeParams& vae, const world::Observation& obs, const FeatureFrame& frame);

// ---------------------------------------------------------------------------
// Scripted demonstrator

struct ExpertParams {
    double clearance_z{world::kClearanceZ};
    double offset{0.03};       // lateral reset distance from the true hole centre (+y)
    double slide_step{0.004};  // lateral step while sliding
    double press{0.002};       // downward push kept while sliding
    double tol_xy{0.001};      // phase-transition tolerance on positions
};

enum class Phase { Lift, MoveToOffset, Descend, Slide, Done };
const char* to_string(Phase p);

/// Phase machine: lift clear, move the piece to the offset point beside the true
/// hole, descend to contact, and slide into the hole.
class ScriptedExpert {
public:
    explicit ScriptedExpert(const world::WorldState& w, ExpertParams params = {});

    Action next(const world::WorldState& w);
    Phase phase() const { return phase_; }
    /// Phases whose actions are recorded (after the reset out of the hole).
    bool recording() const { return phase_ == Phase::Descend || phase_ == Phase::Slide; }

private:
    ExpertParams params_;
    Phase phase_{Phase::Lift};
};

/// One call of the demonstrator from the current world. Throws NotApplicable if nothing is held.
Action expert_oracle(const world::WorldState& w);

// ---------------------------------------------------------------------------
// Demonstrations

struct DemoStep {
    world::Observation obs{};  // observation the action was chosen from
    FeatureFrame frame{};
    Action action{};  // the executed (noised) action
};

struct Demonstration {
    std::vector<DemoStep> steps;
    std::vector<Action> reset_actions;  // executed before recording began
    double beta{0.0};
    bool success{false};

    /// First recorded pose in the skill frame; this is what the initiation set is fitted to.
    Pose4 start() const;
};

struct DemoSet {
    std::vector<Demonstration> demos;
    double beta{0.004};
    int failed{0};  // discarded demonstrations
};

struct DemoOptions {
    double beta{0.004};
    int max_steps{200};
    ExpertParams expert{};
};

struct DemoResult {
    Demonstration demo;
    world::WorldState final_world;
};

/// Executes demonstrator actions one at a time. Recorded actions get uniform
/// noise in [-beta, beta] on each translational component before execution;
/// reset actions run unmodified. Shared by scripted and teleoperated demos.
class DemoRecorder {
public:
    DemoRecorder(const world::WorldState& w0, const FeatureFrame& frame, const DemoOptions& options, std::uint64_t seed);

    /// Returns the action actually executed.
    Action apply(Action a, bool record);
    bool succeeded() const;
    bool exhausted() const { return steps_ >= options_.max_steps; }
    int steps() const { return steps_; }
    const world::WorldState& world() const { return result_.final_world; }
    const Demonstration& demo() const { return result_.demo; }
    /// Throws DemoFailed unless the piece is inserted.
    DemoResult finish() const;

private:
    DemoResult result_;
    FeatureFrame frame_;
    DemoOptions options_;
    Rng rng_;
    int steps_{0};
};

/// Runs the demonstrator with uniform noise in [-beta, beta] on every recorded
/// translational component. Throws DemoFailed after max_steps without Success.
DemoResult collect_demo(const world::WorldState& w, const FeatureFrame& frame, const DemoOptions& options,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Regression forest

enum class MaxFeatures { Sqrt, All };

struct TreeParams {
    MaxFeatures max_features{MaxFeatures::All};
    int min_samples_split{2};
    int min_samples_leaf{1};
    int max_depth{-1};  // negative: unlimited
};

struct ForestParams {
    int n_trees{10};
    TreeParams tree{};
    bool bootstrap{true};
};

struct TreeNode {
    int feature{-1};  // -1 for a leaf
    double threshold{0.0};
    int left{-1}, right{-1};
    Vec value{};  // mean of the targets reaching this node
};

struct Tree {
    std::vector<TreeNode> nodes;
    Vec predict(const Vec& x) const;
    int depth() const;
};

int feature_count(MaxFeatures m, int d);

/// CART regression tree; each node scans a random subset of max_features columns
/// (in increasing index) and takes the first split with the lowest summed squared error.
Tree fit_tree(const Mat& X, const Mat& Y, const TreeParams& params, std::uint64_t seed);

struct Forest {
    std::vector<Tree> trees;
    ForestParams params{};
    int input_dim{0};
    int output_dim{0};

    Vec predict(const Vec& x) const;
};

Forest fit_forest(const Mat& X, const Mat& Y, const ForestParams& params, std::uint64_t seed);

struct GridSpec {
    std::vector<int> n_trees{10, 50};
    std::vector<MaxFeatures> max_features{MaxFeatures::Sqrt, MaxFeatures::All};
    std::vector<int> min_samples_split{2, 5};
    std::vector<int> min_samples_leaf{1, 3};
    std::vector<int> max_depth{5, -1};

    std::vector<ForestParams> configs() const;
};

struct CvResult {
    Forest forest;
    ForestParams selected{};
    std::vector<double> scores;  // mean k-fold MSE per grid config, grid order
};

/// Grid-search k-fold cross validation, then a refit of the best config on all rows.
/// Throws InsufficientData when there are fewer rows than folds.
CvResult fit_forest_cv(const Mat& X, const Mat& Y, const GridSpec& grid, int k_folds, std::uint64_t seed);

/// Mean over trees, clamped to the action bounds, grip Hold.
Action predict_action(const Forest& forest, const Vec& features, const world::StepLimits& limits = {});

/// Stacks features and (dx, dy, dz, dyaw) targets of every recorded step.
std::pair<Mat, Mat> policy_dataset(const DemoSet& demos, const vae::VaeParams& vae);

// ---------------------------------------------------------------------------
// Initiation set

struct InitiationSet {
    Eigen::Vector4d mean{Eigen::Vector4d::Zero()};
    Eigen::Matrix4d cov{Eigen::Matrix4d::Identity() * 1e-8};

    double mahalanobis(const Pose4& p) const;
};

constexpr double kCovRegularization = 1e-8;

/// Gaussian over the skill-frame start poses (maximum-likelihood covariance + 1e-8 I).
InitiationSet fit_initiation(const std::vector<Pose4>& starts);
InitiationSet fit_initiation(const DemoSet& demos);

/// Draws from N(mean, cov); rejects draws failing `accept` up to `max_tries` times,
/// then throws SamplingExhausted.
Pose4 sample_initiation(const InitiationSet& set, std::uint64_t seed,
                        const std::function<bool(const Pose4&)>& accept = {}, int max_tries = 100);

// ---------------------------------------------------------------------------
// Bundle and serialization

struct SkillBundle {
    vae::VaeParams vae;
    Forest forest;
    InitiationSet initiation;
};

struct SkillTrainSpec {
    vae::TrainSpec vae{};
    GridSpec grid{};
    int k_folds{3};
};

SkillBundle train_skill(const DemoSet& demos, const SkillTrainSpec& spec, std::uint64_t seed);

Json to_json(const Tree& t);
Json to_json(const Forest& f);
Forest forest_from_json(const Json& j);
Json to_json(const InitiationSet& s);
InitiationSet initiation_from_json(const Json& j);
Json to_json(const DemoStep& s);
DemoStep demo_step_from_json(const Json& j);

/// JSON-lines: one DemoStep per line with its demo index.
std::string demos_to_jsonl(const DemoSet& demos);
DemoSet demos_from_jsonl(const std::string& text);

}  // namespace skillpatch::skill
