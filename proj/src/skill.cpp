#include "skillpatch/skill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "skillpatch/common.hpp"

namespace skillpatch::skill {

using world::Grip;

Pose4 to_skill_frame(const Pose4& ee, const FeatureFrame& frame)
{
    return {ee.x - frame.hole_hat.x(), ee.y - frame.hole_hat.y(), ee.z, wrap_angle(ee.yaw + frame.grasp_yaw)};
}

Pose4 from_skill_frame(const Pose4& rel, const FeatureFrame& frame)
{
    return {rel.x + frame.hole_hat.x(), rel.y + frame.hole_hat.y(), rel.z, wrap_angle(rel.yaw - frame.grasp_yaw)};
}

Vec features(const vae::VaeParams& vae, const world::Observation& obs, const FeatureFrame& frame)
{
    Vec f(kFeatureDim);
    f.head(vae::kLatent) = vae::encode(vae, obs.raster).mu;
    const Pose4 rel = to_skill_frame(obs.ee, frame);
    f.tail(4) << rel.x, rel.y, rel.z, rel.yaw;
    return f;
}

// ---------------------------------------------------------------------------

const char* to_string(Phase p)
{
    switch (p) {
        case Phase::Lift: return "Lift";
        case Phase::MoveToOffset: return "MoveToOffset";
        case Phase::Descend: return "Descend";
        case Phase::Slide: return "Slide";
        case Phase::Done: return "Done";
    }
    return "?";
}

namespace {

constexpr double kResting = 1e-6;

/// Signed rotation that brings the piece to its nearest symmetric alignment with the hole.
double alignment_correction(world::Shape shape, double yaw)
{
    if (shape == world::Shape::Circle) return 0.0;
    const double period = shape == world::Shape::Square ? std::numbers::pi / 2.0 : std::numbers::pi;
    double r = std::fmod(wrap_angle(yaw), period);
    if (r > period / 2.0) r -= period;
    if (r < -period / 2.0) r += period;
    return -r;
}

world::Vec2 true_hole(const world::WorldState& w) { return w.board.hole_centers[static_cast<std::size_t>(w.goal_hole)]; }

bool succeeded(const world::WorldState& w)
{
    return world::check_outcome(w, w.goal_hole).kind == world::Outcome::Kind::Success;
}

}  // namespace

ScriptedExpert::ScriptedExpert(const world::WorldState& w, ExpertParams params) : params_(params)
{
    if (w.grasped && succeeded(w)) {
        phase_ = Phase::Done;
        return;
    }
    const world::Vec2 c = true_hole(w);
    const bool resting = std::abs(w.piece_pose.z - w.board.surface_z) <= kResting;
    const double from_offset = std::hypot(w.piece_pose.x - c.x(), w.piece_pose.y - (c.y() + params_.offset));
    phase_ = resting && from_offset <= params_.tol_xy ? Phase::Slide : Phase::Lift;
}

Action ScriptedExpert::next(const world::WorldState& w)
{
    if (!w.grasped) throw Error(ErrorCode::NotApplicable, "the demonstrator needs the piece in hand");
    if (succeeded(w)) phase_ = Phase::Done;
    const world::StepLimits& lim = w.params.limits;
    const world::Vec2 c = true_hole(w);
    const Pose4& piece = w.piece_pose;
    Action a;

    if (phase_ == Phase::Lift) {
        if (w.ee.z < params_.clearance_z - 1e-9) {
            a.d.z = std::min(lim.max_translation, params_.clearance_z - w.ee.z);
            return a;
        }
        phase_ = Phase::MoveToOffset;
    }
    if (phase_ == Phase::MoveToOffset) {
        const double gx = c.x() - piece.x;
        const double gy = c.y() + params_.offset - piece.y;
        const double gyaw = alignment_correction(w.piece_shape, piece.yaw);
        const double gz = params_.clearance_z - w.ee.z;
        if (std::max({std::abs(gx), std::abs(gy), std::abs(gz)}) > 1e-9 || std::abs(gyaw) > 1e-9) {
            a.d = {std::clamp(gx, -lim.max_translation, lim.max_translation),
                   std::clamp(gy, -lim.max_translation, lim.max_translation),
                   std::clamp(gz, -lim.max_translation, lim.max_translation), std::clamp(gyaw, -lim.max_yaw, lim.max_yaw)};
            return a;
        }
        phase_ = Phase::Descend;
    }
    if (phase_ == Phase::Descend) {
        const double height = piece.z - w.board.surface_z;
        if (height > kResting && !w.contact) {
            a.d.z = -std::min(lim.max_translation, height + params_.press);
            return a;
        }
        phase_ = Phase::Slide;
    }
    if (phase_ == Phase::Slide) {
        const double dx = c.x() - piece.x;
        const double dy = c.y() - piece.y;
        const double dist = std::hypot(dx, dy);
        const double scale = dist > params_.slide_step ? params_.slide_step / dist : 1.0;
        const double height = std::max(0.0, piece.z - w.board.surface_z);
        a.d = {dx * scale, dy * scale, -std::min(lim.max_translation, height + params_.press), 0.0};
        return a;
    }
    return a;  // Done: hold still
}

Action expert_oracle(const world::WorldState& w)
{
    ScriptedExpert e(w);
    return e.next(w);
}

// ---------------------------------------------------------------------------

Pose4 Demonstration::start() const
{
    if (steps.empty()) throw Error(ErrorCode::InsufficientData, "demonstration has no recorded steps");
    return to_skill_frame(steps.front().obs.ee, steps.front().frame);
}

DemoRecorder::DemoRecorder(const world::WorldState& w0, const FeatureFrame& frame, const DemoOptions& options,
                           std::uint64_t seed)
    : result_{{}, w0}, frame_(frame), options_(options), rng_(seed)
{
    result_.demo.beta = options.beta;
    result_.demo.success = skill::succeeded(w0);
}

Action DemoRecorder::apply(Action a, bool record)
{
    world::WorldState& w = result_.final_world;
    if (record) {
        if (options_.beta > 0.0) {
            std::uniform_real_distribution<double> noise(-options_.beta, options_.beta);
            a.d.x += noise(rng_);
            a.d.y += noise(rng_);
            a.d.z += noise(rng_);
        }
        a = world::clamp_action(a, w.params.limits);
        result_.demo.steps.push_back({world::observe(w), frame_, a});
    } else {
        result_.demo.reset_actions.push_back(a);
    }
    w = world::step(w, a).world;
    ++steps_;
    result_.demo.success = skill::succeeded(w);
    return a;
}

bool DemoRecorder::succeeded() const { return result_.demo.success; }

DemoResult DemoRecorder::finish() const
{
    if (!result_.demo.success) throw Error(ErrorCode::DemoFailed, "demonstration did not insert the piece in time");
    return result_;
}

DemoResult collect_demo(const world::WorldState& w0, const FeatureFrame& frame, const DemoOptions& options,
                        std::uint64_t seed)
{
    DemoRecorder rec(w0, frame, options, seed);
    ScriptedExpert expert(w0, options.expert);
    while (!rec.exhausted() && !succeeded(rec.world())) {
        const Action a = expert.next(rec.world());
        rec.apply(a, expert.recording());
    }
    return rec.finish();
}

// ---------------------------------------------------------------------------

int feature_count(MaxFeatures m, int d)
{
    if (m == MaxFeatures::All) return d;
    return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
}

Vec Tree::predict(const Vec& x) const
{
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

int Tree::depth() const
{
    std::function<int(int)> rec = [&](int i) -> int {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        return n.feature < 0 ? 0 : 1 + std::max(rec(n.left), rec(n.right));
    };
    return nodes.empty() ? 0 : rec(0);
}

namespace {

// Gains below this are treated as ties, which go to the first candidate.
constexpr double kSplitTie = 1e-12;

double summed_sse(const Vec& sum, const Vec& sq, double n) { return (sq.array() - sum.array().square() / n).sum(); }

struct TreeBuilder {
    const Mat& X;
    const Mat& Y;
    const TreeParams& params;
    Rng rng;
    Tree tree;

    int build(std::vector<Eigen::Index>& idx, int depth)
    {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const double n = static_cast<double>(idx.size());
        Vec sum = Vec::Zero(Y.cols()), sq = Vec::Zero(Y.cols());
        for (Eigen::Index i : idx) {
            sum += Y.row(i).transpose();
            sq += Y.row(i).transpose().cwiseAbs2();
        }
        tree.nodes[static_cast<std::size_t>(id)].value = sum / n;
        if (static_cast<int>(idx.size()) < params.min_samples_split) return id;
        if (params.max_depth >= 0 && depth >= params.max_depth) return id;

        const double parent = summed_sse(sum, sq, n);
        const int d = static_cast<int>(X.cols());
        const int m = std::min(d, feature_count(params.max_features, d));
        std::vector<int> feats(static_cast<std::size_t>(d));
        std::iota(feats.begin(), feats.end(), 0);
        if (m < d) {
            for (int k = 0; k < m; ++k) {
                std::uniform_int_distribution<int> pick(k, d - 1);
                std::swap(feats[static_cast<std::size_t>(k)], feats[static_cast<std::size_t>(pick(rng))]);
            }
            feats.resize(static_cast<std::size_t>(m));
            std::sort(feats.begin(), feats.end());
        }

        const std::size_t leaf = static_cast<std::size_t>(std::max(1, params.min_samples_leaf));
        double best = std::numeric_limits<double>::infinity();
        int best_f = -1;
        double best_t = 0.0;
        std::vector<Eigen::Index> order = idx;
        for (int f : feats) {
            std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return X(a, f) < X(b, f); });
            Vec ls = Vec::Zero(Y.cols()), lq = Vec::Zero(Y.cols());
            for (std::size_t k = 1; k < order.size(); ++k) {
                ls += Y.row(order[k - 1]).transpose();
                lq += Y.row(order[k - 1]).transpose().cwiseAbs2();
                const double lo = X(order[k - 1], f), hi = X(order[k], f);
                if (!(lo < hi) || k < leaf || order.size() - k < leaf) continue;
                const double nl = static_cast<double>(k), nr = n - nl;
                const double sse = summed_sse(ls, lq, nl) + summed_sse(sum - ls, sq - lq, nr);
                if (sse < best - kSplitTie) {
                    best = sse;
                    best_f = f;
                    best_t = 0.5 * (lo + hi);
                }
            }
        }
        if (best_f < 0 || !(best < parent - kSplitTie)) return id;

        std::vector<Eigen::Index> left, right;
        for (Eigen::Index i : idx) (X(i, best_f) <= best_t ? left : right).push_back(i);
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = best_f;
        node.threshold = best_t;
        node.left = l;
        node.right = r;
        return id;
    }
};

}  // namespace

Tree fit_tree(const Mat& X, const Mat& Y, const TreeParams& params, std::uint64_t seed)
{
    if (X.rows() == 0 || X.rows() != Y.rows()) throw Error(ErrorCode::InsufficientData, "tree needs matching non-empty X, Y");
    TreeBuilder b{X, Y, params, Rng(seed), {}};
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    b.build(idx, 0);
    return std::move(b.tree);
}

Vec Forest::predict(const Vec& x) const
{
    Vec out = Vec::Zero(output_dim);
    for (const Tree& t : trees) out += t.predict(x);
    return out / static_cast<double>(trees.size());
}

Forest fit_forest(const Mat& X, const Mat& Y, const ForestParams& params, std::uint64_t seed)
{
    Forest f;
    f.params = params;
    f.input_dim = static_cast<int>(X.cols());
    f.output_dim = static_cast<int>(Y.cols());
    const Eigen::Index n = X.rows();
    for (int t = 0; t < params.n_trees; ++t) {
        const std::uint64_t ts = derive_seed(seed, 7, static_cast<std::uint64_t>(t));
        if (!params.bootstrap) {
            f.trees.push_back(fit_tree(X, Y, params.tree, ts));
            continue;
        }
        Rng rng(ts);
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        Mat Xb(n, X.cols()), Yb(n, Y.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index j = pick(rng);
            Xb.row(i) = X.row(j);
            Yb.row(i) = Y.row(j);
        }
        f.trees.push_back(fit_tree(Xb, Yb, params.tree, derive_seed(ts, 1, 0)));
    }
    return f;
}

std::vector<ForestParams> GridSpec::configs() const
{
    std::vector<ForestParams> out;
    for (int nt : n_trees)
        for (MaxFeatures mf : max_features)
            for (int mss : min_samples_split)
                for (int msl : min_samples_leaf)
                    for (int md : max_depth) out.push_back({nt, {mf, mss, msl, md}, true});
    return out;
}

CvResult fit_forest_cv(const Mat& X, const Mat& Y, const GridSpec& grid, int k_folds, std::uint64_t seed)
{
    const Eigen::Index n = X.rows();
    if (k_folds < 2 || n < k_folds) throw Error(ErrorCode::InsufficientData, "fewer rows than cross-validation folds");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) fold[static_cast<std::size_t>(perm[i])] = static_cast<int>(i) % k_folds;

    const std::vector<ForestParams> configs = grid.configs();
    if (configs.empty()) throw Error(ErrorCode::InvalidConfig, "empty hyperparameter grid");
    CvResult result;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        double total = 0.0;
        for (int k = 0; k < k_folds; ++k) {
            std::vector<Eigen::Index> tr, te;
            for (Eigen::Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == k ? te : tr).push_back(i);
            const Mat Xtr = X(tr, Eigen::all), Ytr = Y(tr, Eigen::all);
            const Forest f = fit_forest(Xtr, Ytr, configs[c], derive_seed(seed, 100 + c, static_cast<std::uint64_t>(k)));
            double se = 0.0;
            for (Eigen::Index i : te) se += (f.predict(X.row(i).transpose()) - Y.row(i).transpose()).squaredNorm();
            total += se / static_cast<double>(te.size() * static_cast<std::size_t>(Y.cols()));
        }
        const double score = total / k_folds;
        result.scores.push_back(score);
        if (score < best) {
            best = score;
            best_i = c;
        }
    }
    result.selected = configs[best_i];
    result.forest = fit_forest(X, Y, result.selected, derive_seed(seed, 99, best_i));
    return result;
}

Action predict_action(const Forest& forest, const Vec& f, const world::StepLimits& limits)
{
    if (f.size() != forest.input_dim) throw Error(ErrorCode::InvalidConfig, "feature dimension does not match the forest");
    const Vec y = forest.predict(f);
    Action a;
    a.d = {y[0], y[1], y[2], y.size() > 3 ? y[3] : 0.0};
    a.grip = Grip::Hold;
    return world::clamp_action(a, limits);
}

std::pair<Mat, Mat> policy_dataset(const DemoSet& demos, const vae::VaeParams& vae)
{
    std::size_t rows = 0;
    for (const auto& d : demos.demos) rows += d.steps.size();
    Mat X(static_cast<Eigen::Index>(rows), kFeatureDim), Y(static_cast<Eigen::Index>(rows), 4);
    Eigen::Index r = 0;
    for (const auto& d : demos.demos) {
        for (const DemoStep& s : d.steps) {
            X.row(r) = features(vae, s.obs, s.frame).transpose();
            Y.row(r) << s.action.d.x, s.action.d.y, s.action.d.z, s.action.d.yaw;
            ++r;
        }
    }
    return {X, Y};
}

// ---------------------------------------------------------------------------

namespace {

Eigen::Vector4d difference(const Pose4& p, const Eigen::Vector4d& mean)
{
    return {p.x - mean[0], p.y - mean[1], p.z - mean[2], wrap_angle(p.yaw - mean[3])};
}

}  // namespace

double InitiationSet::mahalanobis(const Pose4& p) const
{
    const Eigen::Vector4d d = difference(p, mean);
    return std::sqrt(d.dot(cov.ldlt().solve(d)));
}

InitiationSet fit_initiation(const std::vector<Pose4>& starts)
{
    if (starts.empty()) throw Error(ErrorCode::InsufficientData, "initiation set needs at least one start");
    const double n = static_cast<double>(starts.size());
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    const double ref = starts.front().yaw;
    for (const Pose4& p : starts) {
        mean += Eigen::Vector4d(p.x, p.y, p.z, ref + wrap_angle(p.yaw - ref));
    }
    mean /= n;
    mean[3] = wrap_angle(mean[3]);
    InitiationSet s;
    s.mean = mean;
    s.cov = Eigen::Matrix4d::Zero();
    for (const Pose4& p : starts) {
        const Eigen::Vector4d d = difference(p, mean);
        s.cov += d * d.transpose();
    }
    s.cov /= n;
    s.cov += Eigen::Matrix4d::Identity() * kCovRegularization;
    return s;
}

InitiationSet fit_initiation(const DemoSet& demos)
{
    std::vector<Pose4> starts;
    for (const auto& d : demos.demos) {
        if (!d.steps.empty()) starts.push_back(d.start());
    }
    return fit_initiation(starts);
}

Pose4 sample_initiation(const InitiationSet& set, std::uint64_t seed, const std::function<bool(const Pose4&)>& accept,
                        int max_tries)
{
    const Eigen::Matrix4d L = set.cov.llt().matrixL();
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < max_tries; ++t) {
        Eigen::Vector4d z;
        for (int i = 0; i < 4; ++i) z[i] = normal(rng);
        const Eigen::Vector4d s = set.mean + L * z;
        const Pose4 p{s[0], s[1], s[2], wrap_angle(s[3])};
        if (!accept || accept(p)) return p;
    }
    throw Error(ErrorCode::SamplingExhausted, "every initiation sample was rejected");
}

// ---------------------------------------------------------------------------

SkillBundle train_skill(const DemoSet& demos, const SkillTrainSpec& spec, std::uint64_t seed)
{
    std::vector<world::Raster> rasters;
    for (const auto& d : demos.demos) {
        for (const DemoStep& s : d.steps) rasters.push_back(s.obs.raster);
    }
    if (rasters.empty()) throw Error(ErrorCode::InsufficientData, "no recorded demonstration steps");
    SkillBundle b;
    b.vae = vae::train(vae::VaeParams::random(derive_seed(seed, 0, 0)), rasters, spec.vae, derive_seed(seed, 0, 1));
    const auto [X, Y] = policy_dataset(demos, b.vae);
    b.forest = fit_forest_cv(X, Y, spec.grid, spec.k_folds, derive_seed(seed, 1, 0)).forest;
    b.initiation = fit_initiation(demos);
    return b;
}

// ---------------------------------------------------------------------------

namespace {

Json node_json(const Tree& t, int i)
{
    const TreeNode& n = t.nodes[static_cast<std::size_t>(i)];
    Json value(std::vector<double>(n.value.data(), n.value.data() + n.value.size()));
    if (n.feature < 0) return Json{{"value", value}};
    return Json{{"feature", n.feature},
                {"threshold", n.threshold},
                {"value", value},
                {"left", node_json(t, n.left)},
                {"right", node_json(t, n.right)}};
}

int node_from_json(Tree& t, const Json& j)
{
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    const auto v = j.at("value").get<std::vector<double>>();
    t.nodes[static_cast<std::size_t>(id)].value = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    if (j.contains("feature")) {
        const int l = node_from_json(t, j.at("left"));
        const int r = node_from_json(t, j.at("right"));
        TreeNode& n = t.nodes[static_cast<std::size_t>(id)];
        n.feature = j.at("feature").get<int>();
        n.threshold = j.at("threshold").get<double>();
        n.left = l;
        n.right = r;
    }
    return id;
}

}  // namespace

Json to_json(const Tree& t) { return node_json(t, 0); }

Json to_json(const Forest& f)
{
    Json trees = Json::array();
    for (const Tree& t : f.trees) trees.push_back(to_json(t));
    const TreeParams& tp = f.params.tree;
    return Json{{"params",
                 {{"n_trees", f.params.n_trees},
                  {"max_features", tp.max_features == MaxFeatures::Sqrt ? "sqrt" : "all"},
                  {"min_samples_split", tp.min_samples_split},
                  {"min_samples_leaf", tp.min_samples_leaf},
                  {"max_depth", tp.max_depth},
                  {"bootstrap", f.params.bootstrap}}},
                {"input_dim", f.input_dim},
                {"output_dim", f.output_dim},
                {"trees", trees}};
}

Forest forest_from_json(const Json& j)
{
    try {
        Forest f;
        const Json& p = j.at("params");
        f.params.n_trees = p.at("n_trees").get<int>();
        f.params.tree.max_features = p.at("max_features").get<std::string>() == "sqrt" ? MaxFeatures::Sqrt : MaxFeatures::All;
        f.params.tree.min_samples_split = p.at("min_samples_split").get<int>();
        f.params.tree.min_samples_leaf = p.at("min_samples_leaf").get<int>();
        f.params.tree.max_depth = p.at("max_depth").get<int>();
        f.params.bootstrap = p.at("bootstrap").get<bool>();
        f.input_dim = j.at("input_dim").get<int>();
        f.output_dim = j.at("output_dim").get<int>();
        for (const Json& t : j.at("trees")) {
            Tree tree;
            node_from_json(tree, t);
            f.trees.push_back(std::move(tree));
        }
        return f;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::CorruptLog, std::string("bad forest record: ") + e.what());
    }
}

Json to_json(const InitiationSet& s)
{
    Json cov = Json::array();
    for (int i = 0; i < 4; ++i) cov.push_back({s.cov(i, 0), s.cov(i, 1), s.cov(i, 2), s.cov(i, 3)});
    return Json{{"mean", {s.mean[0], s.mean[1], s.mean[2], s.mean[3]}}, {"cov", cov}};
}

InitiationSet initiation_from_json(const Json& j)
{
    try {
        InitiationSet s;
        for (int i = 0; i < 4; ++i) {
            s.mean[i] = j.at("mean").at(static_cast<std::size_t>(i)).get<double>();
            for (int k = 0; k < 4; ++k) {
                s.cov(i, k) = j.at("cov").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
            }
        }
        return s;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::CorruptLog, std::string("bad initiation record: ") + e.what());
    }
}

Json to_json(const DemoStep& s)
{
    return Json{{"ee", s.obs.ee},
                {"contact", s.obs.contact},
                {"raster", s.obs.raster},
                {"hole_hat", {s.frame.hole_hat.x(), s.frame.hole_hat.y()}},
                {"grasp_yaw", s.frame.grasp_yaw},
                {"action", s.action}};
}

DemoStep demo_step_from_json(const Json& j)
{
    try {
        DemoStep s;
        s.obs.ee = j.at("ee").get<Pose4>();
        s.obs.contact = j.at("contact").get<bool>();
        s.obs.raster = j.at("raster").get<world::Raster>();
        s.frame.hole_hat = {j.at("hole_hat").at(0).get<double>(), j.at("hole_hat").at(1).get<double>()};
        s.frame.grasp_yaw = j.at("grasp_yaw").get<double>();
        s.action = j.at("action").get<Action>();
        return s;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::CorruptLog, std::string("bad demo step: ") + e.what());
    }
}

std::string demos_to_jsonl(const DemoSet& demos)
{
    std::ostringstream out;
    for (std::size_t d = 0; d < demos.demos.size(); ++d) {
        const Demonstration& demo = demos.demos[d];
        for (std::size_t t = 0; t < demo.steps.size(); ++t) {
            Json line = to_json(demo.steps[t]);
            line["demo"] = d;
            line["t"] = t;
            line["beta"] = demo.beta;
            line["success"] = demo.success;
            out << line.dump() << '\n';
        }
    }
    return out.str();
}

DemoSet demos_from_jsonl(const std::string& text)
{
    DemoSet set;
    std::map<std::size_t, Demonstration> by_index;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception&) {
            throw Error(ErrorCode::CorruptLog, "unparseable demo line " + std::to_string(lineno));
        }
        try {
            Demonstration& d = by_index[j.at("demo").get<std::size_t>()];
            d.beta = j.value("beta", 0.0);
            d.success = j.value("success", true);
            d.steps.push_back(demo_step_from_json(j));
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::CorruptLog, "demo line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (auto& [i, d] : by_index) {
        set.beta = d.beta;
        set.demos.push_back(std::move(d));
    }
    return set;
}

}  // namespace skillpatch::skill
