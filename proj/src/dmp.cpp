#include "skillpatch/dmp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>

#include "skillpatch/common.hpp"

namespace skillpatch::dmp {

void DmpConfig::validate() const
{
    if (!(alpha_z > 0.0) || !(beta_z > 0.0) || !(alpha_x > 0.0) || tau < 0.0 || K < 2 || ridge_lambda < 0.0) {
        throw Error(ErrorCode::InvalidConfig, "DMP gains must be positive and K >= 2");
    }
}

double phase(double t, double tau, const DmpConfig& config) { return std::exp(-config.alpha_x * t / tau); }

Vec centers(const DmpConfig& config)
{
    Vec c(config.K);
    for (int k = 0; k < config.K; ++k) c[k] = std::exp(-config.alpha_x * k / (config.K - 1));
    return c;
}

Vec widths(const DmpConfig& config)
{
    const Vec c = centers(config);
    Vec h(config.K);
    for (int k = 0; k + 1 < config.K; ++k) h[k] = 1.0 / ((c[k + 1] - c[k]) * (c[k + 1] - c[k]));
    h[config.K - 1] = h[config.K - 2];
    return h;
}

Vec basis(double x, const DmpConfig& config)
{
    const Vec c = centers(config), h = widths(config);
    return (-(h.array() * (x - c.array()).square())).exp().matrix();
}

Vec feature_row(double x, const DmpConfig& config)
{
    const Vec psi = basis(x, config);
    Vec row(config.K + 1);
    row.head(config.K) = psi * (x / psi.sum());
    row[config.K] = psi[0];
    return row * (config.alpha_z * config.beta_z);
}

double forcing(double x, const DimWeights& weights, const DmpConfig& config)
{
    const Vec row = feature_row(x, config);
    return row.head(config.K).dot(weights.w) + row[config.K] * weights.w0;
}

DmpModel DmpModel::zero(int dims, double tau, const DmpConfig& config)
{
    DmpModel m;
    m.config = config;
    m.tau = tau;
    m.weights.assign(static_cast<std::size_t>(dims), DimWeights{Vec::Zero(config.K), 0.0});
    m.y0_demo = Vec::Zero(dims);
    m.goal_demo = Vec::Zero(dims);
    m.residual_rms.assign(static_cast<std::size_t>(dims), 0.0);
    return m;
}

namespace {

// First-order one-sided differences at the ends, central inside.
Mat gradient(const Vec& t, const Mat& Y)
{
    const Eigen::Index n = t.size();
    Mat d(n, Y.cols());
    d.row(0) = (Y.row(1) - Y.row(0)) / (t[1] - t[0]);
    d.row(n - 1) = (Y.row(n - 1) - Y.row(n - 2)) / (t[n - 1] - t[n - 2]);
    for (Eigen::Index i = 1; i + 1 < n; ++i) d.row(i) = (Y.row(i + 1) - Y.row(i - 1)) / (t[i + 1] - t[i - 1]);
    return d;
}

}  // namespace

DmpModel fit_dmp(const Vec& t, const Mat& Y, const DmpConfig& config)
{
    config.validate();
    const Eigen::Index n = t.size();
    if (n < config.K + 2 || Y.rows() != n) {
        throw Error(ErrorCode::InsufficientSamples, "demonstration needs at least K + 2 samples");
    }
    for (Eigen::Index i = 1; i < n; ++i) {
        if (!(t[i] > t[i - 1])) throw Error(ErrorCode::InsufficientSamples, "time stamps must increase");
    }
    DmpModel m;
    m.config = config;
    m.tau = config.tau > 0.0 ? config.tau : t[n - 1] - t[0];
    m.y0_demo = Y.row(0).transpose();
    m.goal_demo = Y.row(n - 1).transpose();
    const Mat yd = gradient(t, Y);
    const Mat ydd = gradient(t, yd);

    Mat Phi(n, config.K + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        Phi.row(i) = feature_row(phase(t[i] - t[0], m.tau, config), config).transpose();
    }
    Mat A = Phi.transpose() * Phi;
    A.diagonal().array() += config.ridge_lambda;
    const Eigen::LDLT<Mat> solver(A);
    const double tau = m.tau;
    for (Eigen::Index d = 0; d < Y.cols(); ++d) {
        const double g = m.goal_demo[d];
        const Vec target = (tau * tau * ydd.col(d).array() -
                            config.alpha_z * (config.beta_z * (g - Y.col(d).array()) - tau * yd.col(d).array()))
                               .matrix();
        const Vec w = solver.solve(Phi.transpose() * target);
        m.weights.push_back({w.head(config.K), w[config.K]});
        m.residual_rms.push_back(std::sqrt((Phi * w - target).squaredNorm() / static_cast<double>(n)));
    }
    return m;
}

double amplitude_scale(const DmpModel& model, int d, double y0, double goal)
{
    const double demo = model.goal_demo[d] - model.y0_demo[d];
    double s = std::abs(demo) < model.config.amplitude_guard ? 1.0 : (goal - y0) / demo;
    if (d == 2) s *= model.config.z_amplitude_scale;
    return s;
}

Rollout rollout(const DmpModel& model, const Vec& y0, const Vec& goal, double dt, int steps)
{
    if (!(dt > 0.0) || steps < 0) throw Error(ErrorCode::InvalidConfig, "rollout needs dt > 0");
    const DmpConfig& c = model.config;
    const int dims = model.dims();
    const double tau = model.tau;
    Vec scale(dims);
    for (int d = 0; d < dims; ++d) scale[d] = amplitude_scale(model, d, y0[d], goal[d]);

    Rollout r;
    r.t = Vec::LinSpaced(steps + 1, 0.0, dt * steps);
    r.Y.resize(steps + 1, dims);
    Vec y = y0, yd = Vec::Zero(dims);
    r.Y.row(0) = y.transpose();
    for (int i = 0; i < steps; ++i) {
        // the canonical system is integrated in closed form
        const double x = phase(r.t[i], tau, c);
        const Vec row = feature_row(x, c);
        Vec ydd(dims);
        for (int d = 0; d < dims; ++d) {
            const DimWeights& w = model.weights[static_cast<std::size_t>(d)];
            const double f = row.head(c.K).dot(w.w) + row[c.K] * w.w0;
            ydd[d] = c.alpha_z * (c.beta_z * (goal[d] - y[d]) / (tau * tau) - yd[d] / tau) + scale[d] * f / (tau * tau);
        }
        y += dt * yd;
        yd += dt * ydd;
        r.Y.row(i + 1) = y.transpose();
    }
    return r;
}

Rollout rollout(const DmpModel& model, const Vec& y0, const Vec& goal, double duration)
{
    const double dt = 0.01 * model.tau;
    return rollout(model, y0, goal, dt, static_cast<int>(std::lround(duration / 0.01)));
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> as_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }
Vec as_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

Json to_json(const DmpModel& m)
{
    Json weights = Json::array();
    for (const DimWeights& w : m.weights) weights.push_back({{"w", as_std(w.w)}, {"w0", w.w0}});
    const DmpConfig& c = m.config;
    return Json{{"config",
                 {{"alpha_z", c.alpha_z},
                  {"beta_z", c.beta_z},
                  {"tau", c.tau},
                  {"alpha_x", c.alpha_x},
                  {"K", c.K},
                  {"ridge_lambda", c.ridge_lambda},
                  {"z_amplitude_scale", c.z_amplitude_scale},
                  {"amplitude_guard", c.amplitude_guard}}},
                {"tau", m.tau},
                {"weights", weights},
                {"y0_demo", as_std(m.y0_demo)},
                {"goal_demo", as_std(m.goal_demo)},
                {"residual_rms", m.residual_rms}};
}

DmpModel dmp_from_json(const Json& j)
{
    try {
        DmpModel m;
        const Json& c = j.at("config");
        m.config.alpha_z = c.at("alpha_z").get<double>();
        m.config.beta_z = c.at("beta_z").get<double>();
        m.config.tau = c.at("tau").get<double>();
        m.config.alpha_x = c.at("alpha_x").get<double>();
        m.config.K = c.at("K").get<int>();
        m.config.ridge_lambda = c.at("ridge_lambda").get<double>();
        m.config.z_amplitude_scale = c.at("z_amplitude_scale").get<double>();
        m.config.amplitude_guard = c.at("amplitude_guard").get<double>();
        m.config.validate();
        m.tau = j.at("tau").get<double>();
        for (const Json& w : j.at("weights")) {
            m.weights.push_back({as_vec(w.at("w").get<std::vector<double>>()), w.at("w0").get<double>()});
            if (m.weights.back().w.size() != m.config.K) throw Error(ErrorCode::CorruptLog, "weight count differs from K");
        }
        m.y0_demo = as_vec(j.at("y0_demo").get<std::vector<double>>());
        m.goal_demo = as_vec(j.at("goal_demo").get<std::vector<double>>());
        m.residual_rms = j.at("residual_rms").get<std::vector<double>>();
        return m;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::CorruptLog, std::string("bad DMP record: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptLog, e.what());
    }
}

std::string rollout_csv(const Rollout& r, const std::vector<double>& yaw)
{
    std::ostringstream out;
    out.precision(17);
    out << "t,x,y,z,yaw\n";
    for (Eigen::Index i = 0; i < r.t.size(); ++i) {
        out << r.t[i];
        for (Eigen::Index d = 0; d < 3; ++d) out << ',' << (d < r.Y.cols() ? r.Y(i, d) : 0.0);
        out << ',' << (static_cast<std::size_t>(i) < yaw.size() ? yaw[static_cast<std::size_t>(i)] : 0.0) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

DmpTrainResult train_baseline(const DemoSource& source, const DmpConfig& config)
{
    world::TaskConfig cfg = source.task;
    cfg.eps_percept = 0.0;
    auto [w, scene] = world::make_task(cfg, source.seed);
    const auto model = planner::ApproxModel::from_scene(scene, w.board, cfg.shape, cfg.goal_cell);
    const planner::Plan plan = planner::plan_task(model, {w.ee, false, {}}, {}, {}, source.seed);
    const std::size_t k = planner::grasp_lift_end(plan);
    if (plan.empty() || k >= plan.actions.size()) throw Error(ErrorCode::DemoFailed, "no transport in the demonstration plan");

    std::vector<Pose4> poses;
    for (std::size_t i = 0; i < plan.actions.size(); ++i) {
        if (i == k) poses.push_back(w.ee);
        w = world::step(w, plan.actions[i]).world;
        if (i >= k) poses.push_back(w.ee);
    }
    if (world::check_outcome(w, cfg.goal_cell) != world::Outcome::success()) {
        throw Error(ErrorCode::DemoFailed, "demonstration run did not insert the piece");
    }
    DmpTrainResult r;
    const auto n = static_cast<Eigen::Index>(poses.size());
    r.t.resize(n);
    r.Y.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        r.t[i] = static_cast<double>(i) * source.step_seconds;
        r.Y.row(i) << poses[static_cast<std::size_t>(i)].x, poses[static_cast<std::size_t>(i)].y,
            poses[static_cast<std::size_t>(i)].z;
    }
    r.model = fit_dmp(r.t, r.Y, config);
    return r;
}

DmpEpisode baseline_episode(const world::WorldState& w0, const planner::ApproxModel& model, const DmpModel& dmp,
                            std::uint64_t seed, const EpisodeOptions& options)
{
    DmpEpisode ep;
    ep.final_world = w0;
    world::WorldState& w = ep.final_world;
    planner::Plan plan;
    try {
        plan = planner::plan_task(model, {w0.ee, false, {}}, {}, options.rrt, seed);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::PlanNotFound) throw;
    }
    const std::size_t k = planner::grasp_lift_end(plan);
    if (plan.empty() || k >= plan.actions.size()) {
        ep.outcome = world::check_outcome(w, model.goal_hole);
        return ep;
    }
    for (std::size_t i = 0; i < k; ++i) {
        w = world::step(w, plan.actions[i]).world;
        ep.actions.push_back(plan.actions[i]);
    }
    ep.grasped = w.grasped;

    const auto& hole = model.board.hole_centers[static_cast<std::size_t>(model.goal_hole)];
    const double insert_z = model.board.surface_z - model.board.lip_depth + model.params.grasp_height;
    const double goal_yaw = wrap_angle(-plan.waypoints[k].grasp_offset.yaw);
    Vec y0(3), goal(3);
    y0 << w.ee.x, w.ee.y, w.ee.z;
    goal << hole.x(), hole.y(), insert_z;
    const Rollout r = rollout(dmp, y0, goal, options.duration);

    // Yaw is not part of the primitive; it turns linearly over the first half.
    const Eigen::Index n = r.t.size();
    const double yaw_span = wrap_angle(goal_yaw - w.ee.yaw);
    Pose4 commanded = w.ee;
    for (Eigen::Index i = 1; i < n; ++i) {
        const double frac = std::min(1.0, 2.0 * static_cast<double>(i) / static_cast<double>(n - 1));
        const Pose4 target{r.Y(i, 0), r.Y(i, 1), r.Y(i, 2), wrap_angle(goal_yaw - (1.0 - frac) * yaw_span)};
        world::Action a{delta_between(commanded, target), world::Grip::Hold};
        a = world::clamp_action(a, w.params.limits);
        commanded = apply_delta(commanded, a.d);
        w = world::step(w, a).world;
        ep.actions.push_back(a);
    }
    ep.outcome = world::check_outcome(w, model.goal_hole);
    return ep;
}

}  // namespace skillpatch::dmp
