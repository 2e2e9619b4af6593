#include "skillpatch/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <boost/math/distributions/normal.hpp>

#include "skillpatch/common.hpp"
#include "skillpatch/optim.hpp"

namespace skillpatch::anomaly {

void GateParams::validate() const
{
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidConfig, "gate confidence p must lie in (0, 1)");
    if (!(k0 > 0.0)) throw Error(ErrorCode::InvalidConfig, "gate k0 must be positive");
    if (!(sigma_floor > 0.0)) throw Error(ErrorCode::InvalidConfig, "gate sigma_floor must be positive");
}

double z_quantile(double p) { return boost::math::quantile(boost::math::normal(), (1.0 + p) / 2.0); }

double acceptance_band(double step_length, const GateParams& params)
{
    return z_quantile(params.p) * std::max(params.k0 * step_length, params.sigma_floor);
}

namespace {

bool outside_band(const Pose4& obs, const Pose4& ref, double band)
{
    return std::abs(obs.x - ref.x) > band || std::abs(obs.y - ref.y) > band || std::abs(obs.z - ref.z) > band;
}

}  // namespace

Gate gate_transition(const TransitionSample& sample, const GateParams& params)
{
    if (sample.contact_obs != sample.contact_pred) return Gate::Unexpected;
    const double band = acceptance_band(translation_norm(delta_between(sample.s_t, sample.s_pred)), params);
    return outside_band(sample.s_obs, sample.s_pred, band) ? Gate::Unexpected : Gate::Expected;
}

Gate gate_cumulative(const Pose4& s_obs, const Pose4& s_plan, double travelled, bool contact_obs, bool contact_pred,
                     const GateParams& params)
{
    if (contact_obs != contact_pred) return Gate::Unexpected;
    return outside_band(s_obs, s_plan, acceptance_band(travelled, params)) ? Gate::Unexpected : Gate::Expected;
}

Eigen::VectorXd GpTheta::to_log() const
{
    Eigen::VectorXd v(rho.size() + 2);
    v[0] = std::log(sigma_f);
    v.segment(1, rho.size()) = rho.array().log();
    v[rho.size() + 1] = std::log(sigma_n);
    return v;
}

GpTheta GpTheta::from_log(const Eigen::VectorXd& v)
{
    GpTheta t;
    const Eigen::Index d = v.size() - 2;
    t.sigma_f = std::exp(v[0]);
    t.rho = v.segment(1, d).array().exp();
    t.sigma_n = std::exp(v[d + 1]);
    return t;
}

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpTheta& theta)
{
    const double d = ((a - b).array() / theta.rho.array()).matrix().norm();
    const double s5d = std::sqrt(5.0) * d;
    return theta.sigma_f * theta.sigma_f * (1.0 + s5d + 5.0 * d * d / 3.0) * std::exp(-s5d);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const GpTheta& theta)
{
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = theta.sigma_f * theta.sigma_f;
        for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i) = matern52(X.row(i).transpose(), X.row(j).transpose(), theta);
    }
    return K;
}

GpModel condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpTheta& theta)
{
    GpModel gp;
    gp.X = X;
    gp.y = y;
    gp.theta = theta;
    Eigen::MatrixXd K = kernel_matrix(X, theta);
    K.diagonal().array() += theta.sigma_n * theta.sigma_n;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "K + sigma_n^2 I is not positive definite");
    gp.chol = llt.matrixL();
    gp.alpha = llt.solve(y);
    return gp;
}

double log_marginal_likelihood(const GpModel& gp)
{
    const Eigen::Index n = gp.y.size();
    if (gp.chol.rows() != n) throw Error(ErrorCode::NotPositiveDefinite, "model has no valid factorization");
    const double log_det = 2.0 * gp.chol.diagonal().array().log().sum();
    return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - 0.5 * log_det - 0.5 * gp.y.dot(gp.alpha);
}

namespace {

double lml_or_floor(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& log_theta)
{
    try {
        return log_marginal_likelihood(condition(X, y, GpTheta::from_log(log_theta)));
    } catch (const Error&) {
        return -1e300;
    }
}

}  // namespace

GpModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitOptions& options, std::uint64_t seed)
{
    if (X.rows() < 1 || X.rows() != y.size()) throw Error(ErrorCode::InsufficientData, "GP needs at least one labelled point");
    const Eigen::Index d = X.cols();
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) throw Error(ErrorCode::InvalidConfig, "GP labels must be 0 or 1");
    }
    if ((y.array() == y[0]).all()) {
        GpModel gp;
        gp.X = X;
        gp.y = y;
        gp.degenerate = true;
        gp.constant = y[0];
        gp.theta = options.initial;
        gp.theta.rho = Eigen::VectorXd::Constant(d, 0.05);
        gp.bounds = options.bounds;
        gp.seed = seed;
        return gp;
    }

    const GpBounds& b = options.bounds;
    Eigen::VectorXd lo(d + 2), hi(d + 2);
    lo << std::log(b.sigma_f_lo), Eigen::VectorXd::Constant(d, std::log(b.rho_lo)), std::log(b.sigma_n_lo);
    hi << std::log(b.sigma_f_hi), Eigen::VectorXd::Constant(d, std::log(b.rho_hi)), std::log(b.sigma_n_hi);

    GpTheta init = options.initial;
    if (init.rho.size() != d) init.rho = Eigen::VectorXd::Constant(d, 0.05);
    const optim::Objective negative_lml = [&](const Eigen::VectorXd& v) { return -lml_or_floor(X, y, v); };

    Rng rng(seed);
    Eigen::VectorXd best_x;
    double best_f = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, options.restarts); ++r) {
        Eigen::VectorXd x0 = init.to_log();
        if (r > 0) {
            for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
        }
        optim::LbfgsbOptions opt;
        opt.max_iterations = options.max_iterations;
        const optim::MinimizeResult res = optim::minimize_box(negative_lml, x0, lo, hi, opt);
        if (res.f < best_f) {
            best_f = res.f;
            best_x = res.x;
        }
    }
    GpModel gp = condition(X, y, GpTheta::from_log(best_x));
    gp.bounds = b;
    gp.seed = seed;
    return gp;
}

double predict_failure(const GpModel& gp, const Eigen::VectorXd& x)
{
    if (gp.degenerate) return gp.constant;
    double g = 0.0;
    for (Eigen::Index i = 0; i < gp.X.rows(); ++i) g += matern52(x, gp.X.row(i).transpose(), gp.theta) * gp.alpha[i];
    return g;
}

Eigen::VectorXd gp_input(const Pose4& s) { return Eigen::Vector3d(s.x, s.y, s.z); }

double predict_failure(const GpModel& gp, const Pose4& s) { return predict_failure(gp, gp_input(s)); }

bool plan_crosses_failure(const GpModel& gp, const planner::Plan& plan, double tau)
{
    return std::any_of(plan.waypoints.begin(), plan.waypoints.end(),
                       [&](const planner::ModelState& s) { return predict_failure(gp, s.ee) > tau; });
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> training_set(const FailureDatasets& data, int cap)
{
    const std::size_t n_fail = data.unexpected.size();
    std::vector<std::size_t> order(data.expected.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (n_fail > 0) {
        std::vector<double> dist(data.expected.size(), std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < data.expected.size(); ++i) {
            for (const Pose4& f : data.unexpected) {
                dist[i] = std::min(dist[i], (gp_input(data.expected[i]) - gp_input(f)).norm());
            }
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    }
    const std::size_t room = cap > static_cast<int>(n_fail) ? static_cast<std::size_t>(cap) - n_fail : 0;
    const std::size_t n_ok = std::min(order.size(), room);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n_fail + n_ok), 3);
    Eigen::VectorXd y(X.rows());
    Eigen::Index row = 0;
    for (const Pose4& f : data.unexpected) {
        X.row(row) = gp_input(f).transpose();
        y[row++] = 1.0;
    }
    for (std::size_t k = 0; k < n_ok; ++k) {
        X.row(row) = gp_input(data.expected[order[k]]).transpose();
        y[row++] = 0.0;
    }
    return {X, y};
}

Json to_json(const GpModel& gp)
{
    Json X = Json::array();
    for (Eigen::Index i = 0; i < gp.X.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < gp.X.cols(); ++j) row.push_back(gp.X(i, j));
        X.push_back(row);
    }
    Json rho = Json::array();
    for (Eigen::Index i = 0; i < gp.theta.rho.size(); ++i) rho.push_back(gp.theta.rho[i]);
    return Json{{"X", X},
                {"y", std::vector<double>(gp.y.data(), gp.y.data() + gp.y.size())},
                {"theta", {{"sigma_f", gp.theta.sigma_f}, {"rho", rho}, {"sigma_n", gp.theta.sigma_n}}},
                {"bounds",
                 {{"sigma_f", {gp.bounds.sigma_f_lo, gp.bounds.sigma_f_hi}},
                  {"rho", {gp.bounds.rho_lo, gp.bounds.rho_hi}},
                  {"sigma_n", {gp.bounds.sigma_n_lo, gp.bounds.sigma_n_hi}}}},
                {"degenerate", gp.degenerate},
                {"constant", gp.constant},
                {"seed", gp.seed}};
}

GpModel gp_from_json(const Json& j)
{
    try {
        const auto rows = j.at("X").get<std::vector<std::vector<double>>>();
        const auto labels = j.at("y").get<std::vector<double>>();
        const Eigen::Index d = rows.empty() ? 3 : static_cast<Eigen::Index>(rows.front().size());
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), d);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (Eigen::Index k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), k) = rows[i].at(static_cast<std::size_t>(k));
        }
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(labels.data(), static_cast<Eigen::Index>(labels.size()));
        GpTheta theta;
        theta.sigma_f = j.at("theta").at("sigma_f").get<double>();
        const auto rho = j.at("theta").at("rho").get<std::vector<double>>();
        theta.rho = Eigen::Map<const Eigen::VectorXd>(rho.data(), static_cast<Eigen::Index>(rho.size()));
        theta.sigma_n = j.at("theta").at("sigma_n").get<double>();
        GpModel gp;
        if (j.value("degenerate", false)) {
            gp.X = X;
            gp.y = y;
            gp.theta = theta;
            gp.degenerate = true;
            gp.constant = j.at("constant").get<double>();
        } else {
            gp = condition(X, y, theta);
        }
        const Json& b = j.at("bounds");
        gp.bounds = {b.at("sigma_f")[0], b.at("sigma_f")[1], b.at("rho")[0],
                     b.at("rho")[1],     b.at("sigma_n")[0], b.at("sigma_n")[1]};
        gp.seed = j.at("seed").get<std::uint64_t>();
        return gp;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::CorruptLog, std::string("bad GP record: ") + e.what());
    }
}

Json to_json(const FailureDatasets& d) { return Json{{"D_S", d.expected}, {"D_S_tilde", d.unexpected}}; }

FailureDatasets datasets_from_json(const Json& j)
{
    try {
        return {j.at("D_S").get<std::vector<Pose4>>(), j.at("D_S_tilde").get<std::vector<Pose4>>()};
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::CorruptLog, std::string("bad dataset record: ") + e.what());
    }
}

}  // namespace skillpatch::anomaly
