#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "skillpatch/io.hpp"
#include "skillpatch/planner.hpp"
#include "skillpatch/pose.hpp"

namespace skillpatch::anomaly {

struct TransitionSample {
    Pose4 s_t{};
    world::Action a_t{};
    Pose4 s_pred{};
    Pose4 s_obs{};
    bool contact_pred{false};
    bool contact_obs{false};
};

struct GateParams {
    double p{0.98};
    double k0{0.05};
    double sigma_floor{1e-4};
    bool cumulative{false};  // compare against the open-loop plan instead of one-step predictions

    /// Throws InvalidConfig unless 0 < p < 1, k0 > 0 and sigma_floor > 0.
    void validate() const;
};

enum class Gate { Expected, Unexpected };

/// Two-sided standard-normal quantile: Phi^-1((1 + p) / 2).
double z_quantile(double p);

/// Translational acceptance half-width for a step of the given predicted length.
double acceptance_band(double step_length, const GateParams& params);

Gate gate_transition(const TransitionSample& sample, const GateParams& params);

/// Accumulated-error variant: the band grows with the distance travelled along the plan.
Gate gate_cumulative(const Pose4& s_obs, const Pose4& s_plan, double travelled, bool contact_obs, bool contact_pred,
                     const GateParams& params);

struct FailureDatasets {
    std::vector<Pose4> expected;    // D_S
    std::vector<Pose4> unexpected;  // D~_S
};

struct GpTheta {
    double sigma_f{1.0};
    Eigen::VectorXd rho{};
    double sigma_n{0.1};

    Eigen::VectorXd to_log() const;
    static GpTheta from_log(const Eigen::VectorXd& v);
};

struct GpBounds {
    double sigma_f_lo{1e-2}, sigma_f_hi{1e2};
    double rho_lo{1e-3}, rho_hi{1e1};
    double sigma_n_lo{1e-6}, sigma_n_hi{1.0};
};

/// ARD Matern 5/2 kernel.
double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpTheta& theta);
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const GpTheta& theta);

struct GpModel {
    Eigen::MatrixXd X{};  // n x d
    Eigen::VectorXd y{};
    GpTheta theta{};
    Eigen::MatrixXd chol{};  // lower factor of K + sigma_n^2 I
    Eigen::VectorXd alpha{};
    bool degenerate{false};  // every label identical: g is that constant
    double constant{0.0};
    GpBounds bounds{};
    std::uint64_t seed{0};
};

/// Factorizes K + sigma_n^2 I. Throws NotPositiveDefinite when the factorization fails.
GpModel condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpTheta& theta);

double log_marginal_likelihood(const GpModel& gp);

struct FitOptions {
    int restarts{4};
    int max_iterations{60};
    GpBounds bounds{};
    GpTheta initial{};  // restart 0 starts here (rho defaults to 0.05 per dimension)
};

GpModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitOptions& options, std::uint64_t seed);

/// Posterior mean of the failure label.
double predict_failure(const GpModel& gp, const Eigen::VectorXd& x);
double predict_failure(const GpModel& gp, const Pose4& s);

/// GP input for a state: end-effector (x, y, z).
Eigen::VectorXd gp_input(const Pose4& s);

bool plan_crosses_failure(const GpModel& gp, const planner::Plan& plan, double tau);

/// Training set: every unexpected state plus the expected states nearest to one,
/// up to `cap` points in total.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> training_set(const FailureDatasets& data, int cap);

Json to_json(const GpModel& gp);
GpModel gp_from_json(const Json& j);
Json to_json(const FailureDatasets& d);
FailureDatasets datasets_from_json(const Json& j);

}  // namespace skillpatch::anomaly
