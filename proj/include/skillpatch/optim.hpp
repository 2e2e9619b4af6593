#pragma once

#include <functional>

#include <Eigen/Core>

namespace skillpatch::optim {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct LbfgsbOptions {
    int max_iterations{100};
    int memory{8};
    double gradient_step{1e-5};  // central-difference step
    double pgtol{1e-6};          // stop when the projected gradient is this small (inf-norm)
    double ftol{1e-10};          // relative decrease below which we stop
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double f{0.0};
    int iterations{0};
};

/// Central-difference gradient.
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h);

/// Limited-memory quasi-Newton minimization inside the box [lo, hi]: two-loop
/// recursion on the free variables, projection onto the box, backtracking
/// Armijo search along the projected path. Gradients are differenced numerically.
MinimizeResult minimize_box(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi, const LbfgsbOptions& options = {});

}  // namespace skillpatch::optim
