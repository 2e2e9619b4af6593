#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "skillpatch/optim.hpp"

using namespace skillpatch::optim;

TEST_CASE("unconstrained Rosenbrock reaches (1, 1)")
{
    const Objective f = [](const Eigen::VectorXd& x) {
        return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
    };
    LbfgsbOptions opt;
    opt.max_iterations = 500;
    const auto r = minimize_box(f, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(-5, -5), Eigen::Vector2d(5, 5), opt);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("bounded Rosenbrock stops on the active bound")
{
    // With x0 <= 0.5 the constrained optimum is x0 = 0.5, x1 = 0.25 (the valley floor).
    const Objective f = [](const Eigen::VectorXd& x) {
        return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
    };
    LbfgsbOptions opt;
    opt.max_iterations = 500;
    const auto r = minimize_box(f, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(-2, -2), Eigen::Vector2d(0.5, 2), opt);
    CHECK(r.x[0] == doctest::Approx(0.5));
    CHECK(r.x[1] == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("a quadratic whose minimum lies outside the box lands on the corner")
{
    const Objective f = [](const Eigen::VectorXd& x) { return (x - Eigen::Vector3d(3, -3, 0.2)).squaredNorm(); };
    const auto r = minimize_box(f, Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1));
    CHECK(r.x[0] == doctest::Approx(1.0));
    CHECK(r.x[1] == doctest::Approx(-1.0));
    CHECK(r.x[2] == doctest::Approx(0.2).epsilon(1e-4));
}

TEST_CASE("the iterate never leaves the box and the start is projected")
{
    const Objective f = [](const Eigen::VectorXd& x) { return std::sin(3 * x[0]) + x[1] * x[1]; };
    const auto r = minimize_box(f, Eigen::Vector2d(10, 10), Eigen::Vector2d(0, -1), Eigen::Vector2d(2, 1));
    CHECK(r.x[0] >= 0.0);
    CHECK(r.x[0] <= 2.0);
    CHECK(std::abs(r.x[1]) <= 1.0);
    CHECK(r.f <= f(Eigen::Vector2d(2, 1)));
}

TEST_CASE("central differences match an analytic gradient")
{
    const Objective f = [](const Eigen::VectorXd& x) { return std::exp(x[0]) * std::cos(x[1]); };
    const Eigen::Vector2d x(0.3, -0.7);
    const Eigen::VectorXd g = numeric_gradient(f, x, 1e-5);
    CHECK(g[0] == doctest::Approx(std::exp(0.3) * std::cos(-0.7)).epsilon(1e-8));
    CHECK(g[1] == doctest::Approx(-std::exp(0.3) * std::sin(-0.7)).epsilon(1e-8));
}
