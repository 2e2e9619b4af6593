#include "skillpatch/optim.hpp"

#include <cmath>
#include <deque>

namespace skillpatch::optim {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
    return x.cwiseMax(lo).cwiseMin(hi);
}

/// Gradient with components zeroed where the bound is active and descent would leave the box.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi)
{
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) pg[i] = 0.0;
    }
    return pg;
}

double safe(double v) { return std::isfinite(v) ? v : 1e300; }

}  // namespace

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h)
{
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
        if (!std::isfinite(g[i])) g[i] = 0.0;
    }
    return g;
}

MinimizeResult minimize_box(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi, const LbfgsbOptions& options)
{
    MinimizeResult r;
    r.x = project(x0, lo, hi);
    r.f = safe(f(r.x));
    Eigen::VectorXd g = numeric_gradient(f, r.x, options.gradient_step);
    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;  // (s, y)

    for (r.iterations = 0; r.iterations < options.max_iterations; ++r.iterations) {
        const Eigen::VectorXd pg = projected_gradient(r.x, g, lo, hi);
        if (pg.lpNorm<Eigen::Infinity>() < options.pgtol) break;

        // Two-loop recursion restricted to variables not pinned at a bound.
        const Eigen::VectorXd mask = (pg.array() != 0.0).cast<double>();
        Eigen::VectorXd q = pg;
        std::vector<double> alpha(memory.size());
        for (std::size_t k = memory.size(); k-- > 0;) {
            const auto& [s, y] = memory[k];
            const double ys = y.cwiseProduct(mask).dot(s.cwiseProduct(mask));
            alpha[k] = 0.0;
            if (ys <= 1e-12) continue;
            alpha[k] = s.cwiseProduct(mask).dot(q) / ys;
            q -= alpha[k] * y.cwiseProduct(mask);
        }
        if (!memory.empty()) {
            const auto& [s, y] = memory.back();
            const double yy = y.cwiseProduct(mask).squaredNorm();
            const double ys = s.cwiseProduct(mask).dot(y.cwiseProduct(mask));
            if (yy > 0.0 && ys > 0.0) q *= ys / yy;
        }
        for (std::size_t k = 0; k < memory.size(); ++k) {
            const auto& [s, y] = memory[k];
            const double ys = y.cwiseProduct(mask).dot(s.cwiseProduct(mask));
            if (ys <= 1e-12) continue;
            const double beta = y.cwiseProduct(mask).dot(q) / ys;
            q += (alpha[k] - beta) * s.cwiseProduct(mask);
        }
        Eigen::VectorXd d = -q.cwiseProduct(mask);
        if (!d.allFinite() || d.dot(pg) >= 0.0) {
            d = -pg;
            memory.clear();
        }

        // Backtracking along the projected path.
        double t = 1.0;
        if (memory.empty()) t = std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>());
        Eigen::VectorXd x_new;
        double f_new = r.f;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = project(r.x + t * d, lo, hi);
            f_new = safe(f(x_new));
            if (f_new <= r.f + 1e-4 * g.dot(x_new - r.x)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (memory.empty()) break;
            memory.clear();
            continue;
        }
        const Eigen::VectorXd g_new = numeric_gradient(f, x_new, options.gradient_step);
        const Eigen::VectorXd s = x_new - r.x;
        const Eigen::VectorXd y = g_new - g;
        if (s.dot(y) > 1e-12) {
            memory.emplace_back(s, y);
            if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
        }
        const double decrease = r.f - f_new;
        r.x = x_new;
        r.f = f_new;
        g = g_new;
        if (decrease <= options.ftol * (1.0 + std::abs(r.f))) {
            ++r.iterations;
            break;
        }
    }
    return r;
}

}  // namespace skillpatch::optim
