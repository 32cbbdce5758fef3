#pragma once

// Limited-memory BFGS maximizer with a backtracking Armijo line search.
// Every accepted step strictly increases the objective.

#include "lsgp/types.hpp"

#include <cmath>
#include <deque>
#include <functional>

namespace lsgp {

struct LbfgsConfig {
    int max_iterations = 200;
    double gradient_tolerance = 1e-5;  // on the infinity norm
    int history = 8;
    int max_line_search = 40;
};

struct LbfgsResult {
    Vector<double> x;
    double value = 0;
    Vector<double> gradient;
    int iterations = 0;
    bool converged = false;  // gradient tolerance reached
};

/// Objective returns f(x) and writes the gradient.
using Objective = std::function<double(const Vector<double>& x, Vector<double>& grad)>;

inline LbfgsResult lbfgs_maximize(const Objective& objective, Vector<double> x, const LbfgsConfig& config = {}) {
    struct Pair {
        Vector<double> s, y;
        double rho;
    };

    LbfgsResult out;
    Vector<double> g(x.size());
    double f = objective(x, g);
    if (!std::isfinite(f) || !g.allFinite()) {
        throw NumericalError("lbfgs: objective is not finite at the initial point");
    }

    std::deque<Pair> memory;
    int it = 0;
    for (; it < config.max_iterations; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < config.gradient_tolerance) {
            out.converged = true;
            break;
        }

        // two-loop recursion on the negated problem: direction = H * g (ascent)
        Vector<double> q = g;
        std::vector<double> alpha(memory.size());
        for (std::size_t k = memory.size(); k-- > 0;) {
            alpha[k] = memory[k].rho * memory[k].s.dot(q);
            q -= alpha[k] * memory[k].y;
        }
        double gamma = 1.0;
        if (!memory.empty()) {
            const auto& last = memory.back();
            gamma = last.s.dot(last.y) / last.y.squaredNorm();
        } else {
            gamma = 1.0 / std::max(1.0, g.norm());
        }
        Vector<double> dir = gamma * q;
        for (std::size_t k = 0; k < memory.size(); ++k) {
            const double beta = memory[k].rho * memory[k].y.dot(dir);
            dir += (alpha[k] - beta) * memory[k].s;
        }
        if (!(g.dot(dir) > 0)) {
            memory.clear();
            dir = g / std::max(1.0, g.norm());
        }

        const double slope = g.dot(dir);
        double step = 1.0;
        bool accepted = false;
        Vector<double> x_new, g_new(x.size());
        double f_new = f;
        for (int ls = 0; ls < config.max_line_search; ++ls) {
            x_new = x + step * dir;
            f_new = objective(x_new, g_new);
            if (std::isfinite(f_new) && g_new.allFinite() && f_new >= f + 1e-4 * step * slope && f_new > f) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        // curvature pair for the minimization of -f
        Pair p{x_new - x, g - g_new, 0};
        const double sy = p.s.dot(p.y);
        if (sy > 1e-12 * p.s.norm() * p.y.norm()) {
            p.rho = 1.0 / sy;
            memory.push_back(std::move(p));
            if (int(memory.size()) > config.history) memory.pop_front();
        }
        x = std::move(x_new);
        g = g_new;
        f = f_new;
    }
    if (!out.converged && g.lpNorm<Eigen::Infinity>() < config.gradient_tolerance) out.converged = true;

    out.x = std::move(x);
    out.value = f;
    out.gradient = std::move(g);
    out.iterations = it;
    return out;
}

}  // namespace lsgp
