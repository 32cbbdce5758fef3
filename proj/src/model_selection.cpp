#include "lsgp/model_selection.hpp"

#include "lsgp/random.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <tuple>
#include <thread>

namespace lsgp {

double mse(const Vector<double>& predictions, const Vector<double>& targets) {
    if (predictions.size() != targets.size()) throw DimensionError("mse: lengths differ");
    if (predictions.size() == 0) throw DimensionError("mse: empty input");
    return (predictions - targets).squaredNorm() / double(predictions.size());
}

bool tie_preferred(const GridCell& a, const GridCell& b) {
    if (a.m != b.m) return a.m < b.m;
    if (a.lengthscale != b.lengthscale) return a.lengthscale > b.lengthscale;
    return a.noise > b.noise;
}

void CVConfig::validate(Index n) const {
    if (folds < 2) throw DomainError("cv: folds must be >= 2");
    if (Index(folds) > n) throw DomainError("cv: more folds than training points");
    if (grid_m.empty() || grid_lengthscale.empty() || grid_noise.empty()) throw DomainError("cv: empty grid");
}

std::vector<GridCell> CVConfig::cells() const {
    std::vector<GridCell> out;
    for (const Index m : grid_m) {
        for (const double ell : grid_lengthscale) {
            for (const double noise : grid_noise) out.push_back({m, ell, noise});
        }
    }
    return out;
}

std::vector<double> default_lengthscale_grid(double median_distance) {
    std::vector<double> out;
    for (const double f : {0.05, 0.1, 0.3, 1.0, 3.0}) out.push_back(f * median_distance);
    return out;
}

std::vector<double> default_noise_grid(double target_variance) {
    const double v = target_variance > 0 ? target_variance : 1.0;
    std::vector<double> out;
    for (const double f : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) out.push_back(f * v);
    return out;
}

std::vector<Index> default_m_grid() { return {5, 10, 20, 50, 100, 200}; }

std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed) {
    if (folds < 2) throw DomainError("cv: folds must be >= 2");
    Rng rng(seed);
    const auto perm = rng.permutation(std::size_t(n));
    std::vector<int> fold(std::size_t(n), 0);
    for (std::size_t r = 0; r < perm.size(); ++r) fold[perm[r]] = int(r % std::size_t(folds));
    return fold;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace

CVResult kfold_cv(const Matrix<double>& X, const Vector<double>& y, const std::vector<GridCell>& cells, int folds,
                  std::uint64_t seed, const PredictorFactory& factory, unsigned threads) {
    if (cells.empty()) throw DomainError("cv: empty grid");
    if (X.rows() != y.size()) throw DimensionError("cv: X and y sizes differ");
    const auto fold = assign_folds(X.rows(), folds, seed);

    struct Part {
        Matrix<double> X_tr, X_va;
        Vector<double> y_tr, y_va;
    };
    std::vector<Part> parts(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> tr, va;
        for (Index i = 0; i < X.rows(); ++i) (fold[std::size_t(i)] == f ? va : tr).push_back(i);
        if (tr.empty() || va.empty()) {
            throw DomainError("cv: fold " + std::to_string(f) + " has an empty train or validation part");
        }
        parts[std::size_t(f)] = {detail::take_rows(X, tr), detail::take_rows(X, va), detail::take(y, tr),
                                 detail::take(y, va)};
    }

    CVResult out;
    out.table.resize(cells.size());
    parallel_for(cells.size(), threads, [&](std::size_t c) {
        CVRow& row = out.table[c];
        row.cell = cells[c];
        double total = 0;
        for (const Part& p : parts) {
            double fold_mse = std::numeric_limits<double>::infinity();
            try {
                fold_mse = mse(factory(p.X_tr, p.y_tr, p.X_va, cells[c]), p.y_va);
            } catch (const Error& e) {
                if (row.error.empty()) row.error = e.what();
            }
            if (!std::isfinite(fold_mse)) fold_mse = std::numeric_limits<double>::infinity();
            row.fold_mse.push_back(fold_mse);
            total += fold_mse;
        }
        row.score = total / double(parts.size());
    });

    std::size_t best = 0;
    for (std::size_t c = 1; c < out.table.size(); ++c) {
        const auto& cand = out.table[c];
        const auto& cur = out.table[best];
        if (cand.score < cur.score || (cand.score == cur.score && tie_preferred(cand.cell, cur.cell))) best = c;
    }
    if (!std::isfinite(out.table[best].score)) {
        throw NumericalError("cv: every grid cell failed (" + out.table[best].error + ")");
    }
    out.best = out.table[best].cell;
    out.best_score = out.table[best].score;
    return out;
}

CVResult kfold_cv(const Matrix<double>& X, const Vector<double>& y, const CVConfig& config,
                  const PredictorFactory& factory) {
    config.validate(X.rows());
    return kfold_cv(X, y, config.cells(), config.folds, config.seed, factory, config.threads);
}

HyperFit<double> refine_local_hypers(const Matrix<double>& X, const Vector<double>& y, const Matrix<double>& centers,
                                     const LocalKernelSpec& spec, const BandwidthPolicy& policy,
                                     const CovKernelParams<double>& init, double init_noise,
                                     const LbfgsConfig& config) {
    init.validate();
    if (!(init_noise > 0)) throw DomainError("refine_local_hypers: initial noise must be positive");
    if (X.rows() != y.size()) throw DimensionError("refine_local_hypers: X and y sizes differ");
    if (centers.cols() != X.cols()) throw DimensionError("refine_local_hypers: centers have the wrong dimension");

    // neighbourhoods do not depend on the hyperparameters
    struct Local {
        Matrix<double> X_I;
        Vector<double> y_I, w;
    };
    std::vector<Local> locals;
    for (Index c = 0; c < centers.rows(); ++c) {
        const Vector<double> x0 = centers.row(c).transpose();
        const double h = resolve_bandwidth(X, x0, policy, spec);
        const auto nb = select_neighbors(X, x0, h, spec);
        if (nb.size() == 0) continue;
        locals.push_back({detail::take_rows(X, nb.indices), detail::take(y, nb.indices), nb.weights});
    }
    if (locals.empty()) throw DomainError("refine_local_hypers: every neighbourhood is empty");

    const auto unpack = [&](const Vector<double>& theta) {
        CovKernelParams<double> p = init;
        p.lengthscale = std::exp(theta(0));
        p.amplitude = std::exp(theta(1));
        return std::pair{p, std::exp(theta(2))};
    };
    const Objective objective = [&](const Vector<double>& theta, Vector<double>& grad) -> double {
        grad = Vector<double>::Zero(3);
        if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > 30) return -std::numeric_limits<double>::infinity();
        const auto [p, noise] = unpack(theta);
        double total = 0;
        try {
            for (const auto& l : locals) {
                const auto e = local_mll_value_and_gradient(l.X_I, l.y_I, l.w, p, noise);
                total += e.value;
                grad += e.gradient;
            }
        } catch (const SingularMatrixError&) {
            grad.setZero();
            return -std::numeric_limits<double>::infinity();
        } catch (const NumericalError&) {
            grad.setZero();
            return -std::numeric_limits<double>::infinity();
        }
        return total;
    };

    Vector<double> theta0(3);
    theta0 << std::log(init.lengthscale), std::log(init.amplitude), std::log(init_noise);
    const auto r = lbfgs_maximize(objective, theta0, config);
    HyperFit<double> out;
    std::tie(out.params, out.noise) = unpack(r.x);
    out.mll = r.value;
    out.iterations = r.iterations;
    out.converged = r.converged;
    return out;
}

BandwidthSearch grid_search_h(const Matrix<double>& X_train, const Vector<double>& y_train,
                              const Matrix<double>& X_val, const Vector<double>& y_val, const LocalKernelSpec& spec,
                              const CovKernelParams<double>& params, double noise,
                              const std::vector<BandwidthPolicy>& grid, unsigned threads,
                              const std::optional<LocalRefinement>& refine) {
    if (grid.empty()) throw DomainError("grid_search_h: empty grid");
    Matrix<double> centers;
    if (refine) {
        Rng rng(refine->seed);
        const auto perm = rng.permutation(std::size_t(X_train.rows()));
        std::vector<Index> pick;
        for (std::size_t i = 0; i < perm.size() && Index(pick.size()) < refine->centers; ++i) {
            pick.push_back(Index(perm[i]));
        }
        centers = detail::take_rows(X_train, pick);
    }
    BandwidthSearch out;
    for (const auto& policy : grid) {
        BandwidthScore score;
        score.policy = policy;
        score.params = params;
        score.noise = noise;
        if (refine) {
            const auto fit = refine_local_hypers(X_train, y_train, centers, spec, policy, params, noise, refine->lbfgs);
            score.params = fit.params;
            score.noise = fit.noise;
        }
        const LocalRegressor<double> reg(X_train, y_train, score.params, score.noise, spec, policy);
        const auto results = reg.predict_batch(X_val, threads);
        Vector<double> pred(X_val.rows());
        double neighbors = 0;
        for (Index i = 0; i < X_val.rows(); ++i) {
            const auto& r = results[std::size_t(i)];
            if (!r.ok()) {
                ++score.failures;
                pred(i) = 0;
                continue;
            }
            if (r.prediction.empty_neighborhood) ++score.empty_neighborhoods;
            pred(i) = r.prediction.mean;
            neighbors += double(r.prediction.neighbor_count);
        }
        score.mse = mse(pred, y_val);
        score.mean_neighbors = neighbors / double(X_val.rows());
        out.table.push_back(score);
    }

    const auto key = [](const BandwidthPolicy& p) {
        return p.mode == BandwidthPolicy::Mode::fixed_h ? p.h : double(p.m);
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.table.size(); ++i) {
        const double a = out.table[i].mse, b = out.table[best].mse;
        if (a < b || (a == b && key(out.table[i].policy) < key(out.table[best].policy))) best = i;
    }
    out.best = out.table[best].policy;
    out.best_mse = out.table[best].mse;
    out.best_params = out.table[best].params;
    out.best_noise = out.table[best].noise;
    return out;
}

}  // namespace lsgp
