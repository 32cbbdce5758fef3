#pragma once

// Exact GP regression: posterior mean/variance through a Cholesky factor of
// K_XX + diag(noise), the marginal log-likelihood, its gradient in log
// hyperparameter space, and L-BFGS hyperparameter fitting.

#include "lsgp/cholesky.hpp"
#include "lsgp/kernel.hpp"
#include "lsgp/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace lsgp {

template <typename Scalar = double>
struct PredictiveDistribution {
    Scalar mean = 0;
    Scalar variance = 0;
    Index neighbor_count = 0;
    bool empty_neighborhood = false;  // prior fallback was used
    Scalar bandwidth = 0;             // resolved h for local predictions, 0 for global ones
};

/// Clamp round-off below zero; anything more negative than the tolerance is an error.
template <typename Scalar>
Scalar finalize_variance(Scalar raw, Scalar prior) {
    if (raw >= 0) return raw;
    const Scalar tol = Scalar(1e-10) * std::max<Scalar>(1, std::abs(prior));
    if (raw >= -tol) return 0;
    throw NumericalError("predictive variance " + std::to_string(double(raw)) + " is negative beyond tolerance");
}

template <typename Scalar = double>
struct GPModel {
    Matrix<Scalar> X;
    Vector<Scalar> y;
    CovKernelParams<Scalar> params;
    Scalar noise = 0;             // homoscedastic sigma^2 (0 when only noise_diag is meaningful)
    Vector<Scalar> noise_diag;    // per-point observation noise actually added to K_XX
    CholeskyFactor<Scalar> factor;
    Vector<Scalar> alpha;

    Index size() const { return X.rows(); }
    Index dimension() const { return X.cols(); }
};

/// GP with per-point noise variances (heteroscedastic). Zero entries are noise-free observations.
template <typename Scalar>
GPModel<Scalar> fit_heteroscedastic(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                    const CovKernelParams<Scalar>& params, const Vector<Scalar>& noise_diag) {
    if (X.rows() < 1) throw DimensionError("fit: need at least one training point");
    if (X.rows() != y.size() || noise_diag.size() != y.size()) {
        throw DimensionError("fit: X has " + std::to_string(X.rows()) + " rows but y has " +
                             std::to_string(y.size()) + " entries");
    }
    if ((noise_diag.array() < 0).any() || !noise_diag.allFinite()) {
        throw DomainError("fit: noise variances must be finite and non-negative");
    }
    params.validate();

    GPModel<Scalar> model;
    model.X = X;
    model.y = y;
    model.params = params;
    model.noise_diag = noise_diag;
    Matrix<Scalar> C = gram(params, X);
    C.diagonal() += noise_diag;
    model.factor = cholesky(C);
    model.alpha = solve_psd(model.factor, y);
    return model;
}

template <typename Scalar>
GPModel<Scalar> fit(const Matrix<Scalar>& X, const Vector<Scalar>& y, const CovKernelParams<Scalar>& params,
                    Scalar noise) {
    if (!(noise > 0)) throw DomainError("fit: noise variance must be positive");
    auto model = fit_heteroscedastic<Scalar>(X, y, params, Vector<Scalar>::Constant(y.size(), noise));
    model.noise = noise;
    return model;
}

template <typename Scalar, typename Derived>
PredictiveDistribution<Scalar> predict(const GPModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x0) {
    const Vector<Scalar> k = cross_cov(model.params, model.X, x0);
    const Scalar prior = cov_eval(model.params, x0, x0);
    const Vector<Scalar> v = forward_solve(model.factor, k).col(0);
    PredictiveDistribution<Scalar> out;
    out.mean = k.dot(model.alpha);
    out.variance = finalize_variance<Scalar>(prior - v.squaredNorm(), prior);
    out.neighbor_count = model.size();
    return out;
}

/// -1/2 y^T alpha - 1/2 log|K + noise| - n/2 log(2 pi).
template <typename Scalar>
Scalar log_marginal_likelihood(const GPModel<Scalar>& model) {
    const Scalar n = Scalar(model.size());
    return -Scalar(0.5) * model.y.dot(model.alpha) - Scalar(0.5) * log_det(model.factor) -
           Scalar(0.5) * n * std::log(2 * std::numbers::pi_v<Scalar>);
}

template <typename Scalar = double>
struct MllEvaluation {
    Scalar value = 0;
    Eigen::Matrix<Scalar, 3, 1> gradient;  // d/d(log lengthscale, log amplitude, log noise)
};

/// dK/d(log lengthscale), elementwise over the Gram matrix.
template <typename Scalar>
Matrix<Scalar> gram_dlog_lengthscale(const CovKernelParams<Scalar>& params, const Matrix<Scalar>& X,
                                     const Matrix<Scalar>& K) {
    const Index n = X.rows();
    const Scalar ell = params.lengthscale;
    Matrix<Scalar> D(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = j; i < n; ++i) {
            Scalar v = 0;
            switch (params.family) {
                case CovFamily::rbf:
                    v = K(i, j) * detail::squared_distance(X.row(i), X.row(j)) / (ell * ell);
                    break;
                case CovFamily::exponential:
                    v = K(i, j) * std::sqrt(detail::squared_distance(X.row(i), X.row(j))) / ell;
                    break;
                case CovFamily::polynomial: {
                    const Scalar s = detail::dot(X.row(i), X.row(j)) / (ell * ell);
                    v = params.amplitude * params.degree * std::pow(params.offset + s, params.degree - 1) * (-2 * s);
                    break;
                }
            }
            D(i, j) = v;
            D(j, i) = v;
        }
    }
    return D;
}

/// MLL and its analytic gradient: dMLL/dtheta = 1/2 alpha^T dK alpha - 1/2 tr(C^{-1} dK).
template <typename Scalar>
MllEvaluation<Scalar> mll_value_and_gradient(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                             const CovKernelParams<Scalar>& params, Scalar noise) {
    const GPModel<Scalar> model = fit(X, y, params, noise);
    const Index n = X.rows();
    const Matrix<Scalar> K = gram(params, X);
    const Matrix<Scalar> Cinv = solve_psd(model.factor, Matrix<Scalar>::Identity(n, n));
    const Vector<Scalar>& a = model.alpha;
    // 1/2 tr((alpha alpha^T - C^{-1}) dK)
    const Matrix<Scalar> inner = a * a.transpose() - Cinv;

    MllEvaluation<Scalar> out;
    out.value = log_marginal_likelihood(model);
    const Matrix<Scalar> dL = gram_dlog_lengthscale(params, X, K);
    out.gradient(0) = Scalar(0.5) * inner.cwiseProduct(dL).sum();
    out.gradient(1) = Scalar(0.5) * inner.cwiseProduct(K).sum();
    out.gradient(2) = Scalar(0.5) * noise * inner.trace();
    return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> mll_gradient(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                         const CovKernelParams<Scalar>& params, Scalar noise) {
    return mll_value_and_gradient(X, y, params, noise).gradient;
}

/// Median Euclidean distance between distinct rows; large inputs use a strided subsample of 1000 rows.
template <typename Scalar>
Scalar median_pairwise_distance(const Matrix<Scalar>& X) {
    const Index n = X.rows();
    const Index take = std::min<Index>(n, 1000);
    std::vector<Index> rows(take);
    for (Index i = 0; i < take; ++i) rows[i] = (i * n) / take;
    std::vector<Scalar> d;
    d.reserve(take * (take - 1) / 2);
    for (Index i = 0; i < take; ++i) {
        for (Index j = i + 1; j < take; ++j) {
            d.push_back(std::sqrt(detail::squared_distance(X.row(rows[i]), X.row(rows[j]))));
        }
    }
    if (d.empty()) return 1;
    auto mid = d.begin() + d.size() / 2;
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0 ? *mid : Scalar(1);
}

struct HyperOptConfig {
    LbfgsConfig lbfgs{};
    /// Extra starts at {0.1, 1, 10} x median pairwise distance for the lengthscale.
    bool restarts = true;
};

template <typename Scalar = double>
struct HyperFit {
    CovKernelParams<Scalar> params;
    Scalar noise = 0;
    Scalar mll = 0;
    int iterations = 0;
    bool converged = false;
};

/// Maximize the MLL over (log lengthscale, log amplitude, log noise).
template <typename Scalar>
HyperFit<Scalar> optimize_hypers(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                 const CovKernelParams<Scalar>& init, Scalar init_noise,
                                 const HyperOptConfig& config = {}) {
    init.validate();
    if (!(init_noise > 0)) throw DomainError("optimize_hypers: initial noise must be positive");

    const auto unpack = [&](const Vector<double>& theta) {
        CovKernelParams<Scalar> p = init;
        p.lengthscale = Scalar(std::exp(theta(0)));
        p.amplitude = Scalar(std::exp(theta(1)));
        return std::pair{p, Scalar(std::exp(theta(2)))};
    };
    const Objective objective = [&](const Vector<double>& theta, Vector<double>& grad) -> double {
        if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > 30) {
            grad.setZero();
            return -std::numeric_limits<double>::infinity();
        }
        const auto [p, noise] = unpack(theta);
        try {
            const auto eval = mll_value_and_gradient(X, y, p, noise);
            grad = eval.gradient.template cast<double>();
            return double(eval.value);
        } catch (const SingularMatrixError&) {
            grad.setZero();
            return -std::numeric_limits<double>::infinity();
        } catch (const NumericalError&) {
            grad.setZero();
            return -std::numeric_limits<double>::infinity();
        }
    };

    Vector<double> theta0(3);
    theta0 << std::log(double(init.lengthscale)), std::log(double(init.amplitude)), std::log(double(init_noise));
    {
        Vector<double> g(3);
        if (!std::isfinite(objective(theta0, g))) {
            throw NumericalError("optimize_hypers: marginal likelihood is not finite at the initial point");
        }
    }

    std::vector<Vector<double>> starts{theta0};
    if (config.restarts) {
        const double med = double(median_pairwise_distance(X));
        for (const double mult : {0.1, 1.0, 10.0}) {
            Vector<double> t = theta0;
            t(0) = std::log(mult * med);
            starts.push_back(t);
        }
    }

    HyperFit<Scalar> best;
    bool have = false;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        LbfgsResult r;
        try {
            r = lbfgs_maximize(objective, starts[s], config.lbfgs);
        } catch (const NumericalError&) {
            continue;  // a restart landing in a non-finite region is skipped
        }
        // ties keep the earlier start, so an optimal init is returned unchanged
        if (!have || r.value > double(best.mll)) {
            if (s == 0 && r.iterations == 0) {
                best = {init, init_noise, Scalar(r.value), 0, r.converged};
            } else {
                const auto [p, noise] = unpack(r.x);
                best = {p, noise, Scalar(r.value), r.iterations, r.converged};
            }
            have = true;
        }
    }
    return best;
}

}  // namespace lsgp
