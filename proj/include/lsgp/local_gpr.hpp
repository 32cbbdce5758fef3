#pragma once

// Locally smoothed GP regression.
//
// For a target x0 and bandwidth h the training set is reduced to the points
// with positive localization weight w_i = k_h(x_i, x0), and the posterior of
// f(x0) is
//
//   mean = K_{x0 I} (K_II + sigma^2 W^{-1})^{-1} y_I
//   var  = K(x0, x0) - K_{x0 I} (K_II + sigma^2 W^{-1})^{-1} K_{I x0}
//
// computed through one Cholesky factor of size |I|. An infinite weight (the
// Hilbert profile at distance 0) gives a zero noise entry.

#include "lsgp/global_gpr.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <vector>

namespace lsgp {

/// Either a fixed bandwidth or "smallest h holding at least m neighbors" per query.
struct BandwidthPolicy {
    enum class Mode { fixed_h, min_neighbors };

    Mode mode = Mode::fixed_h;
    double h = 1;
    Index m = 1;

    static BandwidthPolicy fixed(double h) { return {Mode::fixed_h, h, 0}; }
    static BandwidthPolicy min_neighbors(Index m) { return {Mode::min_neighbors, 0, m}; }

    void validate() const {
        if (mode == Mode::fixed_h && !(h > 0)) throw DomainError("bandwidth policy: h must be positive");
        if (mode == Mode::min_neighbors && m < 1) throw DomainError("bandwidth policy: m must be >= 1");
    }
};

template <typename Scalar = double>
struct Neighborhood {
    std::vector<Index> indices;  // ascending
    Vector<Scalar> weights;      // k_h(x_i, x0); +inf for a Hilbert hit at distance 0

    Index size() const { return Index(indices.size()); }
};

/// Per-target state of the localized posterior.
template <typename Scalar = double>
struct LocalModel {
    Vector<Scalar> x0;
    Scalar h = 0;
    Neighborhood<Scalar> neighbors;
    Matrix<Scalar> X_I;
    Vector<Scalar> y_I;
    CholeskyFactor<Scalar> factor;  // of K_II + sigma^2 W^{-1}
    Vector<Scalar> alpha;
};

namespace detail {

template <typename Scalar, typename Derived>
std::vector<Scalar> distances_to(const Matrix<Scalar>& X, const Eigen::MatrixBase<Derived>& x0) {
    if (X.cols() != x0.size()) {
        throw DimensionError("query has dimension " + std::to_string(x0.size()) + ", expected " +
                             std::to_string(X.cols()));
    }
    std::vector<Scalar> d(X.rows());
    for (Index i = 0; i < X.rows(); ++i) d[i] = std::sqrt(squared_distance(X.row(i), x0));
    return d;
}

/// Noise diagonal sigma^2 / w, with 0 for infinite weights.
template <typename Scalar>
Vector<Scalar> localized_noise(const Vector<Scalar>& weights, Scalar noise) {
    Vector<Scalar> out(weights.size());
    for (Index i = 0; i < weights.size(); ++i) {
        out(i) = std::isinf(weights(i)) ? Scalar(0) : noise / weights(i);
    }
    return out;
}

template <typename Scalar>
Matrix<Scalar> take_rows(const Matrix<Scalar>& X, const std::vector<Index>& idx) {
    Matrix<Scalar> out(Index(idx.size()), X.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(Index(r)) = X.row(idx[r]);
    return out;
}

template <typename Scalar>
Vector<Scalar> take(const Vector<Scalar>& y, const std::vector<Index>& idx) {
    Vector<Scalar> out(Index(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) out(Index(r)) = y(idx[r]);
    return out;
}

template <typename Scalar>
Neighborhood<Scalar> neighbors_from_candidates(const Matrix<Scalar>& X, const Vector<Scalar>& x0, Scalar h,
                                               const LocalKernelSpec& spec, const std::vector<Index>& candidates) {
    Neighborhood<Scalar> nb;
    std::vector<Scalar> w;
    for (const Index i : candidates) {
        const Scalar dist = std::sqrt(squared_distance(X.row(i), x0));
        if (spec.compact() && dist > h) continue;
        const Scalar wi = weight_from_distance(spec, dist, h);
        if (wi > 0) {
            nb.indices.push_back(i);
            w.push_back(wi);
        }
    }
    nb.weights = Eigen::Map<Vector<Scalar>>(w.data(), Index(w.size()));
    return nb;
}

}  // namespace detail

/// Indices with |x_i - x0| <= h (any distance for the Gaussian profile) and strictly positive weight.
template <typename Scalar, typename Derived>
Neighborhood<Scalar> select_neighbors(const Matrix<Scalar>& X, const Eigen::MatrixBase<Derived>& x0, Scalar h,
                                      const LocalKernelSpec& spec) {
    if (!(h > 0)) throw DomainError("select_neighbors: h must be positive");
    if (X.cols() != x0.size()) {
        throw DimensionError("query has dimension " + std::to_string(x0.size()) + ", expected " +
                             std::to_string(X.cols()));
    }
    std::vector<Index> all(X.rows());
    std::iota(all.begin(), all.end(), Index(0));
    return detail::neighbors_from_candidates<Scalar>(X, x0.template cast<Scalar>(), h, spec, all);
}

/// h = d_(m) (1 + 1e-6), with d_(m) the m-th smallest distance from x0 to the training inputs.
template <typename Scalar, typename Derived>
Scalar adapt_bandwidth(const Matrix<Scalar>& X, const Eigen::MatrixBase<Derived>& x0, Index m,
                       const LocalKernelSpec& /*spec*/) {
    const Index n = X.rows();
    if (m < 1) throw DomainError("adapt_bandwidth: m must be >= 1");
    if (m > n) {
        throw DomainError("adapt_bandwidth: m = " + std::to_string(m) + " exceeds training size " +
                          std::to_string(n));
    }
    std::vector<Scalar> d = detail::distances_to(X, x0);
    auto kth = d.begin() + (m - 1);
    std::nth_element(d.begin(), kth, d.end());
    const Scalar dm = *kth;
    constexpr Scalar inflate = Scalar(1) + Scalar(1e-6);
    if (dm > 0) return dm * inflate;

    // x0 coincides with at least m training inputs
    Scalar smallest_positive = std::numeric_limits<Scalar>::infinity();
    for (const Scalar v : d) {
        if (v > 0) smallest_positive = std::min(smallest_positive, v);
    }
    if (std::isfinite(smallest_positive)) return smallest_positive * inflate;
    const Scalar diameter = (X.colwise().maxCoeff() - X.colwise().minCoeff()).norm();
    return diameter > 0 ? Scalar(1e-6) * diameter : Scalar(1e-6);
}

template <typename Scalar, typename Derived>
Scalar resolve_bandwidth(const Matrix<Scalar>& X, const Eigen::MatrixBase<Derived>& x0,
                         const BandwidthPolicy& policy, const LocalKernelSpec& spec) {
    policy.validate();
    if (policy.mode == BandwidthPolicy::Mode::fixed_h) return Scalar(policy.h);
    return adapt_bandwidth(X, x0, policy.m, spec);
}

/// Factor K_II + sigma^2 W^{-1} over a given neighborhood.
template <typename Scalar, typename Derived>
LocalModel<Scalar> build_local_model(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                     const CovKernelParams<Scalar>& params, Scalar noise,
                                     const Eigen::MatrixBase<Derived>& x0, Scalar h, Neighborhood<Scalar> nb) {
    LocalModel<Scalar> model;
    model.x0 = x0.template cast<Scalar>();
    model.h = h;
    model.X_I = detail::take_rows(X, nb.indices);
    model.y_I = detail::take(y, nb.indices);
    Matrix<Scalar> C = gram(params, model.X_I);
    C.diagonal() += detail::localized_noise(nb.weights, noise);
    try {
        model.factor = cholesky(C);
    } catch (const SingularMatrixError& e) {
        std::ostringstream msg;
        msg << "local model at x0 = [" << model.x0.transpose() << "]: " << e.what();
        throw SingularMatrixError(msg.str());
    }
    model.alpha = solve_psd(model.factor, model.y_I);
    model.neighbors = std::move(nb);
    return model;
}

/// Posterior mean and variance at the model's own target point.
template <typename Scalar>
PredictiveDistribution<Scalar> predict_at_target(const LocalModel<Scalar>& model,
                                                 const CovKernelParams<Scalar>& params) {
    const Vector<Scalar> k = cross_cov(params, model.X_I, model.x0);
    const Scalar prior = cov_eval(params, model.x0, model.x0);
    const Vector<Scalar> v = forward_solve(model.factor, k).col(0);
    PredictiveDistribution<Scalar> out;
    out.mean = k.dot(model.alpha);
    out.variance = finalize_variance<Scalar>(prior - v.squaredNorm(), prior);
    out.neighbor_count = model.neighbors.size();
    out.bandwidth = model.h;
    return out;
}

template <typename Scalar, typename Derived>
PredictiveDistribution<Scalar> prior_prediction(const CovKernelParams<Scalar>& params,
                                                const Eigen::MatrixBase<Derived>& x0, Scalar h) {
    PredictiveDistribution<Scalar> out;
    out.mean = 0;
    out.variance = cov_eval(params, x0, x0);
    out.neighbor_count = 0;
    out.empty_neighborhood = true;
    out.bandwidth = h;
    return out;
}

/// Localized posterior at x0 (Cholesky route).
template <typename Scalar, typename Derived>
PredictiveDistribution<Scalar> local_predict(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                             const CovKernelParams<Scalar>& params, Scalar noise,
                                             const LocalKernelSpec& spec, const BandwidthPolicy& policy,
                                             const Eigen::MatrixBase<Derived>& x0) {
    if (!(noise > 0)) throw DomainError("local_predict: noise variance must be positive");
    if (X.rows() != y.size()) throw DimensionError("local_predict: X and y sizes differ");
    params.validate();
    const Scalar h = resolve_bandwidth(X, x0, policy, spec);
    auto nb = select_neighbors(X, x0, h, spec);
    if (nb.size() == 0) return prior_prediction(params, x0, h);
    const auto model = build_local_model(X, y, params, noise, x0, h, std::move(nb));
    return predict_at_target(model, params);
}

/// The same posterior written as an ordinary GP on X_I with per-point noise sigma^2 / w_i.
template <typename Scalar, typename Derived>
PredictiveDistribution<Scalar> hetero_predict(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                              const CovKernelParams<Scalar>& params, Scalar noise,
                                              const LocalKernelSpec& spec, Scalar h,
                                              const Eigen::MatrixBase<Derived>& x0) {
    if (!(noise > 0)) throw DomainError("hetero_predict: noise variance must be positive");
    const auto nb = select_neighbors(X, x0, h, spec);
    if (nb.size() == 0) return prior_prediction(params, x0, h);
    const Vector<Scalar> per_point = detail::localized_noise(nb.weights, noise);
    const auto gp = fit_heteroscedastic<Scalar>(detail::take_rows(X, nb.indices), detail::take(y, nb.indices),
                                                params, per_point);
    auto out = predict(gp, x0);
    out.neighbor_count = nb.size();
    out.bandwidth = h;
    return out;
}

/// Local marginal log-likelihood; the 2 pi term uses |I|.
template <typename Scalar>
Scalar local_mll(const Matrix<Scalar>& X_I, const Vector<Scalar>& y_I, const Vector<Scalar>& weights,
                 const CovKernelParams<Scalar>& params, Scalar noise) {
    if (X_I.rows() == 0) return 0;
    const auto gp = fit_heteroscedastic<Scalar>(X_I, y_I, params, detail::localized_noise(weights, noise));
    return log_marginal_likelihood(gp);
}

/// local_mll and its gradient in (log lengthscale, log amplitude, log noise); noise enters as sigma^2 / w_i.
template <typename Scalar>
MllEvaluation<Scalar> local_mll_value_and_gradient(const Matrix<Scalar>& X_I, const Vector<Scalar>& y_I,
                                                   const Vector<Scalar>& weights,
                                                   const CovKernelParams<Scalar>& params, Scalar noise) {
    MllEvaluation<Scalar> out;
    out.gradient.setZero();
    if (X_I.rows() == 0) return out;
    const Vector<Scalar> D = detail::localized_noise(weights, noise);
    const auto gp = fit_heteroscedastic<Scalar>(X_I, y_I, params, D);
    const Index s = X_I.rows();
    const Matrix<Scalar> K = gram(params, X_I);
    const Matrix<Scalar> Cinv = solve_psd(gp.factor, Matrix<Scalar>::Identity(s, s));
    const Matrix<Scalar> inner = gp.alpha * gp.alpha.transpose() - Cinv;
    out.value = log_marginal_likelihood(gp);
    out.gradient(0) = Scalar(0.5) * inner.cwiseProduct(gram_dlog_lengthscale(params, X_I, K)).sum();
    out.gradient(1) = Scalar(0.5) * inner.cwiseProduct(K).sum();
    out.gradient(2) = Scalar(0.5) * inner.diagonal().dot(D);
    return out;
}

/// Uniform-grid bucket index with cell size h, for fixed-bandwidth compact profiles.
/// Candidates are returned in ascending index order so results match the brute-force scan bit for bit.
template <typename Scalar = double>
class GridIndex {
public:
    GridIndex(const Matrix<Scalar>& X, Scalar cell) : cell_(cell), dim_(X.cols()) {
        for (Index i = 0; i < X.rows(); ++i) buckets_[key_of(X.row(i), {})].push_back(i);
    }

    /// Worth using for this data size and dimension.
    static bool worthwhile(Index n, Index d) {
        Index cells = 1;
        for (Index k = 0; k < d; ++k) cells *= 3;
        return n > 10000 && d <= 6 && cells <= n;
    }

    std::vector<Index> candidates(const Vector<Scalar>& x0) const {
        std::vector<Index> out;
        std::vector<std::int64_t> base(dim_);
        for (Index k = 0; k < dim_; ++k) base[k] = cell_coord(x0(k));
        std::vector<int> offset(dim_, -1);
        while (true) {
            std::vector<std::int64_t> c(dim_);
            for (Index k = 0; k < dim_; ++k) c[k] = base[k] + offset[k];
            if (auto it = buckets_.find(hash_coords(c)); it != buckets_.end()) {
                out.insert(out.end(), it->second.begin(), it->second.end());
            }
            Index k = 0;
            while (k < dim_ && ++offset[k] > 1) offset[k++] = -1;
            if (k == dim_) break;
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    std::int64_t cell_coord(Scalar v) const { return std::int64_t(std::floor(v / cell_)); }

    static std::uint64_t hash_coords(const std::vector<std::int64_t>& c) {
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto v : c) {
            h ^= std::uint64_t(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return h;
    }

    template <typename Derived>
    std::uint64_t key_of(const Eigen::MatrixBase<Derived>& x, std::vector<std::int64_t> c) const {
        c.resize(dim_);
        for (Index k = 0; k < dim_; ++k) c[k] = cell_coord(x(k));
        return hash_coords(c);
    }

    Scalar cell_;
    Index dim_;
    // hash collisions only add candidates; the exact distance filter removes them
    std::unordered_map<std::uint64_t, std::vector<Index>> buckets_;
};

template <typename Scalar = double>
struct QueryOutcome {
    PredictiveDistribution<Scalar> prediction;
    std::string error;  // empty on success

    bool ok() const { return error.empty(); }
};

/// Immutable localized regressor over one training set; safe to query from many threads.
template <typename Scalar = double>
class LocalRegressor {
public:
    LocalRegressor(Matrix<Scalar> X, Vector<Scalar> y, CovKernelParams<Scalar> params, Scalar noise,
                   LocalKernelSpec spec, BandwidthPolicy policy)
        : X_(std::move(X)), y_(std::move(y)), params_(params), noise_(noise), spec_(spec), policy_(policy) {
        if (X_.rows() != y_.size()) throw DimensionError("LocalRegressor: X and y sizes differ");
        if (!(noise_ > 0)) throw DomainError("LocalRegressor: noise variance must be positive");
        params_.validate();
        policy_.validate();
        if (policy_.mode == BandwidthPolicy::Mode::fixed_h && spec_.compact() &&
            GridIndex<Scalar>::worthwhile(X_.rows(), X_.cols())) {
            index_.emplace(X_, Scalar(policy_.h));
        }
    }

    template <typename Derived>
    PredictiveDistribution<Scalar> predict(const Eigen::MatrixBase<Derived>& x0) const {
        if (!index_) return local_predict(X_, y_, params_, noise_, spec_, policy_, x0);
        const Vector<Scalar> q = x0.template cast<Scalar>();
        if (q.size() != X_.cols()) {
            throw DimensionError("query has dimension " + std::to_string(q.size()) + ", expected " +
                                 std::to_string(X_.cols()));
        }
        const Scalar h = Scalar(policy_.h);
        auto nb = detail::neighbors_from_candidates(X_, q, h, spec_, index_->candidates(q));
        if (nb.size() == 0) return prior_prediction(params_, q, h);
        const auto model = build_local_model(X_, y_, params_, noise_, q, h, std::move(nb));
        return predict_at_target(model, params_);
    }

    /// One outcome per query row, in order. Per-query failures are recorded, not thrown.
    std::vector<QueryOutcome<Scalar>> predict_batch(const Matrix<Scalar>& queries, unsigned threads = 1) const {
        const Index t = queries.rows();
        std::vector<QueryOutcome<Scalar>> out(t);
        const auto work = [&](Index i) {
            try {
                out[i].prediction = predict(queries.row(i));
            } catch (const Error& e) {
                out[i].error = e.what();
            }
        };
        if (threads <= 1 || t < 2) {
            for (Index i = 0; i < t; ++i) work(i);
            return out;
        }
        std::atomic<Index> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (Index i = next++; i < t; i = next++) work(i);
            });
        }
        for (auto& th : pool) th.join();
        return out;
    }

    bool uses_index() const { return index_.has_value(); }

private:
    Matrix<Scalar> X_;
    Vector<Scalar> y_;
    CovKernelParams<Scalar> params_;
    Scalar noise_;
    LocalKernelSpec spec_;
    BandwidthPolicy policy_;
    std::optional<GridIndex<Scalar>> index_;
};

template <typename Scalar>
std::vector<QueryOutcome<Scalar>> local_predict_batch(const Matrix<Scalar>& X, const Vector<Scalar>& y,
                                                      const CovKernelParams<Scalar>& params, Scalar noise,
                                                      const LocalKernelSpec& spec, const BandwidthPolicy& policy,
                                                      const Matrix<Scalar>& queries, unsigned threads = 1) {
    return LocalRegressor<Scalar>(X, y, params, noise, spec, policy).predict_batch(queries, threads);
}

}  // namespace lsgp
