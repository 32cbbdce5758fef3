#pragma once

// Classical local regressors: k-nearest neighbours, Nadaraya-Watson and
// localized kernel ridge regression.

#include "lsgp/local_gpr.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <numeric>

namespace lsgp {

/// Mean target of the k nearest training inputs; ties at the k-th distance go to the lowest index.
template <typename Scalar, typename Derived>
Scalar knn_predict(const Matrix<Scalar>& X, const Vector<Scalar>& y, Index k, const Eigen::MatrixBase<Derived>& x0) {
    const Index n = X.rows();
    if (k < 1 || k > n) {
        throw DomainError("knn: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
    }
    const std::vector<Scalar> d = detail::distances_to(X, x0);
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index(0));
    const auto closer = [&](Index a, Index b) { return d[a] < d[b] || (d[a] == d[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
    Scalar sum = 0;
    for (Index r = 0; r < k; ++r) sum += y(order[r]);
    return sum / Scalar(k);
}

template <typename Scalar = double>
struct SmootherValue {
    Scalar value = 0;
    bool no_support = false;  // no training point had positive weight
};

/// Locally weighted average sum_i w_i y_i / sum_i w_i. Infinite weights dominate:
/// the result is then the mean over the points carrying them.
template <typename Scalar, typename Derived>
SmootherValue<Scalar> nadaraya_watson(const Matrix<Scalar>& X, const Vector<Scalar>& y, const LocalKernelSpec& spec,
                                      Scalar h, const Eigen::MatrixBase<Derived>& x0) {
    const auto nb = select_neighbors(X, x0, h, spec);
    if (nb.size() == 0) return {Scalar(0), true};
    Scalar num = 0, den = 0, inf_sum = 0;
    Index inf_count = 0;
    for (Index r = 0; r < nb.size(); ++r) {
        const Scalar w = nb.weights(r);
        const Scalar yi = y(nb.indices[r]);
        if (std::isinf(w)) {
            inf_sum += yi;
            ++inf_count;
        } else {
            num += w * yi;
            den += w;
        }
    }
    if (inf_count > 0) return {inf_sum / Scalar(inf_count), false};
    if (!(den > 0)) return {Scalar(0), true};
    return {num / den, false};
}

/// Weighted kernel ridge regression over the positive-weight neighbours of x0:
///   minimize  sum_i w_i (y_i - f(x_i))^2 + sigma^2 ||f||_H^2.
/// The representer coefficients solve (W K + sigma^2 I) alpha = W y; rows with
/// w_i >= 1 are divided by w_i so that infinite weights stay finite. Solved by
/// partially pivoted LU.
template <typename Scalar, typename Derived>
Scalar local_krr(const Matrix<Scalar>& X, const Vector<Scalar>& y, const CovKernelParams<Scalar>& params,
                 Scalar noise, const LocalKernelSpec& spec, Scalar h, const Eigen::MatrixBase<Derived>& x0) {
    if (!(noise > 0)) throw DomainError("local_krr: regularization sigma^2 must be positive");
    const auto nb = select_neighbors(X, x0, h, spec);
    if (nb.size() == 0) return 0;
    const Matrix<Scalar> X_I = detail::take_rows(X, nb.indices);
    const Vector<Scalar> y_I = detail::take(y, nb.indices);
    const Matrix<Scalar> K = gram(params, X_I);
    const Index s = nb.size();

    Matrix<Scalar> A(s, s);
    Vector<Scalar> b(s);
    for (Index i = 0; i < s; ++i) {
        const Scalar w = nb.weights(i);
        if (w >= 1) {
            const Scalar reg = std::isinf(w) ? Scalar(0) : noise / w;
            A.row(i) = K.row(i);
            A(i, i) += reg;
            b(i) = y_I(i);
        } else {
            A.row(i) = w * K.row(i);
            A(i, i) += noise;
            b(i) = w * y_I(i);
        }
    }
    const Vector<Scalar> alpha = A.partialPivLu().solve(b);
    return cross_cov(params, X_I, x0).dot(alpha);
}

}  // namespace lsgp
