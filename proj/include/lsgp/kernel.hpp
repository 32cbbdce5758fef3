#pragma once

// Base covariance kernels, localization profiles and the localized covariance
//
//   K~(x, x'; x0) = k_h(x, x0)^(1/2) K(x, x') k_h(x', x0)^(1/2),
//   k_h(x, x0)    = (1/h) k(|x - x0| / h).

#include "lsgp/types.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

namespace lsgp {

enum class CovFamily { rbf, exponential, polynomial };

enum class Profile { rectangular, epanechnikov, gaussian, hilbert };

template <typename Scalar = double>
struct CovKernelParams {
    CovFamily family = CovFamily::rbf;
    Scalar lengthscale = 1;
    Scalar amplitude = 1;
    int degree = 1;     // polynomial only
    Scalar offset = 1;  // polynomial only

    static CovKernelParams rbf(Scalar lengthscale, Scalar amplitude = 1) {
        return {CovFamily::rbf, lengthscale, amplitude, 1, 1};
    }
    static CovKernelParams exponential(Scalar lengthscale, Scalar amplitude = 1) {
        return {CovFamily::exponential, lengthscale, amplitude, 1, 1};
    }
    static CovKernelParams polynomial(int degree, Scalar offset = 1, Scalar lengthscale = 1, Scalar amplitude = 1) {
        return {CovFamily::polynomial, lengthscale, amplitude, degree, offset};
    }

    void validate() const {
        if (!(lengthscale > 0) || !std::isfinite(lengthscale)) {
            throw DomainError("covariance lengthscale must be positive, got " + std::to_string(double(lengthscale)));
        }
        if (!(amplitude > 0) || !std::isfinite(amplitude)) {
            throw DomainError("covariance amplitude must be positive, got " + std::to_string(double(amplitude)));
        }
        if (family == CovFamily::polynomial) {
            if (degree < 1) throw DomainError("polynomial degree must be >= 1");
            if (offset < 0) throw DomainError("polynomial offset must be non-negative");
        }
    }
};

struct LocalKernelSpec {
    Profile profile = Profile::epanechnikov;
    int dimension = 1;

    bool compact() const { return profile != Profile::gaussian; }
};

inline std::string_view to_string(Profile p) {
    switch (p) {
        case Profile::rectangular: return "rectangular";
        case Profile::epanechnikov: return "epanechnikov";
        case Profile::gaussian: return "gaussian";
        case Profile::hilbert: return "hilbert";
    }
    return "?";
}

inline Profile parse_profile(std::string_view name) {
    if (name == "rectangular") return Profile::rectangular;
    if (name == "epanechnikov") return Profile::epanechnikov;
    if (name == "gaussian") return Profile::gaussian;
    if (name == "hilbert") return Profile::hilbert;
    throw DomainError("unknown localization profile '" + std::string(name) + "'");
}

inline std::string_view to_string(CovFamily f) {
    switch (f) {
        case CovFamily::rbf: return "rbf";
        case CovFamily::exponential: return "exponential";
        case CovFamily::polynomial: return "polynomial";
    }
    return "?";
}

inline CovFamily parse_family(std::string_view name) {
    if (name == "rbf") return CovFamily::rbf;
    if (name == "exponential") return CovFamily::exponential;
    if (name == "polynomial") return CovFamily::polynomial;
    throw DomainError("unknown covariance family '" + std::string(name) + "'");
}

/// Volume of the unit ball in R^d.
template <typename Scalar = double>
Scalar unit_ball_volume(int d) {
    using std::pow;
    const Scalar half_d = Scalar(d) / 2;
    return pow(std::numbers::pi_v<Scalar>, half_d) / std::tgamma(half_d + 1);
}

namespace detail {

template <typename A, typename B>
void check_same_size(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
    if (x.size() != xp.size()) {
        throw DimensionError("point dimensions differ: " + std::to_string(x.size()) + " vs " +
                             std::to_string(xp.size()));
    }
}

// Works for any mix of row and column vector expressions.
template <typename A, typename B>
auto squared_distance(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
    typename A::Scalar r2 = 0;
    for (Index k = 0; k < x.size(); ++k) {
        const auto diff = x(k) - xp(k);
        r2 += diff * diff;
    }
    return r2;
}

template <typename A, typename B>
auto dot(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
    typename A::Scalar s = 0;
    for (Index k = 0; k < x.size(); ++k) s += x(k) * xp(k);
    return s;
}

// Profile value from the distance and the bandwidth, so that the support test
// |x - x0| > h is exact rather than going through the rounded ratio.
template <typename Scalar>
Scalar profile_at_distance(const LocalKernelSpec& spec, Scalar dist, Scalar h);

}  // namespace detail

template <typename Scalar, typename A, typename B>
Scalar cov_eval(const CovKernelParams<Scalar>& params, const Eigen::MatrixBase<A>& x,
                const Eigen::MatrixBase<B>& xp) {
    detail::check_same_size(x, xp);
    if (!(params.lengthscale > 0)) {
        throw DomainError("covariance lengthscale must be positive");
    }
    const Scalar ell = params.lengthscale;
    switch (params.family) {
        case CovFamily::rbf: {
            const Scalar r2 = detail::squared_distance(x, xp);
            return params.amplitude * std::exp(-r2 / (2 * ell * ell));
        }
        case CovFamily::exponential: {
            const Scalar r = std::sqrt(detail::squared_distance(x, xp));
            return params.amplitude * std::exp(-r / ell);
        }
        case CovFamily::polynomial: {
            const Scalar dot = detail::dot(x, xp) / (ell * ell);
            return params.amplitude * std::pow(params.offset + dot, params.degree);
        }
    }
    return Scalar(0);
}

/// Localization profile k(u) for u = |x| >= 0. Hilbert returns +inf at u = 0.
template <typename Scalar = double>
Scalar profile_eval(const LocalKernelSpec& spec, Scalar u) {
    if (!(u >= 0)) {
        throw DomainError("profile argument must be non-negative");
    }
    const bool inside = u <= 1;
    switch (spec.profile) {
        case Profile::rectangular:
            return inside ? Scalar(1) : Scalar(0);
        case Profile::epanechnikov: {
            if (!inside) return 0;
            const int d = spec.dimension;
            const Scalar c = Scalar(d + 2) / (2 * unit_ball_volume<Scalar>(d));
            return c * (1 - u * u);
        }
        case Profile::gaussian:
            return std::exp(-u * u) / (2 * std::numbers::pi_v<Scalar>);
        case Profile::hilbert:
            if (!inside) return 0;
            if (u == 0) return std::numeric_limits<Scalar>::infinity();
            return 1 / u;
    }
    return 0;
}

template <typename Scalar>
Scalar detail::profile_at_distance(const LocalKernelSpec& spec, Scalar dist, Scalar h) {
    if (spec.compact() && dist > h) return 0;
    // dist <= h may still round to u slightly above 1
    Scalar u = dist / h;
    if (spec.compact() && u > 1) u = 1;
    return profile_eval<Scalar>(spec, u) / h;
}

/// Weight from a precomputed Euclidean distance.
template <typename Scalar>
Scalar weight_from_distance(const LocalKernelSpec& spec, Scalar dist, Scalar h) {
    if (!(h > 0)) {
        throw DomainError("bandwidth h must be positive");
    }
    return detail::profile_at_distance(spec, dist, h);
}

/// k_h(x, x0) = (1/h) k(|x - x0| / h).
template <typename Scalar, typename A, typename B>
Scalar local_weight(const LocalKernelSpec& spec, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x0,
                    Scalar h) {
    detail::check_same_size(x, x0);
    return weight_from_distance<Scalar>(spec, std::sqrt(detail::squared_distance(x, x0)), h);
}

/// Localized covariance K~(x, x'; x0). Zero whenever either point has zero weight.
template <typename Scalar, typename A, typename B, typename C>
Scalar localized_cov(const CovKernelParams<Scalar>& params, const LocalKernelSpec& spec, Scalar h,
                     const Eigen::MatrixBase<C>& x0, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
    const Scalar wx = local_weight(spec, x, x0, h);
    const Scalar wxp = local_weight(spec, xp, x0, h);
    if (wx == 0 || wxp == 0) return 0;
    return std::sqrt(wx) * cov_eval(params, x, xp) * std::sqrt(wxp);
}

/// Cross-covariance matrix between the rows of X (n x d) and Xp (m x d).
template <typename Scalar>
Matrix<Scalar> gram(const CovKernelParams<Scalar>& params, const Matrix<Scalar>& X, const Matrix<Scalar>& Xp) {
    if (X.cols() != Xp.cols()) {
        throw DimensionError("gram: column dimensions differ (" + std::to_string(X.cols()) + " vs " +
                             std::to_string(Xp.cols()) + ")");
    }
    params.validate();
    Matrix<Scalar> K(X.rows(), Xp.rows());
    for (Index j = 0; j < Xp.rows(); ++j) {
        for (Index i = 0; i < X.rows(); ++i) {
            K(i, j) = cov_eval(params, X.row(i), Xp.row(j));
        }
    }
    return K;
}

/// Symmetric Gram matrix of X with itself; only the lower triangle is evaluated.
template <typename Scalar>
Matrix<Scalar> gram(const CovKernelParams<Scalar>& params, const Matrix<Scalar>& X) {
    params.validate();
    const Index n = X.rows();
    Matrix<Scalar> K(n, n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = j; i < n; ++i) {
            K(i, j) = cov_eval(params, X.row(i), X.row(j));
            K(j, i) = K(i, j);
        }
    }
    return K;
}

/// Covariance vector K_{X x0}.
template <typename Scalar, typename A>
Vector<Scalar> cross_cov(const CovKernelParams<Scalar>& params, const Matrix<Scalar>& X,
                         const Eigen::MatrixBase<A>& x0) {
    if (X.cols() != x0.size()) {
        throw DimensionError("query has dimension " + std::to_string(x0.size()) + ", expected " +
                             std::to_string(X.cols()));
    }
    Vector<Scalar> k(X.rows());
    for (Index i = 0; i < X.rows(); ++i) {
        k(i) = cov_eval(params, X.row(i), x0);
    }
    return k;
}

}  // namespace lsgp
