#pragma once

// Symmetric positive-definite factorization with a fixed jitter ladder,
// triangular solves, log-determinant and Gaussian sampling.

#include "lsgp/random.hpp"
#include "lsgp/types.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace lsgp {

/// Relative jitter steps tried in order, scaled by the mean diagonal of the input.
inline constexpr std::array<double, 4> kJitterLadder{0.0, 1e-10, 1e-8, 1e-6};

template <typename Scalar = double>
struct CholeskyFactor {
    Matrix<Scalar> L;  // lower triangular, L L^T = A + jitter_used I
    Scalar jitter_used = 0;

    Index size() const { return L.rows(); }
};

/// Factor a symmetric matrix, escalating jitter through kJitterLadder until it succeeds.
template <typename Scalar>
CholeskyFactor<Scalar> cholesky(const Matrix<Scalar>& A) {
    if (A.rows() != A.cols()) {
        throw DimensionError("cholesky: matrix is " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    }
    const Index n = A.rows();
    if (n == 0) return {Matrix<Scalar>(0, 0), Scalar(0)};

    const Scalar scale = std::max<Scalar>(1, A.cwiseAbs().maxCoeff());
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
        throw DimensionError("cholesky: matrix is not symmetric");
    }

    Scalar mean_diag = A.diagonal().mean();
    // an all-zero (or negative) diagonal would make every relative step zero
    if (!(mean_diag > 0)) mean_diag = 1;

    for (const double step : kJitterLadder) {
        const Scalar jitter = Scalar(step) * mean_diag;
        Matrix<Scalar> work = A;
        work.diagonal().array() += jitter;
        Eigen::LLT<Matrix<Scalar>> llt(work);
        if (llt.info() != Eigen::Success) continue;
        Matrix<Scalar> L = llt.matrixL();
        if ((L.diagonal().array() > 0).all() && L.allFinite()) {
            return {std::move(L), jitter};
        }
    }

    std::ostringstream msg;
    msg << "cholesky: matrix is not positive definite after jitter ladder {";
    for (std::size_t i = 0; i < kJitterLadder.size(); ++i) {
        msg << (i ? ", " : "") << kJitterLadder[i] * double(mean_diag);
    }
    msg << "}";
    throw SingularMatrixError(msg.str());
}

/// L^{-1} b.
template <typename Scalar, typename Derived>
Matrix<Scalar> forward_solve(const CholeskyFactor<Scalar>& factor, const Eigen::MatrixBase<Derived>& b) {
    if (b.rows() != factor.size()) {
        throw DimensionError("solve: right-hand side has " + std::to_string(b.rows()) + " rows, expected " +
                             std::to_string(factor.size()));
    }
    return factor.L.template triangularView<Eigen::Lower>().solve(b);
}

/// Solve (L L^T) x = b.
template <typename Scalar, typename Derived>
Matrix<Scalar> solve_psd(const CholeskyFactor<Scalar>& factor, const Eigen::MatrixBase<Derived>& b) {
    Matrix<Scalar> z = forward_solve(factor, b);
    return factor.L.transpose().template triangularView<Eigen::Upper>().solve(z);
}

template <typename Scalar>
Vector<Scalar> solve_psd(const CholeskyFactor<Scalar>& factor, const Vector<Scalar>& b) {
    if (b.size() != factor.size()) {
        throw DimensionError("solve: right-hand side has " + std::to_string(b.size()) + " rows, expected " +
                             std::to_string(factor.size()));
    }
    Vector<Scalar> z = factor.L.template triangularView<Eigen::Lower>().solve(b);
    return factor.L.transpose().template triangularView<Eigen::Upper>().solve(z);
}

template <typename Scalar>
Scalar log_det(const CholeskyFactor<Scalar>& factor) {
    return 2 * factor.L.diagonal().array().log().sum();
}

/// Draws N(0, cov) samples from its own seeded stream. One sampler per thread.
template <typename Scalar = double>
class GaussianSampler {
public:
    GaussianSampler(const Matrix<Scalar>& cov, std::uint64_t seed) : factor_(cholesky(cov)), rng_(seed) {}

    const CholeskyFactor<Scalar>& factor() const { return factor_; }

    Vector<Scalar> draw() {
        Vector<Scalar> z(factor_.size());
        for (Index i = 0; i < z.size(); ++i) z(i) = Scalar(rng_.normal());
        return factor_.L.template triangularView<Eigen::Lower>() * z;
    }

    /// n x count matrix, one draw per column.
    Matrix<Scalar> draw(Index count) {
        Matrix<Scalar> out(factor_.size(), count);
        for (Index c = 0; c < count; ++c) out.col(c) = draw();
        return out;
    }

private:
    CholeskyFactor<Scalar> factor_;
    Rng rng_;
};

/// `count` draws from N(0, cov), one per column.
template <typename Scalar>
Matrix<Scalar> sample_gaussian(const Matrix<Scalar>& cov, std::uint64_t seed, Index count) {
    if (count < 1) throw DomainError("sample_gaussian: count must be positive");
    GaussianSampler<Scalar> sampler(cov, seed);
    return sampler.draw(count);
}

}  // namespace lsgp
