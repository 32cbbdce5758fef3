#include "lsgp/local_gpr.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace lsgp;
using doctest::Approx;

namespace {

Matrix<double> column(std::initializer_list<double> v) {
    Matrix<double> X(Index(v.size()), 1);
    Index i = 0;
    for (const double x : v) X(i++, 0) = x;
    return X;
}

Vector<double> point(double x) { return Vector<double>::Constant(1, x); }

oracle::Shape shape_of(Profile p) {
    switch (p) {
        case Profile::rectangular: return oracle::Shape::rectangular;
        case Profile::epanechnikov: return oracle::Shape::epanechnikov;
        case Profile::gaussian: return oracle::Shape::gaussian;
        case Profile::hilbert: return oracle::Shape::hilbert;
    }
    return oracle::Shape::rectangular;
}

constexpr Profile kAll[] = {Profile::rectangular, Profile::epanechnikov, Profile::gaussian, Profile::hilbert};

}  // namespace

TEST_CASE("neighbour selection") {
    const Matrix<double> X = column({0, 0.4, 2});
    const auto rect = select_neighbors(X, point(0), 1.0, {Profile::rectangular, 1});
    CHECK(rect.indices == std::vector<Index>{0, 1});
    CHECK(rect.weights(0) == 1.0);
    CHECK(rect.weights(1) == 1.0);

    const auto epa = select_neighbors(X, point(0), 0.4, {Profile::epanechnikov, 1});
    CHECK(epa.indices == std::vector<Index>{0});

    const auto hil = select_neighbors(X, point(0), 1.0, {Profile::hilbert, 1});
    CHECK(hil.indices == std::vector<Index>{0, 1});
    CHECK(std::isinf(hil.weights(0)));

    std::mt19937_64 gen(1);
    const auto inst = oracle::random_instance(gen, 30, 3);
    CHECK(select_neighbors(Matrix<double>(inst.X), inst.x0, 0.3, {Profile::gaussian, 3}).size() == 30);
    CHECK(select_neighbors(X, point(10), 1.0, {Profile::rectangular, 1}).size() == 0);
}

TEST_CASE("adaptive bandwidth") {
    const LocalKernelSpec spec{Profile::epanechnikov, 1};
    const Matrix<double> X = column({0, 1, 2, 5});
    CHECK(adapt_bandwidth(X, point(0), 2, spec) == Approx(1 + 1e-6).epsilon(1e-15));
    const double all = adapt_bandwidth(X, point(0), 4, spec);
    CHECK(all > 5);
    CHECK(select_neighbors(X, point(0), all, spec).size() == 4);

    const Matrix<double> tied = column({-1, 1, 1, 3});
    const double h = adapt_bandwidth(tied, point(0), 2, spec);
    CHECK(select_neighbors(tied, point(0), h, spec).size() == 3);

    const Matrix<double> dup = column({0, 0, 0.5});
    CHECK(adapt_bandwidth(dup, point(0), 2, spec) == Approx(0.5 * (1 + 1e-6)));
    const Matrix<double> same = column({0, 0});
    CHECK(adapt_bandwidth(same, point(0), 2, spec) == 1e-6);

    CHECK_THROWS_AS(adapt_bandwidth(X, point(0), 5, spec), DomainError);
    CHECK_THROWS_AS(adapt_bandwidth(X, point(0), 0, spec), DomainError);
}

TEST_CASE("every profile keeps at least m neighbours under the adaptive rule") {
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 20; ++rep) {
        const auto inst = oracle::random_instance(gen, 40, 2);
        const Matrix<double> X = inst.X;
        for (const Profile p : kAll) {
            for (const Index m : {1, 5, 17, 40}) {
                const double h = adapt_bandwidth(X, inst.x0, m, {p, 2});
                CHECK(select_neighbors(X, inst.x0, h, {p, 2}).size() >= m);
            }
        }
    }
}

TEST_CASE("rectangular profile with unit bandwidth is the global posterior") {
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 5; ++rep) {
        const auto inst = oracle::random_instance(gen, 20, 2, 0.6);
        const Matrix<double> X = inst.X;
        const Vector<double> y = inst.y;
        const auto params = CovKernelParams<double>::rbf(0.3, 1.0);
        const auto gp = fit(X, y, params, 0.1);
        const auto local = local_predict(X, y, params, 0.1, {Profile::rectangular, 2}, BandwidthPolicy::fixed(1.0), inst.x0);
        const auto global = predict(gp, inst.x0);
        CHECK(std::abs(local.mean - global.mean) < 1e-10);
        CHECK(std::abs(local.variance - global.variance) < 1e-10);
        CHECK(local.neighbor_count == 20);
    }
}

TEST_CASE("localized posterior matches the explicit inverse") {
    std::mt19937_64 gen(7);
    for (int rep = 0; rep < 10; ++rep) {
        for (const Profile p : kAll) {
            const auto inst = oracle::random_instance(gen, 20, 2);
            const Matrix<double> X = inst.X;
            const Vector<double> y = inst.y;
            Vector<double> x0 = inst.x0;
            if (p == Profile::hilbert && rep % 2 == 0) x0 = X.row(3).transpose();  // exact hit
            const auto got = local_predict(X, y, CovKernelParams<double>::rbf(0.4, 1.2), 0.05, {p, 2},
                                           BandwidthPolicy::fixed(0.5), x0);
            const auto expect = oracle::localized(inst.X, inst.y, oracle::Family::rbf, 0.4, 1.2, 0.05, shape_of(p), 0.5, x0);
            CHECK(std::abs(got.mean - expect.mean) < 1e-8);
            CHECK(std::abs(got.variance - expect.variance) < 1e-8);
            CHECK(got.neighbor_count == Index(expect.support.size()));
        }
    }
}

TEST_CASE("Hilbert hit interpolates the training target") {
    const Matrix<double> X = column({0, 0.3, 0.5, 0.9});
    Vector<double> y(4);
    y << 1, -2, 0.5, 3;
    const auto p = local_predict(X, y, CovKernelParams<double>::rbf(0.2), 0.3, {Profile::hilbert, 1},
                                 BandwidthPolicy::fixed(0.5), point(0.3));
    CHECK(p.mean == Approx(-2.0).epsilon(1e-8));
    CHECK(p.variance < 1e-8);
}

TEST_CASE("empty neighbourhood falls back to the prior") {
    const Matrix<double> X = column({0, 0.1});
    Vector<double> y(2);
    y << 1, 2;
    const auto params = CovKernelParams<double>::rbf(0.2, 1.7);
    for (const Profile p : {Profile::rectangular, Profile::epanechnikov, Profile::hilbert}) {
        const auto out = local_predict(X, y, params, 0.1, {p, 1}, BandwidthPolicy::fixed(0.5), point(3));
        CHECK(out.mean == 0.0);
        CHECK(out.variance == 1.7);
        CHECK(out.neighbor_count == 0);
        CHECK(out.empty_neighborhood);
    }
}

TEST_CASE("heteroscedastic form agrees with the localized form") {
    std::mt19937_64 gen(11);
    for (int rep = 0; rep < 10; ++rep) {
        for (const Profile p : kAll) {
            const auto inst = oracle::random_instance(gen, 25, 3);
            const Matrix<double> X = inst.X;
            const Vector<double> y = inst.y;
            const auto params = CovKernelParams<double>::exponential(0.5, 0.9);
            const auto a = local_predict(X, y, params, 0.2, {p, 3}, BandwidthPolicy::fixed(0.7), inst.x0);
            const auto b = hetero_predict(X, y, params, 0.2, {p, 3}, 0.7, inst.x0);
            CHECK(std::abs(a.mean - b.mean) < 1e-10);
            CHECK(std::abs(a.variance - b.variance) < 1e-10);
            CHECK(a.neighbor_count == b.neighbor_count);
        }
    }
}

TEST_CASE("local marginal likelihood") {
    Matrix<double> X1(1, 1);
    X1 << 0;
    Vector<double> y1 = Vector<double>::Zero(1), w1 = Vector<double>::Ones(1);
    CHECK(local_mll(X1, y1, w1, CovKernelParams<double>::rbf(1.0), 1.0) == Approx(-1.26551).epsilon(1e-5));

    std::mt19937_64 gen(13);
    const auto inst = oracle::random_instance(gen, 6, 2);
    const Matrix<double> X = inst.X;
    const Vector<double> y = inst.y;
    const auto params = CovKernelParams<double>::rbf(0.5, 1.0);
    CHECK(local_mll(X, y, Vector<double>(Vector<double>::Ones(6)), params, 0.3) ==
          Approx(log_marginal_likelihood(fit(X, y, params, 0.3))).epsilon(1e-12));

    Vector<double> w(6);
    w << 0.5, 1, 2, 3, 0.25, 4;
    oracle::Mat C(6, 6);
    for (int a = 0; a < 6; ++a) {
        for (int b = 0; b < 6; ++b) {
            C(a, b) = oracle::kernel(oracle::Family::rbf, 0.5, 1.0, inst.X.row(a).transpose(), inst.X.row(b).transpose());
        }
        C(a, a) += 0.3 / w(a);
    }
    CHECK(local_mll(X, y, w, params, 0.3) == Approx(oracle::gaussian_log_density(C, inst.y)).epsilon(1e-10));
}

TEST_CASE("local log-likelihood gradient matches central differences") {
    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> u(0, 1);
    for (int rep = 0; rep < 10; ++rep) {
        const auto inst = oracle::random_instance(gen, 9, 2);
        Vector<double> w(9);
        for (Index i = 0; i < 9; ++i) w(i) = 0.2 + 3 * u(gen);
        if (rep % 3 == 0) w(4) = std::numeric_limits<double>::infinity();
        const double ell = 0.3 + u(gen), amp = 0.5 + u(gen), noise = 0.05 + 0.3 * u(gen);
        const auto at = [&](double le, double la, double ln) {
            oracle::Mat C(9, 9);
            for (int a = 0; a < 9; ++a) {
                for (int b = 0; b < 9; ++b) {
                    C(a, b) = oracle::kernel(oracle::Family::rbf, std::exp(le), std::exp(la), inst.X.row(a).transpose(),
                                             inst.X.row(b).transpose());
                }
                C(a, a) += std::isinf(w(a)) ? 0.0 : std::exp(ln) / w(a);
            }
            return oracle::gaussian_log_density(C, inst.y);
        };
        const double le = std::log(ell), la = std::log(amp), ln = std::log(noise), step = 1e-5;
        const double fd[3] = {(at(le + step, la, ln) - at(le - step, la, ln)) / (2 * step),
                              (at(le, la + step, ln) - at(le, la - step, ln)) / (2 * step),
                              (at(le, la, ln + step) - at(le, la, ln - step)) / (2 * step)};
        const auto e = local_mll_value_and_gradient(Matrix<double>(inst.X), Vector<double>(inst.y), w,
                                                    CovKernelParams<double>::rbf(ell, amp), noise);
        CHECK(e.value == Approx(at(le, la, ln)).epsilon(1e-10));
        for (int k = 0; k < 3; ++k) CHECK(std::abs(e.gradient(k) - fd[k]) <= 1e-5 * std::max(1.0, std::abs(fd[k])));
    }
}

TEST_CASE("batch prediction equals single predictions, serial or concurrent") {
    std::mt19937_64 gen(17);
    const auto inst = oracle::random_instance(gen, 60, 2);
    const Matrix<double> X = inst.X;
    const Vector<double> y = inst.y;
    Matrix<double> Q(100, 2);
    std::uniform_real_distribution<double> u(0, 1);
    for (Index i = 0; i < Q.size(); ++i) Q(i) = u(gen);
    const auto params = CovKernelParams<double>::rbf(0.3);
    const LocalKernelSpec spec{Profile::epanechnikov, 2};
    for (const auto& policy : {BandwidthPolicy::min_neighbors(8), BandwidthPolicy::fixed(0.2)}) {
        const auto serial = local_predict_batch(X, y, params, 0.1, spec, policy, Q, 1);
        const auto parallel = local_predict_batch(X, y, params, 0.1, spec, policy, Q, 4);
        REQUIRE(serial.size() == 100);
        for (Index i = 0; i < 100; ++i) {
            const auto single = local_predict(X, y, params, 0.1, spec, policy, Q.row(i));
            CHECK(serial[i].prediction.mean == single.mean);
            CHECK(serial[i].prediction.variance == single.variance);
            CHECK(parallel[i].prediction.mean == single.mean);
            CHECK(parallel[i].prediction.variance == single.variance);
        }
    }
    const auto one = local_predict_batch(X, y, params, 0.1, spec, BandwidthPolicy::min_neighbors(5),
                                         Matrix<double>(Q.topRows(1)));
    CHECK(one.size() == 1);
    CHECK(one[0].prediction.mean == local_predict(X, y, params, 0.1, spec, BandwidthPolicy::min_neighbors(5), Q.row(0)).mean);
}

TEST_CASE("per-query failures are recorded, the batch continues") {
    const Matrix<double> X = column({0, 0.1, 0.2});
    Vector<double> y(3);
    y << 1, 2, 3;
    Matrix<double> Q(2, 1);
    Q << 0.05, 0.15;
    // m larger than the data fails for every query without aborting the batch
    const auto out = local_predict_batch(X, y, CovKernelParams<double>::rbf(0.1), 0.1, {Profile::epanechnikov, 1},
                                         BandwidthPolicy::min_neighbors(2), Q);
    CHECK(out[0].ok());
    CHECK(out[1].ok());
    CHECK_THROWS_AS(LocalRegressor<double>(X, y, CovKernelParams<double>::rbf(0.1), 0.1, {Profile::epanechnikov, 1},
                                           BandwidthPolicy::min_neighbors(0)),
                    DomainError);
    const auto bad = local_predict_batch(X, y, CovKernelParams<double>::rbf(0.1), 0.1, {Profile::epanechnikov, 1},
                                         BandwidthPolicy::min_neighbors(4), Q);
    CHECK_FALSE(bad[0].ok());
    CHECK_FALSE(bad[1].ok());
}

TEST_CASE("grid index gives bit-identical neighbourhoods") {
    Rng rng(19);
    const Index n = 12000;
    Matrix<double> X(n, 2);
    Vector<double> y(n);
    for (Index i = 0; i < n; ++i) {
        X(i, 0) = rng.uniform();
        X(i, 1) = rng.uniform();
        y(i) = std::sin(6 * X(i, 0)) + X(i, 1);
    }
    const auto params = CovKernelParams<double>::rbf(0.1);
    for (const Profile p : {Profile::rectangular, Profile::epanechnikov, Profile::hilbert}) {
        const LocalRegressor<double> reg(X, y, params, 0.01, {p, 2}, BandwidthPolicy::fixed(0.02));
        REQUIRE(reg.uses_index());
        for (int q = 0; q < 40; ++q) {
            Vector<double> x0(2);
            x0 << rng.uniform(-0.05, 1.05), rng.uniform(-0.05, 1.05);
            if (q == 0) x0 = X.row(7).transpose();
            const auto a = reg.predict(x0);
            const auto b = local_predict(X, y, params, 0.01, {p, 2}, BandwidthPolicy::fixed(0.02), x0);
            CHECK(a.mean == b.mean);
            CHECK(a.variance == b.variance);
            CHECK(a.neighbor_count == b.neighbor_count);
        }
    }
}

TEST_CASE("errors") {
    const Matrix<double> X = column({0, 1});
    Vector<double> y(2);
    y << 0, 1;
    const auto params = CovKernelParams<double>::rbf(1.0);
    CHECK_THROWS_AS(local_predict(X, y, params, 0.0, {Profile::rectangular, 1}, BandwidthPolicy::fixed(1), point(0)),
                    DomainError);
    CHECK_THROWS_AS(local_predict(X, y, params, 0.1, {Profile::rectangular, 1}, BandwidthPolicy::fixed(-1), point(0)),
                    DomainError);
    CHECK_THROWS_AS(local_predict(X, y, params, 0.1, {Profile::rectangular, 2}, BandwidthPolicy::fixed(1),
                                  Vector<double>(Vector<double>::Zero(2))),
                    DimensionError);
}
