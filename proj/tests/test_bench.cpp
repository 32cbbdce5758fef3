#include "lsgp/bench.hpp"

#include "lsgp/global_gpr.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace lsgp;
using doctest::Approx;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "lsgp_test_bench" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// smooth 2-d regression problem with a known generator
Dataset synthetic(Index n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.X.resize(n, 2);
    d.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        d.X(i, 0) = rng.uniform();
        d.X(i, 1) = rng.uniform();
        d.y(i) = std::sin(5 * d.X(i, 0)) * std::cos(3 * d.X(i, 1)) + 0.05 * rng.normal();
    }
    d.feature_names = {"a", "b"};
    return d;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LSGP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("configuration") {
    RunConfig c;
    CHECK(c.integer("splits") == 10);
    CHECK(c.str("profile") == "hilbert");
    CHECK_FALSE(c.is_set("profile"));
    c.set("splits", " 4 ");
    CHECK(c.integer("splits") == 4);
    CHECK(c.is_set("splits"));
    CHECK_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
    c.set("grid_noise", "0.1, 1e-3");
    CHECK(c.reals("grid_noise") == std::vector<double>{0.1, 1e-3});
    c.set("seed", "1.5");
    CHECK_THROWS_AS(c.integer("seed"), ConfigError);
    c.set("header", "maybe");
    CHECK_THROWS_AS(c.flag("header"), ConfigError);

    const auto dir = scratch("config");
    std::ofstream(dir / "run.cfg") << "# comment\nsplits = 3\n\nmethods = gp, knn  # trailing\n";
    RunConfig f;
    f.load_file(dir / "run.cfg");
    CHECK(f.integer("splits") == 3);
    CHECK(f.list("methods") == std::vector<std::string>{"gp", "knn"});
    std::ofstream(dir / "bad.cfg") << "colour = red\n";
    CHECK_THROWS_AS(f.load_file(dir / "bad.cfg"), ConfigError);
    CHECK_THROWS_AS(f.load_file(dir / "absent.cfg"), ConfigError);
    CHECK(f.dump().find("splits = 3\n") != std::string::npos);
}

TEST_CASE("method names") {
    CHECK(parse_method("gp", Profile::hilbert).kind == MethodKind::gp);
    const auto m = parse_method("lsgpr:epanechnikov", Profile::hilbert);
    CHECK(m.kind == MethodKind::lsgpr);
    CHECK(m.profile == Profile::epanechnikov);
    CHECK(m.name() == "lsgpr_epanechnikov");
    CHECK(parse_method("lsgpr", Profile::hilbert).name() == "lsgpr_hilbert");
    CHECK(parse_method("nw:gaussian", Profile::hilbert).name() == "nw_gaussian");
    CHECK_THROWS_AS(parse_method("svm", Profile::hilbert), ConfigError);
    CHECK_THROWS_AS(parse_method("knn:hilbert", Profile::hilbert), ConfigError);
    CHECK_THROWS_AS(parse_method("lsgpr:box", Profile::hilbert), ConfigError);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(ConfigError("x")) == 2);
    CHECK(exit_code_for(ParseError("x")) == 3);
    CHECK(exit_code_for(FileError("x")) == 3);
    CHECK(exit_code_for(DimensionError("x")) == 3);
    CHECK(exit_code_for(SingularMatrixError("x")) == 4);
    CHECK(exit_code_for(NumericalError("x")) == 4);
}

TEST_CASE("every method runs and beats the constant predictor") {
    const Dataset d = synthetic(150, 1);
    const auto parts = split(d, {0.8, 0, 0.2, 2});
    SelectionSettings s;
    s.grid_m = {5, 10, 20};
    s.lengthscale_multipliers = {0.3, 1};
    s.noise_multipliers = {1e-2, 1e-1};
    const double var = (parts.test.y.array() - parts.test.y.mean()).square().mean();
    for (const auto* text : {"gp", "lsgpr:hilbert", "lsgpr:epanechnikov", "knn", "nw:epanechnikov"}) {
        const auto o = evaluate_method(parse_method(text, Profile::hilbert), parts.train, parts.test, s);
        CAPTURE(text);
        CAPTURE(o.error);
        CHECK(o.ok);
        CHECK(o.test_mse < var);
    }
}

TEST_CASE("benchmark reports are complete, consistent and reproducible") {
    const Dataset d = scale_minmax(synthetic(120, 4));
    SelectionSettings s;
    s.grid_m = {5, 10, 20};
    s.lengthscale_multipliers = {0.3, 1};
    s.noise_multipliers = {1e-2, 1e-1};
    s.seed = 8;
    std::vector<MethodSpec> methods{parse_method("lsgpr", Profile::hilbert), parse_method("gp", Profile::hilbert),
                                    parse_method("knn", Profile::hilbert)};
    const auto a_dir = scratch("bench_a"), b_dir = scratch("bench_b");
    const auto a = run_benchmark(d, methods, 4, {0.7, 0.15, 0.15, 0}, s, false, a_dir);
    const auto b = run_benchmark(d, methods, 4, {0.7, 0.15, 0.15, 0}, s, false, b_dir);

    REQUIRE(a.methods.size() == 3);
    CHECK(a.failures.empty());
    for (const char* f : {"report.csv", "params.csv", "summary.csv", "pvalues.csv"}) {
        CHECK(slurp(a_dir / f) == slurp(b_dir / f));
    }

    const Dataset report = load_csv(a_dir / "report.csv", 0);
    CHECK(report.X.rows() == 4);
    CHECK(report.feature_names == std::vector<std::string>{"lsgpr_hilbert", "gp", "knn"});
    const Dataset summary = load_csv(a_dir / "summary.csv", 0);
    for (Index k = 0; k < 3; ++k) {
        const Vector<double> col = report.X.col(k);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().mean());
        CHECK(std::abs(a.mean[std::size_t(k)] - mean) <= 1e-12);
        CHECK(std::abs(a.sd[std::size_t(k)] - sd) <= 1e-12);
        // summary.csv columns: first is consumed as the target
        const double file_mean = k == 0 ? summary.y(0) : summary.X(0, 2 * k - 1);
        const double file_sd = summary.X(0, 2 * k);
        CHECK(std::abs(file_mean - mean) <= 1e-12);
        CHECK(std::abs(file_sd - sd) <= 1e-12);
    }
    const Dataset pv = load_csv(a_dir / "pvalues.csv", 0);
    CHECK(pv.X.rows() == 3);
    CHECK(pv.X(0, 0) == 1.0);
    CHECK(pv.X(0, 1) == a.p_values[0][1]);
}

TEST_CASE("original-unit reporting rescales by the target range") {
    Dataset raw = synthetic(90, 6);
    raw.y *= 10;
    const Dataset d = scale_minmax(raw);
    SelectionSettings s;
    s.grid_m = {5};
    s.lengthscale_multipliers = {1};
    s.noise_multipliers = {0.1};
    const std::vector<MethodSpec> m{parse_method("knn", Profile::hilbert)};
    const auto scaled = run_benchmark(d, m, 2, {0.7, 0.15, 0.15, 0}, s, false, std::nullopt);
    const auto orig = run_benchmark(d, m, 2, {0.7, 0.15, 0.15, 0}, s, true, std::nullopt);
    const double r = d.scaling.target.scale;
    CHECK(orig.mean[0] == Approx(scaled.mean[0] * r * r).epsilon(1e-12));
}

TEST_CASE("failing methods are recorded and the rest continue") {
    const Dataset d = scale_minmax(synthetic(40, 2));
    SelectionSettings s;
    s.grid_m = {5};
    s.lengthscale_multipliers = {1};
    s.noise_multipliers = {0.1};
    s.folds = 50;  // more folds than rows: cross-validation cannot run
    const std::vector<MethodSpec> m{parse_method("knn", Profile::hilbert), parse_method("gp", Profile::hilbert)};
    const auto r = run_benchmark(d, m, 2, {0.7, 0.15, 0.15, 0}, s, false, std::nullopt);
    CHECK(r.methods == std::vector<std::string>{"gp"});
    CHECK(r.failures.size() == 1);
}

TEST_CASE("prior samples") {
    RunConfig c;
    c.set("seed", "3");
    c.set("amplitude", "1");
    const auto global = run_prior_samples(c);
    CHECK(global.x.size() == 200);
    CHECK(global.samples.cols() == 5);
    CHECK(global.x(0) == -1.0);
    CHECK(global.x(199) == 1.0);

    c.set("profile", "rectangular");
    c.set("h", "0.5");
    const auto rect = run_prior_samples(c);
    for (Index i = 0; i < 200; ++i) {
        if (std::abs(rect.x(i)) > 0.5) CHECK((rect.samples.row(i).array() == 0).all());
        else CHECK((rect.samples.row(i).array() != 0).all());
    }

    // pointwise prior sd is sqrt(k_h(x, 0) K(x, x)); many draws estimate it
    c.set("profile", "epanechnikov");
    c.set("samples", "4000");
    const auto epa = run_prior_samples(c);
    for (Index i = 0; i < 200; i += 7) {
        const double x = epa.x(i);
        const double w = std::abs(x) <= 0.5 ? 0.75 * (1 - 4 * x * x) / 0.5 : 0.0;
        CHECK(epa.weights(i) == Approx(w).epsilon(1e-12));
        const double sd = std::sqrt(epa.samples.row(i).squaredNorm() / 4000);
        CHECK(sd == Approx(std::sqrt(w)).epsilon(0.06));
    }

    c.set("profile", "none");
    c.set("samples", "4000");
    c.set("lengthscale", "0.05");
    const auto many = run_prior_samples(c);
    const double var = many.samples.squaredNorm() / double(many.samples.size());
    CHECK(var == Approx(1.0).epsilon(0.1));

    const auto dir = scratch("prior");
    RunConfig w;
    w.set("out", dir.string());
    w.set("profile", "rectangular");
    std::ostringstream quiet;
    cmd_prior_samples(w, quiet);
    const auto table = load_matrix_csv(dir / "prior_samples.csv", nullptr);
    CHECK(table.rows() == 200);
    CHECK(table.cols() == 6);
}

TEST_CASE("predict command") {
    const auto dir = scratch("predict");
    Dataset train = synthetic(60, 3);
    save_csv(train, dir / "train.csv");
    Matrix<double> Q(1000, 2);
    Rng rng(1);
    for (Index i = 0; i < Q.size(); ++i) Q(i) = rng.uniform();
    Q.row(0) = train.X.row(5);
    Q.row(1) << 40, 40;
    Dataset qd;
    qd.X = Q;
    qd.y = Vector<double>::Zero(1000);
    qd.feature_names = {"a", "b"};
    save_csv(qd, dir / "query_with_y.csv");
    {
        std::ofstream q(dir / "query.csv");
        q << "a,b\n";
        for (Index i = 0; i < Q.rows(); ++i) q << format_double(Q(i, 0)) << ',' << format_double(Q(i, 1)) << '\n';
    }

    RunConfig c;
    c.set("data", (dir / "train.csv").string());
    c.set("query", (dir / "query.csv").string());
    c.set("out", dir.string());
    c.set("method", "lsgpr");
    c.set("profile", "epanechnikov");
    c.set("policy", "h");
    c.set("h", "0.3");
    c.set("lengthscale", "0.3");
    c.set("noise", "1e-6");
    std::ostringstream log;
    const Matrix<double> out = cmd_predict(c, log);
    REQUIRE(out.rows() == 1000);
    CHECK(out.cols() == 5);
    CHECK(out.leftCols(2) == Q);
    CHECK(out(0, 2) == Approx(train.y(5)).epsilon(1e-2));
    CHECK(out(1, 2) == 0.0);
    CHECK(out(1, 3) == 1.0);
    CHECK(out(1, 4) == 0.0);
    CHECK((out.col(3).array() >= 0).all());
    const auto back = load_matrix_csv(dir / "predictions.csv", nullptr);
    CHECK(back == out);

    c.set("method", "gp");
    const Matrix<double> g = cmd_predict(c, log);
    CHECK(g(0, 2) == Approx(train.y(5)).epsilon(1e-2));
    CHECK(g(0, 4) == 60);

    c.set("query", (dir / "query_with_y.csv").string());
    try {
        cmd_predict(c, log);
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("expected d = 2") != std::string::npos);
    }
}

TEST_CASE("doppler demo dumps") {
    const auto dir = scratch("doppler");
    RunConfig c;
    c.set("n", "100");
    c.set("validation_n", "50");
    c.set("seed", "2");
    c.set("out", dir.string());
    std::ostringstream log;
    const auto out = cmd_doppler_demo(c, log);
    for (const char* f : {"gp.csv", "lsgpr.csv"}) {
        const auto t = load_matrix_csv(dir / f, nullptr);
        CHECK(t.rows() == 500);
        CHECK(t.cols() == 6);
        CHECK((t.col(3).array() >= 0).all());
        for (Index i = 0; i < t.rows(); ++i) {
            CHECK(t(i, 1) == doppler(t(i, 0)));
            CHECK(t(i, 4) == Approx(t(i, 2) - 1.96 * std::sqrt(t(i, 3))));
        }
    }
    CHECK(out.lsgpr_test_mse > 0);
    const auto first = slurp(dir / "lsgpr.csv");
    cmd_doppler_demo(c, log);
    CHECK(slurp(dir / "lsgpr.csv") == first);
}

TEST_CASE("command-line exit codes") {
    const auto dir = scratch("cli");
    CHECK(run_cli("prior-samples --out " + dir.string()) == 0);
    CHECK(std::filesystem::exists(dir / "prior_samples.csv"));
    CHECK(run_cli("prior-samples --profile box --out " + dir.string()) == 2);
    CHECK(run_cli("prior-samples --colour red") == 2);
    CHECK(run_cli("benchmark --data " + (dir / "absent.csv").string() + " --out " + dir.string()) == 3);
    std::ofstream(dir / "bad.cfg") << "splits = 3\nbogus = 1\n";
    CHECK(run_cli("benchmark --config " + (dir / "bad.cfg").string()) == 2);
    CHECK(run_cli("") == 2);
}
