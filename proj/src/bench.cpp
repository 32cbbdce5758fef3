#include "lsgp/bench.hpp"

#include "lsgp/baselines.hpp"
#include "lsgp/global_gpr.hpp"
#include "lsgp/local_gpr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lsgp {

// ---------------------------------------------------------------- config

const std::vector<std::pair<std::string, std::string>>& RunConfig::defaults() {
    static const std::vector<std::pair<std::string, std::string>> table{
        // data
        {"data", ""},
        {"target", "-1"},
        {"delimiter", ","},
        {"header", "true"},
        {"preprocess", "minmax"},
        // benchmark
        {"methods", "lsgpr:hilbert,gp,knn"},
        {"profile", "hilbert"},
        {"splits", "10"},
        {"fractions", "0.7,0.15,0.15"},
        {"folds", "3"},
        {"grid_m", "5,10,20,50,100,200"},
        {"grid_lengthscale", "0.05,0.1,0.3,1,3"},
        {"grid_noise", "1e-4,1e-3,1e-2,1e-1,1"},
        {"mse_space", "scaled"},
        // doppler-demo
        {"n", "400"},
        {"noise_variance", "0.1"},
        {"noise_is_sd", "false"},
        {"validation_n", "100"},
        {"queries", "500"},
        {"bandwidth", "m"},
        {"grid_h", "0.0025,0.005,0.01,0.02,0.04,0.08,0.16,0.32"},
        {"doppler_grid_m", "3,5,7,10,15,20,30,50,100"},
        {"refine", "true"},
        // prior-samples
        {"samples", "5"},
        {"grid_points", "200"},
        {"h", "0.5"},
        // predict and prior-samples kernel
        {"kernel", "rbf"},
        {"lengthscale", "0.3"},
        {"amplitude", "1"},
        {"noise", "0.01"},
        {"method", "lsgpr"},
        {"policy", "m"},
        {"m", "10"},
        {"optimize", "false"},
        {"query", ""},
        // common
        {"seed", "0"},
        {"threads", "1"},
        {"out", "out"},
    };
    return table;
}

RunConfig::RunConfig() {
    for (const auto& [k, v] : defaults()) values_[k] = v;
}

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_real(const std::string& key, const std::string& text) {
    double v = 0;
    const std::string s = trim(text);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    }
    return v;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream seed for a (seed, purpose, index) triple.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ splitmix64(tag)) + index);
}

double population_variance(const Vector<double>& v) {
    if (v.size() == 0) return 0;
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / double(v.size());
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = trim(value);
    explicit_.insert(key);
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

const std::string& RunConfig::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const { return parse_real(key, str(key)); }

long RunConfig::integer(const std::string& key) const {
    const double v = real(key);
    if (v != std::floor(v)) throw ConfigError("config key '" + key + "': expected an integer");
    return long(v);
}

bool RunConfig::flag(const std::string& key) const {
    std::string v = str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_commas(str(key))) out.push_back(parse_real(key, item));
    return out;
}

std::vector<std::string> RunConfig::list(const std::string& key) const { return split_commas(str(key)); }

std::string RunConfig::dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::filesystem::path resolve_data_path(const std::string& path) {
    if (path.empty()) throw ConfigError("no dataset given (set 'data' or pass --data)");
    std::filesystem::path p(path);
    if (std::filesystem::exists(p) || p.is_absolute()) return p;
    if (const char* dir = std::getenv("LSGP_DATA_DIR"); dir && *dir) {
        const auto candidate = std::filesystem::path(dir) / p;
        if (std::filesystem::exists(candidate)) return candidate;
    }
    return p;
}

// ---------------------------------------------------------------- tables

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const Matrix<double>& rows) {
    if (Index(header.size()) != rows.cols()) throw DimensionError("write_table: header width differs from data");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path.string() + "'");
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (Index r = 0; r < rows.rows(); ++r) {
        for (Index c = 0; c < rows.cols(); ++c) out << (c ? "," : "") << format_double(rows(r, c));
        out << '\n';
    }
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return 3;
    return 4;
}

// ---------------------------------------------------------------- methods

std::string MethodSpec::name() const {
    switch (kind) {
        case MethodKind::gp: return "gp";
        case MethodKind::knn: return "knn";
        case MethodKind::lsgpr: return "lsgpr_" + std::string(to_string(profile));
        case MethodKind::nw: return "nw_" + std::string(to_string(profile));
    }
    return "?";
}

MethodSpec parse_method(const std::string& text, Profile default_profile) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    MethodSpec m;
    m.profile = default_profile;
    if (head == "gp") {
        m.kind = MethodKind::gp;
    } else if (head == "knn") {
        m.kind = MethodKind::knn;
    } else if (head == "lsgpr") {
        m.kind = MethodKind::lsgpr;
    } else if (head == "nw") {
        m.kind = MethodKind::nw;
    } else {
        throw ConfigError("unknown method '" + text + "' (expected gp, lsgpr, knn or nw)");
    }
    if (colon != std::string::npos) {
        if (m.kind == MethodKind::gp || m.kind == MethodKind::knn) {
            throw ConfigError("method '" + head + "' takes no profile");
        }
        try {
            m.profile = parse_profile(text.substr(colon + 1));
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
    }
    return m;
}

namespace {

Vector<double> predict_local_means(const LocalRegressor<double>& reg, const Matrix<double>& X_eval,
                                   unsigned threads, double* mean_neighbors = nullptr) {
    const auto results = reg.predict_batch(X_eval, threads);
    Vector<double> out(X_eval.rows());
    double neighbors = 0;
    for (Index i = 0; i < X_eval.rows(); ++i) {
        const auto& r = results[std::size_t(i)];
        if (!r.ok()) throw NumericalError(r.error);
        out(i) = r.prediction.mean;
        neighbors += double(r.prediction.neighbor_count);
    }
    if (mean_neighbors) *mean_neighbors = X_eval.rows() ? neighbors / double(X_eval.rows()) : 0.0;
    return out;
}

Vector<double> predict_nw(const Matrix<double>& X, const Vector<double>& y, const LocalKernelSpec& spec, Index m,
                          const Matrix<double>& X_eval) {
    Vector<double> out(X_eval.rows());
    for (Index i = 0; i < X_eval.rows(); ++i) {
        const double h = adapt_bandwidth(X, X_eval.row(i), m, spec);
        out(i) = nadaraya_watson(X, y, spec, h, X_eval.row(i)).value;
    }
    return out;
}

}  // namespace

MethodOutcome evaluate_method(const MethodSpec& method, const Dataset& train, const Dataset& test,
                              const SelectionSettings& settings) {
    MethodOutcome out;
    out.method = method.name();
    const Matrix<double>& X = train.X;
    const Vector<double>& y = train.y;
    const Index n = X.rows();
    const double var_y = population_variance(y) > 0 ? population_variance(y) : 1.0;
    const double med = median_pairwise_distance(X);
    const LocalKernelSpec spec{method.profile, int(X.cols())};

    std::vector<double> ells, noises;
    for (const double f : settings.lengthscale_multipliers) ells.push_back(f * med);
    for (const double f : settings.noise_multipliers) noises.push_back(f * var_y);

    // m above the smallest CV training fold cannot be honoured
    const Index fold_train = n - (n + settings.folds - 1) / settings.folds;
    std::vector<Index> ms;
    for (const Index m : settings.grid_m) {
        if (m >= 1 && m <= fold_train) ms.push_back(m);
    }
    if (ms.empty()) ms.push_back(std::max<Index>(1, fold_train));

    try {
        switch (method.kind) {
            case MethodKind::gp: {
                const auto fitres = optimize_hypers(X, y, CovKernelParams<double>::rbf(med, var_y), 0.1 * var_y);
                const auto model = fit(X, y, fitres.params, fitres.noise);
                Vector<double> pred(test.size());
                for (Index i = 0; i < test.size(); ++i) pred(i) = predict(model, test.X.row(i)).mean;
                out.test_mse = mse(pred, test.y);
                out.chosen = {0, fitres.params.lengthscale, fitres.noise};
                out.amplitude = fitres.params.amplitude;
                out.mean_neighbors = double(n);
                break;
            }
            case MethodKind::lsgpr: {
                std::vector<GridCell> cells;
                for (const Index m : ms) {
                    for (const double ell : ells) {
                        for (const double noise : noises) cells.push_back({m, ell, noise});
                    }
                }
                const PredictorFactory factory = [&](const Matrix<double>& Xtr, const Vector<double>& ytr,
                                                     const Matrix<double>& Xev, const GridCell& c) {
                    const LocalRegressor<double> reg(Xtr, ytr, CovKernelParams<double>::rbf(c.lengthscale, var_y),
                                                     c.noise, spec, BandwidthPolicy::min_neighbors(c.m));
                    return predict_local_means(reg, Xev, 1);
                };
                const auto cv = kfold_cv(X, y, cells, settings.folds, settings.seed, factory, settings.threads);
                const LocalRegressor<double> reg(X, y, CovKernelParams<double>::rbf(cv.best.lengthscale, var_y),
                                                 cv.best.noise, spec, BandwidthPolicy::min_neighbors(cv.best.m));
                out.test_mse = mse(predict_local_means(reg, test.X, settings.threads, &out.mean_neighbors), test.y);
                out.chosen = cv.best;
                out.amplitude = var_y;
                break;
            }
            case MethodKind::knn: {
                std::vector<GridCell> cells;
                for (const Index m : ms) cells.push_back({m, 0, 0});
                const PredictorFactory factory = [](const Matrix<double>& Xtr, const Vector<double>& ytr,
                                                    const Matrix<double>& Xev, const GridCell& c) {
                    Vector<double> p(Xev.rows());
                    for (Index i = 0; i < Xev.rows(); ++i) p(i) = knn_predict(Xtr, ytr, c.m, Xev.row(i));
                    return p;
                };
                const auto cv = kfold_cv(X, y, cells, settings.folds, settings.seed, factory, settings.threads);
                Vector<double> pred(test.size());
                for (Index i = 0; i < test.size(); ++i) pred(i) = knn_predict(X, y, cv.best.m, test.X.row(i));
                out.test_mse = mse(pred, test.y);
                out.chosen = cv.best;
                out.mean_neighbors = double(cv.best.m);
                break;
            }
            case MethodKind::nw: {
                std::vector<GridCell> cells;
                for (const Index m : ms) cells.push_back({m, 0, 0});
                const PredictorFactory factory = [&](const Matrix<double>& Xtr, const Vector<double>& ytr,
                                                     const Matrix<double>& Xev, const GridCell& c) {
                    return predict_nw(Xtr, ytr, spec, c.m, Xev);
                };
                const auto cv = kfold_cv(X, y, cells, settings.folds, settings.seed, factory, settings.threads);
                out.test_mse = mse(predict_nw(X, y, spec, cv.best.m, test.X), test.y);
                out.chosen = cv.best;
                out.mean_neighbors = double(cv.best.m);
                break;
            }
        }
        out.ok = std::isfinite(out.test_mse);
        if (!out.ok) out.error = "non-finite test MSE";
    } catch (const Error& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

// ---------------------------------------------------------------- benchmark

BenchReport run_benchmark(const Dataset& data, const std::vector<MethodSpec>& methods, int splits,
                          const SplitSpec& fractions, const SelectionSettings& settings, bool report_original_units,
                          const std::optional<std::filesystem::path>& out_dir) {
    if (methods.empty()) throw ConfigError("benchmark: no methods given");
    if (splits < 1) throw ConfigError("benchmark: splits must be >= 1");
    const double unit = report_original_units && data.scaling.kind != ScalingKind::none
                            ? data.scaling.target.scale * data.scaling.target.scale
                            : 1.0;

    std::vector<std::vector<MethodOutcome>> all(methods.size());
    for (int s = 0; s < splits; ++s) {
        SplitSpec spec = fractions;
        spec.seed = derive_seed(settings.seed, 1, std::uint64_t(s));
        const Split parts = split(data, spec);
        // hyperparameters are chosen by CV over everything that is not test
        std::vector<std::size_t> pool_idx = parts.train_idx;
        pool_idx.insert(pool_idx.end(), parts.validation_idx.begin(), parts.validation_idx.end());
        const Dataset pool = data.subset(pool_idx);

        SelectionSettings local = settings;
        local.seed = derive_seed(settings.seed, 2, std::uint64_t(s));
        for (std::size_t k = 0; k < methods.size(); ++k) {
            MethodOutcome o = evaluate_method(methods[k], pool, parts.test, local);
            o.test_mse *= unit;
            all[k].push_back(std::move(o));
        }
    }

    BenchReport report;
    for (std::size_t k = 0; k < methods.size(); ++k) {
        const auto failed = std::find_if(all[k].begin(), all[k].end(), [](const auto& o) { return !o.ok; });
        if (failed != all[k].end()) {
            report.failures.push_back(methods[k].name() + " (split " +
                                      std::to_string(std::distance(all[k].begin(), failed)) + "): " + failed->error);
            continue;
        }
        std::vector<double> v;
        for (const auto& o : all[k]) v.push_back(o.test_mse);
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
        double ss = 0;
        for (const double x : v) ss += (x - mean) * (x - mean);
        report.methods.push_back(methods[k].name());
        report.split_mse.push_back(v);
        report.outcomes.push_back(all[k]);
        report.mean.push_back(mean);
        report.sd.push_back(std::sqrt(ss / double(v.size())));
    }
    const std::size_t kept = report.methods.size();
    report.p_values.assign(kept, std::vector<double>(kept, 1.0));
    for (std::size_t a = 0; a < kept; ++a) {
        for (std::size_t b = 0; b < kept; ++b) {
            if (a != b) report.p_values[a][b] = wilcoxon_one_sided(report.split_mse[a], report.split_mse[b]).p_value;
        }
    }

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        std::vector<std::string> header{"split"};
        for (const auto& m : report.methods) header.push_back(m);
        Matrix<double> rows(splits, Index(kept) + 1);
        for (int s = 0; s < splits; ++s) {
            rows(s, 0) = s;
            for (std::size_t k = 0; k < kept; ++k) rows(s, Index(k) + 1) = report.split_mse[k][std::size_t(s)];
        }
        write_table(*out_dir / "report.csv", header, rows);

        std::vector<std::string> pheader{"split"};
        for (const auto& m : report.methods) {
            for (const char* field : {"_m", "_lengthscale", "_noise", "_amplitude", "_mean_neighbors"}) {
                pheader.push_back(m + field);
            }
        }
        Matrix<double> prow(splits, Index(pheader.size()));
        for (int s = 0; s < splits; ++s) {
            prow(s, 0) = s;
            for (std::size_t k = 0; k < kept; ++k) {
                const auto& o = report.outcomes[k][std::size_t(s)];
                const Index base = 1 + Index(k) * 5;
                prow(s, base) = double(o.chosen.m);
                prow(s, base + 1) = o.chosen.lengthscale;
                prow(s, base + 2) = o.chosen.noise;
                prow(s, base + 3) = o.amplitude;
                prow(s, base + 4) = o.mean_neighbors;
            }
        }
        write_table(*out_dir / "params.csv", pheader, prow);

        std::vector<std::string> sheader;
        for (const auto& m : report.methods) {
            sheader.push_back(m + "_mean");
            sheader.push_back(m + "_sd");
        }
        for (const char* echo : {"n", "d", "splits", "folds", "test_fraction", "seed", "original_units"}) {
            sheader.push_back(echo);
        }
        Matrix<double> srow(1, Index(sheader.size()));
        Index c = 0;
        for (std::size_t k = 0; k < kept; ++k) {
            srow(0, c++) = report.mean[k];
            srow(0, c++) = report.sd[k];
        }
        srow(0, c++) = double(data.size());
        srow(0, c++) = double(data.dimension());
        srow(0, c++) = splits;
        srow(0, c++) = settings.folds;
        srow(0, c++) = fractions.test;
        srow(0, c++) = double(settings.seed);
        srow(0, c++) = report_original_units ? 1 : 0;
        write_table(*out_dir / "summary.csv", sheader, srow);

        std::vector<std::string> vheader{"row"};
        for (const auto& m : report.methods) vheader.push_back(m);
        Matrix<double> prows(static_cast<Index>(kept), static_cast<Index>(kept) + 1);
        for (std::size_t a = 0; a < kept; ++a) {
            prows(Index(a), 0) = double(a);
            for (std::size_t b = 0; b < kept; ++b) prows(Index(a), Index(b) + 1) = report.p_values[a][b];
        }
        write_table(*out_dir / "pvalues.csv", vheader, prows);

        std::ofstream fail(*out_dir / "failures.txt");
        for (const auto& f : report.failures) fail << f << '\n';
    }
    return report;
}

namespace {

ColumnRef parse_target(const std::string& text) {
    int idx = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), idx);
    if (!text.empty() && ec == std::errc() && ptr == text.data() + text.size()) return idx;
    return text;
}

CsvOptions csv_options(const RunConfig& config) {
    CsvOptions o;
    const std::string& d = config.str("delimiter");
    if (d == "\\t" || d == "tab") {
        o.delimiter = '\t';
    } else if (d.size() == 1) {
        o.delimiter = d[0];
    } else {
        throw ConfigError("delimiter must be a single character");
    }
    o.header = config.flag("header");
    return o;
}

Dataset preprocess(const Dataset& data, const std::string& mode) {
    if (mode == "minmax") return scale_minmax(data);
    if (mode == "standardize") return standardize(data);
    if (mode == "none") return data;
    throw ConfigError("preprocess must be minmax, standardize or none");
}

Profile config_profile(const RunConfig& config) {
    try {
        return parse_profile(config.str("profile"));
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

std::vector<Index> to_indices(const std::vector<double>& v, const char* key) {
    std::vector<Index> out;
    for (const double x : v) {
        if (x < 1 || x != std::floor(x)) throw ConfigError(std::string(key) + ": entries must be positive integers");
        out.push_back(Index(x));
    }
    return out;
}

}  // namespace

BenchReport cmd_benchmark(const RunConfig& config, std::ostream& log) {
    const Dataset raw = load_csv(resolve_data_path(config.str("data")), parse_target(config.str("target")),
                                 csv_options(config));
    const Dataset data = preprocess(raw, config.str("preprocess"));
    for (const int c : constant_columns(data)) {
        log << "note: column " << (c < 0 ? data.target_name : data.feature_names[std::size_t(c)])
            << " is constant and was mapped to 0\n";
    }

    const Profile profile = config_profile(config);
    std::vector<MethodSpec> methods;
    for (const auto& m : config.list("methods")) methods.push_back(parse_method(m, profile));

    const auto fr = config.reals("fractions");
    if (fr.size() != 3) throw ConfigError("fractions needs three values: train,validation,test");
    const SplitSpec fractions{fr[0], fr[1], fr[2], 0};

    SelectionSettings settings;
    settings.folds = int(config.integer("folds"));
    settings.grid_m = to_indices(config.reals("grid_m"), "grid_m");
    settings.lengthscale_multipliers = config.reals("grid_lengthscale");
    settings.noise_multipliers = config.reals("grid_noise");
    settings.seed = std::uint64_t(config.integer("seed"));
    settings.threads = unsigned(std::max(1L, config.integer("threads")));
    const std::string space = config.str("mse_space");
    if (space != "scaled" && space != "original") throw ConfigError("mse_space must be scaled or original");

    const std::filesystem::path out_dir(config.str("out"));
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream resolved(out_dir / "resolved_config.txt");
        resolved << config.dump();
    }
    log << "benchmark: n = " << data.size() << ", d = " << data.dimension() << ", splits = "
        << config.integer("splits") << "\n";
    auto report = run_benchmark(data, methods, int(config.integer("splits")), fractions, settings,
                                space == "original", out_dir);
    for (const auto& f : report.failures) log << "failed: " << f << '\n';
    for (std::size_t k = 0; k < report.methods.size(); ++k) {
        log << report.methods[k] << ": test MSE " << format_double(report.mean[k]) << " +- "
            << format_double(report.sd[k]) << '\n';
    }
    if (report.methods.empty()) throw NumericalError("benchmark: every method failed");
    return report;
}

// ---------------------------------------------------------------- doppler demo

namespace {

Matrix<double> band_dump(const Vector<double>& xq, const std::vector<PredictiveDistribution<double>>& preds) {
    Matrix<double> out(xq.size(), 6);
    for (Index i = 0; i < xq.size(); ++i) {
        const auto& p = preds[std::size_t(i)];
        const double half = 1.96 * std::sqrt(p.variance);
        out.row(i) << xq(i), doppler(xq(i)), p.mean, p.variance, p.mean - half, p.mean + half;
    }
    return out;
}

}  // namespace

DopplerOutcome run_doppler_demo(const RunConfig& config) {
    const auto seed = std::uint64_t(config.integer("seed"));
    const Index n = config.integer("n");
    const double noise = config.real("noise_variance");
    const bool is_sd = config.flag("noise_is_sd");
    const unsigned threads = unsigned(std::max(1L, config.integer("threads")));
    const Dataset train = gen_doppler(n, noise, derive_seed(seed, 10), is_sd);
    const Dataset val = gen_doppler(config.integer("validation_n"), noise, derive_seed(seed, 11), is_sd);
    const Profile profile = config.is_set("profile") ? config_profile(config) : Profile::epanechnikov;
    const LocalKernelSpec spec{profile, 1};

    const Index q = config.integer("queries");
    if (q < 1) throw ConfigError("queries must be positive");
    Matrix<double> Xq(q, 1);
    Vector<double> truth(q);
    for (Index i = 0; i < q; ++i) {
        Xq(i, 0) = (double(i) + 0.5) / double(q);
        truth(i) = doppler(Xq(i, 0));
    }

    DopplerOutcome out;
    const double var_y = population_variance(train.y);
    const double med = median_pairwise_distance(train.X);
    const auto hyp = optimize_hypers(train.X, train.y, CovKernelParams<double>::rbf(0.1 * med, var_y), 0.1 * var_y);
    out.gp_params = hyp.params;
    out.gp_noise = hyp.noise;
    const auto gp = fit(train.X, train.y, hyp.params, hyp.noise);
    std::vector<PredictiveDistribution<double>> gp_pred;
    Vector<double> gp_mean(q);
    for (Index i = 0; i < q; ++i) {
        gp_pred.push_back(predict(gp, Xq.row(i)));
        gp_mean(i) = gp_pred.back().mean;
    }
    out.gp_test_mse = mse(gp_mean, truth);
    out.gp_dump = band_dump(Xq.col(0), gp_pred);

    // the localized model starts from the MLL kernel hyperparameters; only the bandwidth is validated,
    // unless `refine` re-fits them per bandwidth on the summed local MLL
    std::vector<BandwidthPolicy> grid;
    const std::string mode = config.str("bandwidth");
    if (mode == "h") {
        for (const double h : config.reals("grid_h")) grid.push_back(BandwidthPolicy::fixed(h));
    } else if (mode == "m") {
        for (const Index m : to_indices(config.reals("doppler_grid_m"), "doppler_grid_m")) {
            if (m <= n) grid.push_back(BandwidthPolicy::min_neighbors(m));
        }
    } else {
        throw ConfigError("bandwidth must be h or m");
    }
    std::optional<LocalRefinement> refine;
    if (config.flag("refine")) refine = LocalRefinement{100, derive_seed(seed, 12), {}};
    const auto search =
        grid_search_h(train.X, train.y, val.X, val.y, spec, hyp.params, hyp.noise, grid, threads, refine);
    out.lsgpr_policy = search.best;
    out.lsgpr_params = search.best_params;
    out.lsgpr_noise = search.best_noise;

    const LocalRegressor<double> reg(train.X, train.y, out.lsgpr_params, out.lsgpr_noise, spec, search.best);
    const auto results = reg.predict_batch(Xq, threads);
    std::vector<PredictiveDistribution<double>> loc_pred;
    Vector<double> loc_mean(q);
    double neighbors = 0;
    for (Index i = 0; i < q; ++i) {
        if (!results[std::size_t(i)].ok()) throw NumericalError(results[std::size_t(i)].error);
        loc_pred.push_back(results[std::size_t(i)].prediction);
        loc_mean(i) = loc_pred.back().mean;
        neighbors += double(loc_pred.back().neighbor_count);
    }
    out.lsgpr_test_mse = mse(loc_mean, truth);
    out.lsgpr_mean_neighbors = neighbors / double(q);
    out.lsgpr_dump = band_dump(Xq.col(0), loc_pred);
    return out;
}

DopplerOutcome cmd_doppler_demo(const RunConfig& config, std::ostream& log) {
    auto out = run_doppler_demo(config);
    const std::filesystem::path dir(config.str("out"));
    const std::vector<std::string> header{"x", "true", "mean", "variance", "lower95", "upper95"};
    write_table(dir / "gp.csv", header, out.gp_dump);
    write_table(dir / "lsgpr.csv", header, out.lsgpr_dump);
    const bool by_h = out.lsgpr_policy.mode == BandwidthPolicy::Mode::fixed_h;
    Matrix<double> s(1, 13);
    s << double(config.integer("n")), double(config.integer("seed")), out.gp_test_mse, out.lsgpr_test_mse,
        out.lsgpr_mean_neighbors, out.gp_params.lengthscale, out.gp_params.amplitude, out.gp_noise,
        by_h ? out.lsgpr_policy.h : 0.0, by_h ? 0.0 : double(out.lsgpr_policy.m), out.lsgpr_params.lengthscale,
        out.lsgpr_params.amplitude, out.lsgpr_noise;
    write_table(dir / "summary.csv", {"n", "seed", "gp_test_mse", "lsgpr_test_mse", "lsgpr_mean_neighbors",
                                      "gp_lengthscale", "gp_amplitude", "gp_noise", "lsgpr_h", "lsgpr_m",
                                      "lsgpr_lengthscale", "lsgpr_amplitude", "lsgpr_noise"},
                s);
    log << "doppler n=" << config.integer("n") << ": gp test MSE " << format_double(out.gp_test_mse)
        << ", lsgpr test MSE " << format_double(out.lsgpr_test_mse) << ", mean neighbours "
        << format_double(out.lsgpr_mean_neighbors) << '\n';
    return out;
}

// ---------------------------------------------------------------- prior samples

PriorSamples run_prior_samples(const RunConfig& config) {
    const Index points = config.integer("grid_points");
    const Index count = config.integer("samples");
    if (points < 2 || count < 1) throw ConfigError("grid_points must be >= 2 and samples >= 1");
    const auto params = CovKernelParams<double>::exponential(config.real("lengthscale"), config.real("amplitude"));
    params.validate();
    const std::string profile_name = config.is_set("profile") ? config.str("profile") : "none";
    const double h = config.real("h");

    PriorSamples out;
    out.x = Vector<double>::LinSpaced(points, -1.0, 1.0);
    out.weights = Vector<double>::Ones(points);
    const Vector<double> x0 = Vector<double>::Zero(1);
    std::vector<Index> support;
    std::optional<LocalKernelSpec> spec;
    if (profile_name != "none") {
        spec = LocalKernelSpec{config_profile(config), 1};
        for (Index i = 0; i < points; ++i) {
            out.weights(i) = local_weight(*spec, out.x.segment(i, 1), x0, h);
        }
    }
    for (Index i = 0; i < points; ++i) {
        if (out.weights(i) > 0) support.push_back(i);
    }
    for (const Index i : support) {
        if (std::isinf(out.weights(i))) throw NumericalError("prior-samples: infinite weight at a grid point");
    }

    const Index s = Index(support.size());
    Matrix<double> cov(s, s);
    for (Index a = 0; a < s; ++a) {
        for (Index b = 0; b < s; ++b) {
            const auto xa = out.x.segment(support[std::size_t(a)], 1);
            const auto xb = out.x.segment(support[std::size_t(b)], 1);
            cov(a, b) = spec ? localized_cov(params, *spec, h, x0, xa, xb) : cov_eval(params, xa, xb);
        }
    }
    out.samples = Matrix<double>::Zero(points, count);
    if (s > 0) {
        // points with zero weight have zero prior variance and stay exactly 0
        const Matrix<double> draws = sample_gaussian(cov, std::uint64_t(config.integer("seed")), count);
        for (Index a = 0; a < s; ++a) out.samples.row(support[std::size_t(a)]) = draws.row(a);
    }
    return out;
}

PriorSamples cmd_prior_samples(const RunConfig& config, std::ostream& log) {
    auto out = run_prior_samples(config);
    std::vector<std::string> header{"x"};
    for (Index c = 0; c < out.samples.cols(); ++c) header.push_back("sample" + std::to_string(c + 1));
    Matrix<double> table(out.x.size(), out.samples.cols() + 1);
    table << out.x, out.samples;
    write_table(std::filesystem::path(config.str("out")) / "prior_samples.csv", header, table);
    log << "prior-samples: " << out.samples.cols() << " draws on " << out.x.size() << " grid points\n";
    return out;
}

// ---------------------------------------------------------------- predict

Matrix<double> cmd_predict(const RunConfig& config, std::ostream& log) {
    const CsvOptions opts = csv_options(config);
    const Dataset train = load_csv(resolve_data_path(config.str("data")), parse_target(config.str("target")), opts);
    if (config.str("query").empty()) throw ConfigError("predict needs a query file (--query)");
    std::vector<std::string> qheader;
    const Matrix<double> Q = load_matrix_csv(resolve_data_path(config.str("query")), &qheader, opts);
    if (Q.cols() != train.dimension()) {
        throw DimensionError("query file has " + std::to_string(Q.cols()) + " columns, expected d = " +
                             std::to_string(train.dimension()));
    }

    CovKernelParams<double> params;
    try {
        params.family = parse_family(config.str("kernel"));
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    params.lengthscale = config.real("lengthscale");
    params.amplitude = config.real("amplitude");
    params.validate();
    double noise = config.real("noise");
    if (!(noise > 0)) throw ConfigError("noise must be positive");

    const unsigned threads = unsigned(std::max(1L, config.integer("threads")));
    const std::string method = config.str("method");
    Matrix<double> out(Q.rows(), Q.cols() + 3);
    out.leftCols(Q.cols()) = Q;
    if (method == "gp") {
        if (config.flag("optimize")) {
            const auto fitted = optimize_hypers(train.X, train.y, params, noise);
            params = fitted.params;
            noise = fitted.noise;
            log << "predict: optimized lengthscale " << format_double(params.lengthscale) << ", amplitude "
                << format_double(params.amplitude) << ", noise " << format_double(noise) << '\n';
        }
        const auto model = fit(train.X, train.y, params, noise);
        for (Index i = 0; i < Q.rows(); ++i) {
            const auto p = predict(model, Q.row(i));
            out(i, Q.cols()) = p.mean;
            out(i, Q.cols() + 1) = p.variance;
            out(i, Q.cols() + 2) = double(p.neighbor_count);
        }
    } else if (method == "lsgpr") {
        const std::string policy_name = config.str("policy");
        BandwidthPolicy policy;
        if (policy_name == "m") {
            policy = BandwidthPolicy::min_neighbors(config.integer("m"));
        } else if (policy_name == "h") {
            policy = BandwidthPolicy::fixed(config.real("h"));
        } else {
            throw ConfigError("policy must be m or h");
        }
        const LocalKernelSpec spec{config_profile(config), int(train.dimension())};
        const LocalRegressor<double> reg(train.X, train.y, params, noise, spec, policy);
        const auto results = reg.predict_batch(Q, threads);
        for (Index i = 0; i < Q.rows(); ++i) {
            const auto& r = results[std::size_t(i)];
            if (!r.ok()) throw NumericalError("query row " + std::to_string(i + 1) + ": " + r.error);
            out(i, Q.cols()) = r.prediction.mean;
            out(i, Q.cols() + 1) = r.prediction.variance;
            out(i, Q.cols() + 2) = double(r.prediction.neighbor_count);
        }
    } else {
        throw ConfigError("predict method must be gp or lsgpr");
    }

    std::vector<std::string> header = qheader;
    for (const char* c : {"mean", "variance", "neighbor_count"}) header.emplace_back(c);
    write_table(std::filesystem::path(config.str("out")) / "predictions.csv", header, out);
    log << "predict: wrote " << Q.rows() << " rows\n";
    return out;
}

}  // namespace lsgp
