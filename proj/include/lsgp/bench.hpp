#pragma once

// Experiment runners behind the command-line tool: the Doppler demo, localized
// prior samples, the repeated-split benchmark and batch prediction.

#include "lsgp/data.hpp"
#include "lsgp/kernel.hpp"
#include "lsgp/model_selection.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace lsgp {

/// Flat key = value configuration. Every key has a default; unknown keys are errors.
class RunConfig {
public:
    RunConfig();

    static const std::vector<std::pair<std::string, std::string>>& defaults();

    void set(const std::string& key, const std::string& value);
    void load_file(const std::filesystem::path& path);

    const std::string& str(const std::string& key) const;
    double real(const std::string& key) const;
    long integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;
    /// True when the key was given by the user rather than left at its default.
    bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

    /// Resolved configuration, one `key = value` line each, in key order.
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

/// Dataset path with LSGP_DATA_DIR applied to relative paths that do not exist as given.
std::filesystem::path resolve_data_path(const std::string& path);

enum class MethodKind { gp, lsgpr, knn, nw };

struct MethodSpec {
    MethodKind kind = MethodKind::lsgpr;
    Profile profile = Profile::hilbert;  // lsgpr and nw only

    /// "gp", "knn", "lsgpr", "lsgpr:epanechnikov", "nw:gaussian", ...
    std::string name() const;
};

MethodSpec parse_method(const std::string& text, Profile default_profile);

struct SelectionSettings {
    int folds = 3;
    std::vector<Index> grid_m = default_m_grid();
    std::vector<double> lengthscale_multipliers{0.05, 0.1, 0.3, 1.0, 3.0};  // x median pairwise distance
    std::vector<double> noise_multipliers{1e-4, 1e-3, 1e-2, 1e-1, 1.0};     // x variance of y
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct MethodOutcome {
    std::string method;
    bool ok = false;
    std::string error;
    double test_mse = 0;
    GridCell chosen;  // m (or k), lengthscale, noise actually used
    double amplitude = 0;
    double mean_neighbors = 0;
};

/// Select hyperparameters on the training part (3-fold CV, or MLL for gp) and score on the test part.
MethodOutcome evaluate_method(const MethodSpec& method, const Dataset& train, const Dataset& test,
                              const SelectionSettings& settings);

struct BenchReport {
    std::vector<std::string> methods;          // methods that succeeded on every split
    std::vector<std::vector<double>> split_mse;  // [method][split]
    std::vector<std::vector<MethodOutcome>> outcomes;
    std::vector<double> mean, sd;                // population sd over splits
    std::vector<std::vector<double>> p_values;   // [a][b]: H1 "a has smaller MSE than b"
    std::vector<std::string> failures;
};

/// Repeated seeded splits of one dataset; writes report.csv, params.csv, summary.csv, pvalues.csv when out_dir is set.
BenchReport run_benchmark(const Dataset& data, const std::vector<MethodSpec>& methods, int splits,
                          const SplitSpec& fractions, const SelectionSettings& settings, bool report_original_units,
                          const std::optional<std::filesystem::path>& out_dir);

BenchReport cmd_benchmark(const RunConfig& config, std::ostream& log);

struct DopplerOutcome {
    double gp_test_mse = 0;
    double lsgpr_test_mse = 0;
    double lsgpr_mean_neighbors = 0;
    CovKernelParams<double> gp_params;
    double gp_noise = 0;
    BandwidthPolicy lsgpr_policy;
    CovKernelParams<double> lsgpr_params;
    double lsgpr_noise = 0;
    Matrix<double> gp_dump;     // x, true, mean, variance, lower95, upper95
    Matrix<double> lsgpr_dump;
};

DopplerOutcome run_doppler_demo(const RunConfig& config);
DopplerOutcome cmd_doppler_demo(const RunConfig& config, std::ostream& log);

/// Grid on [-1, 1] and `count` prior draws under the (optionally) localized exponential kernel.
struct PriorSamples {
    Vector<double> x;
    Matrix<double> samples;  // grid points x draws
    Vector<double> weights;  // k_h(x, 0); all ones for the unlocalized prior
};

PriorSamples run_prior_samples(const RunConfig& config);
PriorSamples cmd_prior_samples(const RunConfig& config, std::ostream& log);

/// Columns: query features, mean, variance, neighbor_count.
Matrix<double> cmd_predict(const RunConfig& config, std::ostream& log);

/// Writes a numeric table with a header row.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header, const Matrix<double>& rows);

/// 0 success, 2 config error, 3 data error, 4 numerical failure.
int exit_code_for(const std::exception& e);

}  // namespace lsgp
