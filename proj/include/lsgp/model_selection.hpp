#pragma once

// Cross-validated hyperparameter selection and paired statistical comparison.

#include "lsgp/global_gpr.hpp"
#include "lsgp/kernel.hpp"
#include "lsgp/local_gpr.hpp"
#include "lsgp/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lsgp {

/// (1/t) sum (pred - target)^2.
double mse(const Vector<double>& predictions, const Vector<double>& targets);

/// One point of the Cartesian (m, lengthscale, noise) grid. Unused axes hold 0.
struct GridCell {
    Index m = 0;
    double lengthscale = 0;
    double noise = 0;

    bool operator==(const GridCell&) const = default;
};

/// Tie order for equal scores: smaller m, then larger lengthscale, then larger noise.
bool tie_preferred(const GridCell& a, const GridCell& b);

struct CVConfig {
    int folds = 3;
    std::vector<Index> grid_m{5, 10, 20, 50, 100, 200};
    std::vector<double> grid_lengthscale{1.0};
    std::vector<double> grid_noise{1.0};
    std::uint64_t seed = 0;
    unsigned threads = 1;

    void validate(Index n) const;
    std::vector<GridCell> cells() const;
};

/// Default lengthscale and noise grids relative to the data scale.
std::vector<double> default_lengthscale_grid(double median_distance);
std::vector<double> default_noise_grid(double target_variance);
std::vector<Index> default_m_grid();

/// Fold id per row: a seeded permutation dealt round-robin into `folds` parts.
std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed);

/// Fits on (X_train, y_train) with the given cell and predicts the rows of X_eval.
using PredictorFactory = std::function<Vector<double>(const Matrix<double>& X_train, const Vector<double>& y_train,
                                                      const Matrix<double>& X_eval, const GridCell& cell)>;

struct CVRow {
    GridCell cell;
    std::vector<double> fold_mse;
    double score = 0;   // mean fold MSE; +inf if the cell failed
    std::string error;  // first failure message, if any
};

struct CVResult {
    GridCell best;
    double best_score = 0;
    std::vector<CVRow> table;  // in the order of the supplied cells
};

CVResult kfold_cv(const Matrix<double>& X, const Vector<double>& y, const CVConfig& config,
                  const PredictorFactory& factory);
CVResult kfold_cv(const Matrix<double>& X, const Vector<double>& y, const std::vector<GridCell>& cells, int folds,
                  std::uint64_t seed, const PredictorFactory& factory, unsigned threads = 1);

struct BandwidthScore {
    BandwidthPolicy policy;
    double mse = 0;
    Index empty_neighborhoods = 0;
    Index failures = 0;
    double mean_neighbors = 0;
    CovKernelParams<double> params;  // hyperparameters used for this policy
    double noise = 0;
};

struct BandwidthSearch {
    BandwidthPolicy best;
    double best_mse = 0;
    CovKernelParams<double> best_params;
    double best_noise = 0;
    std::vector<BandwidthScore> table;
};

/// Optional per-policy gradient step: before scoring a policy, the shared
/// (lengthscale, amplitude, noise) are moved to maximize the summed local MLL
/// over neighbourhoods centred at up to `centers` training points.
struct LocalRefinement {
    Index centers = 100;
    std::uint64_t seed = 0;
    LbfgsConfig lbfgs{};
};

/// Shared hyperparameters maximizing sum_c local_mll over neighbourhoods of the rows of `centers`.
HyperFit<double> refine_local_hypers(const Matrix<double>& X, const Vector<double>& y, const Matrix<double>& centers,
                                     const LocalKernelSpec& spec, const BandwidthPolicy& policy,
                                     const CovKernelParams<double>& init, double init_noise,
                                     const LbfgsConfig& config = {});

/// Validation MSE of the localized regressor for each policy; ties go to the smallest h or m.
BandwidthSearch grid_search_h(const Matrix<double>& X_train, const Vector<double>& y_train,
                              const Matrix<double>& X_val, const Vector<double>& y_val, const LocalKernelSpec& spec,
                              const CovKernelParams<double>& params, double noise,
                              const std::vector<BandwidthPolicy>& grid, unsigned threads = 1,
                              const std::optional<LocalRefinement>& refine = std::nullopt);

struct WilcoxonResult {
    double p_value = 1;
    double statistic = 0;  // W+ = rank sum of positive differences a - b
    Index n_effective = 0; // non-zero differences
    bool exact = true;
    bool degenerate = false;  // every difference was zero
};

/// One-sided paired signed-rank test of H1: a tends to be smaller than b.
/// Zero differences are dropped, tied |d| get average ranks, the null
/// distribution is exact for n_effective <= 20 and normal (tie-corrected, with
/// continuity correction) above.
WilcoxonResult wilcoxon_one_sided(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace lsgp
