#pragma once

#include "lsgp/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace lsgp {

enum class ScalingKind { none, minmax, standardize };

/// Per-column affine map v -> (v - shift) / scale. Constant columns are mapped to 0.
struct ColumnScaling {
    double shift = 0;
    double scale = 1;
    bool constant = false;

    double apply(double v) const { return constant ? 0.0 : (v - shift) / scale; }
    double invert(double v) const { return constant ? shift : v * scale + shift; }
};

struct Scaling {
    ScalingKind kind = ScalingKind::none;
    std::vector<ColumnScaling> features;
    ColumnScaling target;
};

struct Dataset {
    Matrix<double> X;
    Vector<double> y;
    std::vector<std::string> feature_names;
    std::string target_name = "y";
    Scaling scaling;

    Index size() const { return X.rows(); }
    Index dimension() const { return X.cols(); }

    /// Rows `idx` in the given order, with metadata carried over.
    Dataset subset(const std::vector<std::size_t>& idx) const;
};

/// Noiseless Doppler function sqrt(x(1-x)) sin(2.1 pi / (x + 0.05)).
double doppler(double x);

/// x ~ U[0, 1], y = doppler(x) + eps with eps ~ N(0, noise_variance).
/// With `noise_is_sd` the value is read as a standard deviation instead.
Dataset gen_doppler(Index n, double noise_variance, std::uint64_t seed, bool noise_is_sd = false);

struct CsvOptions {
    char delimiter = ',';
    bool header = true;
};

/// Target column by header name or zero-based index; negative indices count from the end.
using ColumnRef = std::variant<std::string, int>;

Dataset load_csv(const std::filesystem::path& path, const ColumnRef& target, const CsvOptions& options = {});

/// Numeric table without a designated target (query files).
Matrix<double> load_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header,
                               const CsvOptions& options = {});

/// Writes features then target, with a header row, at round-trip precision.
void save_csv(const Dataset& data, const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

Dataset scale_minmax(const Dataset& data);
Dataset standardize(const Dataset& data);

/// Undo the stored scaling on features and target.
Dataset unscale(const Dataset& data);

/// Apply a scaling fitted elsewhere (e.g. on the training part) to another dataset.
Dataset apply_scaling(const Dataset& data, const Scaling& scaling);

/// Columns flagged constant by the last scaling (-1 denotes the target).
std::vector<int> constant_columns(const Dataset& data);

struct SplitSpec {
    double train = 1;
    double validation = 0;
    double test = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Split {
    Dataset train, validation, test;
    std::vector<std::size_t> train_idx, validation_idx, test_idx;
};

/// Seeded permutation, then contiguous slices; validation and test sizes round down and the remainder goes to train.
Split split(const Dataset& data, const SplitSpec& spec);

}  // namespace lsgp
