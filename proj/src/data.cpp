#include "lsgp/data.hpp"

#include "lsgp/random.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace lsgp {

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.X.resize(Index(idx.size()), X.cols());
    out.y.resize(Index(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out.X.row(Index(r)) = X.row(Index(idx[r]));
        out.y(Index(r)) = y(Index(idx[r]));
    }
    out.feature_names = feature_names;
    out.target_name = target_name;
    out.scaling = scaling;
    return out;
}

double doppler(double x) {
    return std::sqrt(x * (1 - x)) * std::sin(2.1 * std::numbers::pi / (x + 0.05));
}

Dataset gen_doppler(Index n, double noise_variance, std::uint64_t seed, bool noise_is_sd) {
    if (n < 1) throw DomainError("gen_doppler: n must be positive");
    if (!(noise_variance >= 0)) throw DomainError("gen_doppler: noise must be non-negative");
    const double sd = noise_is_sd ? noise_variance : std::sqrt(noise_variance);
    Rng rng(seed);
    Dataset out;
    out.X.resize(n, 1);
    out.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double x = rng.uniform();
        out.X(i, 0) = x;
        out.y(i) = doppler(x) + sd * rng.normal();
    }
    out.feature_names = {"x"};
    out.target_name = "y";
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, delim)) cells.push_back(cell);
    if (!line.empty() && line.back() == delim) cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& raw, std::size_t row, std::size_t col, const std::string& path) {
    const std::string s = trim(raw);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ParseError(path + ": non-numeric cell '" + s + "' at row " + std::to_string(row) + ", column " +
                         std::to_string(col));
    }
    return v;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

Table read_table(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open '" + path.string() + "'");
    Table t;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line, options.delimiter);
        if (options.header && t.header.empty() && t.rows.empty()) {
            for (auto& c : cells) t.header.push_back(trim(c));
            width = cells.size();
            continue;
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width) {
            throw ParseError(path.string() + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " columns, expected " + std::to_string(width));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_cell(cells[c], line_no, c + 1, path.string());
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) {
        for (std::size_t c = 0; c < width; ++c) t.header.push_back("c" + std::to_string(c));
    }
    return t;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const ColumnRef& target, const CsvOptions& options) {
    const Table t = read_table(path, options);
    const int width = int(t.header.size());
    int target_col = -1;
    if (const auto* name = std::get_if<std::string>(&target)) {
        for (int c = 0; c < width; ++c) {
            if (t.header[c] == *name) target_col = c;
        }
        if (target_col < 0) throw MissingColumnError(path.string() + ": no column named '" + *name + "'");
    } else {
        const int idx = std::get<int>(target);
        target_col = idx < 0 ? width + idx : idx;
        if (target_col < 0 || target_col >= width) {
            throw MissingColumnError(path.string() + ": target column " + std::to_string(idx) + " out of range");
        }
    }

    Dataset out;
    const Index n = Index(t.rows.size());
    out.X.resize(n, width - 1);
    out.y.resize(n);
    for (int c = 0; c < width; ++c) {
        if (c == target_col) {
            out.target_name = t.header[c];
        } else {
            out.feature_names.push_back(t.header[c]);
        }
    }
    for (Index r = 0; r < n; ++r) {
        Index k = 0;
        for (int c = 0; c < width; ++c) {
            if (c == target_col) {
                out.y(r) = t.rows[r][c];
            } else {
                out.X(r, k++) = t.rows[r][c];
            }
        }
    }
    return out;
}

Matrix<double> load_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header,
                               const CsvOptions& options) {
    const Table t = read_table(path, options);
    if (header) *header = t.header;
    Matrix<double> M(Index(t.rows.size()), Index(t.header.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < t.rows[r].size(); ++c) M(Index(r), Index(c)) = t.rows[r][c];
    }
    return M;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path.string() + "'");
    for (Index c = 0; c < data.dimension(); ++c) {
        out << (c < Index(data.feature_names.size()) ? data.feature_names[c] : "x" + std::to_string(c)) << ',';
    }
    out << data.target_name << '\n';
    for (Index r = 0; r < data.size(); ++r) {
        for (Index c = 0; c < data.dimension(); ++c) out << format_double(data.X(r, c)) << ',';
        out << format_double(data.y(r)) << '\n';
    }
}

namespace {

template <typename Fit>
Dataset scale_with(const Dataset& data, ScalingKind kind, Fit fit) {
    Dataset out = data;
    out.scaling.kind = kind;
    out.scaling.features.clear();
    for (Index c = 0; c < data.dimension(); ++c) {
        const ColumnScaling s = fit(data.X.col(c));
        for (Index r = 0; r < data.size(); ++r) out.X(r, c) = s.apply(data.X(r, c));
        out.scaling.features.push_back(s);
    }
    out.scaling.target = fit(data.y);
    for (Index r = 0; r < data.size(); ++r) out.y(r) = out.scaling.target.apply(data.y(r));
    return out;
}

}  // namespace

Dataset scale_minmax(const Dataset& data) {
    return scale_with(data, ScalingKind::minmax, [](const auto& col) {
        ColumnScaling s;
        const double lo = col.size() ? col.minCoeff() : 0.0;
        const double hi = col.size() ? col.maxCoeff() : 0.0;
        s.shift = lo;
        s.scale = hi - lo;
        s.constant = !(hi > lo);
        if (s.constant) s.scale = 1;
        return s;
    });
}

Dataset standardize(const Dataset& data) {
    return scale_with(data, ScalingKind::standardize, [](const auto& col) {
        ColumnScaling s;
        const double n = double(col.size());
        const double mean = n > 0 ? col.sum() / n : 0.0;
        const double var = n > 0 ? (col.array() - mean).square().sum() / n : 0.0;
        s.shift = mean;
        s.scale = std::sqrt(var);
        s.constant = !(s.scale > 0);
        if (s.constant) s.scale = 1;
        return s;
    });
}

Dataset apply_scaling(const Dataset& data, const Scaling& scaling) {
    Dataset out = data;
    out.scaling = scaling;
    if (scaling.kind == ScalingKind::none) return out;
    if (Index(scaling.features.size()) != data.dimension()) {
        throw DimensionError("apply_scaling: scaling has " + std::to_string(scaling.features.size()) +
                             " feature columns, data has " + std::to_string(data.dimension()));
    }
    for (Index c = 0; c < data.dimension(); ++c) {
        for (Index r = 0; r < data.size(); ++r) out.X(r, c) = scaling.features[c].apply(data.X(r, c));
    }
    for (Index r = 0; r < data.size(); ++r) out.y(r) = scaling.target.apply(data.y(r));
    return out;
}

Dataset unscale(const Dataset& data) {
    Dataset out = data;
    if (data.scaling.kind == ScalingKind::none) return out;
    for (Index c = 0; c < data.dimension(); ++c) {
        for (Index r = 0; r < data.size(); ++r) out.X(r, c) = data.scaling.features[c].invert(data.X(r, c));
    }
    for (Index r = 0; r < data.size(); ++r) out.y(r) = data.scaling.target.invert(data.y(r));
    out.scaling = {};
    return out;
}

std::vector<int> constant_columns(const Dataset& data) {
    std::vector<int> out;
    for (std::size_t c = 0; c < data.scaling.features.size(); ++c) {
        if (data.scaling.features[c].constant) out.push_back(int(c));
    }
    if (data.scaling.kind != ScalingKind::none && data.scaling.target.constant) out.push_back(-1);
    return out;
}

void SplitSpec::validate() const {
    if (train < 0 || validation < 0 || test < 0) throw DomainError("split fractions must be non-negative");
    if (std::abs(train + validation + test - 1.0) > 1e-9) throw DomainError("split fractions must sum to 1");
}

Split split(const Dataset& data, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = std::size_t(data.size());
    const auto n_val = std::size_t(std::floor(spec.validation * double(n) + 1e-9));
    const auto n_test = std::size_t(std::floor(spec.test * double(n) + 1e-9));
    const std::size_t n_train = n - n_val - n_test;
    if ((spec.train > 0 && n_train == 0) || (spec.validation > 0 && n_val == 0) || (spec.test > 0 && n_test == 0)) {
        throw DomainError("split: a nonzero fraction yields an empty part for n = " + std::to_string(n));
    }
    Rng rng(spec.seed);
    const auto perm = rng.permutation(n);
    Split out;
    out.train_idx.assign(perm.begin(), perm.begin() + std::ptrdiff_t(n_train));
    out.validation_idx.assign(perm.begin() + std::ptrdiff_t(n_train), perm.begin() + std::ptrdiff_t(n_train + n_val));
    out.test_idx.assign(perm.begin() + std::ptrdiff_t(n_train + n_val), perm.end());
    out.train = data.subset(out.train_idx);
    out.validation = data.subset(out.validation_idx);
    out.test = data.subset(out.test_idx);
    return out;
}

}  // namespace lsgp
