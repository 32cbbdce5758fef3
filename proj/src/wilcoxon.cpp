#include "lsgp/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lsgp {

WilcoxonResult wilcoxon_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("wilcoxon: samples must have equal length");
    if (a.empty()) throw DimensionError("wilcoxon: samples are empty");

    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double di = a[i] - b[i];
        if (di != 0) d.push_back(di);
    }
    WilcoxonResult out;
    out.n_effective = Index(d.size());
    if (d.empty()) {
        out.degenerate = true;
        out.p_value = 1;
        return out;
    }

    // average ranks of |d|, kept doubled so they are integers
    const std::size_t n = d.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<long> rank2(n);
    double tie_term = 0;
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        while (end + 1 < n && std::abs(d[order[end + 1]]) == std::abs(d[order[start]])) ++end;
        const long twice_avg = long(start + 1 + end + 1);  // (first + last) rank, 1-based
        for (std::size_t k = start; k <= end; ++k) rank2[order[k]] = twice_avg;
        const double t = double(end - start + 1);
        tie_term += t * t * t - t;
        start = end + 1;
    }

    long w2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] > 0) w2 += rank2[i];
    }
    out.statistic = double(w2) / 2;

    if (n <= 20) {
        // count sign patterns by doubled positive-rank sum
        const long total = std::accumulate(rank2.begin(), rank2.end(), 0L);
        std::vector<double> count(std::size_t(total) + 1, 0.0);
        count[0] = 1;
        long reach = 0;
        for (const long r : rank2) {
            for (long s = reach; s >= 0; --s) {
                if (count[std::size_t(s)] != 0) count[std::size_t(s + r)] += count[std::size_t(s)];
            }
            reach += r;
        }
        double below = 0;
        for (long s = 0; s <= w2; ++s) below += count[std::size_t(s)];
        out.p_value = std::min(1.0, below / std::ldexp(1.0, int(n)));
        out.exact = true;
        return out;
    }

    const double nn = double(n);
    const double mean = nn * (nn + 1) / 4;
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24 - tie_term / 48;
    const double z = (out.statistic - mean + 0.5) / std::sqrt(var);
    out.p_value = std::clamp(0.5 * std::erfc(-z / std::sqrt(2.0)), 0.0, 1.0);
    out.exact = false;
    return out;
}

}  // namespace lsgp
