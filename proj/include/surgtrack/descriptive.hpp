#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace surgtrack {

inline double mean(std::span<const double> x)
{
    if (x.empty())
        return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Population (n-denominator) standard deviation; 0 for fewer than 2 values.
inline double population_std(std::span<const double> x)
{
    if (x.size() < 2)
        return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size()));
}

inline double median(std::vector<double> x)
{
    if (x.empty())
        return 0.0;
    std::sort(x.begin(), x.end());
    const auto n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

/// Nearest-rank percentile, q in (0, 100].
inline double percentile(std::vector<double> x, double q)
{
    if (x.empty())
        return 0.0;
    std::sort(x.begin(), x.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(x.size())));
    return x[std::clamp<std::size_t>(rank, 1, x.size()) - 1];
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> x) { return {mean(x), population_std(x)}; }

}  // namespace surgtrack
