#pragma once

// Test-only reference implementations. These deliberately take the slow,
// obvious route so they stay independent of the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "surgtrack/geometry.hpp"

namespace oracle {

inline double dense_iou(const surgtrack::Bitmap& a, const surgtrack::Bitmap& b)
{
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool pa = a.pixels[i] != 0, pb = b.pixels[i] != 0;
        inter += (pa && pb);
        uni += (pa || pb);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline surgtrack::Bitmap random_bitmap(std::mt19937_64& rng, int w, int h, double density)
{
    surgtrack::Bitmap bm(w, h);
    std::bernoulli_distribution fg(density);
    for (auto& p : bm.pixels)
        p = fg(rng) ? 1 : 0;
    return bm;
}

/// Minimum over all injective assignments of the smaller side, summing in
/// ascending row order.
inline double brute_force_assignment(const std::vector<std::vector<double>>& cost)
{
    const std::size_t m = cost.size();
    const std::size_t n = m ? cost[0].size() : 0;
    if (m == 0 || n == 0)
        return 0.0;
    double best = std::numeric_limits<double>::infinity();
    if (m <= n) {
        std::vector<std::size_t> cols(n);
        std::iota(cols.begin(), cols.end(), 0);
        // enumerate permutations of columns; the first m entries are the choice
        do {
            double s = 0.0;
            for (std::size_t r = 0; r < m; ++r)
                s += cost[r][cols[r]];
            best = std::min(best, s);
        } while (std::next_permutation(cols.begin(), cols.end()));
    } else {
        std::vector<std::size_t> rows(m);
        std::iota(rows.begin(), rows.end(), 0);
        do {
            // rows[0..n) take columns 0..n-1; sum in ascending row order
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            for (std::size_t c = 0; c < n; ++c)
                pairs.emplace_back(rows[c], c);
            std::sort(pairs.begin(), pairs.end());
            double s = 0.0;
            for (auto [r, c] : pairs)
                s += cost[r][c];
            best = std::min(best, s);
        } while (std::next_permutation(rows.begin(), rows.end()));
    }
    return best;
}

}  // namespace oracle
