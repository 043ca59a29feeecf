#pragma once

// Rectangular linear assignment with gating.
//
// The solver finds, among all one-to-one matchings that only use ungated
// cells, one with maximum cardinality and, among those, minimum total cost.
// It runs successive shortest augmenting paths (Bellman-Ford on the residual
// graph, all free rows as sources), which keeps it exact for arbitrary real
// costs without a big-M constant for gated cells. Matrices in tracking are a
// few dozen rows at most.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "surgtrack/error.hpp"

namespace surgtrack {

using CostMatrix = Eigen::MatrixXd;
using GateMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;  // true = excluded

struct AssignmentResult {
    std::vector<std::pair<int, int>> matches;  // (row, col), ascending row
    std::vector<int> unmatched_rows;
    std::vector<int> unmatched_cols;
    double total_cost = 0.0;
};

inline AssignmentResult assign(const CostMatrix& cost, const GateMatrix& gated)
{
    const int m = static_cast<int>(cost.rows());
    const int n = static_cast<int>(cost.cols());
    if (gated.rows() != m || gated.cols() != n)
        throw InputError("gate matrix shape does not match cost matrix");
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
            if (!gated(r, c) && !std::isfinite(cost(r, c)))
                throw InputError("ungated assignment cost must be finite");

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<int> row_match(m, -1), col_match(n, -1);
    std::vector<double> dist_row(m), dist_col(n);
    std::vector<int> pred_col(n);

    for (;;) {
        for (int r = 0; r < m; ++r)
            dist_row[r] = row_match[r] < 0 ? 0.0 : inf;
        std::fill(dist_col.begin(), dist_col.end(), inf);
        std::fill(pred_col.begin(), pred_col.end(), -1);

        // Bellman-Ford; the residual graph has no negative cycles while the
        // current matching is cost-minimal for its size.
        for (int iter = 0, changed = 1; changed && iter <= m + n; ++iter) {
            changed = 0;
            for (int r = 0; r < m; ++r) {
                if (dist_row[r] == inf)
                    continue;
                for (int c = 0; c < n; ++c) {
                    if (gated(r, c) || row_match[r] == c)
                        continue;
                    const double nd = dist_row[r] + cost(r, c);
                    if (nd < dist_col[c]) {
                        dist_col[c] = nd;
                        pred_col[c] = r;
                        changed = 1;
                    }
                }
            }
            for (int c = 0; c < n; ++c) {
                const int r = col_match[c];
                if (r < 0 || dist_col[c] == inf)
                    continue;
                const double nd = dist_col[c] - cost(r, c);
                if (nd < dist_row[r]) {
                    dist_row[r] = nd;
                    changed = 1;
                }
            }
        }

        int target = -1;
        for (int c = 0; c < n; ++c)
            if (col_match[c] < 0 && dist_col[c] < inf && (target < 0 || dist_col[c] < dist_col[target]))
                target = c;
        if (target < 0)
            break;

        for (int c = target;;) {
            const int r = pred_col[c];
            const int previous = row_match[r];
            row_match[r] = c;
            col_match[c] = r;
            if (previous < 0)
                break;
            c = previous;
        }
    }

    AssignmentResult out;
    for (int r = 0; r < m; ++r) {
        if (row_match[r] >= 0) {
            out.matches.emplace_back(r, row_match[r]);
            out.total_cost += cost(r, row_match[r]);
        } else {
            out.unmatched_rows.push_back(r);
        }
    }
    for (int c = 0; c < n; ++c)
        if (col_match[c] < 0)
            out.unmatched_cols.push_back(c);
    return out;
}

inline AssignmentResult assign(const CostMatrix& cost)
{
    return assign(cost, GateMatrix::Constant(cost.rows(), cost.cols(), false));
}

}  // namespace surgtrack
