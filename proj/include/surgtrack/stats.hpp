#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surgtrack/error.hpp"

namespace surgtrack {

/// Sample Pearson correlation; nullopt when either series is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw InputError("pearson: series lengths differ");
    if (x.size() < 2)
        throw InputError("pearson: need at least two samples");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Kappa from a square confusion matrix (rows rater A, columns rater B).
/// Perfect chance agreement (p_e == 1) is defined as kappa 1.
inline double cohen_kappa_from_confusion(const std::vector<std::vector<long>>& confusion)
{
    const std::size_t k = confusion.size();
    long total = 0;
    std::vector<long> row(k, 0), col(k, 0);
    long diag = 0;
    for (std::size_t i = 0; i < k; ++i) {
        if (confusion[i].size() != k)
            throw InputError("cohen_kappa: confusion matrix must be square");
        for (std::size_t j = 0; j < k; ++j) {
            if (confusion[i][j] < 0)
                throw InputError("cohen_kappa: negative count");
            row[i] += confusion[i][j];
            col[j] += confusion[i][j];
            total += confusion[i][j];
        }
        diag += confusion[i][i];
    }
    if (total == 0)
        throw InputError("cohen_kappa: no ratings");
    const double n = static_cast<double>(total);
    const double po = static_cast<double>(diag) / n;
    double pe = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        pe += static_cast<double>(row[i]) * static_cast<double>(col[i]);
    pe /= n * n;
    if (pe == 1.0)
        return 1.0;
    return (po - pe) / (1.0 - pe);
}

template <class T>
double cohen_kappa(std::span<const T> a, std::span<const T> b)
{
    if (a.size() != b.size())
        throw InputError("cohen_kappa: rating series lengths differ");
    if (a.empty())
        throw InputError("cohen_kappa: no ratings");
    std::map<T, std::size_t> index;
    for (const auto& v : a)
        index.try_emplace(v, 0);
    for (const auto& v : b)
        index.try_emplace(v, 0);
    std::size_t next = 0;
    for (auto& [v, i] : index)
        i = next++;
    std::vector<std::vector<long>> conf(index.size(), std::vector<long>(index.size(), 0));
    for (std::size_t i = 0; i < a.size(); ++i)
        ++conf[index[a[i]]][index[b[i]]];
    return cohen_kappa_from_confusion(conf);
}

template <class T>
double cohen_kappa(const std::vector<T>& a, const std::vector<T>& b)
{
    return cohen_kappa(std::span<const T>(a), std::span<const T>(b));
}

// ---------------------------------------------------------------------------
// One-way ANOVA F feature scoring

/// F statistic per column. Singleton groups contribute no within-group
/// variance; zero/zero gives 0 and nonzero/zero gives +inf.
inline std::vector<double> anova_f_scores(const Eigen::MatrixXd& X, std::span<const int> y)
{
    if (static_cast<std::size_t>(X.rows()) != y.size())
        throw InputError("anova: label count does not match sample count");
    std::map<int, std::vector<Eigen::Index>> groups;
    for (std::size_t i = 0; i < y.size(); ++i)
        groups[y[i]].push_back(static_cast<Eigen::Index>(i));
    const double n = static_cast<double>(y.size());
    const double g = static_cast<double>(groups.size());

    std::vector<double> f(static_cast<std::size_t>(X.cols()), 0.0);
    if (groups.size() < 2)
        return f;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double grand = X.col(j).mean();
        double ssb = 0.0, ssw = 0.0;
        for (const auto& [label, rows] : groups) {
            double m = 0.0;
            for (auto r : rows)
                m += X(r, j);
            m /= static_cast<double>(rows.size());
            ssb += static_cast<double>(rows.size()) * (m - grand) * (m - grand);
            for (auto r : rows)
                ssw += (X(r, j) - m) * (X(r, j) - m);
        }
        const double dfb = g - 1.0, dfw = n - g;
        // relative tolerance so that constant columns are exactly zero
        const double scale = std::max(1.0, X.col(j).cwiseAbs().maxCoeff());
        const double eps = 1e-24 * scale * scale * n;
        if (ssb <= eps && ssw <= eps)
            f[j] = 0.0;
        else if (ssw <= eps || dfw <= 0.0)
            f[j] = std::numeric_limits<double>::infinity();
        else
            f[j] = (ssb / dfb) / (ssw / dfw);
    }
    return f;
}

struct FeatureSelection {
    std::vector<std::size_t> selected;  // descending F, ties by lower index
    std::vector<double> f_scores;
};

inline std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k)
{
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

inline FeatureSelection anova_f_select(const Eigen::MatrixXd& X, std::span<const int> y, std::size_t k)
{
    if (k < 1 || k > static_cast<std::size_t>(X.cols()))
        throw InputError("anova_f_select: k must be in [1, feature count]");
    std::map<int, int> sizes;
    for (int v : y)
        ++sizes[v];
    if (sizes.size() < 2)
        throw InputError("anova_f_select: need at least two classes");
    for (const auto& [label, count] : sizes)
        if (count < 2)
            throw InputError("anova_f_select: class " + std::to_string(label) + " has fewer than two samples");
    FeatureSelection out;
    out.f_scores = anova_f_scores(X, y);
    out.selected = top_k(out.f_scores, k);
    return out;
}

// ---------------------------------------------------------------------------
// mOSATS

enum class SkillLabel { novice, expert };

inline std::string to_string(SkillLabel s) { return s == SkillLabel::novice ? "novice" : "expert"; }

inline SkillLabel parse_skill_label(const std::string& s)
{
    if (s == "novice")
        return SkillLabel::novice;
    if (s == "expert")
        return SkillLabel::expert;
    throw InputError("skill label must be novice or expert, got '" + s + "'");
}

struct MosatsAssessment {
    std::string video_id;
    std::array<int, 10> aspects{};
    SkillLabel skill = SkillLabel::novice;

    int summed() const { return std::accumulate(aspects.begin(), aspects.end(), 0); }
    /// summed / 10, rounded half up.
    int mean_rounded() const { return (summed() + 5) / 10; }

    void validate() const
    {
        for (int a : aspects)
            if (a < 1 || a > 5)
                throw InputError("mOSATS aspect for " + video_id + " outside 1-5: " + std::to_string(a));
    }

    bool operator==(const MosatsAssessment&) const = default;
};

}  // namespace surgtrack
