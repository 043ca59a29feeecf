#pragma once

// Video-disjoint folds for segmentation training, balanced per instrument
// class, followed by the per-fold class resampling rule.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "surgtrack/error.hpp"
#include "surgtrack/random.hpp"

namespace surgtrack {

inline constexpr std::size_t kFoldClasses = 4;
using ClassCounts = std::array<long, kFoldClasses>;

struct VideoClassCounts {
    std::string video_id;
    ClassCounts counts{};  // image counts per class slot (registry order)
};

/// Per class slot: negative removes that many images, positive duplicates.
struct ResamplingRule {
    ClassCounts delta{-600, 400, -1200, 400};
};

struct ImageRef {
    std::size_t video = 0;
    std::size_t class_slot = 0;
    long ordinal = 0;  // index among that video's images of that class

    bool operator==(const ImageRef&) const = default;
    auto operator<=>(const ImageRef&) const = default;
};

struct FoldSpec {
    std::vector<int> fold_of_video;
    std::vector<ClassCounts> fold_counts;         // before resampling
    std::vector<ClassCounts> resampled_counts;
    std::vector<std::vector<ImageRef>> images;    // resampled multiset per fold
    std::vector<std::string> warnings;
    long long imbalance = 0;                      // sum over class and fold of count^2
};

/// Sum over folds and classes of squared counts. For fixed class totals this
/// is minimal when every class is spread as evenly as possible.
inline long long fold_imbalance(const std::vector<VideoClassCounts>& videos, const std::vector<int>& fold_of, int n_folds)
{
    std::vector<ClassCounts> load(static_cast<std::size_t>(n_folds), ClassCounts{});
    for (std::size_t v = 0; v < videos.size(); ++v)
        for (std::size_t c = 0; c < kFoldClasses; ++c)
            load[fold_of[v]][c] += videos[v].counts[c];
    long long s = 0;
    for (const auto& l : load)
        for (long x : l)
            s += static_cast<long long>(x) * x;
    return s;
}

namespace detail {

class FoldSearch {
public:
    FoldSearch(const std::vector<VideoClassCounts>& videos, int n_folds) : videos_(videos), k_(n_folds)
    {
        order_.resize(videos.size());
        std::iota(order_.begin(), order_.end(), 0);
        auto total = [&](std::size_t v) { return std::accumulate(videos[v].counts.begin(), videos[v].counts.end(), 0L); };
        std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return total(a) > total(b); });
    }

    std::vector<int> solve(std::size_t exact_limit)
    {
        auto best = greedy();
        improve(best);
        best_ = best;
        best_score_ = fold_imbalance(videos_, best, k_);
        if (videos_.size() <= exact_limit) {
            load_.assign(static_cast<std::size_t>(k_), ClassCounts{});
            current_.assign(videos_.size(), -1);
            remaining_ = ClassCounts{};
            for (const auto& v : videos_)
                for (std::size_t c = 0; c < kFoldClasses; ++c)
                    remaining_[c] += v.counts[c];
            branch(0, 0, 0);
        }
        return best_;
    }

private:
    long long added_cost(const ClassCounts& load, const ClassCounts& add) const
    {
        long long s = 0;
        for (std::size_t c = 0; c < kFoldClasses; ++c)
            s += 2LL * load[c] * add[c] + static_cast<long long>(add[c]) * add[c];
        return s;
    }

    std::vector<int> greedy() const
    {
        std::vector<int> fold(videos_.size(), 0);
        std::vector<ClassCounts> load(static_cast<std::size_t>(k_), ClassCounts{});
        std::vector<int> count(static_cast<std::size_t>(k_), 0);
        std::size_t placed = 0;
        for (auto v : order_) {
            const std::size_t left = videos_.size() - placed;
            const int empty = static_cast<int>(std::count(count.begin(), count.end(), 0));
            int best = -1;
            long long best_cost = std::numeric_limits<long long>::max();
            for (int f = 0; f < k_; ++f) {
                // keep enough videos back to give every fold at least one
                if (count[f] > 0 && static_cast<int>(left) <= empty)
                    continue;
                const long long cost = added_cost(load[f], videos_[v].counts);
                if (cost < best_cost) {
                    best_cost = cost;
                    best = f;
                }
            }
            fold[v] = best;
            ++count[best];
            for (std::size_t c = 0; c < kFoldClasses; ++c)
                load[best][c] += videos_[v].counts[c];
            ++placed;
        }
        return fold;
    }

    void improve(std::vector<int>& fold) const
    {
        long long score = fold_imbalance(videos_, fold, k_);
        auto sizes = [&] {
            std::vector<int> s(static_cast<std::size_t>(k_), 0);
            for (int f : fold)
                ++s[f];
            return s;
        };
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t v = 0; v < fold.size(); ++v) {
                for (int f = 0; f < k_; ++f) {
                    if (f == fold[v] || sizes()[fold[v]] == 1)
                        continue;
                    const int old = fold[v];
                    fold[v] = f;
                    const long long s = fold_imbalance(videos_, fold, k_);
                    if (s < score) {
                        score = s;
                        changed = true;
                    } else {
                        fold[v] = old;
                    }
                }
                for (std::size_t u = v + 1; u < fold.size(); ++u) {
                    if (fold[u] == fold[v])
                        continue;
                    std::swap(fold[u], fold[v]);
                    const long long s = fold_imbalance(videos_, fold, k_);
                    if (s < score) {
                        score = s;
                        changed = true;
                    } else {
                        std::swap(fold[u], fold[v]);
                    }
                }
            }
        }
    }

    /// Relaxed minimum of sum_f (load_f + x_f)^2 with x >= 0, sum x = r.
    double water_fill(std::size_t c) const
    {
        std::vector<double> l;
        for (const auto& f : load_)
            l.push_back(static_cast<double>(f[c]));
        std::sort(l.begin(), l.end());
        double r = static_cast<double>(remaining_[c]);
        double level = l[0];
        std::size_t i = 1;
        while (r > 0.0) {
            const double next = i < l.size() ? l[i] : std::numeric_limits<double>::infinity();
            const double need = static_cast<double>(i) * (next - level);
            if (need >= r) {
                level += r / static_cast<double>(i);
                r = 0.0;
            } else {
                r -= need;
                level = next;
                ++i;
            }
        }
        double s = 0.0;
        for (double x : l)
            s += std::max(x, level) * std::max(x, level);
        return s;
    }

    void branch(std::size_t depth, int used, long long partial)
    {
        if (depth == order_.size()) {
            if (used == k_ && partial < best_score_) {
                best_score_ = partial;
                best_ = current_;
            }
            return;
        }
        double bound = 0.0;
        for (std::size_t c = 0; c < kFoldClasses; ++c)
            bound += water_fill(c);
        if (bound > static_cast<double>(best_score_) - 1.0 + 1e-6)
            return;

        const std::size_t v = order_[depth];
        const auto& add = videos_[v].counts;
        const int left = static_cast<int>(order_.size() - depth);
        // folds are interchangeable: only open the next unused one
        const int limit = std::min(used + 1, k_);
        for (int f = 0; f < limit; ++f) {
            const int now_used = f == used ? used + 1 : used;
            if (k_ - now_used > left - 1)
                continue;
            const long long delta = added_cost(load_[f], add);
            current_[v] = f;
            for (std::size_t c = 0; c < kFoldClasses; ++c) {
                load_[f][c] += add[c];
                remaining_[c] -= add[c];
            }
            branch(depth + 1, now_used, partial + delta);
            for (std::size_t c = 0; c < kFoldClasses; ++c) {
                load_[f][c] -= add[c];
                remaining_[c] += add[c];
            }
        }
        current_[v] = -1;
    }

    const std::vector<VideoClassCounts>& videos_;
    int k_;
    std::vector<std::size_t> order_;
    std::vector<int> best_;
    long long best_score_ = 0;
    std::vector<ClassCounts> load_;
    std::vector<int> current_;
    ClassCounts remaining_{};
};

}  // namespace detail

/// Assigns whole videos to folds, every fold non-empty, minimising
/// fold_imbalance. Exact for up to `exact_limit` videos; above that the
/// greedy placement refined by single moves and pairwise swaps is returned.
inline std::vector<int> assign_video_folds(const std::vector<VideoClassCounts>& videos, int n_folds = 4,
                                           std::size_t exact_limit = 16)
{
    if (n_folds < 1)
        throw InputError("fold count must be positive");
    if (videos.size() < static_cast<std::size_t>(n_folds))
        throw InputError("need at least one video per fold");
    for (const auto& v : videos)
        for (long c : v.counts)
            if (c < 0)
                throw InputError("negative image count for video " + v.video_id);
    return detail::FoldSearch(videos, n_folds).solve(exact_limit);
}

inline FoldSpec build_folds(const std::vector<VideoClassCounts>& videos, std::uint64_t seed, int n_folds = 4,
                            const ResamplingRule& rule = {}, const std::vector<std::string>& class_names = {})
{
    FoldSpec spec;
    spec.fold_of_video = assign_video_folds(videos, n_folds);
    spec.imbalance = fold_imbalance(videos, spec.fold_of_video, n_folds);
    spec.fold_counts.assign(static_cast<std::size_t>(n_folds), ClassCounts{});
    spec.resampled_counts.assign(static_cast<std::size_t>(n_folds), ClassCounts{});
    spec.images.resize(static_cast<std::size_t>(n_folds));
    auto name = [&](std::size_t c) { return c < class_names.size() ? class_names[c] : "class slot " + std::to_string(c); };

    Rng rng(seed);
    for (int f = 0; f < n_folds; ++f) {
        for (std::size_t c = 0; c < kFoldClasses; ++c) {
            std::vector<ImageRef> pool;
            for (std::size_t v = 0; v < videos.size(); ++v)
                if (spec.fold_of_video[v] == f)
                    for (long i = 0; i < videos[v].counts[c]; ++i)
                        pool.push_back({v, c, i});
            spec.fold_counts[f][c] = static_cast<long>(pool.size());

            const long d = rule.delta[c];
            if (d < 0) {
                long drop = -d;
                if (drop > static_cast<long>(pool.size())) {
                    spec.warnings.push_back("fold " + std::to_string(f) + ": " + name(c) + " has " +
                                            std::to_string(pool.size()) + " images, cannot remove " +
                                            std::to_string(drop) + "; clamped");
                    drop = static_cast<long>(pool.size());
                }
                rng.shuffle(pool);
                pool.erase(pool.begin(), pool.begin() + drop);
                std::sort(pool.begin(), pool.end());
            } else if (d > 0) {
                if (pool.empty()) {
                    spec.warnings.push_back("fold " + std::to_string(f) + ": no " + name(c) +
                                            " images to duplicate; upsampling skipped");
                } else {
                    const std::size_t n = pool.size();
                    for (long k = 0; k < d; ++k)
                        pool.push_back(pool[rng.below(n)]);
                }
            }
            spec.resampled_counts[f][c] = static_cast<long>(pool.size());
            spec.images[f].insert(spec.images[f].end(), pool.begin(), pool.end());
        }
    }
    return spec;
}

}  // namespace surgtrack
