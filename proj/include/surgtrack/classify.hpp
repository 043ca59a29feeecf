#pragma once

// Skill classifiers over video-level metric vectors, and the cross-validation
// harness that pairs them with ANOVA feature selection.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surgtrack/descriptive.hpp"
#include "surgtrack/error.hpp"
#include "surgtrack/random.hpp"
#include "surgtrack/stats.hpp"

namespace surgtrack {

enum class ClassifierKind { linear, svm, rf, mlp };

inline std::string to_string(ClassifierKind k)
{
    switch (k) {
    case ClassifierKind::linear: return "linear";
    case ClassifierKind::svm: return "svm";
    case ClassifierKind::rf: return "rf";
    case ClassifierKind::mlp: return "mlp";
    }
    return "?";
}

inline ClassifierKind parse_classifier_kind(const std::string& s)
{
    for (auto k : {ClassifierKind::linear, ClassifierKind::svm, ClassifierKind::rf, ClassifierKind::mlp})
        if (to_string(k) == s)
            return k;
    throw InputError("unknown model '" + s + "' (expected linear, svm, rf or mlp)");
}

struct ClassifierConfig {
    std::uint64_t seed = 0;

    double linear_lr = 0.1;
    int linear_epochs = 2000;
    double linear_l2 = 1e-4;

    double svm_lambda = 1e-3;
    double svm_lr = 0.05;
    int svm_epochs = 2000;

    int rf_trees = 100;
    int rf_max_depth = 8;
    int rf_min_leaf = 1;

    int mlp_hidden = 16;
    int mlp_epochs = 500;
    double mlp_lr = 1e-2;
};

/// z-scores from training statistics; constant columns map to 0.
struct Standardizer {
    Eigen::RowVectorXd mean, scale;

    static Standardizer fit(const Eigen::MatrixXd& X)
    {
        Standardizer s;
        s.mean = X.colwise().mean();
        s.scale.resize(X.cols());
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double sd = std::sqrt((X.col(j).array() - s.mean(j)).square().mean());
            s.scale(j) = sd > 0.0 ? sd : 1.0;
        }
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const
    {
        return (X.rowwise() - mean).array().rowwise() / scale.array();
    }
};

namespace detail {

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z)
{
    const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

inline std::size_t argmax(const Eigen::VectorXd& v)
{
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best))
            best = i;
    return static_cast<std::size_t>(best);
}

// ---- CART

struct TreeNode {
    int feature = -1;  // -1 = leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    std::size_t label = 0;
};

class Tree {
public:
    Tree(const Eigen::MatrixXd& X, const std::vector<std::size_t>& y, std::size_t n_classes,
         std::vector<Eigen::Index> rows, int max_depth, int min_leaf, std::size_t max_features, Rng& rng)
        : X_(X), y_(y), k_(n_classes), max_depth_(max_depth), min_leaf_(min_leaf), max_features_(max_features),
          rng_(rng)
    {
        build(std::move(rows), 0);
    }

    std::vector<TreeNode> release() && { return std::move(nodes_); }

private:
    std::size_t majority(const std::vector<Eigen::Index>& rows) const
    {
        std::vector<int> c(k_, 0);
        for (auto r : rows)
            ++c[y_[r]];
        return static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
    }

    static double gini(const std::vector<int>& counts, int n)
    {
        if (n == 0)
            return 0.0;
        double s = 1.0;
        for (int c : counts) {
            const double p = static_cast<double>(c) / n;
            s -= p * p;
        }
        return s;
    }

    int build(std::vector<Eigen::Index> rows, int depth)
    {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({-1, 0.0, -1, -1, majority(rows)});

        std::vector<int> total(k_, 0);
        for (auto r : rows)
            ++total[y_[r]];
        const int n = static_cast<int>(rows.size());
        if (depth >= max_depth_ || n < 2 * min_leaf_ || gini(total, n) == 0.0)
            return id;

        std::vector<std::size_t> features(static_cast<std::size_t>(X_.cols()));
        std::iota(features.begin(), features.end(), 0);
        rng_.shuffle(features);
        features.resize(max_features_);

        double best_gain = 0.0;
        int best_f = -1;
        double best_t = 0.0;
        const double parent = gini(total, n);
        for (std::size_t f : features) {
            std::vector<Eigen::Index> sorted = rows;
            std::stable_sort(sorted.begin(), sorted.end(),
                             [&](Eigen::Index a, Eigen::Index b) { return X_(a, f) < X_(b, f); });
            std::vector<int> left(k_, 0), right = total;
            for (int i = 0; i + 1 < n; ++i) {
                ++left[y_[sorted[i]]];
                --right[y_[sorted[i]]];
                const double a = X_(sorted[i], f), b = X_(sorted[i + 1], f);
                if (a == b || i + 1 < min_leaf_ || n - i - 1 < min_leaf_)
                    continue;
                const double child = ((i + 1) * gini(left, i + 1) + (n - i - 1) * gini(right, n - i - 1)) / n;
                const double gain = parent - child;
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_f = static_cast<int>(f);
                    best_t = 0.5 * (a + b);
                }
            }
        }
        if (best_f < 0)
            return id;

        std::vector<Eigen::Index> l, r;
        for (auto row : rows)
            (X_(row, best_f) <= best_t ? l : r).push_back(row);
        nodes_[id].feature = best_f;
        nodes_[id].threshold = best_t;
        const int li = build(std::move(l), depth + 1);
        const int ri = build(std::move(r), depth + 1);
        nodes_[id].left = li;
        nodes_[id].right = ri;
        return id;
    }

    const Eigen::MatrixXd& X_;
    const std::vector<std::size_t>& y_;
    std::size_t k_;
    int max_depth_, min_leaf_;
    std::size_t max_features_;
    Rng& rng_;
    std::vector<TreeNode> nodes_;
};

inline std::size_t predict_tree(const std::vector<TreeNode>& nodes, const Eigen::RowVectorXd& x)
{
    int i = 0;
    while (nodes[i].feature >= 0)
        i = x(nodes[i].feature) <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].label;
}

}  // namespace detail

/// A trained model. Immutable after train(); predict is deterministic.
class ClassifierModel {
public:
    static ClassifierModel train(ClassifierKind kind, const Eigen::MatrixXd& X, std::span<const int> y,
                                 const ClassifierConfig& cfg = {})
    {
        if (X.rows() == 0 || static_cast<std::size_t>(X.rows()) != y.size())
            throw InputError("classifier training needs one label per sample and at least one sample");
        if (!X.allFinite())
            throw InputError("classifier training features must be finite");
        ClassifierModel m;
        m.kind_ = kind;
        m.seed_ = cfg.seed;
        m.labels_.assign(y.begin(), y.end());
        std::sort(m.labels_.begin(), m.labels_.end());
        m.labels_.erase(std::unique(m.labels_.begin(), m.labels_.end()), m.labels_.end());
        if (m.labels_.size() == 1)
            return m;  // constant classifier

        m.standardizer_ = Standardizer::fit(X);
        const Eigen::MatrixXd Z = m.standardizer_.apply(X);
        std::vector<std::size_t> yi(y.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            yi[i] = static_cast<std::size_t>(std::lower_bound(m.labels_.begin(), m.labels_.end(), y[i]) - m.labels_.begin());

        switch (kind) {
        case ClassifierKind::linear: m.train_linear(Z, yi, cfg); break;
        case ClassifierKind::svm: m.train_svm(Z, yi, cfg); break;
        case ClassifierKind::rf: m.train_rf(Z, yi, cfg); break;
        case ClassifierKind::mlp: m.train_mlp(Z, yi, cfg); break;
        }
        return m;
    }

    int predict(const Eigen::RowVectorXd& x) const
    {
        if (labels_.size() == 1)
            return labels_[0];
        if (x.size() != standardizer_.mean.size())
            throw InputError("feature vector length does not match the model");
        const Eigen::RowVectorXd z = (x - standardizer_.mean).array() / standardizer_.scale.array();
        return labels_[predict_index(z)];
    }

    std::vector<int> predict(const Eigen::MatrixXd& X) const
    {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            out.push_back(predict(Eigen::RowVectorXd(X.row(i))));
        return out;
    }

    ClassifierKind kind() const { return kind_; }
    const std::vector<int>& labels() const { return labels_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::size_t predict_index(const Eigen::RowVectorXd& z) const
    {
        switch (kind_) {
        case ClassifierKind::linear:
        case ClassifierKind::svm: {
            const Eigen::VectorXd s = W_ * z.transpose() + b_;
            return detail::argmax(s);
        }
        case ClassifierKind::rf: {
            Eigen::VectorXd votes = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels_.size()));
            for (const auto& t : forest_)
                votes(static_cast<Eigen::Index>(detail::predict_tree(t, z))) += 1.0;
            return detail::argmax(votes);
        }
        case ClassifierKind::mlp: {
            const Eigen::VectorXd h = (W1_ * z.transpose() + b1_).array().tanh();
            return detail::argmax(W2_ * h + b2_);
        }
        }
        return 0;
    }

    // Multinomial logistic regression, full-batch gradient descent.
    void train_linear(const Eigen::MatrixXd& Z, const std::vector<std::size_t>& y, const ClassifierConfig& cfg)
    {
        const auto k = static_cast<Eigen::Index>(labels_.size());
        const auto n = Z.rows(), d = Z.cols();
        W_ = Eigen::MatrixXd::Zero(k, d);
        b_ = Eigen::VectorXd::Zero(k);
        Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, k);
        for (Eigen::Index i = 0; i < n; ++i)
            Y(i, static_cast<Eigen::Index>(y[i])) = 1.0;
        for (int epoch = 0; epoch < cfg.linear_epochs; ++epoch) {
            Eigen::MatrixXd logits = (Z * W_.transpose()).rowwise() + b_.transpose();
            for (Eigen::Index i = 0; i < n; ++i)
                logits.row(i) = detail::softmax(logits.row(i).transpose()).transpose();
            const Eigen::MatrixXd G = (logits - Y) / static_cast<double>(n);
            W_ -= cfg.linear_lr * (G.transpose() * Z + cfg.linear_l2 * W_);
            b_ -= cfg.linear_lr * G.colwise().sum().transpose();
        }
    }

    // One-vs-rest linear soft-margin SVM, full-batch subgradient descent.
    void train_svm(const Eigen::MatrixXd& Z, const std::vector<std::size_t>& y, const ClassifierConfig& cfg)
    {
        const auto k = static_cast<Eigen::Index>(labels_.size());
        const auto n = Z.rows(), d = Z.cols();
        W_ = Eigen::MatrixXd::Zero(k, d);
        b_ = Eigen::VectorXd::Zero(k);
        for (Eigen::Index c = 0; c < k; ++c) {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
            double b = 0.0;
            for (int epoch = 0; epoch < cfg.svm_epochs; ++epoch) {
                Eigen::VectorXd gw = cfg.svm_lambda * w;
                double gb = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double t = static_cast<Eigen::Index>(y[i]) == c ? 1.0 : -1.0;
                    if (t * (Z.row(i).dot(w) + b) < 1.0) {
                        gw -= t * Z.row(i).transpose() / static_cast<double>(n);
                        gb -= t / static_cast<double>(n);
                    }
                }
                w -= cfg.svm_lr * gw;
                b -= cfg.svm_lr * gb;
            }
            W_.row(c) = w.transpose();
            b_(c) = b;
        }
    }

    void train_rf(const Eigen::MatrixXd& Z, const std::vector<std::size_t>& y, const ClassifierConfig& cfg)
    {
        Rng rng(cfg.seed ^ 0x5eedf0e57ULL);
        const auto n = Z.rows();
        const auto mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(Z.cols()))));
        for (int t = 0; t < cfg.rf_trees; ++t) {
            std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
            for (auto& r : rows)
                r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            detail::Tree tree(Z, y, labels_.size(), std::move(rows), cfg.rf_max_depth, cfg.rf_min_leaf, mtry, rng);
            forest_.push_back(std::move(tree).release());
        }
    }

    // One tanh hidden layer, softmax output, per-sample gradient descent.
    void train_mlp(const Eigen::MatrixXd& Z, const std::vector<std::size_t>& y, const ClassifierConfig& cfg)
    {
        Rng rng(cfg.seed ^ 0x3c6ef372fe94f82bULL);
        const auto k = static_cast<Eigen::Index>(labels_.size());
        const auto n = Z.rows(), d = Z.cols();
        const Eigen::Index h = cfg.mlp_hidden;
        const double a1 = std::sqrt(6.0 / static_cast<double>(d + h));
        const double a2 = std::sqrt(6.0 / static_cast<double>(h + k));
        W1_.resize(h, d);
        W2_.resize(k, h);
        for (Eigen::Index i = 0; i < W1_.size(); ++i)
            W1_(i) = rng.uniform(-a1, a1);
        for (Eigen::Index i = 0; i < W2_.size(); ++i)
            W2_(i) = rng.uniform(-a2, a2);
        b1_ = Eigen::VectorXd::Zero(h);
        b2_ = Eigen::VectorXd::Zero(k);

        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < cfg.mlp_epochs; ++epoch) {
            rng.shuffle(order);
            for (auto i : order) {
                const Eigen::VectorXd x = Z.row(i).transpose();
                const Eigen::VectorXd a = (W1_ * x + b1_).array().tanh();
                Eigen::VectorXd g2 = detail::softmax(W2_ * a + b2_);
                g2(static_cast<Eigen::Index>(y[i])) -= 1.0;
                const Eigen::VectorXd g1 = (W2_.transpose() * g2).array() * (1.0 - a.array().square());
                W2_ -= cfg.mlp_lr * g2 * a.transpose();
                b2_ -= cfg.mlp_lr * g2;
                W1_ -= cfg.mlp_lr * g1 * x.transpose();
                b1_ -= cfg.mlp_lr * g1;
            }
        }
    }

    ClassifierKind kind_ = ClassifierKind::linear;
    std::uint64_t seed_ = 0;
    std::vector<int> labels_;
    Standardizer standardizer_;
    Eigen::MatrixXd W_, W1_, W2_;
    Eigen::VectorXd b_, b1_, b2_;
    std::vector<std::vector<detail::TreeNode>> forest_;
};

inline double accuracy(std::span<const int> predicted, std::span<const int> truth)
{
    if (predicted.size() != truth.size() || truth.empty())
        throw InputError("accuracy: prediction and label counts differ or are empty");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// Accuracy of always predicting the most frequent label.
inline double dominant_class_accuracy(std::span<const int> labels)
{
    std::map<int, long> counts;
    for (int v : labels)
        ++counts[v];
    long best = 0;
    for (const auto& [l, c] : counts)
        best = std::max(best, c);
    return labels.empty() ? 0.0 : static_cast<double>(best) / static_cast<double>(labels.size());
}

/// Video-level stratified assignment to folds: labels are dealt round-robin
/// after a seeded shuffle within each class.
inline std::vector<int> stratified_folds(std::span<const int> labels, int n_folds, std::uint64_t seed)
{
    if (n_folds < 2)
        throw InputError("need at least two folds");
    if (static_cast<int>(labels.size()) < n_folds)
        throw InputError("fewer samples than folds");
    Rng rng(seed);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i]].push_back(i);
    std::vector<int> fold(labels.size(), 0);
    int next = 0;
    for (auto& [label, idx] : by_class) {
        rng.shuffle(idx);
        for (auto i : idx) {
            fold[i] = next;
            next = (next + 1) % n_folds;
        }
    }
    return fold;
}

struct FoldOutcome {
    int fold = 0;
    bool skipped = false;
    std::string reason;
    double accuracy = 0.0;
    std::vector<std::size_t> selected_features;
};

struct CvResult {
    std::vector<FoldOutcome> folds;
    double mean = 0.0;  // over evaluated folds, in percent
    double std = 0.0;   // population std, in percent
    std::vector<std::string> warnings;
};

/// Per held-out fold: ANOVA top-k selection and a classifier fitted on the
/// remaining folds, scored on the held-out fold.
inline CvResult cross_validate(const Eigen::MatrixXd& X, std::span<const int> labels, std::span<const int> fold_of,
                               ClassifierKind kind, std::size_t k_features, const ClassifierConfig& cfg = {})
{
    if (static_cast<std::size_t>(X.rows()) != labels.size() || labels.size() != fold_of.size())
        throw InputError("cross_validate: features, labels and folds must have the same length");
    if (k_features < 1)
        throw InputError("cross_validate: k must be at least 1");
    const int n_folds = fold_of.empty() ? 0 : *std::max_element(fold_of.begin(), fold_of.end()) + 1;
    CvResult res;
    std::vector<double> accs;
    for (int f = 0; f < n_folds; ++f) {
        FoldOutcome out;
        out.fold = f;
        std::vector<Eigen::Index> train, test;
        for (std::size_t i = 0; i < labels.size(); ++i)
            (fold_of[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
        std::vector<int> ytr, yte;
        for (auto i : train)
            ytr.push_back(labels[i]);
        for (auto i : test)
            yte.push_back(labels[i]);
        const bool single_class = std::all_of(ytr.begin(), ytr.end(), [&](int v) { return v == ytr.front(); });
        if (test.empty() || train.empty() || single_class) {
            out.skipped = true;
            out.reason = test.empty() ? "empty test fold" : "training data has a single class";
            res.warnings.push_back("fold " + std::to_string(f) + " skipped: " + out.reason);
            res.folds.push_back(out);
            continue;
        }
        const Eigen::MatrixXd Xtr = X(train, Eigen::all);
        const Eigen::MatrixXd Xte = X(test, Eigen::all);
        const auto scores = anova_f_scores(Xtr, ytr);
        out.selected_features = top_k(scores, std::min<std::size_t>(k_features, static_cast<std::size_t>(X.cols())));
        std::vector<Eigen::Index> cols(out.selected_features.begin(), out.selected_features.end());
        auto fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + static_cast<std::uint64_t>(f);
        const auto model = ClassifierModel::train(kind, Xtr(Eigen::all, cols), ytr, fold_cfg);
        const auto pred = model.predict(Eigen::MatrixXd(Xte(Eigen::all, cols)));
        out.accuracy = 100.0 * accuracy(pred, yte);
        accs.push_back(out.accuracy);
        res.folds.push_back(out);
    }
    res.mean = mean(accs);
    res.std = population_std(accs);
    return res;
}

// ---------------------------------------------------------------------------
// Synthetic feature tables

struct FeatureTable {
    Eigen::MatrixXd X;
    std::vector<int> labels;
};

/// Gaussian noise features; the first `informative` columns are shifted by
/// `separation` standard deviations in a label-specific direction.
inline FeatureTable planted_signal_table(std::span<const int> labels, int n_features, int informative,
                                         double separation, std::uint64_t seed)
{
    if (informative > n_features)
        throw InputError("more informative features than features");
    Rng rng(seed);
    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    FeatureTable t;
    t.labels.assign(labels.begin(), labels.end());
    t.X.resize(static_cast<Eigen::Index>(labels.size()), n_features);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto c = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
        for (int j = 0; j < n_features; ++j) {
            double v = rng.normal();
            if (j < informative && j % static_cast<int>(classes.size()) == c)
                v += separation;
            t.X(static_cast<Eigen::Index>(i), j) = v;
        }
    }
    return t;
}

/// Two classes drawn from isotropic Gaussians whose means are `separation`
/// standard deviations apart along the first axis.
inline FeatureTable separable_clusters(int per_class, int n_features, double separation, std::uint64_t seed)
{
    Rng rng(seed);
    FeatureTable t;
    t.X.resize(2 * per_class, n_features);
    for (int i = 0; i < 2 * per_class; ++i) {
        const int label = i < per_class ? 0 : 1;
        t.labels.push_back(label);
        for (int j = 0; j < n_features; ++j)
            t.X(i, j) = rng.normal() + (j == 0 && label == 1 ? separation : 0.0);
    }
    return t;
}

}  // namespace surgtrack
