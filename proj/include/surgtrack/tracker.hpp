#pragma once

// SORT / DeepSORT / StrongSORT style multi-object tracker.
//
// One Tracker owns the state of one video stream and must be stepped with
// strictly increasing frame indices. Detections arrive from an external
// detector; camera motion arrives as optional per-frame transforms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surgtrack/assignment.hpp"
#include "surgtrack/classes.hpp"
#include "surgtrack/error.hpp"
#include "surgtrack/geometry.hpp"
#include "surgtrack/kalman.hpp"

namespace surgtrack {

using FrameIndex = std::int64_t;
using TrackId = std::int64_t;
using Embedding = std::vector<double>;

struct Detection {
    FrameIndex frame_index = 0;
    ClassId class_id = 0;
    BoundingBox box{0, 0, 1, 1};
    std::optional<MaskRLE> mask;
    double confidence = 1.0;
    std::optional<Embedding> embedding;
};

enum class Variant { sort, deepsort, strongsort };

inline std::string to_string(Variant v)
{
    switch (v) {
    case Variant::sort: return "sort";
    case Variant::deepsort: return "deepsort";
    case Variant::strongsort: return "strongsort";
    }
    return "unknown";
}

inline Variant parse_variant(const std::string& s)
{
    if (s == "sort") return Variant::sort;
    if (s == "deepsort") return Variant::deepsort;
    if (s == "strongsort") return Variant::strongsort;
    throw InputError("unknown tracker variant '" + s + "'");
}

struct TrackerConfig {
    Variant variant = Variant::strongsort;
    int detection_interval = 5;
    int max_age = 30;
    int n_init = 3;
    double gate_iou_min = 0.3;
    double gate_mahalanobis_max = 9.4877;  // chi-square 0.95 quantile, 4 dof
    double appearance_weight = 0.25;
    double ema_alpha = 0.9;
    std::size_t gallery_size = 100;
    bool confidence_noise_scaling = true;
    bool motion_compensation = true;
    std::uint64_t seed = 0;
    KalmanNoise noise{};
    ClassRegistry classes = ClassRegistry::standard();

    static TrackerConfig for_variant(Variant v)
    {
        TrackerConfig c;
        c.variant = v;
        switch (v) {
        case Variant::sort:
            c.appearance_weight = 0.0;
            c.gallery_size = 0;
            c.confidence_noise_scaling = false;
            c.motion_compensation = false;
            break;
        case Variant::deepsort:
            c.appearance_weight = 0.25;
            c.gallery_size = 100;
            c.confidence_noise_scaling = false;
            c.motion_compensation = false;
            break;
        case Variant::strongsort:
            c.appearance_weight = 0.25;
            c.ema_alpha = 0.9;
            c.confidence_noise_scaling = true;
            c.motion_compensation = true;
            break;
        }
        return c;
    }

    void validate() const
    {
        auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
        if (detection_interval < 1)
            throw InputError("detection_interval must be >= 1");
        if (max_age < 0 || n_init < 0)
            throw InputError("max_age and n_init must be non-negative");
        if (!in_unit(gate_iou_min) || !in_unit(appearance_weight) || !in_unit(ema_alpha))
            throw InputError("gate_iou_min, appearance_weight and ema_alpha must lie in [0,1]");
        if (!(gate_mahalanobis_max > 0.0))
            throw InputError("gate_mahalanobis_max must be positive");
    }
};

enum class TrackStatus { tentative, confirmed, deleted };

struct Track {
    TrackId track_id = 0;
    ClassId class_id = 0;
    KalmanState kalman;
    std::optional<Embedding> feature;  // strongsort EMA feature
    std::deque<Embedding> gallery;     // deepsort FIFO gallery
    TrackStatus status = TrackStatus::tentative;
    int hits = 0;
    int time_since_update = 0;
};

struct TrackOutput {
    TrackId track_id = 0;
    ClassId class_id = 0;
    BoundingBox box{0, 0, 1, 1};
    bool was_coasted = false;

    bool operator==(const TrackOutput&) const = default;
};

struct MatchInfo {
    TrackId track_id = 0;
    std::size_t detection_index = 0;
    double predicted_iou = 0.0;  // IoU of the predicted box with the matched detection
};

struct FrameOutput {
    FrameIndex frame_index = 0;
    std::vector<TrackOutput> tracks;  // confirmed tracks, ascending id
    std::vector<MatchInfo> matches;   // every matched track, confirmed or not
};

struct HistoryEntry {
    FrameIndex frame_index = 0;
    BoundingBox box{0, 0, 1, 1};
    bool was_coasted = false;

    bool operator==(const HistoryEntry&) const = default;
};

struct TrackRecord {
    TrackId track_id = 0;
    ClassId class_id = 0;
    std::vector<HistoryEntry> history;

    bool operator==(const TrackRecord&) const = default;
};

/// Everything a run emitted: the processed frames and, per track, the
/// sequence of confirmed outputs.
struct TrackSet {
    std::vector<FrameIndex> frames;
    std::vector<TrackRecord> tracks;  // ascending track_id

    void append(const FrameOutput& out)
    {
        if (!frames.empty() && out.frame_index <= frames.back())
            throw InvariantError("track set frames must be strictly increasing");
        frames.push_back(out.frame_index);
        for (const auto& t : out.tracks) {
            auto it = std::lower_bound(tracks.begin(), tracks.end(), t.track_id,
                                       [](const TrackRecord& r, TrackId id) { return r.track_id < id; });
            if (it == tracks.end() || it->track_id != t.track_id)
                it = tracks.insert(it, TrackRecord{t.track_id, t.class_id, {}});
            it->history.push_back({out.frame_index, t.box, t.was_coasted});
        }
    }

    /// Confirmed outputs grouped by frame, ascending track id.
    std::map<FrameIndex, std::vector<TrackOutput>> by_frame() const
    {
        std::map<FrameIndex, std::vector<TrackOutput>> out;
        for (auto f : frames)
            out[f];
        for (const auto& r : tracks)
            for (const auto& h : r.history)
                out[h.frame_index].push_back({r.track_id, r.class_id, h.box, h.was_coasted});
        for (auto& [f, v] : out)
            std::sort(v.begin(), v.end(),
                      [](const TrackOutput& a, const TrackOutput& b) { return a.track_id < b.track_id; });
        return out;
    }

    bool operator==(const TrackSet&) const = default;
};

inline double cosine_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw InputError("embedding dimension mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        dot += a[i] * b[i];
    return std::clamp(1.0 - dot, 0.0, 2.0);
}

/// alpha * feature + (1 - alpha) * observed, renormalised; a zero resultant
/// keeps the previous feature.
inline Embedding ema_update(const Embedding& feature, const Embedding& observed, double alpha)
{
    if (feature.size() != observed.size())
        throw InputError("embedding dimension mismatch");
    Embedding out(feature.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = alpha * feature[i] + (1.0 - alpha) * observed[i];
        norm += out[i] * out[i];
    }
    norm = std::sqrt(norm);
    if (!(norm > 1e-12))
        return feature;
    for (auto& v : out)
        v /= norm;
    return out;
}

struct MotionCost {
    double cost = 1.0;
    bool gated = true;
};

/// 1 - IoU of the track's current (predicted) box with the detection, gated
/// on IoU and on the squared Mahalanobis distance of the measurement.
inline MotionCost motion_cost(const Track& track, const Detection& d, const TrackerConfig& cfg)
{
    const double iou = iou_box(track.kalman.box(), d.box);
    const double m2 = mahalanobis_sq(track.kalman, d.box, cfg.noise);
    const bool gated = iou < cfg.gate_iou_min || m2 > cfg.gate_mahalanobis_max;
    return {1.0 - iou, gated};
}

/// Cosine distance in [0, 2]; nullopt when either side has no appearance.
inline std::optional<double> appearance_cost(const Track& track, const Detection& d, const TrackerConfig& cfg)
{
    if (cfg.variant == Variant::sort || !d.embedding)
        return std::nullopt;
    if (cfg.variant == Variant::deepsort) {
        if (track.gallery.empty())
            return std::nullopt;
        double best = 2.0;
        for (const auto& g : track.gallery)
            best = std::min(best, cosine_distance(g, *d.embedding));
        return best;
    }
    if (!track.feature)
        return std::nullopt;
    return cosine_distance(*track.feature, *d.embedding);
}

class Tracker {
public:
    explicit Tracker(TrackerConfig config) : cfg_(std::move(config)) { cfg_.validate(); }

    const TrackerConfig& config() const { return cfg_; }
    const std::vector<Track>& live_tracks() const { return tracks_; }
    std::optional<FrameIndex> last_frame() const { return last_frame_; }

    bool is_detection_frame(FrameIndex f) const { return f % cfg_.detection_interval == 0; }

    FrameOutput step(FrameIndex frame, std::span<const Detection> detections,
                     const std::optional<CameraTransform>& transform = std::nullopt)
    {
        if (frame < 0)
            throw InvariantError("frame index must be non-negative");
        if (last_frame_ && frame <= *last_frame_)
            throw InvariantError("frame " + std::to_string(frame) + " is not after frame " +
                                 std::to_string(*last_frame_));
        validate_detections(frame, detections);

        // frames absent from the input are coasted without a transform
        const FrameIndex gap = last_frame_ ? frame - *last_frame_ : 1;
        const std::optional<CameraTransform> comp =
            cfg_.motion_compensation ? transform : std::optional<CameraTransform>{};
        for (auto& t : tracks_) {
            for (FrameIndex g = 1; g < gap; ++g) {
                t.kalman = kalman_predict(t.kalman, cfg_.noise);
                ++t.time_since_update;
            }
            t.kalman = kalman_predict(t.kalman, cfg_.noise, comp);
            ++t.time_since_update;
        }
        last_frame_ = frame;

        FrameOutput out;
        out.frame_index = frame;
        std::vector<bool> matched(tracks_.size(), false);
        if (is_detection_frame(frame))
            associate(detections, matched, out);

        std::vector<Track> survivors;
        survivors.reserve(tracks_.size());
        for (std::size_t i = 0; i < tracks_.size(); ++i) {
            auto& t = tracks_[i];
            if (t.time_since_update > cfg_.max_age)
                t.status = TrackStatus::deleted;
            if (t.status == TrackStatus::deleted)
                continue;
            if (t.status == TrackStatus::confirmed)
                out.tracks.push_back({t.track_id, t.class_id, t.kalman.box(), !matched[i]});
            survivors.push_back(std::move(t));
        }
        tracks_ = std::move(survivors);
        return out;
    }

private:
    void validate_detections(FrameIndex frame, std::span<const Detection> detections)
    {
        for (const auto& d : detections) {
            if (d.frame_index != frame)
                throw InvariantError("detection frame " + std::to_string(d.frame_index) +
                                     " does not match step frame " + std::to_string(frame));
            if (!cfg_.classes.contains(d.class_id))
                throw InvariantError("detection class " + std::to_string(d.class_id) +
                                     " is not in the class registry");
            if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
                throw InputError("detection confidence must lie in [0,1]");
            if (d.embedding && cfg_.variant != Variant::sort) {
                if (embedding_dim_ && *embedding_dim_ != d.embedding->size())
                    throw InputError("embedding dimension changed within the stream");
                double n2 = 0.0;
                for (double v : *d.embedding)
                    n2 += v * v;
                if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
                    throw InputError("detection embedding is not unit norm");
                embedding_dim_ = d.embedding->size();
            }
        }
    }

    void associate(std::span<const Detection> detections, std::vector<bool>& matched, FrameOutput& out)
    {
        const auto m = static_cast<Eigen::Index>(tracks_.size());
        const auto n = static_cast<Eigen::Index>(detections.size());
        CostMatrix cost = CostMatrix::Zero(m, n);
        GateMatrix gated = GateMatrix::Constant(m, n, true);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& t = tracks_[i];
            for (Eigen::Index j = 0; j < n; ++j) {
                const auto& d = detections[j];
                if (d.class_id != t.class_id)
                    continue;
                const auto mc = motion_cost(t, d, cfg_);
                if (mc.gated)
                    continue;
                gated(i, j) = false;
                const auto app = appearance_cost(t, d, cfg_);
                cost(i, j) = app ? cfg_.appearance_weight * *app + (1.0 - cfg_.appearance_weight) * mc.cost
                                 : mc.cost;
            }
        }

        const auto result = assign(cost, gated);
        for (auto [i, j] : result.matches) {
            auto& t = tracks_[i];
            const auto& d = detections[j];
            out.matches.push_back({t.track_id, static_cast<std::size_t>(j), iou_box(t.kalman.box(), d.box)});
            t.kalman = kalman_update(t.kalman, d.box, d.confidence, cfg_.confidence_noise_scaling, cfg_.noise);
            absorb_embedding(t, d);
            ++t.hits;
            t.time_since_update = 0;
            if (t.status == TrackStatus::tentative && t.hits >= cfg_.n_init)
                t.status = TrackStatus::confirmed;
            matched[i] = true;
        }
        for (int i : result.unmatched_rows)
            if (tracks_[i].status == TrackStatus::tentative)
                tracks_[i].status = TrackStatus::deleted;

        for (int j : result.unmatched_cols) {
            const auto& d = detections[j];
            Track t;
            t.track_id = next_id_++;
            t.class_id = d.class_id;
            t.kalman = kalman_init(d.box, cfg_.noise);
            t.status = cfg_.n_init == 0 ? TrackStatus::confirmed : TrackStatus::tentative;
            absorb_embedding(t, d);
            tracks_.push_back(std::move(t));
            matched.push_back(true);
        }
    }

    void absorb_embedding(Track& t, const Detection& d) const
    {
        if (!d.embedding)
            return;
        switch (cfg_.variant) {
        case Variant::sort:
            return;
        case Variant::deepsort:
            if (cfg_.gallery_size == 0)
                return;
            t.gallery.push_back(*d.embedding);
            while (t.gallery.size() > cfg_.gallery_size)
                t.gallery.pop_front();
            return;
        case Variant::strongsort:
            t.feature = t.feature ? ema_update(*t.feature, *d.embedding, cfg_.ema_alpha) : *d.embedding;
            return;
        }
    }

    TrackerConfig cfg_;
    std::vector<Track> tracks_;
    std::optional<FrameIndex> last_frame_;
    std::optional<std::size_t> embedding_dim_;
    TrackId next_id_ = 1;
};

struct FrameInput {
    FrameIndex frame_index = 0;
    std::vector<Detection> detections;
    std::optional<CameraTransform> transform;
};

/// Batch run over a whole stream; equivalent to stepping frame by frame.
inline TrackSet run(const TrackerConfig& config, std::span<const FrameInput> stream)
{
    Tracker tracker(config);
    TrackSet set;
    for (const auto& f : stream)
        set.append(tracker.step(f.frame_index, f.detections, f.transform));
    return set;
}

}  // namespace surgtrack
