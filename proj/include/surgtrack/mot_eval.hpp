#pragma once

// Tracking and segmentation evaluation.
//
// Ground truth is sparse: only some frames are annotated (sampled at 1 FPS)
// and each carries at most one instrument. MOTA runs on every frame, with
// the classification of unannotated frames carried forward from the last
// annotation. MOTP only uses annotated frames, where boxes are known.

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surgtrack/assignment.hpp"
#include "surgtrack/classes.hpp"
#include "surgtrack/descriptive.hpp"
#include "surgtrack/error.hpp"
#include "surgtrack/geometry.hpp"
#include "surgtrack/tracker.hpp"

namespace surgtrack {

struct GroundTruthFrame {
    FrameIndex frame_index = 0;
    // nullopt = unknown (unannotated, not yet filled); kNoInstrument = none
    std::optional<ClassId> class_id;
    std::optional<MaskRLE> mask;
    std::optional<BoundingBox> box;
    bool annotated = false;
    // identity used for switch counting; defaults to the class
    std::optional<int> object_id;

    int identity() const { return object_id.value_or(class_id.value_or(kNoInstrument)); }

    std::optional<BoundingBox> localisation() const
    {
        if (box)
            return box;
        if (mask)
            return mask_to_box(*mask);
        return std::nullopt;
    }

    bool operator==(const GroundTruthFrame&) const = default;
};

/// Dense frame sequence 0..frame_count-1 with the given annotated frames.
inline std::vector<GroundTruthFrame> make_gt_sequence(std::span<const GroundTruthFrame> annotated,
                                                      FrameIndex frame_count)
{
    std::vector<GroundTruthFrame> out(static_cast<std::size_t>(std::max<FrameIndex>(frame_count, 0)));
    for (FrameIndex f = 0; f < frame_count; ++f)
        out[f].frame_index = f;
    for (const auto& a : annotated) {
        if (a.frame_index < 0 || a.frame_index >= frame_count)
            throw InputError("annotated frame " + std::to_string(a.frame_index) + " outside the video");
        out[a.frame_index] = a;
        out[a.frame_index].annotated = true;
    }
    return out;
}

/// Carries the last annotated classification forward. Frames before the
/// first annotation are "no instrument"; masks and boxes are never filled.
inline std::vector<GroundTruthFrame> forward_fill_gt(std::span<const GroundTruthFrame> frames)
{
    if (frames.empty())
        throw InputError("cannot forward-fill an empty ground-truth sequence");
    bool any_annotated = false;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (i > 0 && frames[i].frame_index <= frames[i - 1].frame_index)
            throw InputError("ground-truth frames must be strictly increasing");
        if (frames[i].annotated) {
            any_annotated = true;
            if (!frames[i].class_id)
                throw InputError("annotated frame " + std::to_string(frames[i].frame_index) +
                                 " has no classification");
        }
    }
    if (!any_annotated)
        throw InputError("ground truth contains no annotated frame");

    std::vector<GroundTruthFrame> out(frames.begin(), frames.end());
    std::optional<ClassId> last_class;
    std::optional<int> last_object;
    for (auto& f : out) {
        if (f.annotated) {
            last_class = f.class_id;
            last_object = f.object_id;
            continue;
        }
        if (f.class_id)  // already filled
            continue;
        f.class_id = last_class.value_or(kNoInstrument);
        f.object_id = last_class ? last_object : std::nullopt;
        f.mask.reset();
        f.box.reset();
    }
    return out;
}

struct MotaConfig {
    double iou_threshold = 0.5;
};

struct MotCounts {
    long gt_count = 0;
    long matches = 0;
    long false_negatives = 0;
    long false_positives = 0;
    long id_switches = 0;
    double iou_sum = 0.0;  // over matches on annotated frames
    long localised_matches = 0;
};

struct MotResult {
    MotCounts counts;
    std::optional<double> mota;  // percent; nullopt when there is no ground truth
    std::optional<double> motp;  // percent; nullopt when nothing matched
};

namespace detail {

inline const std::vector<TrackOutput>& outputs_at(const std::map<FrameIndex, std::vector<TrackOutput>>& by_frame,
                                                 FrameIndex f)
{
    static const std::vector<TrackOutput> none;
    auto it = by_frame.find(f);
    return it == by_frame.end() ? none : it->second;
}

}  // namespace detail

/// CLEAR-MOT counts over a forward-filled single-instrument ground truth.
inline MotResult evaluate_mot(const TrackSet& predictions, std::span<const GroundTruthFrame> gt,
                              const MotaConfig& cfg = {})
{
    const auto by_frame = predictions.by_frame();
    MotResult res;
    auto& c = res.counts;
    std::map<int, TrackId> last_track;  // identity -> track id at last matched annotated frame

    for (const auto& g : gt) {
        if (!g.class_id)
            throw InputError("ground truth frame " + std::to_string(g.frame_index) +
                             " is unclassified; forward-fill first");
        const auto& preds = detail::outputs_at(by_frame, g.frame_index);
        const bool has_instrument = *g.class_id != kNoInstrument;
        if (!has_instrument) {
            c.false_positives += static_cast<long>(preds.size());
            continue;
        }
        ++c.gt_count;

        std::optional<std::size_t> best;
        double best_iou = -1.0;
        if (g.annotated) {
            const auto gt_box = g.localisation();
            if (!gt_box)
                throw InputError("annotated instrument frame " + std::to_string(g.frame_index) +
                                 " has neither box nor mask");
            for (std::size_t i = 0; i < preds.size(); ++i) {
                if (preds[i].class_id != *g.class_id)
                    continue;
                const double iou = iou_box(preds[i].box, *gt_box);
                if (iou >= cfg.iou_threshold && iou > best_iou) {
                    best = i;
                    best_iou = iou;
                }
            }
        } else {
            // classification-only agreement on filled frames
            for (std::size_t i = 0; i < preds.size() && !best; ++i)
                if (preds[i].class_id == *g.class_id)
                    best = i;
        }

        if (!best) {
            ++c.false_negatives;
            c.false_positives += static_cast<long>(preds.size());
            continue;
        }
        ++c.matches;
        c.false_positives += static_cast<long>(preds.size()) - 1;
        if (g.annotated) {
            c.iou_sum += best_iou;
            ++c.localised_matches;
            const TrackId id = preds[*best].track_id;
            auto [it, inserted] = last_track.try_emplace(g.identity(), id);
            if (!inserted && it->second != id) {
                ++c.id_switches;
                it->second = id;
            }
        }
    }

    if (c.gt_count > 0)
        res.mota = 100.0 * static_cast<double>(c.gt_count - c.false_negatives - c.false_positives - c.id_switches) /
                   static_cast<double>(c.gt_count);
    if (c.localised_matches > 0)
        res.motp = 100.0 * c.iou_sum / static_cast<double>(c.localised_matches);
    return res;
}

/// MOTA in percent. The ground truth must already be forward-filled.
inline std::optional<double> mota(const TrackSet& predictions, std::span<const GroundTruthFrame> gt,
                                  const MotaConfig& cfg = {})
{
    return evaluate_mot(predictions, gt, cfg).mota;
}

/// MOTP in percent over annotated frames only; nullopt when nothing matched.
inline std::optional<double> motp(const TrackSet& predictions, std::span<const GroundTruthFrame> gt,
                                  const MotaConfig& cfg = {})
{
    std::vector<GroundTruthFrame> annotated;
    for (const auto& g : gt)
        if (g.annotated)
            annotated.push_back(g);
    return evaluate_mot(predictions, annotated, cfg).motp;
}

// ---------------------------------------------------------------------------
// Multi-object CLEAR MOT, used for synthetic scenarios with several objects.

struct GtObjectTrack {
    int object_id = 0;
    ClassId class_id = 0;
    std::vector<std::pair<FrameIndex, BoundingBox>> boxes;
};

inline MotCounts clear_mot(const TrackSet& predictions, std::span<const GtObjectTrack> objects,
                           double iou_threshold = 0.5)
{
    const auto by_frame = predictions.by_frame();
    std::map<FrameIndex, std::vector<std::pair<const GtObjectTrack*, BoundingBox>>> gt_by_frame;
    for (const auto& o : objects)
        for (const auto& [f, b] : o.boxes)
            gt_by_frame[f].emplace_back(&o, b);
    for (const auto& [f, v] : by_frame)
        gt_by_frame[f];

    MotCounts c;
    std::map<int, TrackId> last_track;
    for (const auto& [f, gts] : gt_by_frame) {
        const auto& preds = detail::outputs_at(by_frame, f);
        c.gt_count += static_cast<long>(gts.size());
        CostMatrix cost(gts.size(), preds.size());
        GateMatrix gated(gts.size(), preds.size());
        for (std::size_t i = 0; i < gts.size(); ++i)
            for (std::size_t j = 0; j < preds.size(); ++j) {
                const double iou = iou_box(gts[i].second, preds[j].box);
                cost(i, j) = 1.0 - iou;
                gated(i, j) = preds[j].class_id != gts[i].first->class_id || iou < iou_threshold;
            }
        const auto res = assign(cost, gated);
        c.matches += static_cast<long>(res.matches.size());
        c.false_negatives += static_cast<long>(res.unmatched_rows.size());
        c.false_positives += static_cast<long>(res.unmatched_cols.size());
        for (auto [i, j] : res.matches) {
            c.iou_sum += 1.0 - cost(i, j);
            ++c.localised_matches;
            auto [it, inserted] = last_track.try_emplace(gts[i].first->object_id, preds[j].track_id);
            if (!inserted && it->second != preds[j].track_id) {
                ++c.id_switches;
                it->second = preds[j].track_id;
            }
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Segmentation

struct SegmentationFrame {
    FrameIndex frame_index = 0;
    ClassId class_id = kNoInstrument;
    std::optional<MaskRLE> mask;
};

struct MiouReport {
    std::map<ClassId, double> per_class;        // percent, classes with at least one frame
    std::map<ClassId, long> frames_per_class;
    std::optional<double> all_instruments;      // mean over instrument classes present
    std::optional<double> background;           // "no instrument" region IoU, percent
    long annotated_frames = 0;
};

/// Per-class mean mask IoU over annotated frames. A frame counts towards a
/// class when the ground truth or the prediction has that class; a
/// misclassified frame scores 0 for both classes involved.
inline MiouReport miou(std::span<const SegmentationFrame> predictions, std::span<const GroundTruthFrame> gt,
                       const ClassRegistry& classes)
{
    std::map<FrameIndex, const SegmentationFrame*> pred_at;
    for (const auto& p : predictions)
        pred_at[p.frame_index] = &p;

    std::map<ClassId, std::vector<double>> scores;
    std::vector<double> background;
    MiouReport rep;
    for (const auto& g : gt) {
        if (!g.annotated)
            continue;
        ++rep.annotated_frames;
        const ClassId gt_class = g.class_id.value_or(kNoInstrument);
        const SegmentationFrame* p = pred_at.count(g.frame_index) ? pred_at[g.frame_index] : nullptr;
        const ClassId pred_class = p ? p->class_id : kNoInstrument;

        std::optional<MaskRLE> gm = gt_class != kNoInstrument ? g.mask : std::nullopt;
        std::optional<MaskRLE> pm = (p && pred_class != kNoInstrument) ? p->mask : std::nullopt;
        if (g.mask && !gm)
            gm = MaskRLE::empty(g.mask->width(), g.mask->height());
        if (gm && pm && (gm->width() != pm->width() || gm->height() != pm->height()))
            throw InputError("mask dimension mismatch at frame " + std::to_string(g.frame_index));
        if (gm && !pm)
            pm = MaskRLE::empty(gm->width(), gm->height());
        if (pm && !gm)
            gm = MaskRLE::empty(pm->width(), pm->height());

        if (gt_class != kNoInstrument && !classes.contains(gt_class))
            throw InvariantError("ground-truth class " + std::to_string(gt_class) + " not in registry");
        if (gt_class != kNoInstrument) {
            if (!g.mask)
                throw InputError("annotated instrument frame " + std::to_string(g.frame_index) + " has no mask");
            scores[gt_class].push_back(pred_class == gt_class ? iou_mask(*pm, *gm) : 0.0);
        }
        if (pred_class != kNoInstrument && pred_class != gt_class && classes.contains(pred_class))
            scores[pred_class].push_back(0.0);

        background.push_back(gm ? iou_mask(pm->complement(), gm->complement()) : 1.0);
    }

    std::vector<double> instrument_means;
    for (const auto& [cls, v] : scores) {
        rep.per_class[cls] = 100.0 * mean(v);
        rep.frames_per_class[cls] = static_cast<long>(v.size());
        instrument_means.push_back(rep.per_class[cls]);
    }
    if (!instrument_means.empty())
        rep.all_instruments = mean(instrument_means);
    if (!background.empty())
        rep.background = 100.0 * mean(background);
    return rep;
}

// ---------------------------------------------------------------------------
// Throughput

struct FpsReport {
    std::size_t frames = 0;
    double total_seconds = 0.0;
    double fps_mean = 0.0;  // frames / total time
    double fps_std = 0.0;   // population std of per-frame 1/latency
    double latency_p50_ms = 0.0;
    double latency_p95_ms = 0.0;
    double latency_p99_ms = 0.0;
    double latency_max_ms = 0.0;
};

inline FpsReport summarize_latencies(std::span<const double> latencies_s)
{
    FpsReport r;
    r.frames = latencies_s.size();
    std::vector<double> ms, rates;
    for (double l : latencies_s) {
        r.total_seconds += l;
        ms.push_back(1e3 * l);
        if (l > 0.0)
            rates.push_back(1.0 / l);
    }
    if (r.total_seconds > 0.0)
        r.fps_mean = static_cast<double>(r.frames) / r.total_seconds;
    r.fps_std = population_std(rates);
    r.latency_p50_ms = percentile(ms, 50);
    r.latency_p95_ms = percentile(ms, 95);
    r.latency_p99_ms = percentile(ms, 99);
    r.latency_max_ms = ms.empty() ? 0.0 : *std::max_element(ms.begin(), ms.end());
    return r;
}

inline double steady_seconds()
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

/// Times each tracker step on an already parsed stream (parsing excluded).
inline FpsReport fps_benchmark(const TrackerConfig& config, std::span<const FrameInput> stream,
                               const std::function<double()>& clock = steady_seconds)
{
    if (stream.empty())
        throw InputError("benchmark stream is empty");
    Tracker tracker(config);
    std::vector<double> latencies;
    latencies.reserve(stream.size());
    for (const auto& f : stream) {
        const double t0 = clock();
        tracker.step(f.frame_index, f.detections, f.transform);
        latencies.push_back(clock() - t0);
    }
    return summarize_latencies(latencies);
}

// ---------------------------------------------------------------------------

struct EvalReport {
    std::optional<double> motp;
    std::optional<double> mota;
    MotCounts counts;
    std::optional<MiouReport> segmentation;
    std::optional<FpsReport> throughput;
};

}  // namespace surgtrack
