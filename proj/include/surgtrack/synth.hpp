#pragma once

// Synthetic detection streams with known answers, for tests, benchmarks and
// the demo-synth command.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "surgtrack/mot_eval.hpp"
#include "surgtrack/random.hpp"
#include "surgtrack/tracker.hpp"

namespace surgtrack::synth {

struct Scenario {
    std::vector<FrameInput> frames;
    std::vector<GtObjectTrack> truth;
};

inline Embedding axis_embedding(std::size_t dim, std::size_t axis)
{
    Embedding e(dim, 0.0);
    e[axis % dim] = 1.0;
    return e;
}

inline Detection make_detection(FrameIndex f, ClassId cls, const BoundingBox& box, double confidence = 0.9,
                                std::optional<Embedding> embedding = std::nullopt)
{
    Detection d;
    d.frame_index = f;
    d.class_id = cls;
    d.box = box;
    d.confidence = confidence;
    d.embedding = std::move(embedding);
    return d;
}

inline void add_truth(Scenario& s, int object_id, ClassId cls, FrameIndex f, const BoundingBox& b)
{
    auto it = std::find_if(s.truth.begin(), s.truth.end(), [&](const GtObjectTrack& t) { return t.object_id == object_id; });
    if (it == s.truth.end()) {
        s.truth.push_back({object_id, cls, {}});
        it = std::prev(s.truth.end());
    }
    it->boxes.emplace_back(f, b);
}

/// Well separated stationary boxes, detected on every frame.
inline Scenario stationary_scene(int objects, FrameIndex frames, double size = 80.0)
{
    Scenario s;
    for (FrameIndex f = 0; f < frames; ++f) {
        FrameInput in{f, {}, std::nullopt};
        for (int k = 0; k < objects; ++k) {
            const ClassId cls = 1 + k % 4;
            const auto box = BoundingBox::from_center(200.0 + 300.0 * k, 300.0 + 50.0 * (k % 2), size, size * 1.5);
            in.detections.push_back(make_detection(f, cls, box, 0.9, axis_embedding(8, k)));
            add_truth(s, k, cls, f, box);
        }
        s.frames.push_back(std::move(in));
    }
    return s;
}

/// The same scene shifted rigidly by (dx, dy) per frame, with the matching
/// per-frame camera transforms supplied.
inline Scenario translated(const Scenario& base, double dx, double dy)
{
    Scenario s;
    for (const auto& in : base.frames) {
        const double ox = dx * static_cast<double>(in.frame_index);
        const double oy = dy * static_cast<double>(in.frame_index);
        FrameInput out{in.frame_index, {}, std::nullopt};
        if (in.frame_index > 0)
            out.transform = CameraTransform::translation(dx, dy);
        for (auto d : in.detections) {
            d.box = BoundingBox(d.box.left() + ox, d.box.top() + oy, d.box.right() + ox, d.box.bottom() + oy);
            out.detections.push_back(std::move(d));
        }
        s.frames.push_back(std::move(out));
    }
    for (auto t : base.truth) {
        for (auto& [f, b] : t.boxes) {
            const double ox = dx * static_cast<double>(f), oy = dy * static_cast<double>(f);
            b = BoundingBox(b.left() + ox, b.top() + oy, b.right() + ox, b.bottom() + oy);
        }
        s.truth.push_back(std::move(t));
    }
    return s;
}

/// Two same-class objects approach each other, touch and reverse. A
/// constant-velocity motion model expects them to pass through, so motion
/// alone swaps their identities at the reversal; distinct embeddings
/// (orthogonal unit vectors) keep them apart.
struct CrossingParams {
    double speed = 6.0;          // px per frame
    double size = 80.0;
    double start_gap = 300.0;    // initial centre distance
    double vertical_offset = 2.0;
    FrameIndex frames = 50;
    bool distinct_embeddings = true;
};

inline Scenario crossing_objects(const CrossingParams& p = {})
{
    Scenario s;
    const double meet_x = 200.0;
    const auto turn = static_cast<FrameIndex>(std::llround(p.start_gap / 2.0 / p.speed));
    for (FrameIndex f = 0; f < p.frames; ++f) {
        // distance travelled towards the meeting point, folded at the turn
        const double travelled = p.speed * static_cast<double>(f <= turn ? f : 2 * turn - f);
        const double ax = meet_x - p.start_gap / 2.0 + travelled;
        const double bx = meet_x + p.start_gap / 2.0 - travelled;
        const auto a = BoundingBox::from_center(ax, 200.0, p.size, p.size);
        const auto b = BoundingBox::from_center(bx, 200.0 + p.vertical_offset, p.size, p.size);
        FrameInput in{f, {}, std::nullopt};
        in.detections.push_back(make_detection(f, 1, a, 0.9, axis_embedding(8, 0)));
        in.detections.push_back(make_detection(f, 1, b, 0.9, axis_embedding(8, p.distinct_embeddings ? 1 : 0)));
        add_truth(s, 0, 1, f, a);
        add_truth(s, 1, 1, f, b);
        s.frames.push_back(std::move(in));
    }
    return s;
}

/// Objects wandering inside a frame of the given size, with noisy boxes and
/// per-object embeddings. Used for throughput measurements.
struct WanderParams {
    int objects = 4;
    FrameIndex frames = 1000;
    double width = 1920.0;
    double height = 1080.0;
    double box_noise = 1.5;
    std::size_t embedding_dim = 32;
    std::uint64_t seed = 1;
};

inline Scenario wandering_objects(const WanderParams& p = {})
{
    Rng rng(p.seed);
    struct Obj {
        double x, y, vx, vy, w, h;
        Embedding e;
    };
    std::vector<Obj> objs;
    for (int k = 0; k < p.objects; ++k) {
        Obj o{rng.uniform(200, p.width - 200), rng.uniform(200, p.height - 200), rng.uniform(-6, 6),
              rng.uniform(-6, 6), rng.uniform(80, 160), rng.uniform(120, 240), Embedding(p.embedding_dim)};
        double n = 0.0;
        for (auto& v : o.e) {
            v = rng.normal();
            n += v * v;
        }
        for (auto& v : o.e)
            v /= std::sqrt(n);
        objs.push_back(std::move(o));
    }

    Scenario s;
    for (FrameIndex f = 0; f < p.frames; ++f) {
        FrameInput in{f, {}, std::nullopt};
        for (int k = 0; k < p.objects; ++k) {
            auto& o = objs[k];
            o.x += o.vx;
            o.y += o.vy;
            if (o.x < o.w || o.x > p.width - o.w)
                o.vx = -o.vx;
            if (o.y < o.h || o.y > p.height - o.h)
                o.vy = -o.vy;
            const auto truth = BoundingBox::from_center(o.x, o.y, o.w, o.h);
            const auto noisy = BoundingBox::from_center(o.x + rng.normal(0, p.box_noise), o.y + rng.normal(0, p.box_noise),
                                                        o.w + rng.normal(0, p.box_noise), o.h + rng.normal(0, p.box_noise));
            in.detections.push_back(make_detection(f, 1 + k % 4, noisy, rng.uniform(0.6, 0.99), o.e));
            add_truth(s, k, 1 + k % 4, f, truth);
        }
        s.frames.push_back(std::move(in));
    }
    return s;
}

/// Knobs for a single-instrument procedure: how fast the instrument moves,
/// how much of the video is idle and how often instruments are swapped.
struct SkillScriptParams {
    double fps = 25.0;
    FrameIndex frames = 1500;
    double speed_px_s = 150.0;
    double idle_fraction = 0.2;
    double switches_per_minute = 2.0;
    double heading_jitter = 0.3;  // rad per frame, std of the heading random walk
    double width = 1280.0;
    double height = 720.0;
    int classes = 4;
    std::uint64_t seed = 1;
};

inline SkillScriptParams novice_params(std::uint64_t seed)
{
    Rng rng(seed);
    SkillScriptParams p;
    p.seed = seed;
    p.speed_px_s = rng.uniform(60.0, 120.0);
    p.idle_fraction = rng.uniform(0.25, 0.4);
    p.switches_per_minute = rng.uniform(3.0, 5.0);
    p.heading_jitter = rng.uniform(0.35, 0.6);
    p.frames = 1500 + static_cast<FrameIndex>(rng.below(1500));
    return p;
}

inline SkillScriptParams expert_params(std::uint64_t seed)
{
    Rng rng(seed);
    SkillScriptParams p;
    p.seed = seed;
    p.speed_px_s = rng.uniform(150.0, 250.0);
    p.idle_fraction = rng.uniform(0.05, 0.15);
    p.switches_per_minute = rng.uniform(0.8, 2.0);
    p.heading_jitter = rng.uniform(0.05, 0.2);
    p.frames = 1000 + static_cast<FrameIndex>(rng.below(1000));
    return p;
}

/// One instrument visible at a time; visible segments separated by idle
/// gaps, each segment using a class different from the previous one.
inline Scenario skill_script(const SkillScriptParams& p)
{
    if (p.frames <= 0 || !(p.fps > 0.0) || p.classes < 1)
        throw InputError("skill script needs frames > 0, fps > 0 and at least one class");
    Rng rng(p.seed);
    const double minutes = static_cast<double>(p.frames) / p.fps / 60.0;
    const int segments = std::max(1, 1 + static_cast<int>(std::lround(p.switches_per_minute * minutes)));
    const auto idle = static_cast<FrameIndex>(p.idle_fraction * static_cast<double>(p.frames));
    const FrameIndex visible = std::max<FrameIndex>(segments, p.frames - idle);

    // split visible and idle frames into near-equal random shares
    auto split = [&](FrameIndex total, int parts) {
        std::vector<double> w(static_cast<std::size_t>(parts));
        double sum = 0.0;
        for (auto& x : w)
            sum += x = rng.uniform(0.5, 1.5);
        std::vector<FrameIndex> out;
        FrameIndex used = 0;
        for (int i = 0; i < parts; ++i) {
            const FrameIndex n = i + 1 == parts ? total - used : static_cast<FrameIndex>(static_cast<double>(total) * w[i] / sum);
            out.push_back(n);
            used += n;
        }
        return out;
    };
    const auto seg_len = split(visible, segments);
    const auto gap_len = split(std::max<FrameIndex>(0, p.frames - visible), segments + 1);

    Scenario s;
    s.frames.resize(static_cast<std::size_t>(p.frames));
    for (FrameIndex f = 0; f < p.frames; ++f)
        s.frames[f].frame_index = f;

    FrameIndex f = gap_len[0];
    ClassId prev = 0;
    const double step = p.speed_px_s / p.fps;
    for (int k = 0; k < segments && f < p.frames; ++k) {
        ClassId cls = 1 + static_cast<ClassId>(rng.below(static_cast<std::uint64_t>(p.classes)));
        if (p.classes > 1)
            while (cls == prev)
                cls = 1 + static_cast<ClassId>(rng.below(static_cast<std::uint64_t>(p.classes)));
        prev = cls;
        const double w = rng.uniform(80, 160), h = rng.uniform(120, 240);
        double x = rng.uniform(w, p.width - w), y = rng.uniform(h, p.height - h);
        double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
        for (FrameIndex i = 0; i < seg_len[k] && f < p.frames; ++i, ++f) {
            heading += rng.normal(0.0, p.heading_jitter);
            x += step * std::cos(heading);
            y += step * std::sin(heading);
            if (x < w || x > p.width - w) {
                heading = std::numbers::pi - heading;
                x = std::clamp(x, w, p.width - w);
            }
            if (y < h || y > p.height - h) {
                heading = -heading;
                y = std::clamp(y, h, p.height - h);
            }
            const auto box = BoundingBox::from_center(x, y, w, h);
            s.frames[f].detections.push_back(make_detection(f, cls, box, rng.uniform(0.7, 0.99), axis_embedding(8, cls)));
            add_truth(s, k, cls, f, box);
        }
        f += gap_len[k + 1];
    }
    return s;
}

}  // namespace surgtrack::synth
