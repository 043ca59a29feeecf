#include <gtest/gtest.h>

#include "surgtrack/random.hpp"
#include "surgtrack/skill_metrics.hpp"

using namespace surgtrack;

namespace {

VideoMeta video(FrameIndex frames, double fps = 25.0) { return {"v", fps, frames, ClassRegistry::standard()}; }

struct Span {
    TrackId id;
    ClassId cls;
    FrameIndex first, last;  // inclusive
};

/// Builds a track set from per-track frame ranges; boxes move 2 px/frame in x.
TrackSet script(const std::vector<Span>& runs, FrameIndex frames, double px_per_frame = 2.0)
{
    std::map<FrameIndex, FrameOutput> out;
    for (FrameIndex f = 0; f < frames; ++f)
        out[f].frame_index = f;
    for (const auto& r : runs)
        for (FrameIndex f = r.first; f <= r.last; ++f) {
            const double x = 100.0 + px_per_frame * static_cast<double>(f - r.first);
            out[f].tracks.push_back({r.id, r.cls, BoundingBox(x, 50, x + 40, 110), false});
        }
    TrackSet s;
    for (auto& [f, o] : out) {
        std::sort(o.tracks.begin(), o.tracks.end(), [](auto& a, auto& b) { return a.track_id < b.track_id; });
        s.append(o);
    }
    return s;
}

TrackRecord path(const std::vector<double>& xs, FrameIndex step = 1)
{
    TrackRecord r{1, 1, {}};
    for (std::size_t i = 0; i < xs.size(); ++i)
        r.history.push_back({static_cast<FrameIndex>(i) * step, BoundingBox(xs[i], 0, xs[i] + 10, 10), false});
    return r;
}

}  // namespace

TEST(Segments, SingleRun)
{
    const auto segs = visibility_segments(script({{1, 2, 0, 99}}, 100), video(100));
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0], (VisibilitySegment{2, 0, 99, 4.0}));
}

TEST(Segments, BridgesShortGaps)
{
    const auto bridged = visibility_segments(script({{1, 1, 0, 9}, {2, 1, 13, 20}}, 30), video(30));
    ASSERT_EQ(bridged.size(), 1u);
    EXPECT_EQ(bridged[0].start_frame, 0);
    EXPECT_EQ(bridged[0].end_frame, 20);

    // 13 missing frames exceed the tolerance
    EXPECT_EQ(visibility_segments(script({{1, 1, 0, 9}, {2, 1, 23, 30}}, 40), video(40)).size(), 2u);
    // a class change is never bridged
    EXPECT_EQ(visibility_segments(script({{1, 1, 0, 9}, {2, 3, 13, 20}}, 30), video(30)).size(), 2u);
    EXPECT_TRUE(visibility_segments(TrackSet{}, video(10)).empty());
}

TEST(Kinematics, UniformMotion)
{
    std::vector<double> xs;
    for (int i = 0; i < 10; ++i)
        xs.push_back(2.0 * i);
    const auto k = kinematics(path(xs), 25.0, 1);
    ASSERT_EQ(k.speed.size(), 9u);
    ASSERT_EQ(k.acceleration.size(), 8u);
    ASSERT_EQ(k.jerk.size(), 7u);
    for (double s : k.speed)
        EXPECT_NEAR(s, 50.0, 1e-12);
    for (double a : k.acceleration)
        EXPECT_NEAR(a, 0.0, 1e-12);
    for (double h : k.heading_rate)
        EXPECT_NEAR(h, 0.0, 1e-12);
}

TEST(Kinematics, QuadraticHasConstantAcceleration)
{
    std::vector<double> xs;
    for (int t = 0; t < 12; ++t)
        xs.push_back(static_cast<double>(t * t));
    const auto k = kinematics(path(xs), 25.0, 1);
    for (double a : k.acceleration)
        EXPECT_NEAR(a, 2.0 * 25.0 * 25.0, 1e-9);
    for (double j : k.jerk)
        EXPECT_NEAR(j, 0.0, 1e-6);
}

TEST(Kinematics, ShortHistoriesAndStillness)
{
    EXPECT_TRUE(kinematics(path({1.0}), 25.0).speed.empty());
    const auto two = kinematics(path({0.0, 1.0}), 25.0, 1);
    EXPECT_EQ(two.speed.size(), 1u);
    EXPECT_TRUE(two.acceleration.empty());
    const auto three = kinematics(path({0.0, 1.0, 3.0}), 25.0, 1);
    EXPECT_EQ(three.acceleration.size(), 1u);
    EXPECT_TRUE(three.jerk.empty());
    EXPECT_EQ(kinematics(path({0.0, 1.0, 3.0, 6.0}), 25.0, 1).jerk.size(), 1u);

    const auto still = kinematics(path(std::vector<double>(8, 5.0)), 25.0);
    for (double s : still.speed)
        EXPECT_EQ(s, 0.0);
    EXPECT_TRUE(still.heading_rate.empty());
}

TEST(Kinematics, UsesFrameGaps)
{
    // samples two frames apart: same displacement per sample, half the speed
    const auto k = kinematics(path({0.0, 2.0, 4.0, 6.0}, 2), 25.0, 1);
    for (double s : k.speed)
        EXPECT_NEAR(s, 25.0, 1e-12);
}

TEST(Kinematics, SmoothingKeepsLinearMotion)
{
    std::vector<double> xs;
    for (int i = 0; i < 20; ++i)
        xs.push_back(3.0 * i);
    for (double s : kinematics(path(xs), 25.0, 5).speed)
        EXPECT_NEAR(s, 75.0, 1e-9);
}

TEST(Metrics, EmptyTrackSet)
{
    const auto v = extract_metrics(TrackSet{}, video(1500));
    EXPECT_EQ(v.m(1), 60.0);
    EXPECT_EQ(v.m(2), 0.0);
    EXPECT_EQ(v.m(3), 1500.0);
    EXPECT_EQ(v.m(4), 60.0);
    EXPECT_EQ(v.m(27), 0.0);
    EXPECT_EQ(v.m(34), 0.0);
    for (double x : v.values)
        EXPECT_TRUE(std::isfinite(x));
}

TEST(Metrics, FullVisibility)
{
    const auto v = extract_metrics(script({{1, 3, 0, 249}}, 250), video(250));
    EXPECT_EQ(v.m(3), 1.0);
    EXPECT_EQ(v.m(12), 0.0);
    EXPECT_EQ(v.m(27), 0.0);
    EXPECT_EQ(v.m(34), 1.0);
    EXPECT_EQ(v.m(7), 10.0);
    EXPECT_NEAR(v.m(14), 50.0, 1e-9);
    EXPECT_NEAR(v.m(21), 50.0, 1e-9);
    EXPECT_NEAR(v.m(13), 2.0 * 249, 1e-9);
    EXPECT_EQ(v.m(13), v.m(26));
    EXPECT_NEAR(v.m(18), 1.0, 1e-12);
    EXPECT_EQ(v.m(23), 40.0 * 60.0);
    EXPECT_EQ(v.m(24), 0.0);
}

TEST(Metrics, SixtySecondScript)
{
    // class 1 for 0-10 s, idle 10-20 s, class 2 for 20-60 s at 25 FPS
    const auto v = extract_metrics(script({{1, 1, 0, 249}, {2, 2, 500, 1499}}, 1500), video(1500));
    EXPECT_EQ(v.m(1), 60.0);
    EXPECT_EQ(v.m(2), 50.0);
    EXPECT_EQ(v.m(3), 1.2);
    EXPECT_EQ(v.m(4), 10.0);
    EXPECT_EQ(v.m(27), 1.0);
    EXPECT_EQ(v.m(29), 2.0);
    EXPECT_EQ(v.m(34), 2.0);

    EXPECT_EQ(v.m(5), 10.0);
    EXPECT_EQ(v.m(6), 40.0);
    EXPECT_EQ(v.m(9), 25.0);
    EXPECT_EQ(v.m(10), 10.0);
    EXPECT_EQ(v.m(11), 25.0);
    EXPECT_EQ(v.m(28), 1.0);
    EXPECT_EQ(v.m(30), 1.0);
    EXPECT_EQ(v.m(31), 1.0);
    EXPECT_EQ(v.m(32), 0.0);
}

TEST(Metrics, IdentitiesOnRandomScenarios)
{
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const FrameIndex frames = 50 + static_cast<FrameIndex>(rng.below(2000));
        std::vector<Span> runs;
        FrameIndex f = static_cast<FrameIndex>(rng.below(40));
        TrackId id = 1;
        while (f < frames) {
            const FrameIndex len = 1 + static_cast<FrameIndex>(rng.below(200));
            const FrameIndex last = std::min(frames - 1, f + len);
            runs.push_back({id++, 1 + static_cast<ClassId>(rng.below(4)), f, last});
            f = last + 1 + static_cast<FrameIndex>(rng.below(60));
        }
        const auto meta = video(frames, rng.uniform(5.0, 60.0));
        const auto v = extract_metrics(script(runs, frames, rng.uniform(0.0, 5.0)), meta);

        EXPECT_EQ(v.m(1), static_cast<double>(frames) / meta.fps);
        EXPECT_NEAR(v.m(2) + v.m(4), v.m(1), 1e-9 * v.m(1));
        EXPECT_NEAR(v.m(12), v.m(4) / v.m(1), 1e-12);
        EXPECT_NEAR(v.m(5) + v.m(6) + v.m(7) + v.m(8), v.m(2), 1e-9 * v.m(1));
        EXPECT_EQ(v.m(29), v.m(30) + v.m(31) + v.m(32) + v.m(33));
        EXPECT_EQ(v.m(13), v.m(26));

        const auto segs = visibility_segments(script(runs, frames), meta);
        double switches = 0;
        for (std::size_t i = 1; i < segs.size(); ++i)
            switches += segs[i].class_id != segs[i - 1].class_id;
        EXPECT_EQ(v.m(27), switches);
        for (double x : v.values)
            EXPECT_TRUE(std::isfinite(x));
        if (v.m(2) > 0) {
            EXPECT_GE(v.m(3), 1.0);
        }
    }
}

TEST(Metrics, InvariantUnderRelabeling)
{
    const std::vector<Span> runs{{1, 1, 0, 80}, {2, 3, 100, 150}, {3, 1, 170, 300}};
    std::vector<Span> relabelled = runs;
    for (auto& r : relabelled)
        r.id = 10 - r.id;
    EXPECT_EQ(extract_metrics(script(runs, 320), video(320)), extract_metrics(script(relabelled, 320), video(320)));
}

TEST(Metrics, DoublingFrameRate)
{
    const std::vector<Span> runs{{1, 1, 10, 80}, {2, 4, 120, 200}};
    std::vector<Span> doubled;
    for (auto r : runs)
        doubled.push_back({r.id, r.cls, 2 * r.first, 2 * r.last + 1});

    MetricsConfig cfg;
    cfg.smoothing_window = 1;
    const auto a = extract_metrics(script(runs, 250, 4.0), video(250, 25.0), cfg);
    MetricsConfig cfg2 = cfg;
    cfg2.gap_tolerance = 2 * cfg.gap_tolerance;
    const auto b = extract_metrics(script(doubled, 500, 2.0), video(500, 50.0), cfg2);
    for (int m : {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12})
        EXPECT_NEAR(a.m(m), b.m(m), 1e-9) << "M" << m;
    for (int m : {14, 15, 16, 19, 22})
        EXPECT_NEAR(a.m(m), b.m(m), 1e-9) << "M" << m;
}

TEST(Metrics, CameraCompensatedPath)
{
    // the object stays put in the scene while the camera pans 3 px/frame
    TrackSet s;
    TransformTrack pans;
    for (FrameIndex f = 0; f < 40; ++f) {
        const double x = 100.0 + 3.0 * static_cast<double>(f);
        s.append({f, {{1, 1, BoundingBox(x, 10, x + 20, 30), false}}, {}});
        if (f > 0)
            pans[f] = CameraTransform::translation(3.0, 0.0);
    }
    const auto v = extract_metrics(s, video(40), {}, pans);
    EXPECT_NEAR(v.m(13), 3.0 * 39, 1e-9);
    EXPECT_NEAR(v.m(26), 0.0, 1e-9);
}

TEST(Metrics, Names)
{
    const auto& n = metric_names();
    EXPECT_EQ(n.size(), 34u);
    EXPECT_EQ(n.front().substr(0, 3), "M01");
    EXPECT_EQ(n.back().substr(0, 3), "M34");
    EXPECT_THROW(extract_metrics(TrackSet{}, video(0)), InputError);
}
