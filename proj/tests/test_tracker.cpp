#include <gtest/gtest.h>

#include "surgtrack/mot_eval.hpp"
#include "surgtrack/synth.hpp"
#include "surgtrack/tracker.hpp"

using namespace surgtrack;

namespace {

TrackerConfig every_frame(Variant v)
{
    auto c = TrackerConfig::for_variant(v);
    c.detection_interval = 1;
    return c;
}

FrameInput single(FrameIndex f, const BoundingBox& b, ClassId cls = 1)
{
    return {f, {synth::make_detection(f, cls, b)}, std::nullopt};
}

}  // namespace

TEST(AppearanceCost, CosineDistances)
{
    const auto e0 = synth::axis_embedding(4, 0);
    const auto e1 = synth::axis_embedding(4, 1);
    Embedding neg(4, 0.0);
    neg[0] = -1.0;
    EXPECT_DOUBLE_EQ(cosine_distance(e0, e0), 0.0);
    EXPECT_DOUBLE_EQ(cosine_distance(e0, e1), 1.0);
    EXPECT_DOUBLE_EQ(cosine_distance(e0, neg), 2.0);
    EXPECT_THROW(cosine_distance(e0, synth::axis_embedding(3, 0)), InputError);
}

TEST(AppearanceCost, PerVariant)
{
    Track t;
    t.feature = synth::axis_embedding(4, 0);
    t.gallery = {synth::axis_embedding(4, 1), synth::axis_embedding(4, 2)};
    auto d = synth::make_detection(0, 1, BoundingBox(0, 0, 10, 10), 0.9, synth::axis_embedding(4, 2));

    EXPECT_FALSE(appearance_cost(t, d, TrackerConfig::for_variant(Variant::sort)));
    EXPECT_DOUBLE_EQ(*appearance_cost(t, d, TrackerConfig::for_variant(Variant::deepsort)), 0.0);
    EXPECT_DOUBLE_EQ(*appearance_cost(t, d, TrackerConfig::for_variant(Variant::strongsort)), 1.0);
}

TEST(EmaUpdate, Cases)
{
    const auto f = synth::axis_embedding(3, 0);
    const auto n = synth::axis_embedding(3, 1);
    EXPECT_EQ(ema_update(f, n, 1.0), f);
    const auto zero_alpha = ema_update(f, n, 0.0);
    EXPECT_NEAR(zero_alpha[1], 1.0, 1e-15);
    EXPECT_EQ(ema_update(f, f, 0.9), f);

    Embedding neg{-1.0, 0.0, 0.0};
    EXPECT_EQ(ema_update(f, neg, 0.5), f);  // zero resultant keeps previous

    const auto mixed = ema_update(f, n, 0.9);
    EXPECT_NEAR(mixed[0] * mixed[0] + mixed[1] * mixed[1], 1.0, 1e-12);
    EXPECT_GT(mixed[0], mixed[1]);
}

TEST(MotionCost, Cases)
{
    const auto cfg = TrackerConfig::for_variant(Variant::sort);
    Track t;
    t.kalman = kalman_init(BoundingBox(0, 0, 10, 10));
    const auto same = motion_cost(t, synth::make_detection(0, 1, BoundingBox(0, 0, 10, 10)), cfg);
    EXPECT_DOUBLE_EQ(same.cost, 0.0);
    EXPECT_FALSE(same.gated);

    const auto far = motion_cost(t, synth::make_detection(0, 1, BoundingBox(50, 50, 60, 60)), cfg);
    EXPECT_DOUBLE_EQ(far.cost, 1.0);
    EXPECT_TRUE(far.gated);

    t.kalman = kalman_init(BoundingBox(0, 0, 1, 1));
    auto loose = cfg;
    loose.gate_iou_min = 0.0;
    loose.gate_mahalanobis_max = 1e9;
    const auto third = motion_cost(t, synth::make_detection(0, 1, BoundingBox(0.5, 0, 1.5, 1)), loose);
    EXPECT_NEAR(third.cost, 2.0 / 3.0, 1e-12);
}

TEST(Tracker, SingleDetectionStaysTentative)
{
    Tracker tr(every_frame(Variant::sort));
    const auto in = single(0, BoundingBox(10, 10, 50, 90));
    const auto out = tr.step(0, in.detections);
    EXPECT_TRUE(out.tracks.empty());
    ASSERT_EQ(tr.live_tracks().size(), 1u);
    EXPECT_EQ(tr.live_tracks()[0].status, TrackStatus::tentative);
}

TEST(Tracker, ConfirmsAfterNInitHits)
{
    Tracker tr(every_frame(Variant::sort));
    const BoundingBox b(10, 10, 50, 90);
    for (FrameIndex f = 0; f < 10; ++f) {
        const auto in = single(f, b);
        const auto out = tr.step(f, in.detections);
        if (f < 3) {
            EXPECT_TRUE(out.tracks.empty()) << "frame " << f;
        } else {
            ASSERT_EQ(out.tracks.size(), 1u) << "frame " << f;
            EXPECT_EQ(out.tracks[0].track_id, 1);
            EXPECT_FALSE(out.tracks[0].was_coasted);
        }
    }
}

TEST(Tracker, CoastsThenDeletesAfterMaxAge)
{
    Tracker tr(every_frame(Variant::sort));
    const BoundingBox b(10, 10, 50, 90);
    for (FrameIndex f = 0; f <= 45; ++f) {
        const auto in = f < 10 ? single(f, b) : FrameInput{f, {}, std::nullopt};
        const auto out = tr.step(f, in.detections);
        if (f >= 3 && f < 10) {
            ASSERT_EQ(out.tracks.size(), 1u);
            EXPECT_FALSE(out.tracks[0].was_coasted);
        } else if (f >= 10 && f < 40) {
            ASSERT_EQ(out.tracks.size(), 1u) << "frame " << f;
            EXPECT_TRUE(out.tracks[0].was_coasted);
        } else if (f >= 40) {
            EXPECT_TRUE(out.tracks.empty()) << "frame " << f;
        }
    }
    EXPECT_TRUE(tr.live_tracks().empty());
}

TEST(Tracker, DetectionIntervalCoastsBetweenDetectorFrames)
{
    auto cfg = TrackerConfig::for_variant(Variant::sort);
    cfg.detection_interval = 5;
    cfg.n_init = 1;
    Tracker tr(cfg);
    const BoundingBox b(10, 10, 50, 90);
    std::vector<bool> coasted;
    for (FrameIndex f = 0; f < 15; ++f) {
        const auto in = single(f, b);
        const auto out = tr.step(f, in.detections);
        if (!out.tracks.empty())
            coasted.push_back(out.tracks[0].was_coasted);
    }
    // confirmed at frame 5, then detector frames 5 and 10 are measured
    ASSERT_EQ(coasted.size(), 10u);
    for (std::size_t i = 0; i < coasted.size(); ++i)
        EXPECT_EQ(coasted[i], i % 5 != 0) << i;
}

TEST(Tracker, RejectsOutOfOrderAndUnknownClass)
{
    Tracker tr(every_frame(Variant::sort));
    tr.step(3, {});
    EXPECT_THROW(tr.step(3, {}), InvariantError);
    EXPECT_THROW(tr.step(2, {}), InvariantError);
    const auto bad = single(4, BoundingBox(0, 0, 5, 5), 99);
    EXPECT_THROW(tr.step(4, bad.detections), InvariantError);
}

TEST(Tracker, RejectsBadEmbeddings)
{
    Tracker tr(every_frame(Variant::strongsort));
    auto d = synth::make_detection(0, 1, BoundingBox(0, 0, 5, 5), 0.9, Embedding{0.5, 0.5});
    EXPECT_THROW(tr.step(0, std::vector{d}), InputError);

    Tracker tr2(every_frame(Variant::strongsort));
    tr2.step(0, std::vector{synth::make_detection(0, 1, BoundingBox(0, 0, 5, 5), 0.9, synth::axis_embedding(4, 0))});
    EXPECT_THROW(tr2.step(1, std::vector{synth::make_detection(1, 1, BoundingBox(0, 0, 5, 5), 0.9,
                                                                synth::axis_embedding(3, 0))}),
                 InputError);
}

TEST(Tracker, MissingFramesArePredictedThrough)
{
    Tracker tr(every_frame(Variant::sort));
    for (FrameIndex f = 0; f < 5; ++f)
        tr.step(f, single(f, BoundingBox(10, 10, 50, 90)).detections);
    const auto out = tr.step(9, {});
    ASSERT_EQ(out.tracks.size(), 1u);
    EXPECT_EQ(tr.live_tracks()[0].time_since_update, 5);
}

TEST(Run, EmptyStream)
{
    const auto set = run(TrackerConfig{}, std::span<const FrameInput>{});
    EXPECT_TRUE(set.tracks.empty());
    EXPECT_TRUE(set.frames.empty());
}

TEST(Run, TwoStationaryObjects)
{
    const auto sc = synth::stationary_scene(2, 40);
    for (auto v : {Variant::sort, Variant::deepsort, Variant::strongsort}) {
        const auto set = run(TrackerConfig::for_variant(v), sc.frames);
        EXPECT_EQ(set.tracks.size(), 2u) << to_string(v);
        const auto counts = clear_mot(set, sc.truth);
        EXPECT_EQ(counts.id_switches, 0) << to_string(v);
    }
}

TEST(Run, MatchesSteppedOutputs)
{
    const auto sc = synth::wandering_objects({.objects = 3, .frames = 200, .seed = 5});
    const auto cfg = TrackerConfig::for_variant(Variant::strongsort);
    const auto batch = run(cfg, sc.frames);
    Tracker tr(cfg);
    TrackSet stepped;
    for (const auto& f : sc.frames)
        stepped.append(tr.step(f.frame_index, f.detections, f.transform));
    EXPECT_EQ(batch, stepped);
}

TEST(Run, Deterministic)
{
    const auto sc = synth::wandering_objects({.objects = 4, .frames = 300, .seed = 9});
    const auto cfg = TrackerConfig::for_variant(Variant::deepsort);
    EXPECT_EQ(run(cfg, sc.frames), run(cfg, sc.frames));
}

TEST(Run, HistoriesStrictlyIncreasing)
{
    const auto sc = synth::wandering_objects({.objects = 4, .frames = 300, .seed = 2});
    const auto set = run(TrackerConfig{}, sc.frames);
    for (const auto& t : set.tracks)
        for (std::size_t i = 1; i < t.history.size(); ++i)
            EXPECT_LT(t.history[i - 1].frame_index, t.history[i].frame_index);
}

TEST(Run, SortIgnoresEmbeddings)
{
    auto sc = synth::wandering_objects({.objects = 4, .frames = 200, .seed = 4});
    const auto cfg = TrackerConfig::for_variant(Variant::sort);
    const auto with = run(cfg, sc.frames);
    for (auto& f : sc.frames)
        for (auto& d : f.detections)
            d.embedding.reset();
    EXPECT_EQ(run(cfg, sc.frames), with);
}

TEST(Run, CrossingObjectsNeedAppearance)
{
    auto strong = every_frame(Variant::strongsort);
    auto motion_only = strong;
    motion_only.appearance_weight = 0.0;

    const auto distinct = synth::crossing_objects({});
    EXPECT_EQ(clear_mot(run(strong, distinct.frames), distinct.truth).id_switches, 0);
    EXPECT_GE(clear_mot(run(motion_only, distinct.frames), distinct.truth).id_switches, 1);

    const auto identical = synth::crossing_objects({.distinct_embeddings = false});
    EXPECT_GE(clear_mot(run(strong, identical.frames), identical.truth).id_switches, 1);
}
