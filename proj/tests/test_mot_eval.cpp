#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "surgtrack/mot_eval.hpp"
#include "surgtrack/synth.hpp"

#ifndef SURGTRACK_TEST_DATA
#error "SURGTRACK_TEST_DATA must point at tests/data"
#endif

using namespace surgtrack;
using nlohmann::json;

namespace {

BoundingBox box_of(const json& j) { return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()}; }

struct Golden {
    TrackSet predictions;
    std::vector<GroundTruthFrame> gt;
    json expected;
};

Golden load_golden()
{
    std::ifstream in(std::string(SURGTRACK_TEST_DATA) + "/mot_golden.json");
    const auto j = json::parse(in);
    Golden g;
    std::vector<GroundTruthFrame> annotated;
    for (const auto& a : j["ground_truth"]) {
        GroundTruthFrame f;
        f.frame_index = a["frame"];
        f.class_id = a["class"].get<int>();
        f.box = box_of(a["box"]);
        annotated.push_back(f);
    }
    g.gt = forward_fill_gt(make_gt_sequence(annotated, j["frames"]));
    std::map<FrameIndex, FrameOutput> frames;
    for (FrameIndex f = 0; f < j["frames"].get<FrameIndex>(); ++f)
        frames[f].frame_index = f;
    for (const auto& p : j["predictions"])
        frames[p["frame"]].tracks.push_back({p["track_id"], p["class"], box_of(p["box"]), false});
    for (const auto& [f, out] : frames)
        g.predictions.append(out);
    g.expected = j["expected"];
    return g;
}

GroundTruthFrame annotated_frame(FrameIndex f, ClassId c, std::optional<BoundingBox> b = std::nullopt)
{
    GroundTruthFrame g;
    g.frame_index = f;
    g.class_id = c;
    g.box = b;
    g.annotated = true;
    return g;
}

TrackSet single_track(FrameIndex frames, ClassId cls, const BoundingBox& b, TrackId id = 1)
{
    TrackSet s;
    for (FrameIndex f = 0; f < frames; ++f)
        s.append({f, {{id, cls, b, false}}, {}});
    return s;
}

}  // namespace

TEST(MotGolden, FrozenFixture)
{
    const auto g = load_golden();
    const auto r = evaluate_mot(g.predictions, g.gt);
    EXPECT_EQ(r.counts.false_negatives, g.expected["fn"].get<long>());
    EXPECT_EQ(r.counts.false_positives, g.expected["fp"].get<long>());
    EXPECT_EQ(r.counts.id_switches, g.expected["idsw"].get<long>());
    ASSERT_TRUE(r.mota && r.motp);
    EXPECT_EQ(*r.mota, g.expected["mota"].get<double>());
    EXPECT_EQ(*r.motp, g.expected["motp"].get<double>());
}

TEST(ForwardFill, ThreeAnnotations)
{
    const std::vector<GroundTruthFrame> ann{annotated_frame(5, 1, BoundingBox(0, 0, 10, 10)),
                                            annotated_frame(10, kNoInstrument),
                                            annotated_frame(20, 3, BoundingBox(0, 0, 10, 10))};
    const auto filled = forward_fill_gt(make_gt_sequence(ann, 30));
    ASSERT_EQ(filled.size(), 30u);
    for (const auto& f : filled) {
        const ClassId want = f.frame_index < 5 ? 0 : f.frame_index < 10 ? 1 : f.frame_index < 20 ? 0 : 3;
        EXPECT_EQ(f.class_id, want) << f.frame_index;
        EXPECT_EQ(f.annotated, f.frame_index == 5 || f.frame_index == 10 || f.frame_index == 20);
        if (!f.annotated) {
            EXPECT_FALSE(f.box);
            EXPECT_FALSE(f.mask);
        }
    }
    EXPECT_EQ(forward_fill_gt(filled), filled);
}

TEST(ForwardFill, SpecCases)
{
    const auto two = forward_fill_gt(make_gt_sequence(
        std::vector{annotated_frame(0, 1, BoundingBox(0, 0, 1, 1)), annotated_frame(25, 2, BoundingBox(0, 0, 1, 1))}, 40));
    for (const auto& f : two)
        EXPECT_EQ(*f.class_id, f.frame_index < 25 ? 1 : 2);

    const auto one = forward_fill_gt(make_gt_sequence(std::vector{annotated_frame(3, 4, BoundingBox(0, 0, 1, 1))}, 10));
    for (const auto& f : one)
        EXPECT_EQ(*f.class_id, f.frame_index < 3 ? 0 : 4);

    std::vector<GroundTruthFrame> all;
    for (FrameIndex f = 0; f < 5; ++f)
        all.push_back(annotated_frame(f, 1 + f % 4, BoundingBox(0, 0, 1, 1)));
    EXPECT_EQ(forward_fill_gt(all), all);
}

TEST(ForwardFill, Rejects)
{
    EXPECT_THROW(forward_fill_gt(std::vector<GroundTruthFrame>{}), InputError);
    EXPECT_THROW(forward_fill_gt(make_gt_sequence({}, 5)), InputError);
    EXPECT_THROW(make_gt_sequence(std::vector{annotated_frame(7, 1)}, 5), InputError);
}

TEST(Mota, SpecExamples)
{
    const BoundingBox b(0, 0, 10, 10);
    std::vector<GroundTruthFrame> ann;
    for (FrameIndex f = 0; f < 10; ++f)
        ann.push_back(annotated_frame(f, 1, b));
    const auto gt = forward_fill_gt(ann);
    EXPECT_EQ(*mota(single_track(10, 1, b), gt), 100.0);
    EXPECT_EQ(*motp(single_track(10, 1, b), gt), 100.0);

    TrackSet nothing;
    for (FrameIndex f = 0; f < 10; ++f)
        nothing.append({f, {}, {}});
    EXPECT_EQ(*mota(nothing, gt), 0.0);
    EXPECT_FALSE(motp(nothing, gt));

    auto unfilled = make_gt_sequence(std::vector{annotated_frame(2, 1, b)}, 5);
    EXPECT_THROW(mota(nothing, unfilled), InputError);
}

TEST(Mota, FilledFramesUseClassificationOnly)
{
    const BoundingBox b(0, 0, 10, 10);
    const auto gt = forward_fill_gt(make_gt_sequence(std::vector{annotated_frame(0, 1, b)}, 10));
    // a far-away box of the right class still matches on filled frames
    TrackSet s;
    s.append({0, {{1, 1, b, false}}, {}});
    for (FrameIndex f = 1; f < 10; ++f)
        s.append({f, {{1 + f, 1, BoundingBox(500, 500, 510, 510), false}}, {}});
    const auto r = evaluate_mot(s, gt);
    EXPECT_EQ(r.counts.matches, 10);
    EXPECT_EQ(r.counts.id_switches, 0);
    EXPECT_EQ(*r.mota, 100.0);

    TrackSet wrong_class;
    wrong_class.append({0, {{1, 1, b, false}}, {}});
    for (FrameIndex f = 1; f < 10; ++f)
        wrong_class.append({f, {{2, 2, b, false}}, {}});
    const auto w = evaluate_mot(wrong_class, gt);
    EXPECT_EQ(w.counts.false_negatives, 9);
    EXPECT_EQ(w.counts.false_positives, 9);
}

TEST(Mota, MonotoneUnderInjectedFalsePositives)
{
    const auto g = load_golden();
    double prev = *mota(g.predictions, g.gt);
    TrackSet s = g.predictions;
    for (int k = 0; k < 10; ++k) {
        auto frames = s.by_frame();
        TrackSet next;
        for (auto& [f, outs] : frames) {
            if (f == k)
                outs.push_back({100 + k, 3, BoundingBox(0, 0, 5, 5), false});
            next.append({f, outs, {}});
        }
        s = next;
        const double now = *mota(s, g.gt);
        EXPECT_LE(now, prev);
        prev = now;
    }
}

TEST(Motp, UnannotatedFramesDoNotChangeIt)
{
    const auto g = load_golden();
    const double base = *motp(g.predictions, g.gt);

    // stretch the video: extra unannotated frames after the last annotation
    std::vector<GroundTruthFrame> ann;
    for (const auto& f : g.gt)
        ann.push_back(f);
    auto longer = forward_fill_gt(make_gt_sequence(ann, 25));
    TrackSet more = g.predictions;
    for (FrameIndex f = 10; f < 25; ++f)
        more.append({f, {{7, 2, BoundingBox(0, 0, 3, 3), false}}, {}});
    EXPECT_EQ(*motp(more, longer), base);
}

TEST(Motp, MatchesFromMasks)
{
    // box derived from the mask when only a mask is supplied
    Bitmap bm(20, 20);
    for (int y = 2; y < 12; ++y)
        for (int x = 4; x < 14; ++x)
            bm.at(x, y) = 1;
    GroundTruthFrame g = annotated_frame(0, 1);
    g.mask = rle_encode(bm);
    const auto r = evaluate_mot(single_track(1, 1, BoundingBox(4, 2, 14, 12)), std::vector{g});
    EXPECT_EQ(*r.motp, 100.0);
}

TEST(ClearMot, Counts)
{
    const auto sc = synth::stationary_scene(2, 5);
    TrackSet s;
    for (FrameIndex f = 0; f < 5; ++f) {
        std::vector<TrackOutput> outs;
        for (const auto& o : sc.truth) {
            const TrackId id = (o.object_id == 0 && f >= 3) ? 9 : o.object_id + 1;
            outs.push_back({id, o.class_id, o.boxes[f].second, false});
        }
        if (f == 1)
            outs.pop_back();
        s.append({f, outs, {}});
    }
    const auto c = clear_mot(s, sc.truth);
    EXPECT_EQ(c.gt_count, 10);
    EXPECT_EQ(c.matches, 9);
    EXPECT_EQ(c.false_negatives, 1);
    EXPECT_EQ(c.false_positives, 0);
    EXPECT_EQ(c.id_switches, 1);
}

namespace {

MaskRLE rect_mask(int w, int h, int x0, int y0, int x1, int y1)
{
    Bitmap bm(w, h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            bm.at(x, y) = 1;
    return rle_encode(bm);
}

GroundTruthFrame seg_gt(FrameIndex f, ClassId c, MaskRLE m)
{
    auto g = annotated_frame(f, c);
    g.mask = std::move(m);
    return g;
}

}  // namespace

TEST(Miou, Perfect)
{
    std::vector<GroundTruthFrame> gt;
    std::vector<SegmentationFrame> pred;
    for (FrameIndex f = 0; f < 8; ++f) {
        const auto c = static_cast<ClassId>(1 + f % 4);
        const auto m = rect_mask(16, 16, 2, 2, 8 + f, 10);
        gt.push_back(seg_gt(f, c, m));
        pred.push_back({f, c, m});
    }
    const auto r = miou(pred, gt, ClassRegistry::standard());
    for (ClassId c = 1; c <= 4; ++c)
        EXPECT_EQ(r.per_class.at(c), 100.0);
    EXPECT_EQ(*r.all_instruments, 100.0);
    EXPECT_EQ(*r.background, 100.0);
}

TEST(Miou, HalfOverlap)
{
    std::vector<GroundTruthFrame> gt;
    std::vector<SegmentationFrame> pred;
    for (FrameIndex f = 0; f < 5; ++f) {
        gt.push_back(seg_gt(f, 2, rect_mask(20, 20, 0, 0, 10, 10)));
        pred.push_back({f, 2, rect_mask(20, 20, 0, 0, 10, 20)});
    }
    const auto r = miou(pred, gt, ClassRegistry::standard());
    EXPECT_EQ(r.per_class.at(2), 50.0);
    EXPECT_EQ(r.per_class.size(), 1u);
}

TEST(Miou, MisclassifiedScoresZero)
{
    std::vector<GroundTruthFrame> gt;
    std::vector<SegmentationFrame> pred;
    for (FrameIndex f = 0; f < 4; ++f) {
        const auto m = rect_mask(10, 10, 1, 1, 6, 6);
        gt.push_back(seg_gt(f, static_cast<ClassId>(1 + f % 4), m));
        pred.push_back({f, static_cast<ClassId>(1 + (f + 1) % 4), m});
    }
    const auto r = miou(pred, gt, ClassRegistry::standard());
    for (ClassId c = 1; c <= 4; ++c) {
        EXPECT_EQ(r.per_class.at(c), 0.0);
        EXPECT_EQ(r.frames_per_class.at(c), 2);
    }
    EXPECT_EQ(*r.all_instruments, 0.0);
}

TEST(Miou, NoInstrumentAndMismatch)
{
    // empty prediction on an empty ground-truth frame is a perfect background
    std::vector<GroundTruthFrame> gt{annotated_frame(0, kNoInstrument)};
    const auto r = miou(std::vector<SegmentationFrame>{}, gt, ClassRegistry::standard());
    EXPECT_TRUE(r.per_class.empty());
    EXPECT_FALSE(r.all_instruments);
    EXPECT_EQ(*r.background, 100.0);

    std::vector<GroundTruthFrame> g2{seg_gt(0, 1, rect_mask(10, 10, 0, 0, 3, 3))};
    std::vector<SegmentationFrame> p2{{0, 1, rect_mask(12, 10, 0, 0, 3, 3)}};
    EXPECT_THROW(miou(p2, g2, ClassRegistry::standard()), InputError);
}

TEST(Fps, FakeClock)
{
    const auto sc = synth::stationary_scene(2, 250);
    double t = 0.0;
    bool start = true;
    auto clock = [&] {
        if (!start)
            t += 0.04;
        start = !start;
        return t;
    };
    const auto r = fps_benchmark(TrackerConfig{}, sc.frames, clock);
    EXPECT_EQ(r.frames, 250u);
    EXPECT_NEAR(r.total_seconds, 10.0, 1e-9);
    EXPECT_NEAR(r.fps_mean, 25.0, 1e-9);
    EXPECT_NEAR(r.fps_std, 0.0, 1e-6);
    EXPECT_NEAR(r.latency_p99_ms, 40.0, 1e-9);
    EXPECT_THROW(fps_benchmark(TrackerConfig{}, std::span<const FrameInput>{}), InputError);
}

TEST(Fps, Percentiles)
{
    std::vector<double> lat;
    for (int i = 1; i <= 100; ++i)
        lat.push_back(i * 1e-3);
    const auto r = summarize_latencies(lat);
    EXPECT_NEAR(r.latency_p50_ms, 50.0, 1e-9);
    EXPECT_NEAR(r.latency_p95_ms, 95.0, 1e-9);
    EXPECT_NEAR(r.latency_p99_ms, 99.0, 1e-9);
    EXPECT_NEAR(r.latency_max_ms, 100.0, 1e-9);
}
