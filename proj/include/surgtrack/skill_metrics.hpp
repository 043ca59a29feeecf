#pragma once

// Time, motion and usage metrics computed from a video's tracks.
//
// The 34-entry catalogue is fixed (see metric_names()). Per-class slots use
// the first four ids of the class registry, in ascending id order.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "surgtrack/classes.hpp"
#include "surgtrack/descriptive.hpp"
#include "surgtrack/error.hpp"
#include "surgtrack/geometry.hpp"
#include "surgtrack/tracker.hpp"

namespace surgtrack {

struct VideoMeta {
    std::string video_id;
    double fps = 25.0;
    FrameIndex frame_count = 0;
    ClassRegistry classes = ClassRegistry::standard();

    void validate() const
    {
        if (!(fps > 0.0) || !std::isfinite(fps))
            throw InputError("video fps must be positive");
        if (frame_count <= 0)
            throw InputError("video must contain at least one frame");
    }
};

struct VisibilitySegment {
    ClassId class_id = 0;
    FrameIndex start_frame = 0;
    FrameIndex end_frame = 0;  // inclusive
    double duration_s = 0.0;

    FrameIndex frames() const { return end_frame - start_frame + 1; }
    bool operator==(const VisibilitySegment&) const = default;
};

struct MetricsConfig {
    int gap_tolerance = 12;     // frames bridged inside a segment (~0.5 s at 25 FPS)
    int smoothing_window = 5;   // centred moving average; 1 disables
};

inline constexpr std::size_t kMetricCount = 34;

inline const std::array<std::string, kMetricCount>& metric_names()
{
    static const std::array<std::string, kMetricCount> names{
        "M01_total_time_s",
        "M02_visible_time_s",
        "M03_total_to_visible_ratio",
        "M04_idle_time_s",
        "M05_visible_time_class1_s",
        "M06_visible_time_class2_s",
        "M07_visible_time_class3_s",
        "M08_visible_time_class4_s",
        "M09_mean_segment_duration_s",
        "M10_longest_idle_gap_s",
        "M11_median_segment_duration_s",
        "M12_idle_fraction",
        "M13_path_length_px",
        "M14_mean_speed_px_s",
        "M15_speed_std_px_s",
        "M16_mean_abs_acceleration_px_s2",
        "M17_mean_abs_jerk_px_s3",
        "M18_economy_of_motion",
        "M19_mean_speed_class1_px_s",
        "M20_mean_speed_class2_px_s",
        "M21_mean_speed_class3_px_s",
        "M22_mean_speed_class4_px_s",
        "M23_mean_box_area_px2",
        "M24_box_area_std_px2",
        "M25_mean_heading_change_rad_s",
        "M26_compensated_path_length_px",
        "M27_instrument_switches",
        "M28_switches_per_minute",
        "M29_insertions",
        "M30_segments_class1",
        "M31_segments_class2",
        "M32_segments_class3",
        "M33_segments_class4",
        "M34_distinct_classes",
    };
    return names;
}

struct SkillMetricVector {
    std::array<double, kMetricCount> values{};

    /// 1-based catalogue access: m(1) is M01.
    double m(int index) const { return values.at(static_cast<std::size_t>(index - 1)); }
    double& m(int index) { return values.at(static_cast<std::size_t>(index - 1)); }

    bool operator==(const SkillMetricVector&) const = default;
};

namespace detail {

/// Per frame, the class of the oldest confirmed track present, or background.
struct PresenceMap {
    std::vector<ClassId> cls;
    std::vector<const TrackRecord*> record;
    std::vector<const HistoryEntry*> entry;
};

inline PresenceMap presence(const TrackSet& tracks, FrameIndex frame_count)
{
    PresenceMap p;
    p.cls.assign(static_cast<std::size_t>(frame_count), kNoInstrument);
    p.record.assign(static_cast<std::size_t>(frame_count), nullptr);
    p.entry.assign(static_cast<std::size_t>(frame_count), nullptr);
    for (const auto& r : tracks.tracks) {  // ascending id: first writer wins
        for (const auto& h : r.history) {
            if (h.frame_index < 0 || h.frame_index >= frame_count)
                continue;
            const auto f = static_cast<std::size_t>(h.frame_index);
            if (p.record[f])
                continue;
            p.cls[f] = r.class_id;
            p.record[f] = &r;
            p.entry[f] = &h;
        }
    }
    return p;
}

struct Point {
    double x = 0.0, y = 0.0;
};

inline double dist(Point a, Point b) { return std::hypot(b.x - a.x, b.y - a.y); }

inline std::vector<Point> smooth(const std::vector<Point>& pts, int window)
{
    const int radius = std::max(0, (window - 1) / 2);
    const int n = static_cast<int>(pts.size());
    std::vector<Point> out(pts.size());
    for (int i = 0; i < n; ++i) {
        // symmetric window, shrinking near the ends
        const int r = std::min({radius, i, n - 1 - i});
        Point s;
        for (int k = i - r; k <= i + r; ++k) {
            s.x += pts[k].x;
            s.y += pts[k].y;
        }
        out[i] = {s.x / (2 * r + 1), s.y / (2 * r + 1)};
    }
    return out;
}

inline double wrap_angle(double a)
{
    while (a > std::numbers::pi)
        a -= 2.0 * std::numbers::pi;
    while (a <= -std::numbers::pi)
        a += 2.0 * std::numbers::pi;
    return a;
}

}  // namespace detail

/// Maximal runs of frames in which a confirmed track is present, per class.
/// Gaps of up to gap_tolerance frames inside a same-class run are bridged;
/// coasted frames count as present.
inline std::vector<VisibilitySegment> visibility_segments(const TrackSet& tracks, const VideoMeta& meta,
                                                          int gap_tolerance = 12)
{
    meta.validate();
    const auto p = detail::presence(tracks, meta.frame_count);
    std::vector<VisibilitySegment> segs;
    std::optional<VisibilitySegment> cur;
    auto close = [&] {
        if (cur) {
            cur->duration_s = static_cast<double>(cur->frames()) / meta.fps;
            segs.push_back(*cur);
            cur.reset();
        }
    };
    for (FrameIndex f = 0; f < meta.frame_count; ++f) {
        const ClassId c = p.cls[static_cast<std::size_t>(f)];
        if (c == kNoInstrument)
            continue;
        if (cur && cur->class_id == c && f - cur->end_frame - 1 <= gap_tolerance) {
            cur->end_frame = f;
            continue;
        }
        close();
        cur = VisibilitySegment{c, f, f, 0.0};
    }
    close();
    return segs;
}

struct Kinematics {
    std::vector<double> speed;         // px/s, one per consecutive pair
    std::vector<double> acceleration;  // |a| px/s^2
    std::vector<double> jerk;          // |j| px/s^3
    std::vector<double> heading_rate;  // |d heading / dt| rad/s where moving
};

/// Finite differences of the (smoothed) centroid path on the track's own
/// frame times. Velocities sit between samples, accelerations on samples,
/// jerks between samples again, so a history of N entries yields N-1, N-2
/// and N-3 values.
inline Kinematics kinematics(const TrackRecord& track, double fps, int smoothing_window = 5)
{
    Kinematics k;
    const auto& h = track.history;
    if (h.size() < 2)
        return k;
    std::vector<detail::Point> raw;
    for (const auto& e : h)
        raw.push_back({e.box.center_x(), e.box.center_y()});
    const auto pts = detail::smooth(raw, smoothing_window);

    std::vector<detail::Point> vel;
    std::vector<double> vt;  // time stamps of velocity samples
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double dt = static_cast<double>(h[i + 1].frame_index - h[i].frame_index) / fps;
        vel.push_back({(pts[i + 1].x - pts[i].x) / dt, (pts[i + 1].y - pts[i].y) / dt});
        vt.push_back((static_cast<double>(h[i].frame_index) + static_cast<double>(h[i + 1].frame_index)) / (2.0 * fps));
        k.speed.push_back(std::hypot(vel.back().x, vel.back().y));
    }

    std::vector<detail::Point> acc;
    std::vector<double> at;
    for (std::size_t i = 0; i + 1 < vel.size(); ++i) {
        const double dt = vt[i + 1] - vt[i];
        acc.push_back({(vel[i + 1].x - vel[i].x) / dt, (vel[i + 1].y - vel[i].y) / dt});
        at.push_back(0.5 * (vt[i] + vt[i + 1]));
        k.acceleration.push_back(std::hypot(acc.back().x, acc.back().y));

        constexpr double still = 1e-9;
        if (k.speed[i] > still && k.speed[i + 1] > still) {
            const double turn = detail::wrap_angle(std::atan2(vel[i + 1].y, vel[i + 1].x) - std::atan2(vel[i].y, vel[i].x));
            k.heading_rate.push_back(std::abs(turn) / dt);
        }
    }
    for (std::size_t i = 0; i + 1 < acc.size(); ++i) {
        const double dt = at[i + 1] - at[i];
        k.jerk.push_back(std::hypot((acc[i + 1].x - acc[i].x) / dt, (acc[i + 1].y - acc[i].y) / dt));
    }
    return k;
}

/// Camera motion accumulated per frame: transform[f] maps frame f-1 to f.
using TransformTrack = std::map<FrameIndex, CameraTransform>;

/// Sum of centroid step lengths after removing the camera-induced part of
/// each step. With no transforms this is the plain path length.
inline double compensated_path_length(const TrackRecord& track, int smoothing_window,
                                      const TransformTrack& transforms)
{
    const auto& h = track.history;
    if (h.size() < 2)
        return 0.0;
    std::vector<detail::Point> raw;
    for (const auto& e : h)
        raw.push_back({e.box.center_x(), e.box.center_y()});
    const auto pts = detail::smooth(raw, smoothing_window);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        detail::Point carried = pts[i];
        for (FrameIndex f = h[i].frame_index + 1; f <= h[i + 1].frame_index; ++f) {
            auto it = transforms.find(f);
            if (it != transforms.end()) {
                const auto [x, y] = it->second.apply(carried.x, carried.y);
                carried = {x, y};
            }
        }
        total += detail::dist(carried, pts[i + 1]);
    }
    return total;
}

inline SkillMetricVector extract_metrics(const TrackSet& tracks, const VideoMeta& meta, const MetricsConfig& cfg = {},
                                         const TransformTrack& transforms = {})
{
    meta.validate();
    SkillMetricVector v;
    const auto segs = visibility_segments(tracks, meta, cfg.gap_tolerance);
    const auto pres = detail::presence(tracks, meta.frame_count);

    std::vector<ClassId> slots = meta.classes.ids();
    slots.resize(4, -1);  // fewer than four registry classes leave empty slots
    auto slot_of = [&](ClassId c) -> int {
        for (int i = 0; i < 4; ++i)
            if (slots[i] == c)
                return i;
        return -1;
    };

    // --- time
    const double total = static_cast<double>(meta.frame_count) / meta.fps;
    FrameIndex visible_frames = 0;
    std::vector<double> durations;
    std::array<double, 4> class_time{};
    std::array<double, 4> class_segments{};
    for (const auto& s : segs) {
        visible_frames += s.frames();
        durations.push_back(s.duration_s);
        if (int k = slot_of(s.class_id); k >= 0) {
            class_time[k] += static_cast<double>(s.frames()) / meta.fps;
            class_segments[k] += 1.0;
        }
    }
    const double visible = static_cast<double>(visible_frames) / meta.fps;
    const double idle = static_cast<double>(meta.frame_count - visible_frames) / meta.fps;

    FrameIndex longest_idle = 0;
    {
        FrameIndex cursor = 0;
        for (const auto& s : segs) {
            longest_idle = std::max(longest_idle, s.start_frame - cursor);
            cursor = s.end_frame + 1;
        }
        longest_idle = std::max(longest_idle, meta.frame_count - cursor);
    }

    v.m(1) = total;
    v.m(2) = visible;
    v.m(3) = visible_frames > 0 ? total / visible : total * meta.fps;
    v.m(4) = idle;
    for (int k = 0; k < 4; ++k)
        v.m(5 + k) = class_time[k];
    v.m(9) = mean(durations);
    v.m(10) = static_cast<double>(longest_idle) / meta.fps;
    v.m(11) = median(durations);
    v.m(12) = idle / total;

    // --- motion
    std::vector<double> speeds, accels, jerks, headings, areas;
    std::array<std::vector<double>, 4> class_speeds;
    double path = 0.0, comp_path = 0.0;
    for (const auto& r : tracks.tracks) {
        const auto kin = kinematics(r, meta.fps, cfg.smoothing_window);
        speeds.insert(speeds.end(), kin.speed.begin(), kin.speed.end());
        accels.insert(accels.end(), kin.acceleration.begin(), kin.acceleration.end());
        jerks.insert(jerks.end(), kin.jerk.begin(), kin.jerk.end());
        headings.insert(headings.end(), kin.heading_rate.begin(), kin.heading_rate.end());
        if (int k = slot_of(r.class_id); k >= 0)
            class_speeds[k].insert(class_speeds[k].end(), kin.speed.begin(), kin.speed.end());
        path += compensated_path_length(r, cfg.smoothing_window, {});
        comp_path += compensated_path_length(r, cfg.smoothing_window, transforms);
        for (const auto& e : r.history)
            areas.push_back(e.box.area());
    }

    std::vector<double> economies;
    for (const auto& s : segs) {
        std::vector<detail::Point> pts;
        for (FrameIndex f = s.start_frame; f <= s.end_frame; ++f)
            if (const auto* e = pres.entry[static_cast<std::size_t>(f)])
                pts.push_back({e->box.center_x(), e->box.center_y()});
        double len = 0.0;
        for (std::size_t i = 1; i < pts.size(); ++i)
            len += detail::dist(pts[i - 1], pts[i]);
        economies.push_back(len > 0.0 ? detail::dist(pts.front(), pts.back()) / len : 1.0);
    }

    v.m(13) = path;
    v.m(14) = mean(speeds);
    v.m(15) = population_std(speeds);
    v.m(16) = mean(accels);
    v.m(17) = mean(jerks);
    v.m(18) = mean(economies);
    for (int k = 0; k < 4; ++k)
        v.m(19 + k) = mean(class_speeds[k]);
    v.m(23) = mean(areas);
    v.m(24) = population_std(areas);
    v.m(25) = mean(headings);
    v.m(26) = comp_path;

    // --- usage
    double switches = 0.0;
    for (std::size_t i = 1; i < segs.size(); ++i)
        if (segs[i].class_id != segs[i - 1].class_id)
            switches += 1.0;
    std::vector<ClassId> used;
    for (const auto& s : segs)
        if (std::find(used.begin(), used.end(), s.class_id) == used.end())
            used.push_back(s.class_id);

    v.m(27) = switches;
    v.m(28) = switches / (total / 60.0);
    v.m(29) = static_cast<double>(segs.size());
    for (int k = 0; k < 4; ++k)
        v.m(30 + k) = class_segments[k];
    v.m(34) = static_cast<double>(used.size());
    return v;
}

}  // namespace surgtrack
