#pragma once

// Line-delimited JSON for detections and tracks, the tracker config file, and
// the provenance header carried by every output.

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "surgtrack/error.hpp"
#include "surgtrack/geometry.hpp"
#include "surgtrack/tracker.hpp"

namespace surgtrack::io {

using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Digests

inline std::string sha256_hex(std::string_view data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw InvariantError("sha256 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Provenance {
    std::string command;
    std::string config_sha256;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> inputs;  // name, sha256 (empty for unseekable input)

    json to_json() const
    {
        json in = json::array();
        for (const auto& [name, digest] : inputs)
            in.push_back({{"name", name}, {"sha256", digest.empty() ? json(nullptr) : json(digest)}});
        return {{"tool", "surgtrack"}, {"version", kToolVersion}, {"command", command},
                {"config_sha256", config_sha256}, {"seed", seed}, {"inputs", in}};
    }

    static Provenance from_json(const json& j)
    {
        Provenance p;
        p.command = j.value("command", "");
        p.config_sha256 = j.value("config_sha256", "");
        p.seed = j.value("seed", std::uint64_t{0});
        for (const auto& i : j.value("inputs", json::array()))
            p.inputs.emplace_back(i.value("name", ""), i["sha256"].is_null() ? "" : i["sha256"].get<std::string>());
        return p;
    }
};

// ---------------------------------------------------------------------------
// Config

inline json to_json(const TrackerConfig& c)
{
    json classes = json::object();
    for (auto id : c.classes.ids())
        classes[std::to_string(id)] = c.classes.name_of(id);
    return {{"variant", to_string(c.variant)},
            {"detection_interval", c.detection_interval},
            {"max_age", c.max_age},
            {"n_init", c.n_init},
            {"gate_iou_min", c.gate_iou_min},
            {"gate_mahalanobis_max", c.gate_mahalanobis_max},
            {"appearance_weight", c.appearance_weight},
            {"ema_alpha", c.ema_alpha},
            {"gallery_size", c.gallery_size},
            {"confidence_noise_scaling", c.confidence_noise_scaling},
            {"motion_compensation", c.motion_compensation},
            {"seed", c.seed},
            {"classes", classes}};
}

/// Variant defaults first, then any explicitly given field.
inline TrackerConfig tracker_config_from_json(const json& j)
{
    if (!j.is_object())
        throw InputError("tracker config must be a JSON object");
    static const std::vector<std::string> known{"variant", "detection_interval", "max_age", "n_init",
                                                "gate_iou_min", "gate_mahalanobis_max", "appearance_weight",
                                                "ema_alpha", "gallery_size", "confidence_noise_scaling",
                                                "motion_compensation", "seed", "classes"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw InputError("unknown tracker config key '" + k + "'");
    try {
        TrackerConfig c = TrackerConfig::for_variant(parse_variant(j.value("variant", std::string("strongsort"))));
        auto set = [&](const char* key, auto& field) {
            if (j.contains(key))
                field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        set("detection_interval", c.detection_interval);
        set("max_age", c.max_age);
        set("n_init", c.n_init);
        set("gate_iou_min", c.gate_iou_min);
        set("gate_mahalanobis_max", c.gate_mahalanobis_max);
        set("appearance_weight", c.appearance_weight);
        set("ema_alpha", c.ema_alpha);
        set("gallery_size", c.gallery_size);
        set("confidence_noise_scaling", c.confidence_noise_scaling);
        set("motion_compensation", c.motion_compensation);
        set("seed", c.seed);
        if (j.contains("classes")) {
            std::map<ClassId, std::string> names;
            for (const auto& [k, v] : j.at("classes").items())
                names[std::stoi(k)] = v.get<std::string>();
            c.classes = ClassRegistry(names);
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw InputError(std::string("tracker config: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw InputError("tracker config: class ids must be integers");
    }
}

inline std::string config_digest(const TrackerConfig& c) { return sha256_hex(to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Detections

/// One parsed input line: a detection, or a bare frame marker (no class/box)
/// that declares a frame, possibly empty, and may carry the camera transform.
struct DetectionLine {
    std::string video_id;
    FrameIndex frame = 0;
    std::optional<Detection> detection;
    std::optional<CameraTransform> transform;
};

inline BoundingBox box_from_json(const json& b)
{
    if (!b.is_array() || b.size() != 4)
        throw InputError("box must be [left, top, right, bottom]");
    return {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
}

inline json box_to_json(const BoundingBox& b) { return json::array({b.left(), b.top(), b.right(), b.bottom()}); }

inline DetectionLine parse_detection_line(std::string_view line, std::size_t line_no)
{
    const std::string where = "line " + std::to_string(line_no) + ": ";
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw InputError(where + "invalid JSON (" + e.what() + ")");
    }
    try {
        if (!j.is_object())
            throw InputError("expected a JSON object");
        DetectionLine d;
        d.video_id = j.value("video_id", std::string());
        if (!j.contains("frame"))
            throw InputError("missing 'frame'");
        d.frame = j.at("frame").get<FrameIndex>();
        if (d.frame < 0)
            throw InputError("frame must be non-negative");
        if (j.contains("transform") && !j.at("transform").is_null()) {
            const auto& t = j.at("transform");
            if (!t.is_array() || t.size() != 6)
                throw InputError("transform must be [a, b, c, d, tx, ty]");
            d.transform = CameraTransform(t[0].get<double>(), t[1].get<double>(), t[2].get<double>(),
                                          t[3].get<double>(), t[4].get<double>(), t[5].get<double>());
        }
        const bool has_class = j.contains("class"), has_box = j.contains("box");
        if (has_class != has_box)
            throw InputError("a detection needs both 'class' and 'box'");
        if (has_class) {
            Detection det;
            det.frame_index = d.frame;
            det.class_id = j.at("class").get<ClassId>();
            det.box = box_from_json(j.at("box"));
            det.confidence = j.value("score", 1.0);
            if (!(det.confidence >= 0.0 && det.confidence <= 1.0))
                throw InputError("score must lie in [0, 1]");
            if (j.contains("mask_rle") && !j.at("mask_rle").is_null()) {
                const auto& m = j.at("mask_rle");
                const auto size = m.at("size");
                det.mask = MaskRLE(size.at(1).get<int>(), size.at(0).get<int>(),
                                   m.at("counts").get<std::vector<std::uint32_t>>());
            }
            if (j.contains("embedding") && !j.at("embedding").is_null())
                det.embedding = j.at("embedding").get<Embedding>();
            d.detection = std::move(det);
        }
        return d;
    } catch (const InputError& e) {
        throw InputError(where + e.what());
    } catch (const json::exception& e) {
        throw InputError(where + "schema violation (" + e.what() + ")");
    }
}

inline json detection_to_json(const std::string& video_id, const Detection& d)
{
    json j{{"video_id", video_id}, {"frame", d.frame_index}, {"class", d.class_id},
           {"score", d.confidence}, {"box", box_to_json(d.box)}};
    if (d.mask)
        j["mask_rle"] = {{"size", {d.mask->height(), d.mask->width()}}, {"counts", d.mask->counts()}};
    if (d.embedding)
        j["embedding"] = *d.embedding;
    return j;
}

/// Every frame is written: a marker line carries the transform (if any) and
/// keeps empty frames visible, followed by one line per detection.
inline void write_detections(std::ostream& out, const std::string& video_id, std::span<const FrameInput> frames)
{
    for (const auto& f : frames) {
        json marker{{"video_id", video_id}, {"frame", f.frame_index}};
        if (f.transform) {
            const auto m = f.transform->row_major();
            marker["transform"] = json::array({m[0], m[1], m[2], m[3], m[4], m[5]});
        }
        out << marker.dump() << '\n';
        for (const auto& d : f.detections)
            out << detection_to_json(video_id, d).dump() << '\n';
    }
}

struct DetectionFile {
    std::string video_id;
    std::vector<FrameInput> frames;
    std::size_t skipped_lines = 0;
    std::vector<std::string> warnings;
};

/// Groups lines into frames. Malformed lines are skipped and counted when
/// `skip_malformed`, otherwise rejected; a frame going backwards is an
/// invariant violation either way.
class DetectionAssembler {
public:
    explicit DetectionAssembler(bool skip_malformed) : skip_(skip_malformed) {}

    /// Feeds one line; returns frames completed by it.
    std::vector<FrameInput> feed(std::string_view line)
    {
        ++line_no_;
        std::vector<FrameInput> done;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos)
            return done;
        DetectionLine d;
        try {
            d = parse_detection_line(line, line_no_);
        } catch (const InputError& e) {
            if (!skip_)
                throw;
            ++skipped_;
            warnings_.push_back(e.what());
            return done;
        }
        if (video_id_.empty())
            video_id_ = d.video_id;
        else if (!d.video_id.empty() && d.video_id != video_id_) {
            const std::string msg = "line " + std::to_string(line_no_) + ": video_id '" + d.video_id +
                                    "' differs from '" + video_id_ + "'";
            if (!skip_)
                throw InputError(msg);
            ++skipped_;
            warnings_.push_back(msg);
            return done;
        }
        if (current_ && d.frame < current_->frame_index)
            throw InvariantError("line " + std::to_string(line_no_) + ": frame " + std::to_string(d.frame) +
                                 " arrives after frame " + std::to_string(current_->frame_index));
        if (current_ && d.frame > current_->frame_index) {
            done.push_back(std::move(*current_));
            current_.reset();
        }
        if (!current_)
            current_ = FrameInput{d.frame, {}, std::nullopt};
        if (d.transform)
            current_->transform = d.transform;
        if (d.detection)
            current_->detections.push_back(std::move(*d.detection));
        return done;
    }

    std::optional<FrameInput> finish()
    {
        auto out = std::move(current_);
        current_.reset();
        return out;
    }

    bool has_open_frame() const { return current_.has_value(); }
    const std::string& video_id() const { return video_id_; }
    std::size_t skipped() const { return skipped_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    bool skip_;
    std::size_t line_no_ = 0;
    std::size_t skipped_ = 0;
    std::string video_id_;
    std::optional<FrameInput> current_;
    std::vector<std::string> warnings_;
};

inline DetectionFile read_detections(std::istream& in, bool skip_malformed = false)
{
    DetectionAssembler a(skip_malformed);
    DetectionFile f;
    std::string line;
    while (std::getline(in, line))
        for (auto& fr : a.feed(line))
            f.frames.push_back(std::move(fr));
    if (auto last = a.finish())
        f.frames.push_back(std::move(*last));
    f.video_id = a.video_id();
    f.skipped_lines = a.skipped();
    f.warnings = a.warnings();
    return f;
}

// ---------------------------------------------------------------------------
// Tracks

struct TrackFileHeader {
    std::string video_id;
    Provenance provenance;
    json config;
};

inline std::string track_header_line(const TrackFileHeader& h)
{
    return json{{"type", "header"}, {"video_id", h.video_id}, {"provenance", h.provenance.to_json()},
                {"config", h.config}}
        .dump();
}

inline std::string track_frame_line(FrameIndex frame, std::span<const TrackOutput> tracks)
{
    json arr = json::array();
    for (const auto& t : tracks)
        arr.push_back({{"id", t.track_id}, {"class", t.class_id}, {"box", box_to_json(t.box)}, {"coasted", t.was_coasted}});
    return json{{"frame", frame}, {"tracks", arr}}.dump();
}

inline void write_tracks(std::ostream& out, const TrackFileHeader& h, const TrackSet& set)
{
    out << track_header_line(h) << '\n';
    const auto by_frame = set.by_frame();
    for (auto f : set.frames)
        out << track_frame_line(f, by_frame.at(f)) << '\n';
}

struct TrackFile {
    TrackFileHeader header;
    TrackSet tracks;
};

inline TrackFile read_tracks(std::istream& in)
{
    TrackFile tf;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        try {
            const auto j = json::parse(line);
            if (j.value("type", "") == "header") {
                if (header_seen || line_no != 1)
                    throw InputError("header must be the first line and appear once");
                header_seen = true;
                tf.header.video_id = j.value("video_id", "");
                tf.header.provenance = Provenance::from_json(j.value("provenance", json::object()));
                tf.header.config = j.value("config", json::object());
                continue;
            }
            FrameOutput out;
            out.frame_index = j.at("frame").get<FrameIndex>();
            for (const auto& t : j.at("tracks"))
                out.tracks.push_back({t.at("id").get<TrackId>(), t.at("class").get<ClassId>(), box_from_json(t.at("box")),
                                      t.value("coasted", false)});
            tf.tracks.append(out);
        } catch (const json::exception& e) {
            throw InputError(where + "invalid track line (" + e.what() + ")");
        } catch (const InputError& e) {
            throw InputError(where + e.what());
        } catch (const InvariantError& e) {
            throw InvariantError(where + e.what());
        }
    }
    return tf;
}

inline TrackFile read_tracks_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open " + path);
    return read_tracks(in);
}

}  // namespace surgtrack::io
