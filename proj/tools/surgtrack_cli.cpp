#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "surgtrack/classify.hpp"
#include "surgtrack/folds.hpp"
#include "surgtrack/io/csv.hpp"
#include "surgtrack/io/jsonl.hpp"
#include "surgtrack/io/png.hpp"
#include "surgtrack/io/stream.hpp"
#include "surgtrack/mot_eval.hpp"
#include "surgtrack/skill_metrics.hpp"
#include "surgtrack/stats.hpp"
#include "surgtrack/synth.hpp"

using namespace surgtrack;
using io::json;
namespace fs = std::filesystem;

namespace {

struct Global {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    std::string config_path;
    json config = json::object();
};

// ---------------------------------------------------------------------------
// Shared helpers

json section(const Global& g, const std::string& name)
{
    return g.config.contains(name) ? g.config.at(name) : json::object();
}

void load_config(Global& g)
{
    if (g.config_path.empty())
        return;
    const auto text = io::read_file(g.config_path);
    try {
        g.config = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(g.config_path + ": " + e.what());
    }
    if (!g.config.is_object())
        throw InputError(g.config_path + ": config must be a JSON object");
    static const std::set<std::string> known{"tracker", "metrics", "classifier", "seed"};
    for (const auto& [k, v] : g.config.items())
        if (!known.count(k))
            throw InputError(g.config_path + ": unknown config section '" + k + "'");
    if (!g.seed_set && g.config.contains("seed"))
        g.seed = g.config["seed"].get<std::uint64_t>();
}

fs::path out_dir(const Global& g)
{
    fs::path p = !g.out.empty() ? fs::path(g.out) : std::getenv("SURGTRACK_OUT_DIR") ? fs::path(std::getenv("SURGTRACK_OUT_DIR")) : fs::path(".");
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + p.string());
    out << text;
    if (!out)
        throw InputError("write failed: " + p.string());
    spdlog::info("wrote {}", p.string());
}

std::pair<std::string, std::string> input_ref(const std::string& path)
{
    return {path, io::sha256_hex(io::read_file(path))};
}

io::Provenance provenance(const Global& g, const std::string& command, const json& effective_config,
                          std::vector<std::pair<std::string, std::string>> inputs)
{
    return {command, io::sha256_hex(effective_config.dump()), g.seed, std::move(inputs)};
}

/// CSV outputs get their provenance in a sidecar file.
void write_sidecar(const fs::path& csv, const io::Provenance& p)
{
    write_text(fs::path(csv.string() + ".provenance.json"), json{{"provenance", p.to_json()}}.dump(2) + "\n");
}

template <class T>
void take(const json& j, const char* key, T& field, std::set<std::string>& seen)
{
    if (!j.contains(key))
        return;
    seen.insert(key);
    try {
        field = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InputError(std::string("config key '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where)
{
    for (const auto& [k, v] : j.items())
        if (!seen.count(k))
            throw InputError(where + ": unknown key '" + k + "'");
}

ClassifierConfig classifier_config(const json& j)
{
    ClassifierConfig c;
    std::set<std::string> seen;
    take(j, "linear_lr", c.linear_lr, seen);
    take(j, "linear_epochs", c.linear_epochs, seen);
    take(j, "linear_l2", c.linear_l2, seen);
    take(j, "svm_lambda", c.svm_lambda, seen);
    take(j, "svm_lr", c.svm_lr, seen);
    take(j, "svm_epochs", c.svm_epochs, seen);
    take(j, "rf_trees", c.rf_trees, seen);
    take(j, "rf_max_depth", c.rf_max_depth, seen);
    take(j, "rf_min_leaf", c.rf_min_leaf, seen);
    take(j, "mlp_hidden", c.mlp_hidden, seen);
    take(j, "mlp_epochs", c.mlp_epochs, seen);
    take(j, "mlp_lr", c.mlp_lr, seen);
    reject_unknown(j, seen, "classifier config");
    return c;
}

json classifier_config_json(const ClassifierConfig& c)
{
    return {{"linear_lr", c.linear_lr},   {"linear_epochs", c.linear_epochs}, {"linear_l2", c.linear_l2},
            {"svm_lambda", c.svm_lambda}, {"svm_lr", c.svm_lr},               {"svm_epochs", c.svm_epochs},
            {"rf_trees", c.rf_trees},     {"rf_max_depth", c.rf_max_depth},   {"rf_min_leaf", c.rf_min_leaf},
            {"mlp_hidden", c.mlp_hidden}, {"mlp_epochs", c.mlp_epochs},       {"mlp_lr", c.mlp_lr}};
}

struct MetricsSettings {
    double fps = 25.0;
    MetricsConfig cfg;
};

MetricsSettings metrics_settings(const json& j)
{
    MetricsSettings m;
    std::set<std::string> seen;
    take(j, "fps", m.fps, seen);
    take(j, "gap_tolerance", m.cfg.gap_tolerance, seen);
    take(j, "smoothing_window", m.cfg.smoothing_window, seen);
    reject_unknown(j, seen, "metrics config");
    return m;
}

std::string fmt_pct(double v)
{
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << v;
    return os.str();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// ---------------------------------------------------------------------------
// track

struct TrackOpts {
    std::string input;
    std::string variant;
    int detection_interval = 0;
    bool stream = false;
    std::string output = "tracks.jsonl";
};

TrackerConfig tracker_config(const Global& g, const TrackOpts& o)
{
    json j = section(g, "tracker");
    if (!o.variant.empty())
        j["variant"] = o.variant;
    if (o.detection_interval > 0)
        j["detection_interval"] = o.detection_interval;
    if (g.seed_set || !j.contains("seed"))
        j["seed"] = g.seed;
    return io::tracker_config_from_json(j);
}

int cmd_track(const Global& g, const TrackOpts& o)
{
    const auto cfg = tracker_config(g, o);
    const auto cfg_json = io::to_json(cfg);

    if (o.stream) {
        std::ifstream file;
        std::istream* in = &std::cin;
        if (o.input != "-") {
            file.open(o.input);
            if (!file)
                throw InputError("cannot open " + o.input);
            in = &file;
        }
        io::TrackFileHeader h{"stream", provenance(g, "track", cfg_json, {{o.input, ""}}), cfg_json};
        io::StreamOptions opt;
        opt.header_line = io::track_header_line(h);
        opt.on_warning = [](const std::string& w) { spdlog::warn("{}", w); };
        const auto stats = io::stream_track(*in, std::cout, cfg, opt);
        const auto rep = summarize_latencies(stats.latencies_s);
        spdlog::info("streamed {} frames, {} skipped lines, p99 latency {:.2f} ms", stats.frames, stats.skipped_lines,
                     rep.latency_p99_ms);
        return 0;
    }

    const std::string text = o.input == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {}) : io::read_file(o.input);
    std::istringstream in(text);
    const auto det = io::read_detections(in);
    const auto set = run(cfg, det.frames);
    io::TrackFileHeader h{det.video_id, provenance(g, "track", cfg_json, {{o.input, io::sha256_hex(text)}}), cfg_json};
    std::ostringstream out;
    io::write_tracks(out, h, set);
    write_text(out_dir(g) / o.output, out.str());
    spdlog::info("{} frames, {} confirmed tracks", set.frames.size(), set.tracks.size());
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalOpts {
    std::string tracks;
    std::string gt_dir;
    std::string video;
    double iou = 0.5;
};

int cmd_evaluate(const Global& g, const EvalOpts& o)
{
    const auto tf = io::read_tracks_file(o.tracks);
    const auto ds = io::ingest_annotations(o.gt_dir);
    const std::string want = !o.video.empty() ? o.video : tf.header.video_id;
    const io::VideoAnnotations* va = nullptr;
    for (const auto& v : ds.videos)
        if (v.video_id == want)
            va = &v;
    if (!va && ds.videos.size() == 1)
        va = &ds.videos.front();
    if (!va)
        throw InputError(o.gt_dir + ": no annotations for video '" + want + "'");

    FrameIndex frame_count = tf.tracks.frames.empty() ? 0 : tf.tracks.frames.back() + 1;
    if (!va->frames.empty())
        frame_count = std::max(frame_count, va->frames.back().frame_index + 1);
    const auto gt = forward_fill_gt(make_gt_sequence(va->frames, frame_count));
    const auto res = evaluate_mot(tf.tracks, gt, {o.iou});

    const auto& c = res.counts;
    json report{{"provenance", provenance(g, "evaluate", json{{"iou_threshold", o.iou}},
                                          {input_ref(o.tracks), {o.gt_dir, ""}})
                                   .to_json()},
                {"video_id", va->video_id},
                {"frames", frame_count},
                {"annotated_frames", va->frames.size()},
                {"mota", optional_json(res.mota)},
                {"motp", optional_json(res.motp)},
                {"counts",
                 {{"gt", c.gt_count},
                  {"matches", c.matches},
                  {"false_negatives", c.false_negatives},
                  {"false_positives", c.false_positives},
                  {"id_switches", c.id_switches}}}};
    write_text(out_dir(g) / "eval.json", report.dump(2) + "\n");
    spdlog::info("MOTA {} MOTP {}", res.mota ? fmt_pct(*res.mota) : "n/a", res.motp ? fmt_pct(*res.motp) : "n/a");
    return 0;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsOpts {
    std::vector<std::string> tracks;
    std::vector<std::string> transforms;
    double fps = 0.0;
    std::string output = "metrics.csv";
};

int cmd_metrics(const Global& g, const MetricsOpts& o)
{
    auto ms = metrics_settings(section(g, "metrics"));
    if (o.fps > 0.0)
        ms.fps = o.fps;
    if (!o.transforms.empty() && o.transforms.size() != o.tracks.size())
        throw InputError("--transforms needs one detection file per track file");

    std::vector<io::MetricRow> rows;
    std::vector<std::pair<std::string, std::string>> inputs;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < o.tracks.size(); ++i) {
        const auto tf = io::read_tracks_file(o.tracks[i]);
        inputs.push_back(input_ref(o.tracks[i]));
        if (tf.tracks.frames.empty())
            throw InputError(o.tracks[i] + ": no frames");
        VideoMeta meta;
        meta.video_id = tf.header.video_id;
        meta.fps = ms.fps;
        meta.frame_count = tf.tracks.frames.back() + 1;
        if (!ids.insert(meta.video_id).second)
            throw InputError(o.tracks[i] + ": duplicate video id '" + meta.video_id + "'");
        TransformTrack transforms;
        if (!o.transforms.empty()) {
            std::ifstream in(o.transforms[i]);
            if (!in)
                throw InputError("cannot open " + o.transforms[i]);
            for (const auto& f : io::read_detections(in).frames)
                if (f.transform)
                    transforms[f.frame_index] = *f.transform;
            inputs.push_back(input_ref(o.transforms[i]));
        }
        rows.push_back({meta.video_id, extract_metrics(tf.tracks, meta, ms.cfg, transforms)});
    }
    std::ostringstream out;
    io::write_metrics(out, rows);
    const auto path = out_dir(g) / o.output;
    write_text(path, out.str());
    const json cfg{{"fps", ms.fps}, {"gap_tolerance", ms.cfg.gap_tolerance}, {"smoothing_window", ms.cfg.smoothing_window}};
    write_sidecar(path, provenance(g, "metrics", cfg, inputs));
    return 0;
}

// ---------------------------------------------------------------------------
// correlate / classify share the joined table

struct Joined {
    std::vector<std::string> video_ids;
    Eigen::MatrixXd X;
    std::vector<MosatsAssessment> assessments;
};

Joined join_tables(const std::string& metrics_path, const std::string& mosats_path)
{
    std::ifstream min(metrics_path), sin(mosats_path);
    if (!min)
        throw InputError("cannot open " + metrics_path);
    if (!sin)
        throw InputError("cannot open " + mosats_path);
    const auto metrics = io::read_metrics(min);
    const auto mosats = io::read_mosats(sin);
    std::map<std::string, MosatsAssessment> by_id;
    for (const auto& m : mosats)
        if (!by_id.emplace(m.video_id, m).second)
            throw InputError(mosats_path + ": duplicate video '" + m.video_id + "'");
    Joined j;
    j.X.resize(static_cast<Eigen::Index>(metrics.size()), kMetricCount);
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        auto it = by_id.find(metrics[i].video_id);
        if (it == by_id.end())
            throw InputError(mosats_path + ": no assessment for video '" + metrics[i].video_id + "'");
        j.video_ids.push_back(metrics[i].video_id);
        j.assessments.push_back(it->second);
        for (std::size_t k = 0; k < kMetricCount; ++k)
            j.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = metrics[i].metrics.values[k];
    }
    if (metrics.size() < 2)
        throw InputError(metrics_path + ": need at least two videos");
    return j;
}

struct CorrelateOpts {
    std::string metrics;
    std::string mosats;
};

int cmd_correlate(const Global& g, const CorrelateOpts& o)
{
    const auto j = join_tables(o.metrics, o.mosats);
    std::vector<std::string> targets;
    std::vector<std::vector<double>> ys;
    for (int a = 0; a < 10; ++a) {
        targets.push_back("aspect_" + std::to_string(a + 1));
        std::vector<double> y;
        for (const auto& m : j.assessments)
            y.push_back(m.aspects[a]);
        ys.push_back(y);
    }
    targets.push_back("summed");
    std::vector<double> summed;
    for (const auto& m : j.assessments)
        summed.push_back(m.summed());
    ys.push_back(summed);

    std::ostringstream out;
    out << "metric";
    for (const auto& t : targets)
        out << ',' << t;
    out << '\n';
    std::size_t undefined = 0;
    for (std::size_t k = 0; k < kMetricCount; ++k) {
        std::vector<double> x(static_cast<std::size_t>(j.X.rows()));
        for (Eigen::Index r = 0; r < j.X.rows(); ++r)
            x[r] = j.X(r, static_cast<Eigen::Index>(k));
        out << metric_names()[k];
        for (const auto& y : ys) {
            const auto r = pearson(x, y);
            out << ',' << (r ? io::format_double(*r) : "NA");
            undefined += !r;
        }
        out << '\n';
    }
    const auto path = out_dir(g) / "correlations.csv";
    write_text(path, out.str());
    write_sidecar(path, provenance(g, "correlate", json::object(), {input_ref(o.metrics), input_ref(o.mosats)}));
    if (undefined)
        spdlog::warn("{} correlations undefined (constant series), written as NA", undefined);
    return 0;
}

struct ClassifyOpts {
    std::string metrics;
    std::string mosats;
    std::string task = "all";
    std::string model = "all";
    std::vector<std::size_t> k{10};
    bool sweep = false;
    std::string folds;
    int n_folds = 4;
};

std::vector<int> folds_from_file(const std::string& path, const std::vector<std::string>& ids)
{
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
    if (!j.contains("fold_of_video") || !j["fold_of_video"].is_object())
        throw InputError(path + ": expected an object 'fold_of_video'");
    std::vector<int> out;
    for (const auto& id : ids) {
        if (!j["fold_of_video"].contains(id))
            throw InputError(path + ": video '" + id + "' has no fold");
        out.push_back(j["fold_of_video"][id].get<int>());
    }
    return out;
}

int cmd_classify(const Global& g, const ClassifyOpts& o)
{
    const auto j = join_tables(o.metrics, o.mosats);
    auto cfg = classifier_config(section(g, "classifier"));
    cfg.seed = g.seed;

    std::vector<std::string> tasks;
    if (o.task == "all")
        tasks = {"multiclass", "binary"};
    else if (o.task == "multiclass" || o.task == "binary")
        tasks = {o.task};
    else
        throw InputError("--task must be multiclass, binary or all");
    std::vector<ClassifierKind> kinds;
    if (o.model == "all")
        kinds = {ClassifierKind::linear, ClassifierKind::svm, ClassifierKind::rf, ClassifierKind::mlp};
    else
        kinds = {parse_classifier_kind(o.model)};
    std::vector<std::size_t> ks = o.sweep ? std::vector<std::size_t>{5, 10, 20, 34} : o.k;

    json results = json::array();
    std::map<std::pair<std::string, std::size_t>, std::map<std::string, std::string>> table;
    std::map<std::string, std::string> baseline;
    for (const auto& task : tasks) {
        std::vector<int> labels;
        for (const auto& m : j.assessments)
            labels.push_back(task == "binary" ? static_cast<int>(m.skill) : m.mean_rounded());
        const auto fold_of = o.folds.empty() ? stratified_folds(labels, o.n_folds, g.seed) : folds_from_file(o.folds, j.video_ids);
        baseline[task] = fmt_pct(100.0 * dominant_class_accuracy(labels));
        for (auto k : ks) {
            for (auto kind : kinds) {
                const auto cv = cross_validate(j.X, labels, fold_of, kind, k, cfg);
                for (const auto& w : cv.warnings)
                    spdlog::warn("{} {} k={}: {}", task, to_string(kind), k, w);
                json folds = json::array();
                for (const auto& f : cv.folds) {
                    json sel = json::array();
                    for (auto s : f.selected_features)
                        sel.push_back(metric_names()[s]);
                    folds.push_back({{"fold", f.fold},
                                     {"skipped", f.skipped},
                                     {"reason", f.reason},
                                     {"accuracy", f.accuracy},
                                     {"selected_features", sel}});
                }
                results.push_back({{"task", task},
                                   {"model", to_string(kind)},
                                   {"k", k},
                                   {"mean", cv.mean},
                                   {"std", cv.std},
                                   {"folds", folds}});
                table[{to_string(kind), k}][task] = fmt_pct(cv.mean) + " ± " + fmt_pct(cv.std);
            }
        }
    }

    const json eff{{"classifier", classifier_config_json(cfg)}, {"task", o.task}, {"model", o.model}, {"k", ks},
                   {"folds", o.folds.empty() ? json("stratified") : json(o.folds)}, {"n_folds", o.n_folds}};
    std::vector<std::pair<std::string, std::string>> inputs{input_ref(o.metrics), input_ref(o.mosats)};
    if (!o.folds.empty())
        inputs.push_back(input_ref(o.folds));
    const auto prov = provenance(g, "classify", eff, inputs);
    json base = json::object();
    for (const auto& [t, v] : baseline)
        base[t] = std::stod(v);
    const auto dir = out_dir(g);
    write_text(dir / "classify.json",
               json{{"provenance", prov.to_json()}, {"dominant_class_baseline", base}, {"results", results}}.dump(2) + "\n");

    std::ostringstream csv;
    csv << "model,k";
    for (const auto& t : tasks)
        csv << ',' << t;
    csv << '\n';
    for (const auto& [key, row] : table) {
        csv << key.first << ',' << key.second;
        for (const auto& t : tasks)
            csv << ',' << row.at(t);
        csv << '\n';
    }
    csv << "dominant_class,";
    for (const auto& t : tasks)
        csv << ',' << baseline[t];
    csv << '\n';
    write_text(dir / "classify_table.csv", csv.str());
    write_sidecar(dir / "classify_table.csv", prov);
    return 0;
}

// ---------------------------------------------------------------------------
// folds

struct FoldsOpts {
    std::string input;
    int n_folds = 4;
};

int cmd_folds(const Global& g, const FoldsOpts& o)
{
    std::vector<VideoClassCounts> videos;
    std::vector<std::string> names;
    std::pair<std::string, std::string> ref;
    if (fs::is_directory(o.input)) {
        const auto ds = io::ingest_annotations(o.input);
        const auto std_reg = ClassRegistry::standard();
        std::vector<ClassId> slots;
        for (const auto& [id, name] : std_reg.names()) {
            const auto found = ds.classes.find(name);
            slots.push_back(found ? *found : id);
            names.push_back(name);
        }
        for (const auto& [vid, counts] : ds.summary.per_video) {
            VideoClassCounts v{vid, {}};
            for (std::size_t s = 0; s < kFoldClasses; ++s) {
                auto it = counts.find(slots[s]);
                v.counts[s] = it == counts.end() ? 0 : static_cast<long>(it->second);
            }
            videos.push_back(v);
        }
        ref = {o.input, ""};
    } else {
        std::ifstream in(o.input);
        if (!in)
            throw InputError("cannot open " + o.input);
        videos = io::read_class_counts(in, &names);
        ref = input_ref(o.input);
    }
    const auto spec = build_folds(videos, g.seed, o.n_folds, {}, names);
    for (const auto& w : spec.warnings)
        spdlog::warn("{}", w);

    json fold_of = json::object();
    for (std::size_t v = 0; v < videos.size(); ++v)
        fold_of[videos[v].video_id] = spec.fold_of_video[v];
    auto counts_json = [&](const std::vector<ClassCounts>& all) {
        json arr = json::array();
        for (const auto& c : all) {
            json row = json::object();
            for (std::size_t s = 0; s < kFoldClasses; ++s)
                row[names[s]] = c[s];
            arr.push_back(row);
        }
        return arr;
    };
    ResamplingRule rule;
    json deltas = json::object();
    for (std::size_t s = 0; s < kFoldClasses; ++s)
        deltas[names[s]] = rule.delta[s];
    const json eff{{"n_folds", o.n_folds}, {"resampling", deltas}};
    json report{{"provenance", provenance(g, "folds", eff, {ref}).to_json()},
                {"fold_of_video", fold_of},
                {"imbalance", spec.imbalance},
                {"fold_counts", counts_json(spec.fold_counts)},
                {"resampled_counts", counts_json(spec.resampled_counts)},
                {"warnings", spec.warnings}};
    write_text(out_dir(g) / "folds.json", report.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOpts {
    FrameIndex frames = 10000;
    int objects = 4;
    bool stream = false;
    std::string variant = "strongsort";
};

json fps_json(const FpsReport& r)
{
    return {{"frames", r.frames},
            {"fps_mean", r.fps_mean},
            {"fps_std", r.fps_std},
            {"latency_p50_ms", r.latency_p50_ms},
            {"latency_p95_ms", r.latency_p95_ms},
            {"latency_p99_ms", r.latency_p99_ms},
            {"latency_max_ms", r.latency_max_ms}};
}

int cmd_bench(const Global& g, const BenchOpts& o)
{
    if (o.frames < 1 || o.objects < 1)
        throw InputError("--frames and --objects must be positive");
    auto cfg = TrackerConfig::for_variant(parse_variant(o.variant));
    cfg.seed = g.seed;
    const auto sc = synth::wandering_objects({.objects = o.objects, .frames = o.frames, .seed = g.seed + 1});
    json report{{"variant", o.variant}, {"objects", o.objects}, {"resolution", {1920, 1080}}, {"mode", o.stream ? "stream" : "batch"}};

    if (o.stream) {
        std::ostringstream det;
        io::write_detections(det, "bench", sc.frames);
        std::istringstream in(det.str());
        std::ostringstream sink;
        const auto stats = io::stream_track(in, sink, cfg);
        const auto rep = summarize_latencies(stats.latencies_s);
        const double fps = static_cast<double>(stats.frames) / stats.wall_seconds;
        report["wall_seconds"] = stats.wall_seconds;
        report["throughput_fps"] = fps;
        report["latency"] = fps_json(rep);
        report["targets"] = {{"fps_min", 25.0}, {"latency_p99_ms_max", 40.0},
                             {"met", fps >= 25.0 && rep.latency_p99_ms <= 40.0}};
    } else {
        const double t0 = steady_seconds();
        const auto set = run(cfg, sc.frames);
        const double wall = steady_seconds() - t0;
        const auto rep = fps_benchmark(cfg, sc.frames);
        report["wall_seconds"] = wall;
        report["throughput_fps"] = static_cast<double>(o.frames) / wall;
        report["per_frame"] = fps_json(rep);
        report["targets"] = {{"offline_fps_min", 250.0}, {"met", static_cast<double>(o.frames) / wall >= 250.0}};
        report["confirmed_tracks"] = set.tracks.size();
    }
    write_text(out_dir(g) / "bench.json", report.dump(2) + "\n");
    spdlog::info("throughput {:.1f} FPS", report["throughput_fps"].get<double>());
    return 0;
}

// ---------------------------------------------------------------------------
// demo-synth

struct DemoOpts {
    int videos = 15;
    int experts = 5;
    bool annotations = false;
    int annotate_every = 25;
};

int cmd_demo_synth(const Global& g, const DemoOpts& o)
{
    if (o.videos < 1 || o.experts < 0 || o.experts > o.videos || o.annotate_every < 1)
        throw InputError("need videos >= 1, 0 <= experts <= videos and annotate-every >= 1");
    const auto dir = out_dir(g);
    fs::create_directories(dir / "detections");
    Rng rng(g.seed);
    std::vector<MosatsAssessment> mosats;
    std::vector<VideoClassCounts> counts;
    const int novices = o.videos - o.experts;
    for (int v = 0; v < o.videos; ++v) {
        char id[32];
        std::snprintf(id, sizeof id, "video%02d", v + 1);
        const bool expert = v >= novices;
        const std::uint64_t vseed = g.seed * 1000 + static_cast<std::uint64_t>(v) + 1;
        const auto params = expert ? synth::expert_params(vseed) : synth::novice_params(vseed);
        const auto sc = synth::skill_script(params);

        std::ostringstream det;
        io::write_detections(det, id, sc.frames);
        write_text(dir / "detections" / (std::string(id) + ".jsonl"), det.str());

        MosatsAssessment m{id, {}, expert ? SkillLabel::expert : SkillLabel::novice};
        for (auto& a : m.aspects)
            a = std::clamp(static_cast<int>(std::lround((expert ? 4.0 : 2.3) + rng.normal(0.0, 0.7))), 1, 5);
        mosats.push_back(m);

        if (o.annotations) {
            const auto adir = dir / "annotations" / id;
            fs::create_directories(adir);
            VideoClassCounts vc{id, {}};
            for (FrameIndex f = 0; f < params.frames; f += o.annotate_every) {
                Bitmap bm(static_cast<int>(params.width), static_cast<int>(params.height));
                for (const auto& d : sc.frames[f].detections) {
                    const auto b = d.box;
                    for (int y = std::max(0, static_cast<int>(b.top())); y < std::min(bm.height, static_cast<int>(b.bottom())); ++y)
                        for (int x = std::max(0, static_cast<int>(b.left())); x < std::min(bm.width, static_cast<int>(b.right())); ++x)
                            bm.at(x, y) = static_cast<std::uint8_t>(d.class_id);
                    ++vc.counts[static_cast<std::size_t>(d.class_id - 1)];
                }
                char name[32];
                std::snprintf(name, sizeof name, "%06lld.png", static_cast<long long>(f));
                io::write_index_png((adir / name).string(), bm);
            }
            counts.push_back(vc);
        }
    }
    std::ostringstream ms;
    io::write_mosats(ms, mosats);
    write_text(dir / "mosats.csv", ms.str());
    if (o.annotations) {
        std::vector<std::string> names;
        const auto registry = ClassRegistry::standard();
        for (const auto& [id, n] : registry.names())
            names.push_back(n);
        std::ostringstream cs;
        io::write_class_counts(cs, counts, names);
        write_text(dir / "class_counts.csv", cs.str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOpts {
    std::string root;
};

int cmd_ingest(const Global& g, const IngestOpts& o)
{
    const auto ds = io::ingest_annotations(o.root);
    json per_video = json::object();
    for (const auto& [vid, counts] : ds.summary.per_video) {
        json c = json::object();
        for (const auto& [cls, n] : counts)
            c[cls == kNoInstrument ? "NoInstrument" : ds.classes.contains(cls) ? ds.classes.name_of(cls) : std::to_string(cls)] = n;
        per_video[vid] = c;
    }
    auto summary = ds.summary.to_json(ds.classes);
    summary["per_video"] = per_video;
    summary["provenance"] = provenance(g, "ingest", json::object(), {{o.root, ""}}).to_json();
    write_text(out_dir(g) / "dataset.json", summary.dump(2) + "\n");
    spdlog::info("{} videos, {} images", ds.summary.videos, ds.summary.images);
    return 0;
}

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("surgtrack");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("SURGTRACK_LOG_LEVEL"))
        spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv)
{
    setup_logging();
    CLI::App app{"Surgical instrument tracking and skill assessment toolkit"};
    app.require_subcommand(1);
    Global g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--out", g.out, "Output directory (default $SURGTRACK_OUT_DIR or .)");
    app.add_option("--config", g.config_path, "JSON config with tracker/metrics/classifier sections")->check(CLI::ExistingFile);
    app.set_version_flag("--version", io::kToolVersion);

    TrackOpts track;
    auto* t = app.add_subcommand("track", "Track detections (JSONL) into tracks.jsonl");
    t->add_option("input", track.input, "Detection JSONL file, or - for stdin")->required();
    t->add_option("--variant", track.variant, "sort, deepsort or strongsort");
    t->add_option("--detection-interval", track.detection_interval, "Use detections every n-th frame");
    t->add_flag("--stream", track.stream, "Pipelined mode: emit each frame to stdout as it completes");
    t->add_option("--output", track.output, "Output file name inside --out");

    EvalOpts ev;
    auto* e = app.add_subcommand("evaluate", "MOTA/MOTP of a track file against PNG annotations");
    e->add_option("tracks", ev.tracks)->required()->check(CLI::ExistingFile);
    e->add_option("gt_dir", ev.gt_dir)->required()->check(CLI::ExistingDirectory);
    e->add_option("--video", ev.video, "Annotation video to compare against");
    e->add_option("--iou", ev.iou, "Match threshold")->check(CLI::Range(0.0, 1.0));

    MetricsOpts mo;
    auto* m = app.add_subcommand("metrics", "34 skill metrics per track file");
    m->add_option("tracks", mo.tracks)->required()->check(CLI::ExistingFile);
    m->add_option("--fps", mo.fps, "Frame rate of the source video");
    m->add_option("--transforms", mo.transforms, "Detection files carrying camera transforms, one per track file");
    m->add_option("--output", mo.output, "Output file name inside --out");

    CorrelateOpts co;
    auto* c = app.add_subcommand("correlate", "Pearson correlation of metrics with mOSATS aspects");
    c->add_option("metrics", co.metrics)->required()->check(CLI::ExistingFile);
    c->add_option("mosats", co.mosats)->required()->check(CLI::ExistingFile);

    ClassifyOpts cl;
    auto* k = app.add_subcommand("classify", "Cross-validated skill classification");
    k->add_option("metrics", cl.metrics)->required()->check(CLI::ExistingFile);
    k->add_option("mosats", cl.mosats)->required()->check(CLI::ExistingFile);
    k->add_option("--task", cl.task, "multiclass, binary or all")->check(CLI::IsMember({"multiclass", "binary", "all"}));
    k->add_option("--model", cl.model, "linear, svm, rf, mlp or all")->check(CLI::IsMember({"linear", "svm", "rf", "mlp", "all"}));
    k->add_option("--k", cl.k, "Number of ANOVA-selected features (repeatable)");
    k->add_flag("--sweep", cl.sweep, "Evaluate k in {5,10,20,34}");
    k->add_option("--folds", cl.folds, "folds.json from the folds command")->check(CLI::ExistingFile);
    k->add_option("--n-folds", cl.n_folds, "Stratified folds when --folds is absent");

    FoldsOpts fo;
    auto* f = app.add_subcommand("folds", "Video-level folds with per-fold class resampling");
    f->add_option("input", fo.input, "Class counts CSV or annotation directory")->required()->check(CLI::ExistingPath);
    f->add_option("--n-folds", fo.n_folds);

    BenchOpts bo;
    auto* b = app.add_subcommand("bench", "Tracking throughput on a synthetic 1080p stream");
    b->add_option("--frames", bo.frames);
    b->add_option("--objects", bo.objects);
    b->add_flag("--stream", bo.stream, "Measure the pipelined stream mode");
    b->add_option("--variant", bo.variant)->check(CLI::IsMember({"sort", "deepsort", "strongsort"}));

    DemoOpts dm;
    auto* d = app.add_subcommand("demo-synth", "Synthetic novice/expert detections and mOSATS table");
    d->add_option("--videos", dm.videos);
    d->add_option("--experts", dm.experts);
    d->add_flag("--annotations", dm.annotations, "Also write PNG index-map annotations");
    d->add_option("--annotate-every", dm.annotate_every);

    IngestOpts io_;
    auto* in = app.add_subcommand("ingest", "Summarise an annotation directory");
    in->add_option("root", io_.root)->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    }

    try {
        load_config(g);
        if (*t)
            return cmd_track(g, track);
        if (*e)
            return cmd_evaluate(g, ev);
        if (*m)
            return cmd_metrics(g, mo);
        if (*c)
            return cmd_correlate(g, co);
        if (*k)
            return cmd_classify(g, cl);
        if (*f)
            return cmd_folds(g, fo);
        if (*b)
            return cmd_bench(g, bo);
        if (*d)
            return cmd_demo_synth(g, dm);
        if (*in)
            return cmd_ingest(g, io_);
    } catch (const InputError& err) {
        spdlog::error("{}", err.what());
        return 1;
    } catch (const InvariantError& err) {
        spdlog::error("{}", err.what());
        return 2;
    } catch (const fs::filesystem_error& err) {
        spdlog::error("{}", err.what());
        return 1;
    } catch (const json::exception& err) {
        spdlog::error("{}", err.what());
        return 1;
    } catch (const std::exception& err) {
        spdlog::error("internal error: {}", err.what());
        return 2;
    }
    return 1;
}
