#pragma once

// Index-map PNG annotations: palette index (or grey level) = class id,
// 0 = background. One directory per video, one <frame>.png per annotated
// frame, optional classes.json manifest at the dataset root.

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <png.h>

#include <json.hpp>

#include "surgtrack/classes.hpp"
#include "surgtrack/error.hpp"
#include "surgtrack/geometry.hpp"
#include "surgtrack/mot_eval.hpp"

namespace surgtrack::io {

namespace fs = std::filesystem;

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f)
            std::fclose(f);
    }
};

}  // namespace detail

/// Decodes an 8-bit (or packed) palette or greyscale PNG to raw indices.
inline Bitmap read_index_png(const std::string& path)
{
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp)
        throw InputError("cannot open " + path);
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw InputError(path + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InvariantError("libpng initialisation failed");
    }
    Bitmap bm;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError(path + ": corrupt PNG");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError(path + ": annotation PNGs must be palette or greyscale index maps");
    }
    if (depth > 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError(path + ": 16-bit index maps are not supported");
    }
    if (depth < 8)
        png_set_packing(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    bm = Bitmap(w, h);
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[y] = bm.pixels.data() + static_cast<std::size_t>(y) * w;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return bm;
}

/// Writes an 8-bit palette PNG; indices past the first ten are drawn white.
inline void write_index_png(const std::string& path, const Bitmap& bm)
{
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        throw InputError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw InvariantError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError(path + ": PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(bm.width), static_cast<png_uint_32>(bm.height), 8,
                 PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> palette(256, png_color{255, 255, 255});
    const png_color base[] = {{0, 0, 0}, {230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200},
                              {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60}};
    std::copy(std::begin(base), std::end(base), palette.begin());
    png_set_PLTE(png, info, palette.data(), 256);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(bm.height));
    auto pixels = bm.pixels;
    for (int y = 0; y < bm.height; ++y)
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * bm.width;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Converts a decoded index map into a ground-truth frame. Several distinct
/// instrument indices in one image are rejected.
inline GroundTruthFrame index_map_to_gt(const Bitmap& bm, FrameIndex frame, const ClassRegistry& classes,
                                        const std::string& where)
{
    std::optional<int> cls;
    for (auto v : bm.pixels) {
        if (v == 0)
            continue;
        if (!classes.contains(v))
            throw InputError(where + ": unknown palette index " + std::to_string(v) + " in frame " + std::to_string(frame));
        if (cls && *cls != v)
            throw InputError(where + ": frame " + std::to_string(frame) + " contains more than one instrument class");
        cls = v;
    }
    GroundTruthFrame g;
    g.frame_index = frame;
    g.annotated = true;
    g.class_id = cls.value_or(kNoInstrument);
    if (cls) {
        Bitmap m(bm.width, bm.height);
        for (std::size_t i = 0; i < bm.pixels.size(); ++i)
            m.pixels[i] = bm.pixels[i] == *cls ? 1 : 0;
        g.mask = rle_encode(m);
        g.box = mask_to_box(*g.mask);
    } else {
        g.mask = MaskRLE::empty(bm.width, bm.height);
    }
    return g;
}

inline Bitmap gt_to_index_map(const GroundTruthFrame& g)
{
    if (!g.mask)
        throw InputError("frame " + std::to_string(g.frame_index) + " has no mask to write");
    Bitmap bm = rle_decode(*g.mask);
    for (auto& p : bm.pixels)
        p = p ? static_cast<std::uint8_t>(g.class_id.value_or(0)) : 0;
    return bm;
}

/// Trailing digits of the file stem, e.g. "frame_000125" -> 125.
inline std::optional<FrameIndex> frame_from_stem(const std::string& stem)
{
    std::size_t i = stem.size();
    while (i > 0 && std::isdigit(static_cast<unsigned char>(stem[i - 1])))
        --i;
    if (i == stem.size())
        return std::nullopt;
    return std::stoll(stem.substr(i));
}

struct VideoAnnotations {
    std::string video_id;
    std::vector<GroundTruthFrame> frames;  // annotated frames, ascending
};

struct DatasetSummary {
    std::size_t videos = 0;
    std::size_t images = 0;
    std::map<ClassId, std::size_t> images_per_class;  // includes kNoInstrument
    std::map<std::string, std::map<ClassId, std::size_t>> per_video;

    nlohmann::json to_json(const ClassRegistry& classes) const
    {
        nlohmann::json per_class = nlohmann::json::object();
        for (const auto& [c, n] : images_per_class)
            per_class[c == kNoInstrument ? "NoInstrument" : classes.contains(c) ? classes.name_of(c) : std::to_string(c)] = n;
        return {{"videos", videos}, {"images", images}, {"images_per_class", per_class}};
    }
};

inline VideoAnnotations read_video_annotations(const fs::path& dir, const ClassRegistry& classes)
{
    VideoAnnotations v;
    v.video_id = dir.filename().string();
    std::vector<std::pair<FrameIndex, fs::path>> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".png")
            continue;
        const auto f = frame_from_stem(e.path().stem().string());
        if (!f)
            throw InputError(e.path().string() + ": file name carries no frame number");
        files.emplace_back(*f, e.path());
    }
    std::sort(files.begin(), files.end());
    for (std::size_t i = 1; i < files.size(); ++i)
        if (files[i].first == files[i - 1].first)
            throw InputError(dir.string() + ": frame " + std::to_string(files[i].first) + " appears twice");
    for (const auto& [f, p] : files)
        v.frames.push_back(index_map_to_gt(read_index_png(p.string()), f, classes, p.string()));
    return v;
}

/// Registry from <root>/classes.json ({"1": "BluntDissector", ...}) or the
/// standard four classes.
inline ClassRegistry read_registry(const fs::path& root)
{
    const auto manifest = root / "classes.json";
    if (!fs::exists(manifest))
        return ClassRegistry::standard();
    try {
        std::ifstream in(manifest);
        const auto j = nlohmann::json::parse(in);
        std::map<ClassId, std::string> names;
        for (const auto& [k, v] : j.items())
            names[std::stoi(k)] = v.get<std::string>();
        return ClassRegistry(names);
    } catch (const std::exception& e) {
        throw InputError(manifest.string() + ": " + e.what());
    }
}

struct Dataset {
    ClassRegistry classes;
    std::vector<VideoAnnotations> videos;
    DatasetSummary summary;
};

/// Reads every video directory below `root`. A root without subdirectories
/// is treated as one video.
inline Dataset ingest_annotations(const fs::path& root)
{
    if (!fs::is_directory(root))
        throw InputError(root.string() + " is not a directory");
    Dataset d;
    d.classes = read_registry(root);
    std::vector<fs::path> dirs;
    bool has_png = false;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory())
            dirs.push_back(e.path());
        else if (e.path().extension() == ".png")
            has_png = true;
    }
    if (has_png)
        dirs.push_back(root);
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        auto v = read_video_annotations(dir, d.classes);
        if (v.frames.empty())
            continue;
        auto& counts = d.summary.per_video[v.video_id];
        for (const auto& f : v.frames) {
            ++counts[*f.class_id];
            ++d.summary.images_per_class[*f.class_id];
            ++d.summary.images;
        }
        d.videos.push_back(std::move(v));
    }
    d.summary.videos = d.videos.size();
    return d;
}

}  // namespace surgtrack::io
