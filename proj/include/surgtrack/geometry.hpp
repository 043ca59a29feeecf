#pragma once

// Box and run-length mask arithmetic shared by the tracker, the evaluator and
// the skill-metric extractor.
//
// Conventions:
//   * boxes are half-open [left, right) x [top, bottom) in pixel units;
//   * masks are column-major run-length encodings that start with a
//     background run (COCO layout), so counts = {bg, fg, bg, fg, ...}.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "surgtrack/error.hpp"

namespace surgtrack {

class BoundingBox {
public:
    BoundingBox(double left, double top, double right, double bottom)
        : left_(left), top_(top), right_(right), bottom_(bottom)
    {
        if (!(std::isfinite(left) && std::isfinite(top) && std::isfinite(right) &&
              std::isfinite(bottom)))
            throw InputError("bounding box has non-finite coordinates");
        if (!(left < right) || !(top < bottom))
            throw InputError("bounding box must satisfy left < right and top < bottom");
    }

    static BoundingBox from_center(double cx, double cy, double width, double height)
    {
        return {cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0};
    }

    double left() const { return left_; }
    double top() const { return top_; }
    double right() const { return right_; }
    double bottom() const { return bottom_; }

    double width() const { return right_ - left_; }
    double height() const { return bottom_ - top_; }
    double area() const { return width() * height(); }
    double center_x() const { return (left_ + right_) / 2.0; }
    double center_y() const { return (top_ + bottom_) / 2.0; }

    std::array<double, 4> ltrb() const { return {left_, top_, right_, bottom_}; }

    bool operator==(const BoundingBox&) const = default;

private:
    double left_, top_, right_, bottom_;
};

inline double iou_box(const BoundingBox& a, const BoundingBox& b)
{
    const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (iw <= 0.0 || ih <= 0.0)
        return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

/// Dense binary image, row-major, nonzero = foreground.
struct Bitmap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Bitmap() = default;
    Bitmap(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const Bitmap&) const = default;
};

class MaskRLE {
public:
    MaskRLE(int width, int height, std::vector<std::uint32_t> counts)
        : width_(width), height_(height), counts_(std::move(counts))
    {
        if (width <= 0 || height <= 0)
            throw InputError("mask dimensions must be positive");
        std::uint64_t total = 0;
        for (auto c : counts_)
            total += c;
        if (total != pixel_count())
            throw InputError("mask run lengths sum to " + std::to_string(total) + ", expected " +
                             std::to_string(pixel_count()));
    }

    static MaskRLE empty(int width, int height)
    {
        return {width, height, {static_cast<std::uint32_t>(static_cast<std::uint64_t>(width) * height)}};
    }

    int width() const { return width_; }
    int height() const { return height_; }
    const std::vector<std::uint32_t>& counts() const { return counts_; }
    std::uint64_t pixel_count() const { return static_cast<std::uint64_t>(width_) * height_; }

    std::uint64_t area() const
    {
        std::uint64_t a = 0;
        for (std::size_t i = 1; i < counts_.size(); i += 2)
            a += counts_[i];
        return a;
    }

    /// Foreground runs as half-open [begin, end) offsets in column-major order.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> foreground_runs() const
    {
        std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;
        std::uint64_t pos = 0;
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            if (i % 2 == 1 && counts_[i] > 0)
                runs.emplace_back(pos, pos + counts_[i]);
            pos += counts_[i];
        }
        return runs;
    }

    MaskRLE complement() const
    {
        std::vector<std::uint32_t> c;
        if (!counts_.empty() && counts_[0] == 0)
            c.assign(counts_.begin() + 1, counts_.end());
        else {
            c.reserve(counts_.size() + 1);
            c.push_back(0);
            c.insert(c.end(), counts_.begin(), counts_.end());
        }
        return {width_, height_, std::move(c)};
    }

    bool operator==(const MaskRLE&) const = default;

private:
    int width_, height_;
    std::vector<std::uint32_t> counts_;
};

inline MaskRLE rle_encode(const Bitmap& bitmap)
{
    if (bitmap.width <= 0 || bitmap.height <= 0)
        throw InputError("bitmap dimensions must be positive");
    std::vector<std::uint32_t> counts;
    bool current = false;
    std::uint32_t run = 0;
    for (int x = 0; x < bitmap.width; ++x) {
        for (int y = 0; y < bitmap.height; ++y) {
            const bool fg = bitmap.at(x, y) != 0;
            if (fg != current) {
                counts.push_back(run);
                run = 0;
                current = fg;
            }
            ++run;
        }
    }
    counts.push_back(run);
    return {bitmap.width, bitmap.height, std::move(counts)};
}

inline Bitmap rle_decode(const MaskRLE& mask)
{
    Bitmap bm(mask.width(), mask.height());
    for (auto [begin, end] : mask.foreground_runs()) {
        for (auto p = begin; p < end; ++p) {
            const auto x = static_cast<int>(p / mask.height());
            const auto y = static_cast<int>(p % mask.height());
            bm.at(x, y) = 1;
        }
    }
    return bm;
}

inline std::uint64_t intersection_area(const MaskRLE& a, const MaskRLE& b)
{
    if (a.width() != b.width() || a.height() != b.height())
        throw InputError("mask dimension mismatch");
    const auto ra = a.foreground_runs();
    const auto rb = b.foreground_runs();
    std::uint64_t inter = 0;
    std::size_t i = 0, j = 0;
    while (i < ra.size() && j < rb.size()) {
        const auto lo = std::max(ra[i].first, rb[j].first);
        const auto hi = std::min(ra[i].second, rb[j].second);
        if (lo < hi)
            inter += hi - lo;
        if (ra[i].second < rb[j].second)
            ++i;
        else
            ++j;
    }
    return inter;
}

/// Both masks empty yields 1.0 so per-frame averages stay total.
inline double iou_mask(const MaskRLE& a, const MaskRLE& b)
{
    const auto inter = intersection_area(a, b);
    const auto uni = a.area() + b.area() - inter;
    if (uni == 0)
        return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Tightest half-open box around the foreground; nullopt for an empty mask.
inline std::optional<BoundingBox> mask_to_box(const MaskRLE& mask)
{
    const auto runs = mask.foreground_runs();
    if (runs.empty())
        return std::nullopt;
    const std::uint64_t h = static_cast<std::uint64_t>(mask.height());
    std::uint64_t min_x = UINT64_MAX, max_x = 0, min_y = UINT64_MAX, max_y = 0;
    for (auto [begin, end] : runs) {
        const auto last = end - 1;
        const auto x0 = begin / h, x1 = last / h;
        min_x = std::min(min_x, x0);
        max_x = std::max(max_x, x1);
        if (x0 == x1) {
            min_y = std::min(min_y, begin % h);
            max_y = std::max(max_y, last % h);
        } else {
            // a run crossing a column boundary touches both the last and first row
            min_y = 0;
            max_y = h - 1;
        }
    }
    return BoundingBox(static_cast<double>(min_x), static_cast<double>(min_y),
                       static_cast<double>(max_x + 1), static_cast<double>(max_y + 1));
}

/// Affine image-plane motion: (x, y) -> (a x + b y + tx, c x + d y + ty).
class CameraTransform {
public:
    CameraTransform() = default;

    CameraTransform(double a, double b, double c, double d, double tx, double ty)
        : m_{a, b, c, d}, t_{tx, ty}
    {
        for (double v : {a, b, c, d, tx, ty})
            if (!std::isfinite(v))
                throw InputError("camera transform has non-finite entries");
        if (std::abs(determinant()) <= 1e-9)
            throw InputError("camera transform is degenerate (|det| <= 1e-9)");
    }

    static CameraTransform identity() { return {}; }
    static CameraTransform translation(double tx, double ty) { return {1, 0, 0, 1, tx, ty}; }

    double a() const { return m_[0]; }
    double b() const { return m_[1]; }
    double c() const { return m_[2]; }
    double d() const { return m_[3]; }
    double tx() const { return t_[0]; }
    double ty() const { return t_[1]; }
    double determinant() const { return m_[0] * m_[3] - m_[1] * m_[2]; }

    std::array<double, 6> row_major() const { return {m_[0], m_[1], m_[2], m_[3], t_[0], t_[1]}; }

    std::pair<double, double> apply(double x, double y) const
    {
        return {m_[0] * x + m_[1] * y + t_[0], m_[2] * x + m_[3] * y + t_[1]};
    }

    /// Linear part only, for direction vectors.
    std::pair<double, double> apply_linear(double x, double y) const
    {
        return {m_[0] * x + m_[1] * y, m_[2] * x + m_[3] * y};
    }

    bool is_identity() const
    {
        return m_[0] == 1 && m_[1] == 0 && m_[2] == 0 && m_[3] == 1 && t_[0] == 0 && t_[1] == 0;
    }

    bool operator==(const CameraTransform&) const = default;

private:
    std::array<double, 4> m_{1, 0, 0, 1};
    std::array<double, 2> t_{0, 0};
};

/// Maps the four corners and returns their axis-aligned hull.
inline BoundingBox apply_transform(const CameraTransform& t, const BoundingBox& box)
{
    if (t.is_identity())
        return box;
    const std::array<std::pair<double, double>, 4> corners{
        t.apply(box.left(), box.top()), t.apply(box.right(), box.top()),
        t.apply(box.left(), box.bottom()), t.apply(box.right(), box.bottom())};
    double l = corners[0].first, r = l, tp = corners[0].second, bt = tp;
    for (const auto& [x, y] : corners) {
        l = std::min(l, x);
        r = std::max(r, x);
        tp = std::min(tp, y);
        bt = std::max(bt, y);
    }
    return {l, tp, r, bt};
}

}  // namespace surgtrack
