#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "surgtrack/error.hpp"
#include "surgtrack/folds.hpp"
#include "surgtrack/skill_metrics.hpp"
#include "surgtrack/stats.hpp"

namespace surgtrack::io {

/// Splits one CSV record; double quotes may wrap fields containing commas.
inline std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
    }
    return out;
}

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
        q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
        throw InputError(where + ": '" + s + "' is not a finite number");
    return v;
}

inline long parse_long(const std::string& s, const std::string& where)
{
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw InputError(where + ": '" + s + "' is not an integer");
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

inline CsvTable read_csv(std::istream& in, const std::string& what)
{
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto fields = split_csv(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw InputError(what + " line " + std::to_string(line_no) + ": expected " +
                             std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (t.header.empty())
        throw InputError(what + ": empty file");
    return t;
}

// ---------------------------------------------------------------------------
// mOSATS

inline std::vector<MosatsAssessment> read_mosats(std::istream& in)
{
    const auto t = read_csv(in, "mOSATS");
    std::vector<std::string> want{"video_id"};
    for (int i = 1; i <= 10; ++i)
        want.push_back("aspect_" + std::to_string(i));
    want.push_back("skill_label");
    if (t.header != want)
        throw InputError("mOSATS line 1: header must be video_id,aspect_1..aspect_10,skill_label");
    std::vector<MosatsAssessment> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = "mOSATS line " + std::to_string(t.line_numbers[r]);
        MosatsAssessment m;
        m.video_id = t.rows[r][0];
        if (m.video_id.empty())
            throw InputError(where + ": empty video_id");
        for (int i = 0; i < 10; ++i)
            m.aspects[i] = static_cast<int>(parse_long(t.rows[r][1 + i], where));
        try {
            m.skill = parse_skill_label(t.rows[r][11]);
            m.validate();
        } catch (const InputError& e) {
            throw InputError(where + ": " + e.what());
        }
        out.push_back(m);
    }
    return out;
}

inline void write_mosats(std::ostream& out, const std::vector<MosatsAssessment>& rows)
{
    out << "video_id";
    for (int i = 1; i <= 10; ++i)
        out << ",aspect_" << i;
    out << ",skill_label\n";
    for (const auto& m : rows) {
        out << csv_field(m.video_id);
        for (int a : m.aspects)
            out << ',' << a;
        out << ',' << to_string(m.skill) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Metric vectors

struct MetricRow {
    std::string video_id;
    SkillMetricVector metrics;
};

inline void write_metrics(std::ostream& out, const std::vector<MetricRow>& rows)
{
    out << "video_id";
    for (const auto& n : metric_names())
        out << ',' << n;
    out << '\n';
    for (const auto& r : rows) {
        out << csv_field(r.video_id);
        for (double v : r.metrics.values)
            out << ',' << format_double(v);
        out << '\n';
    }
}

inline std::vector<MetricRow> read_metrics(std::istream& in)
{
    const auto t = read_csv(in, "metrics");
    if (t.header.size() != kMetricCount + 1 || t.header[0] != "video_id")
        throw InputError("metrics line 1: expected video_id followed by " + std::to_string(kMetricCount) + " metrics");
    for (std::size_t i = 0; i < kMetricCount; ++i)
        if (t.header[i + 1] != metric_names()[i])
            throw InputError("metrics line 1: column " + std::to_string(i + 2) + " should be " + metric_names()[i]);
    std::vector<MetricRow> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        MetricRow m;
        m.video_id = t.rows[r][0];
        for (std::size_t i = 0; i < kMetricCount; ++i)
            m.metrics.values[i] = parse_double(t.rows[r][i + 1], "metrics line " + std::to_string(t.line_numbers[r]));
        out.push_back(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-video class image counts (fold builder input)

inline std::vector<VideoClassCounts> read_class_counts(std::istream& in, std::vector<std::string>* class_names = nullptr)
{
    const auto t = read_csv(in, "class counts");
    if (t.header.size() != kFoldClasses + 1 || t.header[0] != "video_id")
        throw InputError("class counts line 1: expected video_id and four class columns");
    if (class_names)
        class_names->assign(t.header.begin() + 1, t.header.end());
    std::vector<VideoClassCounts> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        VideoClassCounts v{t.rows[r][0], {}};
        for (std::size_t c = 0; c < kFoldClasses; ++c) {
            v.counts[c] = parse_long(t.rows[r][c + 1], "class counts line " + std::to_string(t.line_numbers[r]));
            if (v.counts[c] < 0)
                throw InputError("class counts line " + std::to_string(t.line_numbers[r]) + ": negative count");
        }
        out.push_back(v);
    }
    return out;
}

inline void write_class_counts(std::ostream& out, const std::vector<VideoClassCounts>& rows,
                               const std::vector<std::string>& class_names)
{
    out << "video_id";
    for (const auto& n : class_names)
        out << ',' << csv_field(n);
    out << '\n';
    for (const auto& r : rows) {
        out << csv_field(r.video_id);
        for (long c : r.counts)
            out << ',' << c;
        out << '\n';
    }
}

}  // namespace surgtrack::io
