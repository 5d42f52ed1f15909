#pragma once

// Domain types shared by every module. Coordinates are integer pixels in
// slide-image space with a top-left origin; times are integer milliseconds.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "slidecast/errors.hpp"
#include "slidecast/text.hpp"

namespace slidecast {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct Point {
    int x = 0;
    int y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box, inclusive of its min edge and exclusive of nothing: the
/// polygon's extreme coordinates are stored as-is.
struct Box {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    long long area() const { return static_cast<long long>(width()) * height(); }
    // Doubled center avoids rounding.
    Point center2() const { return {x_min + x_max, y_min + y_max}; }
    bool contains2(Point c2) const {
        return 2 * x_min <= c2.x && c2.x <= 2 * x_max && 2 * y_min <= c2.y && c2.y <= 2 * y_max;
    }
    Box united(const Box& o) const {
        return {std::min(x_min, o.x_min), std::min(y_min, o.y_min), std::max(x_max, o.x_max),
                std::max(y_max, o.y_max)};
    }
    friend bool operator==(const Box&, const Box&) = default;
};

class Polygon {
public:
    Polygon() = default;
    explicit Polygon(std::vector<Point> points) : points_(std::move(points)) {
        if (points_.size() < 3) throw GeometryError("polygon needs at least 3 points");
        for (const auto& p : points_) {
            if (p.x < 0 || p.y < 0) throw GeometryError("polygon coordinate is negative");
        }
    }

    static Polygon from_box(const Box& b) {
        return Polygon({{b.x_min, b.y_min}, {b.x_max, b.y_min}, {b.x_max, b.y_max}, {b.x_min, b.y_max}});
    }

    const std::vector<Point>& points() const { return points_; }
    bool empty() const { return points_.empty(); }

    friend bool operator==(const Polygon&, const Polygon&) = default;

private:
    std::vector<Point> points_;
};

/// Smallest axis-aligned rectangle containing all points of `polygon`.
inline Box bounding_box(const Polygon& polygon) {
    const auto& pts = polygon.points();
    if (pts.empty()) throw GeometryError("bounding box of an empty polygon");
    Box b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
    for (const auto& p : pts) {
        b.x_min = std::min(b.x_min, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.x_max = std::max(b.x_max, p.x);
        b.y_max = std::max(b.y_max, p.y);
    }
    return b;
}

/// Throws GeometryError if the polygon's box has zero width or height.
inline void require_non_degenerate(const Polygon& polygon) {
    const Box b = bounding_box(polygon);
    if (b.width() <= 0 || b.height() <= 0) throw GeometryError("degenerate polygon (zero width or height)");
}

enum class Level { word, line };
using Granularity = Level;

enum class Method { simple, fuzzy, llm };

enum class MatchStatus { matched, no_match };

NLOHMANN_JSON_SERIALIZE_ENUM(Level, {{Level::word, "word"}, {Level::line, "line"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Method, {{Method::simple, "simple"}, {Method::fuzzy, "fuzzy"}, {Method::llm, "llm"}})
NLOHMANN_JSON_SERIALIZE_ENUM(MatchStatus, {{MatchStatus::matched, "matched"}, {MatchStatus::no_match, "no_match"}})

inline const char* to_string(Level l) { return l == Level::word ? "word" : "line"; }
inline const char* to_string(Method m) {
    switch (m) {
        case Method::simple: return "simple";
        case Method::fuzzy: return "fuzzy";
        case Method::llm: return "llm";
    }
    return "?";
}

struct OcrElement {
    int id = 0;
    std::string text;
    Polygon polygon;
    Level level = Level::word;
    std::optional<int> line_id;

    Box box() const { return bounding_box(polygon); }
};

struct OcrLayout {
    int slide_index = 0;
    int page_width = 0;
    int page_height = 0;
    std::vector<OcrElement> lines;
    std::vector<OcrElement> words;

    const std::vector<OcrElement>& elements(Level level) const { return level == Level::word ? words : lines; }

    /// Checks the layout invariants; throws GeometryError / ParseError.
    void validate() const {
        auto check_level = [&](const std::vector<OcrElement>& elems, Level level) {
            for (std::size_t i = 0; i < elems.size(); ++i) {
                const auto& e = elems[i];
                if (e.level != level) throw ParseError("element level mismatch");
                if (e.id != static_cast<int>(i)) throw ParseError("element ids must be dense and ordered");
                if (text::normalize_text(e.text).empty() && text::to_u32(e.text).empty())
                    throw ParseError("element text is empty");
                const Box b = e.box();
                if (b.x_max > page_width || b.y_max > page_height)
                    throw GeometryError("element " + std::to_string(e.id) + " lies outside the page");
            }
        };
        check_level(lines, Level::line);
        check_level(words, Level::word);
        for (const auto& w : words) {
            if (!w.line_id || *w.line_id < 0 || *w.line_id >= static_cast<int>(lines.size()))
                throw ParseError("word " + std::to_string(w.id) + " has no valid parent line");
        }
    }
};

struct HighlightMarker {
    std::string phrase;
    int occurrence_index = 1;
    int word_offset = 0;
    int word_count = 1;
    // Byte range of the phrase inside the stripped transcript.
    std::size_t span_begin = 0;
    std::size_t span_end = 0;

    friend bool operator==(const HighlightMarker&, const HighlightMarker&) = default;
};

struct Transcript {
    std::string raw_text;
    std::string stripped_text;
    std::vector<HighlightMarker> markers;
};

struct WordTimestamp {
    std::string word;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    friend bool operator==(const WordTimestamp&, const WordTimestamp&) = default;
};

struct MatchConfig {
    Granularity granularity = Granularity::word;
    Method method = Method::simple;
    double fuzzy_threshold = 0.8;
    int fuzzy_window_slack = 2;

    void validate() const {
        if (!(fuzzy_threshold >= 0.0 && fuzzy_threshold <= 1.0))
            throw ConfigError("fuzzy threshold must lie in [0, 1]");
        if (fuzzy_window_slack < 0) throw ConfigError("fuzzy window slack must be >= 0");
    }
};

struct MatchResult {
    std::vector<int> matched_ids;
    Granularity granularity = Granularity::word;
    std::optional<double> score;
    MatchStatus status = MatchStatus::no_match;

    static MatchResult from_ids(std::vector<int> ids, Granularity g, std::optional<double> score = std::nullopt) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        MatchResult r;
        r.status = ids.empty() ? MatchStatus::no_match : MatchStatus::matched;
        r.matched_ids = std::move(ids);
        r.granularity = g;
        r.score = score;
        return r;
    }
    static MatchResult none(Granularity g) { return from_ids({}, g); }

    bool matched() const { return status == MatchStatus::matched; }
};

struct RenderEvent {
    int slide_index = 0;
    std::vector<Polygon> polygons;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::string phrase;

    void validate() const {
        if (start_ms < 0 || start_ms > end_ms) throw PreconditionError("render event interval is invalid");
        if (polygons.empty()) throw PreconditionError("render event without polygons");
    }
};

// Reading order: group elements into rows whose tops lie within `tolerance`
// of the row's first element, rows top-to-bottom, left-to-right inside a row.
// The initial sort uses a total key so the result does not depend on input order.
inline void sort_reading_order(std::vector<OcrElement>& elems, int tolerance) {
    auto key = [](const OcrElement& e) {
        const Box b = e.box();
        return std::make_tuple(b.y_min, b.x_min, b.y_max, b.x_max, std::cref(e.text));
    };
    std::sort(elems.begin(), elems.end(), [&](const OcrElement& a, const OcrElement& b) { return key(a) < key(b); });

    std::vector<std::pair<int, std::size_t>> row_of(elems.size());
    int row = -1;
    int row_top = 0;
    for (std::size_t i = 0; i < elems.size(); ++i) {
        const int top = elems[i].box().y_min;
        if (row < 0 || top - row_top > tolerance) {
            ++row;
            row_top = top;
        }
        row_of[i] = {row, i};
    }
    std::vector<std::size_t> order(elems.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (row_of[a].first != row_of[b].first) return row_of[a].first < row_of[b].first;
        return elems[a].box().x_min < elems[b].box().x_min;
    });
    std::vector<OcrElement> sorted;
    sorted.reserve(elems.size());
    for (auto i : order) sorted.push_back(std::move(elems[i]));
    elems = std::move(sorted);
}

// ---- JSON ----------------------------------------------------------------

inline void to_json(json& j, const Point& p) { j = json::array({p.x, p.y}); }
inline void from_json(const json& j, Point& p) {
    if (!j.is_array() || j.size() != 2) throw SchemaError("point must be [x, y]");
    p.x = j[0].get<int>();
    p.y = j[1].get<int>();
}

inline void to_json(json& j, const Polygon& poly) { j = poly.points(); }
inline void from_json(const json& j, Polygon& poly) { poly = Polygon(j.get<std::vector<Point>>()); }

inline void to_json(json& j, const Box& b) { j = json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline void to_json(json& j, const OcrElement& e) {
    j = json{{"id", e.id}, {"text", e.text}, {"polygon", e.polygon}, {"level", e.level}};
    j["line_id"] = e.line_id ? json(*e.line_id) : json(nullptr);
}
inline void from_json(const json& j, OcrElement& e) {
    e.id = j.at("id").get<int>();
    e.text = j.at("text").get<std::string>();
    e.polygon = j.at("polygon").get<Polygon>();
    e.level = j.at("level").get<Level>();
    if (j.contains("line_id") && !j["line_id"].is_null()) e.line_id = j["line_id"].get<int>();
    else e.line_id.reset();
}

inline void to_json(json& j, const OcrLayout& l) {
    j = json{{"schema_version", kSchemaVersion},
             {"slide_index", l.slide_index},
             {"page_width", l.page_width},
             {"page_height", l.page_height},
             {"lines", l.lines},
             {"words", l.words}};
}
inline void from_json(const json& j, OcrLayout& l) {
    l.slide_index = j.at("slide_index").get<int>();
    l.page_width = j.at("page_width").get<int>();
    l.page_height = j.at("page_height").get<int>();
    l.lines = j.at("lines").get<std::vector<OcrElement>>();
    l.words = j.at("words").get<std::vector<OcrElement>>();
}

inline void to_json(json& j, const HighlightMarker& m) {
    j = json{{"phrase", m.phrase},         {"occurrence_index", m.occurrence_index},
             {"word_offset", m.word_offset}, {"word_count", m.word_count},
             {"span_begin", m.span_begin},   {"span_end", m.span_end}};
}
inline void from_json(const json& j, HighlightMarker& m) {
    m.phrase = j.at("phrase").get<std::string>();
    m.occurrence_index = j.at("occurrence_index").get<int>();
    m.word_offset = j.at("word_offset").get<int>();
    m.word_count = j.at("word_count").get<int>();
    m.span_begin = j.value("span_begin", std::size_t{0});
    m.span_end = j.value("span_end", std::size_t{0});
}

inline void to_json(json& j, const Transcript& t) {
    j = json{{"schema_version", kSchemaVersion},
             {"raw_text", t.raw_text},
             {"stripped_text", t.stripped_text},
             {"markers", t.markers}};
}
inline void from_json(const json& j, Transcript& t) {
    t.raw_text = j.at("raw_text").get<std::string>();
    t.stripped_text = j.at("stripped_text").get<std::string>();
    t.markers = j.at("markers").get<std::vector<HighlightMarker>>();
}

inline void to_json(json& j, const WordTimestamp& w) {
    j = json{{"word", w.word}, {"start_ms", w.start_ms}, {"end_ms", w.end_ms}};
}
inline void from_json(const json& j, WordTimestamp& w) {
    w.word = j.at("word").get<std::string>();
    w.start_ms = j.at("start_ms").get<std::int64_t>();
    w.end_ms = j.at("end_ms").get<std::int64_t>();
    if (w.start_ms < 0 || w.end_ms < w.start_ms) throw SchemaError("word timestamp interval is invalid");
}

inline void to_json(json& j, const MatchConfig& c) {
    j = json{{"granularity", c.granularity},
             {"method", c.method},
             {"fuzzy_threshold", c.fuzzy_threshold},
             {"fuzzy_window_slack", c.fuzzy_window_slack}};
}
inline void from_json(const json& j, MatchConfig& c) {
    c.granularity = j.value("granularity", Granularity::word);
    c.method = j.value("method", Method::simple);
    c.fuzzy_threshold = j.value("fuzzy_threshold", 0.8);
    c.fuzzy_window_slack = j.value("fuzzy_window_slack", 2);
    c.validate();
}

inline void to_json(json& j, const MatchResult& r) {
    j = json{{"matched_ids", r.matched_ids}, {"granularity", r.granularity}, {"status", r.status}};
    j["score"] = r.score ? json(*r.score) : json(nullptr);
}
inline void from_json(const json& j, MatchResult& r) {
    r.matched_ids = j.at("matched_ids").get<std::vector<int>>();
    r.granularity = j.at("granularity").get<Granularity>();
    r.status = j.at("status").get<MatchStatus>();
    if (j.contains("score") && !j["score"].is_null()) r.score = j["score"].get<double>();
    else r.score.reset();
    if ((r.status == MatchStatus::matched) != !r.matched_ids.empty())
        throw SchemaError("match status disagrees with matched_ids");
}

inline void to_json(json& j, const RenderEvent& e) {
    j = json{{"slide_index", e.slide_index},
             {"polygons", e.polygons},
             {"start_ms", e.start_ms},
             {"end_ms", e.end_ms},
             {"phrase", e.phrase}};
}
inline void from_json(const json& j, RenderEvent& e) {
    e.slide_index = j.at("slide_index").get<int>();
    e.polygons = j.at("polygons").get<std::vector<Polygon>>();
    e.start_ms = j.at("start_ms").get<std::int64_t>();
    e.end_ms = j.at("end_ms").get<std::int64_t>();
    e.phrase = j.value("phrase", std::string{});
    e.validate();
}

/// Canonical textual form used for every file the library writes.
inline std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace slidecast
