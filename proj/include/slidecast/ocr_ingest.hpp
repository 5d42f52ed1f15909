#pragma once

// Normalizes raw OCR backend output into an OcrLayout.
//
// Supported payloads:
//   read_v4_json   Azure Image Analysis 4.0 "read" results (readResult.blocks[].lines[].words[],
//                  boundingPolygon as [{x, y}]), or the older Read 3.x shape
//                  (analyzeResult.readResults[] with 8-number boundingBox and a unit).
//   tesseract_tsv  `tesseract ... tsv` output. Level-5 rows are words, lines are the
//                  (block, par, line) groups. Rows with conf = -1 carry no text and are dropped.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/log.hpp"
#include "slidecast/text.hpp"

namespace slidecast {

enum class OcrBackend { read_v4_json, tesseract_tsv };

NLOHMANN_JSON_SERIALIZE_ENUM(OcrBackend, {{OcrBackend::read_v4_json, "read_v4_json"},
                                          {OcrBackend::tesseract_tsv, "tesseract_tsv"}})

struct OcrBackendDoc {
    OcrBackend backend = OcrBackend::read_v4_json;
    std::string payload;
    int slide_index = 0;
};

namespace detail {

struct RawElement {
    std::string text;
    std::vector<std::pair<double, double>> points;
};

struct RawPage {
    std::vector<RawElement> lines;
    std::vector<RawElement> words;
    double width = 0;  // source coordinate extent, 0 when unknown
    double height = 0;
};

inline std::vector<std::pair<double, double>> points_from_xy_objects(const json& arr) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : arr) pts.emplace_back(p.at("x").get<double>(), p.at("y").get<double>());
    return pts;
}

inline std::vector<std::pair<double, double>> points_from_flat(const json& arr) {
    if (arr.size() % 2 != 0) throw ParseError("boundingBox must hold x/y pairs");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < arr.size(); i += 2) pts.emplace_back(arr[i].get<double>(), arr[i + 1].get<double>());
    return pts;
}

inline RawPage parse_read_json(const std::string& payload) {
    json doc;
    try {
        doc = json::parse(payload);
    } catch (const json::exception& e) {
        throw ParseError(std::string("read_v4_json: ") + e.what());
    }
    RawPage page;
    try {
        if (doc.contains("readResult")) {
            if (doc.contains("metadata")) {
                page.width = doc["metadata"].value("width", 0.0);
                page.height = doc["metadata"].value("height", 0.0);
            }
            const auto& rr = doc["readResult"];
            if (rr.is_null() || !rr.contains("blocks")) return page;
            for (const auto& block : rr["blocks"]) {
                for (const auto& line : block.value("lines", json::array())) {
                    page.lines.push_back({line.at("text").get<std::string>(),
                                          points_from_xy_objects(line.at("boundingPolygon"))});
                    for (const auto& word : line.value("words", json::array())) {
                        page.words.push_back({word.at("text").get<std::string>(),
                                              points_from_xy_objects(word.at("boundingPolygon"))});
                    }
                }
            }
            return page;
        }
        if (doc.contains("analyzeResult")) {
            const auto& pages = doc["analyzeResult"].at("readResults");
            if (pages.empty()) return page;
            const auto& p = pages[0];
            page.width = p.value("width", 0.0);
            page.height = p.value("height", 0.0);
            for (const auto& line : p.value("lines", json::array())) {
                page.lines.push_back({line.at("text").get<std::string>(), points_from_flat(line.at("boundingBox"))});
                for (const auto& word : line.value("words", json::array())) {
                    page.words.push_back({word.at("text").get<std::string>(), points_from_flat(word.at("boundingBox"))});
                }
            }
            return page;
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("read_v4_json: ") + e.what());
    }
    throw ParseError("read_v4_json: payload has neither readResult nor analyzeResult");
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            cols.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cols.push_back(cur);
    return cols;
}

inline RawPage parse_tesseract_tsv(const std::string& payload) {
    std::istringstream in(payload);
    std::string line;
    RawPage page;
    if (!std::getline(in, line)) return page;
    const auto header = split_tabs(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* name : {"level", "block_num", "par_num", "line_num", "left", "top", "width", "height", "conf", "text"}) {
        if (!col.count(name)) throw ParseError(std::string("tesseract_tsv: missing column ") + name);
    }

    using Key = std::tuple<int, int, int, int>;
    struct Group {
        std::vector<RawElement> words;
        std::optional<RawElement> box;
    };
    std::map<Key, Group> groups;

    auto to_int = [](const std::string& s) {
        try {
            std::size_t used = 0;
            int v = std::stoi(s, &used);
            if (used != s.size()) throw ParseError("tesseract_tsv: bad integer '" + s + "'");
            return v;
        } catch (const std::logic_error&) {
            throw ParseError("tesseract_tsv: bad integer '" + s + "'");
        }
    };
    auto rect = [](double l, double t, double w, double h) {
        return std::vector<std::pair<double, double>>{{l, t}, {l + w, t}, {l + w, t + h}, {l, t + h}};
    };

    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        auto cols = split_tabs(line);
        if (cols.size() < header.size() - 1) throw ParseError("tesseract_tsv: short row " + std::to_string(row_no));
        cols.resize(header.size());
        const int level = to_int(cols[col["level"]]);
        const int page_num = col.count("page_num") ? to_int(cols[col["page_num"]]) : 1;
        const double left = to_int(cols[col["left"]]);
        const double top = to_int(cols[col["top"]]);
        const double width = to_int(cols[col["width"]]);
        const double height = to_int(cols[col["height"]]);
        double conf = 0;
        try {
            conf = std::stod(cols[col["conf"]]);
        } catch (const std::logic_error&) {
            throw ParseError("tesseract_tsv: bad confidence in row " + std::to_string(row_no));
        }
        const Key key{page_num, to_int(cols[col["block_num"]]), to_int(cols[col["par_num"]]),
                      to_int(cols[col["line_num"]])};
        if (level == 1) {
            page.width = left + width;
            page.height = top + height;
        } else if (level == 4) {
            groups[key].box = RawElement{"", rect(left, top, width, height)};
        } else if (level == 5) {
            if (conf < 0) continue;
            const std::string& txt = cols[col["text"]];
            if (text::normalized_words(txt).empty()) continue;
            groups[key].words.push_back({txt, rect(left, top, width, height)});
        }
    }

    for (auto& [key, g] : groups) {
        if (g.words.empty()) continue;
        std::vector<std::string> texts;
        double x0 = 1e18, y0 = 1e18, x1 = -1e18, y1 = -1e18;
        for (const auto& w : g.words) {
            texts.push_back(w.text);
            for (const auto& [x, y] : w.points) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
        RawElement ln{text::join(texts), g.box ? g.box->points : rect(x0, y0, x1 - x0, y1 - y0)};
        page.lines.push_back(std::move(ln));
        for (auto& w : g.words) page.words.push_back(std::move(w));
    }
    return page;
}

inline Polygon to_pixels(const RawElement& e, double sx, double sy, int page_width, int page_height) {
    std::vector<Point> pts;
    for (const auto& [x, y] : e.points) {
        const long long px = std::llround(x * sx);
        const long long py = std::llround(y * sy);
        if (px < 0 || py < 0 || px > page_width || py > page_height) {
            throw GeometryError("OCR element '" + e.text + "' lies outside the page (" + std::to_string(px) + ", " +
                                std::to_string(py) + ")");
        }
        pts.push_back({static_cast<int>(px), static_cast<int>(py)});
    }
    if (pts.size() < 3) throw ParseError("OCR element '" + e.text + "' has fewer than 3 polygon points");
    return Polygon(std::move(pts));
}

inline int median_height(const std::vector<OcrElement>& elems) {
    if (elems.empty()) return 0;
    std::vector<int> h;
    for (const auto& e : elems) h.push_back(e.box().height());
    std::sort(h.begin(), h.end());
    return h[h.size() / 2];
}

inline long long box_distance2(const Box& b, Point c2) {
    // squared distance (in doubled coordinates) from point to box
    const long long dx = std::max<long long>({2LL * b.x_min - c2.x, 0, c2.x - 2LL * b.x_max});
    const long long dy = std::max<long long>({2LL * b.y_min - c2.y, 0, c2.y - 2LL * b.y_max});
    return dx * dx + dy * dy;
}

}  // namespace detail

/// Converts one OCR backend payload into a layout in page pixel space.
inline OcrLayout ingest(const OcrBackendDoc& doc, int page_width, int page_height) {
    if (page_width <= 0 || page_height <= 0) throw PreconditionError("page dimensions must be positive");
    const detail::RawPage raw = doc.backend == OcrBackend::read_v4_json ? detail::parse_read_json(doc.payload)
                                                                          : detail::parse_tesseract_tsv(doc.payload);
    const double sx = raw.width > 0 ? page_width / raw.width : 1.0;
    const double sy = raw.height > 0 ? page_height / raw.height : 1.0;

    auto convert = [&](const std::vector<detail::RawElement>& src, Level level) {
        std::vector<OcrElement> out;
        for (const auto& e : src) {
            if (text::normalize_text(e.text).empty()) continue;
            OcrElement el;
            el.text = e.text;
            el.level = level;
            el.polygon = detail::to_pixels(e, sx, sy, page_width, page_height);
            out.push_back(std::move(el));
        }
        return out;
    };

    OcrLayout layout;
    layout.slide_index = doc.slide_index;
    layout.page_width = page_width;
    layout.page_height = page_height;
    layout.lines = convert(raw.lines, Level::line);
    auto words = convert(raw.words, Level::word);
    if (!words.empty() && layout.lines.empty()) throw ParseError("OCR payload has words but no lines");

    const int tolerance = detail::median_height(layout.lines) / 2;
    sort_reading_order(layout.lines, tolerance);
    for (std::size_t i = 0; i < layout.lines.size(); ++i) layout.lines[i].id = static_cast<int>(i);

    int fallbacks = 0;
    for (auto& w : words) {
        const Point c2 = w.box().center2();
        std::optional<int> best;
        long long best_area = 0;
        for (const auto& ln : layout.lines) {
            const Box lb = ln.box();
            if (!lb.contains2(c2)) continue;
            if (!best || lb.area() < best_area) {
                best = ln.id;
                best_area = lb.area();
            }
        }
        if (!best) {
            ++fallbacks;
            long long best_d = 0;
            for (const auto& ln : layout.lines) {
                const long long d = detail::box_distance2(ln.box(), c2);
                if (!best || d < best_d) {
                    best = ln.id;
                    best_d = d;
                }
            }
        }
        w.line_id = best;
    }
    if (fallbacks > 0) {
        log::warn("ocr_ingest", "words assigned to nearest line (center outside every line box)",
                  {{"slide", doc.slide_index}, {"count", fallbacks}});
    }

    // Words follow their line's reading order, then run left to right.
    auto word_key = [](const OcrElement& w) {
        const Box b = w.box();
        return std::make_tuple(*w.line_id, b.x_min, b.y_min, b.x_max, b.y_max, std::cref(w.text));
    };
    std::sort(words.begin(), words.end(), [&](const OcrElement& a, const OcrElement& b) { return word_key(a) < word_key(b); });
    for (std::size_t i = 0; i < words.size(); ++i) words[i].id = static_cast<int>(i);
    layout.words = std::move(words);
    return layout;
}

}  // namespace slidecast
