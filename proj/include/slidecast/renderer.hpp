#pragma once

// Render events, frame compositing and video encoding through an external encoder.
//
// Encoder command lines (ffmpeg-compatible), W x H = slide image size, OW x OH = output size:
//   segment: -y -loglevel error -f rawvideo -pix_fmt rgb24 -s WxH -r FPS -i -
//            -i <audio.wav> -vf scale=OW:OH:force_original_aspect_ratio=decrease,
//            pad=OW:OH:(ow-iw)/2:(oh-ih)/2:color=white -c:v libx264 -pix_fmt yuv420p
//            -c:a aac -shortest <segment.mp4>
//   concat:  -y -loglevel error -f concat -safe 0 -i <segments.txt> -c copy <lecture.mp4>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/errors.hpp"
#include "slidecast/log.hpp"
#include "slidecast/media.hpp"
#include "slidecast/subprocess.hpp"
#include "slidecast/text.hpp"
#include "slidecast/timing.hpp"
#include "slidecast/util.hpp"

namespace slidecast {

namespace fs = std::filesystem;

// ---- events ---------------------------------------------------------------------

struct EventBuild {
    std::vector<RenderEvent> events;
    std::vector<json> diagnostics;  // one object per dropped marker
};

namespace detail {

/// Median over words of box width / character count, at least 1 px.
inline double median_char_width(const OcrLayout& layout) {
    std::vector<double> widths;
    for (const auto& w : layout.words) {
        const auto n = text::to_u32(w.text).size();
        if (n > 0) widths.push_back(static_cast<double>(w.box().width()) / static_cast<double>(n));
    }
    if (widths.empty()) return 1.0;
    std::sort(widths.begin(), widths.end());
    const std::size_t mid = widths.size() / 2;
    const double m = widths.size() % 2 ? widths[mid] : (widths[mid - 1] + widths[mid]) / 2.0;
    return std::max(1.0, m);
}

/// Word boxes grouped per line; horizontally adjacent boxes (gap < char_width) merged.
inline std::vector<Polygon> merged_word_polygons(const std::vector<int>& ids, const OcrLayout& layout,
                                                 double char_width) {
    std::map<int, std::vector<Box>> per_line;
    for (int id : ids) {
        const auto& w = layout.words.at(static_cast<std::size_t>(id));
        per_line[w.line_id.value_or(-1)].push_back(w.box());
    }
    std::vector<Polygon> out;
    for (auto& [line, boxes] : per_line) {
        std::sort(boxes.begin(), boxes.end(),
                  [](const Box& a, const Box& b) { return std::tie(a.x_min, a.y_min) < std::tie(b.x_min, b.y_min); });
        Box cur = boxes.front();
        for (std::size_t i = 1; i < boxes.size(); ++i) {
            if (static_cast<double>(boxes[i].x_min - cur.x_max) < char_width) {
                cur = cur.united(boxes[i]);
            } else {
                out.push_back(Polygon::from_box(cur));
                cur = boxes[i];
            }
        }
        out.push_back(Polygon::from_box(cur));
    }
    return out;
}

}  // namespace detail

/// One event per matched marker with a time interval; everything else becomes a diagnostic.
/// `intervals[i]` is empty when timing lookup failed for marker i.
inline EventBuild build_events(int slide_index, const std::vector<HighlightMarker>& markers,
                               const std::vector<MatchResult>& results,
                               const std::vector<std::optional<TimeInterval>>& intervals, const OcrLayout& layout) {
    if (markers.size() != results.size() || markers.size() != intervals.size())
        throw PreconditionError("markers, match results and intervals must be parallel lists");
    EventBuild out;
    const double char_width = detail::median_char_width(layout);
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const auto& r = results[i];
        auto drop = [&](const std::string& reason) {
            out.diagnostics.push_back({{"slide", slide_index},
                                       {"marker_index", i},
                                       {"phrase", markers[i].phrase},
                                       {"reason", reason}});
        };
        if (!r.matched()) {
            drop("no_match");
            continue;
        }
        if (!intervals[i]) {
            drop("timing_not_found");
            continue;
        }
        RenderEvent e;
        e.slide_index = slide_index;
        e.phrase = markers[i].phrase;
        e.start_ms = intervals[i]->start_ms;
        e.end_ms = intervals[i]->end_ms;
        if (r.granularity == Granularity::line) {
            for (int id : r.matched_ids) e.polygons.push_back(layout.lines.at(static_cast<std::size_t>(id)).polygon);
        } else {
            e.polygons = detail::merged_word_polygons(r.matched_ids, layout, char_width);
        }
        e.validate();
        out.events.push_back(std::move(e));
    }
    return out;
}

inline json events_document(int slide_index, const std::vector<RenderEvent>& events) {
    return json{{"schema_version", kSchemaVersion}, {"slide_index", slide_index}, {"events", events}};
}

inline std::vector<RenderEvent> parse_events_document(const json& j) {
    return j.at("events").get<std::vector<RenderEvent>>();
}

// ---- plan ---------------------------------------------------------------------------

struct HighlightStyle {
    std::array<int, 4> stroke_rgba{220, 30, 30, 255};
    int stroke_width = 4;
    int corner_radius = 10;
    double fill_alpha = 0.15;
    int padding = 4;  // box grows by this many pixels on each side, clipped to the image

    void validate() const {
        for (int c : stroke_rgba)
            if (c < 0 || c > 255) throw ConfigError("style: color channels must be 0..255");
        if (stroke_width < 0 || corner_radius < 0 || padding < 0) throw ConfigError("style: sizes must be >= 0");
        if (!(fill_alpha >= 0 && fill_alpha <= 1)) throw ConfigError("style: fill_alpha must be in [0, 1]");
    }
};

inline void to_json(json& j, const HighlightStyle& s) {
    j = json{{"stroke_rgba", s.stroke_rgba},
             {"stroke_width", s.stroke_width},
             {"corner_radius", s.corner_radius},
             {"fill_alpha", s.fill_alpha},
             {"padding", s.padding}};
}

inline void from_json(const json& j, HighlightStyle& s) {
    s.stroke_rgba = j.value("stroke_rgba", s.stroke_rgba);
    s.stroke_width = j.value("stroke_width", s.stroke_width);
    s.corner_radius = j.value("corner_radius", s.corner_radius);
    s.fill_alpha = j.value("fill_alpha", s.fill_alpha);
    s.padding = j.value("padding", s.padding);
    s.validate();
}

struct SlidePlan {
    int slide_index = 0;
    std::string image;  // paths relative to the plan's base directory
    std::string audio;
    std::int64_t audio_duration_ms = 0;
    std::vector<RenderEvent> events;
};

struct RenderPlan {
    std::vector<SlidePlan> slides;
    std::vector<json> diagnostics;  // dropped markers, copied to diagnostics.jsonl
    HighlightStyle style;
    int fps = 30;
    int width = 1920;
    int height = 1080;

    void validate() const {
        style.validate();
        if (fps <= 0) throw ConfigError("fps must be > 0");
        if (width <= 0 || height <= 0 || width % 2 || height % 2)
            throw ConfigError("output resolution must be positive and even");
        for (const auto& s : slides) {
            if (s.audio_duration_ms < 0) throw PreconditionError("negative audio duration");
            for (const auto& e : s.events) {
                e.validate();
                if (e.end_ms > s.audio_duration_ms)
                    throw PreconditionError("event on slide " + std::to_string(s.slide_index) +
                                            " ends after the slide's audio");
            }
        }
    }
};

inline void to_json(json& j, const SlidePlan& s) {
    j = json{{"slide_index", s.slide_index},
             {"image", s.image},
             {"audio", s.audio},
             {"audio_duration_ms", s.audio_duration_ms},
             {"events", s.events}};
}

inline void from_json(const json& j, SlidePlan& s) {
    s.slide_index = j.at("slide_index").get<int>();
    s.image = j.at("image").get<std::string>();
    s.audio = j.at("audio").get<std::string>();
    s.audio_duration_ms = j.at("audio_duration_ms").get<std::int64_t>();
    s.events = j.value("events", std::vector<RenderEvent>{});
}

inline void to_json(json& j, const RenderPlan& p) {
    j = json{{"schema_version", kSchemaVersion},
             {"slides", p.slides},
             {"style", p.style},
             {"fps", p.fps},
             {"resolution", {p.width, p.height}},
             {"diagnostics", p.diagnostics}};
}

inline void from_json(const json& j, RenderPlan& p) {
    p.slides = j.at("slides").get<std::vector<SlidePlan>>();
    if (j.contains("style")) p.style = j["style"].get<HighlightStyle>();
    p.fps = j.value("fps", p.fps);
    p.diagnostics = j.value("diagnostics", std::vector<json>{});
    if (j.contains("resolution")) {
        p.width = j["resolution"].at(0).get<int>();
        p.height = j["resolution"].at(1).get<int>();
    }
}

// ---- frames -------------------------------------------------------------------------

inline std::int64_t frame_of(std::int64_t ms, int fps) { return ms * fps / 1000; }

/// Number of frames that cover `duration_ms` (at least one).
inline std::int64_t frame_count(std::int64_t duration_ms, int fps) {
    return std::max<std::int64_t>(1, (duration_ms * fps + 999) / 1000);
}

/// Inclusive frame range during which the event is drawn.
inline std::pair<std::int64_t, std::int64_t> event_frames(const RenderEvent& e, int fps) {
    return {frame_of(e.start_ms, fps), frame_of(e.end_ms, fps)};
}

namespace detail {

inline std::uint8_t blend(std::uint8_t base, int over, double alpha) {
    return static_cast<std::uint8_t>(std::lround(base * (1.0 - alpha) + over * alpha));
}

// Inside test for a rounded rectangle [x0, x1) x [y0, y1) with corner radius r, at pixel centers.
inline bool inside_rounded(double px, double py, double x0, double y0, double x1, double y1, double r) {
    if (px < x0 || px >= x1 || py < y0 || py >= y1) return false;
    r = std::min({r, (x1 - x0) / 2, (y1 - y0) / 2});
    if (r <= 0) return true;
    const double cx = std::clamp(px, x0 + r, x1 - r);
    const double cy = std::clamp(py, y0 + r, y1 - r);
    const double dx = px - cx, dy = py - cy;
    return dx * dx + dy * dy <= r * r;
}

}  // namespace detail

/// Pixel rectangle the overlay for `box` may touch.
inline Box overlay_extent(const Box& box, const HighlightStyle& style, int image_w, int image_h) {
    return {std::max(0, box.x_min - style.padding), std::max(0, box.y_min - style.padding),
            std::min(image_w, box.x_max + style.padding), std::min(image_h, box.y_max + style.padding)};
}

inline void draw_highlight(Image& img, const Box& box, const HighlightStyle& style) {
    const Box ext = overlay_extent(box, style, img.width, img.height);
    if (ext.width() <= 0 || ext.height() <= 0) return;
    const double x0 = ext.x_min, y0 = ext.y_min, x1 = ext.x_max, y1 = ext.y_max;
    const double r = style.corner_radius;
    const double sw = style.stroke_width;
    const double stroke_alpha = style.stroke_rgba[3] / 255.0;
    for (int y = ext.y_min; y < ext.y_max; ++y) {
        for (int x = ext.x_min; x < ext.x_max; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            if (!detail::inside_rounded(px, py, x0, y0, x1, y1, r)) continue;
            const bool inner = detail::inside_rounded(px, py, x0 + sw, y0 + sw, x1 - sw, y1 - sw, std::max(0.0, r - sw));
            const double alpha = inner ? style.fill_alpha * stroke_alpha : stroke_alpha;
            std::uint8_t* p = img.at(x, y);
            for (int c = 0; c < 3; ++c) p[c] = detail::blend(p[c], style.stroke_rgba[static_cast<std::size_t>(c)], alpha);
        }
    }
}

/// The slide image with every event active at `frame` drawn on top.
inline Image compose_frame(const Image& base, const std::vector<RenderEvent>& events, std::int64_t frame, int fps,
                           const HighlightStyle& style) {
    Image out = base;
    for (const auto& e : events) {
        const auto [first, last] = event_frames(e, fps);
        if (frame < first || frame > last) continue;
        for (const auto& poly : e.polygons) draw_highlight(out, bounding_box(poly), style);
    }
    return out;
}

inline void check_events_in_bounds(const std::vector<RenderEvent>& events, const Image& img, int slide) {
    for (const auto& e : events) {
        for (const auto& p : e.polygons) {
            const Box b = bounding_box(p);
            if (b.x_max > img.width || b.y_max > img.height)
                throw PreconditionError("event polygon on slide " + std::to_string(slide) + " lies outside the image");
        }
    }
}

// ---- encoding -----------------------------------------------------------------------

inline std::vector<std::string> segment_args(const std::string& encoder, int w, int h, int fps, int out_w, int out_h,
                                             const std::string& audio, const std::string& output) {
    const std::string ow = std::to_string(out_w), oh = std::to_string(out_h);
    return {encoder,    "-y",      "-loglevel", "error",   "-f",       "rawvideo", "-pix_fmt",
            "rgb24",    "-s",      std::to_string(w) + "x" + std::to_string(h),     "-r",
            std::to_string(fps),   "-i",        "-",       "-i",       audio,      "-vf",
            "scale=" + ow + ":" + oh + ":force_original_aspect_ratio=decrease,pad=" + ow + ":" + oh +
                ":(ow-iw)/2:(oh-ih)/2:color=white",
            "-c:v",     "libx264", "-pix_fmt",  "yuv420p", "-c:a",     "aac",      "-shortest",
            output};
}

inline std::vector<std::string> concat_args(const std::string& encoder, const std::string& list,
                                            const std::string& output) {
    return {encoder, "-y", "-loglevel", "error", "-f", "concat", "-safe", "0", "-i", list, "-c", "copy", output};
}

struct RenderOptions {
    std::string encoder = "ffmpeg";
    bool events_only = false;
    int jobs = 1;
};

/// Writes events/<slide>.json for every slide, then (unless events_only) encodes one
/// segment per slide and concatenates them into <out_dir>/lecture.mp4.
/// Returns the video path, or nothing when events_only.
inline std::optional<fs::path> render_video(const RenderPlan& plan, const fs::path& base_dir, const fs::path& out_dir,
                                            const RenderOptions& opts = {}) {
    plan.validate();
    for (const auto& s : plan.slides) {
        util::write_file_atomic(out_dir / "events" / (std::to_string(s.slide_index) + ".json"),
                                canonical_dump(events_document(s.slide_index, s.events)));
    }
    std::string diag;
    for (const auto& d : plan.diagnostics) diag += d.dump() + "\n";
    util::write_file_atomic(out_dir / "diagnostics.jsonl", diag);
    if (opts.events_only) return std::nullopt;

    const auto encoder = find_program(opts.encoder);
    if (!encoder) throw EncoderMissing("video encoder '" + opts.encoder + "' not found");
    for (const auto& s : plan.slides) {
        for (const auto& f : {s.image, s.audio})
            if (!fs::exists(base_dir / f)) throw PreconditionError("missing render input " + (base_dir / f).string());
    }

    const fs::path seg_dir = out_dir / "segments";
    fs::create_directories(seg_dir);
    std::vector<fs::path> segments(plan.slides.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < plan.slides.size(); i = next++) {
            try {
                const auto& s = plan.slides[i];
                const Image base = decode_image(util::read_file(base_dir / s.image));
                check_events_in_bounds(s.events, base, s.slide_index);
                segments[i] = seg_dir / ("segment_" + std::to_string(s.slide_index) + ".mp4");
                const auto args = segment_args(*encoder, base.width, base.height, plan.fps, plan.width, plan.height,
                                               (base_dir / s.audio).string(), segments[i].string());
                const std::int64_t frames = frame_count(s.audio_duration_ms, plan.fps);
                const auto res = run_process(args, [&](StdinWriter& in) {
                    for (std::int64_t f = 0; f < frames; ++f) {
                        const Image frame = compose_frame(base, s.events, f, plan.fps, plan.style);
                        if (!in.write(frame.rgb.data(), frame.rgb.size())) break;
                    }
                });
                if (res.exit_code != 0)
                    throw EncoderFailed("encoder failed on slide " + std::to_string(s.slide_index) + " (exit " +
                                            std::to_string(res.exit_code) + ")",
                                        res.stderr_text);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = plan.slides.size();
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(plan.slides.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::string list;
    for (const auto& seg : segments) list += "file '" + fs::absolute(seg).string() + "'\n";
    const fs::path list_path = seg_dir / "segments.txt";
    util::write_file_atomic(list_path, list);
    const fs::path video = out_dir / "lecture.mp4";
    const auto res = run_process(concat_args(*encoder, list_path.string(), video.string()));
    if (res.exit_code != 0) throw EncoderFailed("encoder failed while concatenating segments", res.stderr_text);
    log::info("render", "video written", {{"path", video.string()}, {"slides", plan.slides.size()}});
    return video;
}

}  // namespace slidecast
