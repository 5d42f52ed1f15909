#pragma once

// End-to-end orchestration over a work directory.
//
// Workdir layout (n = 0-based slide index):
//   slides/manifest.json, slides/<n>.png
//   transcripts/slide_<n>.txt, transcripts/<n>.json
//   ocr/<n>.json | ocr/<n>.tsv, layout/<n>.json
//   tts/<n>.json, audio/<n>.wav
//   matches/<n>.json, timing/<n>.json, events/<n>.json, diagnostics/<n>.jsonl
//   usage/<n>.<stage>.jsonl, usage.jsonl, diagnostics.jsonl, plan.json, lecture.mp4
// Every artifact has a "<file>.hash" sidecar holding the hash of the config and inputs
// that produced it; a stage is skipped when its sidecars match.

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/errors.hpp"
#include "slidecast/log.hpp"
#include "slidecast/matcher.hpp"
#include "slidecast/media.hpp"
#include "slidecast/ocr_ingest.hpp"
#include "slidecast/providers.hpp"
#include "slidecast/renderer.hpp"
#include "slidecast/subprocess.hpp"
#include "slidecast/timing.hpp"
#include "slidecast/transcript.hpp"
#include "slidecast/util.hpp"

namespace slidecast {

enum class Stage { slides, narration, ocr, layout, tts, matches, timing, events, video };

inline constexpr std::array<std::string_view, 9> kStageNames{"slides", "narration", "ocr",    "layout", "tts",
                                                             "matches", "timing",    "events", "video"};

inline std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

inline Stage parse_stage(std::string_view name) {
    for (std::size_t i = 0; i < kStageNames.size(); ++i)
        if (kStageNames[i] == name) return static_cast<Stage>(i);
    if (name == "transcripts") return Stage::narration;
    throw ConfigError("unknown stage '" + std::string(name) + "'");
}

struct RenderSettings {
    HighlightStyle style;
    int fps = 30;
    int width = 1920;
    int height = 1080;
    std::string encoder = "ffmpeg";
    bool events_only = false;
};

struct PipelineConfig {
    fs::path input;  // PDF file or directory of slide images
    fs::path workdir;
    MatchConfig match;
    std::map<ProviderKind, ProviderConfig> providers{{ProviderKind::llm, {ProviderKind::llm}},
                                                     {ProviderKind::tts, {ProviderKind::tts}},
                                                     {ProviderKind::ocr, {ProviderKind::ocr}}};
    std::optional<fs::path> offline_fixtures;
    RenderSettings render;
    TimingFallback timing_fallback = TimingFallback::off;
    int dpi = 150;
    std::string rasterizer = "pdftoppm";
    int narration_context = 1;  // previous transcripts passed to narration
    std::optional<std::pair<int, int>> page_size;  // used when a slide image is unavailable

    const ProviderConfig& provider(ProviderKind k) const { return providers.at(k); }

    void validate() const {
        if (workdir.empty()) throw ConfigError("workdir is not set");
        match.validate();
        for (const auto& [k, p] : providers) p.validate();
        if (dpi <= 0) throw ConfigError("dpi must be > 0");
        if (narration_context < 0) throw ConfigError("narration_context must be >= 0");
        RenderPlan probe;
        probe.style = render.style;
        probe.fps = render.fps;
        probe.width = render.width;
        probe.height = render.height;
        probe.validate();
    }
};

/// Reads a pipeline config file; relative paths resolve against the file's directory.
inline PipelineConfig load_pipeline_config(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    if (j.contains("input")) c.input = resolve(j["input"].get<std::string>());
    if (j.contains("workdir")) c.workdir = resolve(j["workdir"].get<std::string>());
    if (j.contains("match")) c.match = j["match"].get<MatchConfig>();
    if (j.contains("providers")) {
        for (const auto& [name, pj] : j["providers"].items()) {
            ProviderConfig p = pj.get<ProviderConfig>();
            p.kind = json(name).get<ProviderKind>();
            c.providers[p.kind] = p;
        }
    }
    if (j.contains("offline") && !j["offline"].is_null()) c.offline_fixtures = resolve(j["offline"].get<std::string>());
    if (j.contains("render")) {
        const auto& r = j["render"];
        if (r.contains("style")) c.render.style = r["style"].get<HighlightStyle>();
        c.render.fps = r.value("fps", c.render.fps);
        if (r.contains("resolution")) {
            c.render.width = r["resolution"].at(0).get<int>();
            c.render.height = r["resolution"].at(1).get<int>();
        }
        c.render.encoder = r.value("encoder", c.render.encoder);
        c.render.events_only = r.value("events_only", c.render.events_only);
    }
    c.timing_fallback = j.value("timing_fallback", c.timing_fallback);
    c.dpi = j.value("dpi", c.dpi);
    c.rasterizer = j.value("rasterizer", c.rasterizer);
    c.narration_context = j.value("narration_context", c.narration_context);
    for (auto& [k, p] : c.providers) apply_env_overrides(p);
    return c;
}

/// Constructors for live provider clients (the HTTP ones live outside the core library).
struct OnlineClients {
    std::function<std::unique_ptr<LlmClient>(const ProviderConfig&)> llm;
    std::function<std::unique_ptr<TtsClient>(const ProviderConfig&)> tts;
    std::function<std::unique_ptr<OcrClient>(const ProviderConfig&)> ocr;
};

struct RunOptions {
    std::optional<Stage> from;  // recompute this stage and everything after it
    Stage to = Stage::video;
    int jobs = 1;
    std::vector<int> slides;  // empty: every slide
};

struct RunSummary {
    int slide_count = 0;
    std::map<int, std::string> failed;  // slide -> error
    std::optional<std::string> global_error;
    std::optional<fs::path> video;
    std::vector<UsageRecord> calls;  // records of provider calls made during this run

    int exit_code() const { return failed.empty() && !global_error ? 0 : 1; }
};

namespace detail {

inline std::string stage_hash(Stage stage, const json& params, const std::vector<std::string>& inputs) {
    return util::sha256_hex(json{{"stage", to_string(stage)}, {"params", params}, {"inputs", inputs}}.dump());
}

inline fs::path sidecar(const fs::path& p) {
    fs::path s = p;
    s += ".hash";
    return s;
}

inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
    };
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

inline std::optional<int> numeric_stem(const fs::path& p) {
    const std::string s = p.stem().string();
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    return std::stoi(s);
}

// Digits inside a file name compared as numbers, so page-2 sorts before page-10.
inline bool natural_less(const std::string& a, const std::string& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
            std::size_t i2 = i, j2 = j;
            while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
            while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
            const auto na = std::stoull(a.substr(i, i2 - i)), nb = std::stoull(b.substr(j, j2 - j));
            if (na != nb) return na < nb;
            i = i2;
            j = j2;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    return a.size() - i < b.size() - j;
}

inline std::string jsonl(const std::vector<json>& lines) {
    std::string out;
    for (const auto& l : lines) out += l.dump() + "\n";
    return out;
}

}  // namespace detail

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg, OnlineClients online = {}) : cfg_(std::move(cfg)), online_(std::move(online)) {
        cfg_.validate();
    }

    const PipelineConfig& config() const { return cfg_; }

    /// Runs stages [from, to]. Configuration and credential problems throw before any stage
    /// runs; per-slide failures are collected in the summary.
    RunSummary run(const RunOptions& opts = {}) {
        const Stage first = opts.from.value_or(Stage::slides);
        if (first > opts.to) throw ConfigError("--from stage comes after the last requested stage");
        from_ = opts.from;
        setup_providers(first, opts.to);
        if (opts.to == Stage::video && !cfg_.render.events_only && !find_program(cfg_.render.encoder))
            throw EncoderMissing("video encoder '" + cfg_.render.encoder + "' not found");

        RunSummary summary;
        failed_.clear();
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<int> slides;
        try {
            slides = first == Stage::slides ? rasterize() : existing_slides(first);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            log::error("slides", e.what());
            summary.global_error = e.what();
            return summary;
        }
        if (!opts.slides.empty()) {
            std::vector<int> keep;
            for (int s : slides)
                if (std::find(opts.slides.begin(), opts.slides.end(), s) != opts.slides.end()) keep.push_back(s);
            slides = keep;
        }
        summary.slide_count = static_cast<int>(slides.size());
        auto in_range = [&](Stage s) { return s >= first && s <= opts.to; };

        // Narration is a serial chain (each slide sees the previous transcript); OCR runs beside it.
        auto narration_chain = [&] {
            if (!in_range(Stage::narration)) return;
            for (int n : slides) per_slide(Stage::narration, n, [&] { return narration(n); });
        };
        auto ocr_part = [&](std::size_t i) {
            const int n = slides[i];
            if (in_range(Stage::ocr)) per_slide(Stage::ocr, n, [&] { return ocr(n); });
            if (in_range(Stage::layout)) per_slide(Stage::layout, n, [&] { return layout(n); });
        };
        if (opts.jobs <= 1) {
            narration_chain();
            detail::parallel_for(slides.size(), 1, ocr_part);
        } else {
            std::thread chain(narration_chain);
            detail::parallel_for(slides.size(), opts.jobs, ocr_part);
            chain.join();
        }
        detail::parallel_for(slides.size(), opts.jobs, [&](std::size_t i) {
            const int n = slides[i];
            for (Stage s : {Stage::tts, Stage::matches, Stage::timing, Stage::events}) {
                if (!in_range(s)) continue;
                per_slide(s, n, [&] {
                    switch (s) {
                        case Stage::tts: return tts(n);
                        case Stage::matches: return matches(n);
                        case Stage::timing: return timing(n);
                        default: return events(n);
                    }
                });
            }
        });

        if (in_range(Stage::narration) || in_range(Stage::ocr) || in_range(Stage::tts) || in_range(Stage::matches))
            merge_usage(slides);
        if (opts.to >= Stage::events) {
            try {
                const auto plan = write_plan(slides);
                if (in_range(Stage::video) && !cfg_.render.events_only) summary.video = video(plan, opts.jobs);
            } catch (const std::exception& e) {
                log::error("video", e.what());
                summary.global_error = e.what();
            }
        }
        {
            std::lock_guard lock(mu_);
            summary.failed = failed_;
        }
        if (usage_) summary.calls = usage_->records();
        log::info("pipeline", "finished",
                  {{"slides", summary.slide_count},
                   {"failed", summary.failed.size()},
                   {"duration_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                                       std::chrono::steady_clock::now() - t0)
                                       .count()}});
        return summary;
    }

    fs::path path(const std::string& rel) const { return cfg_.workdir / rel; }

private:
    // ---- providers --------------------------------------------------------------------

    void setup_providers(Stage first, Stage last) {
        auto in_range = [&](Stage s) { return s >= first && s <= last; };
        const bool need_llm = in_range(Stage::narration) || (in_range(Stage::matches) && cfg_.match.method == Method::llm);
        const bool need_tts = in_range(Stage::tts);
        const bool need_ocr = in_range(Stage::ocr);
        usage_ = std::make_unique<UsageLog>();
        Clock clock = wall_clock_ms;
        std::map<ProviderKind, ProviderConfig> gate_cfg = cfg_.providers;
        if (cfg_.offline_fixtures) {
            if (!fs::is_directory(*cfg_.offline_fixtures))
                throw ConfigError("offline fixture directory not found: " + cfg_.offline_fixtures->string());
            clock = [] { return std::int64_t{0}; };
            for (auto& [k, p] : gate_cfg) {
                p.rate_limit = 1e9;
                p.retries = 0;
                p.backoff_ms = 0;
            }
            if (need_llm) llm_raw_ = std::make_unique<MockLlmClient>(*cfg_.offline_fixtures);
            if (need_tts) tts_raw_ = std::make_unique<MockTtsClient>();
            if (need_ocr) ocr_raw_ = std::make_unique<MockOcrClient>(*cfg_.offline_fixtures);
        } else {
            if (need_llm) cfg_.provider(ProviderKind::llm).validate_online();
            if (need_tts) cfg_.provider(ProviderKind::tts).validate_online();
            if (need_ocr) cfg_.provider(ProviderKind::ocr).validate_online();
            if ((need_llm && !online_.llm) || (need_tts && !online_.tts) || (need_ocr && !online_.ocr))
                throw ConfigError("no live provider client available; use offline fixtures");
            if (need_llm) llm_raw_ = online_.llm(cfg_.provider(ProviderKind::llm));
            if (need_tts) tts_raw_ = online_.tts(cfg_.provider(ProviderKind::tts));
            if (need_ocr) ocr_raw_ = online_.ocr(cfg_.provider(ProviderKind::ocr));
        }
        for (const auto& [k, p] : gate_cfg) gates_[k] = std::make_unique<ProviderGate>(p);
        if (llm_raw_) llm_ = std::make_unique<MeteredLlm>(*llm_raw_, *gates_[ProviderKind::llm], *usage_, clock);
        if (tts_raw_) tts_ = std::make_unique<MeteredTts>(*tts_raw_, *gates_[ProviderKind::tts], *usage_, clock);
        if (ocr_raw_) ocr_ = std::make_unique<MeteredOcr>(*ocr_raw_, *gates_[ProviderKind::ocr], *usage_, clock);
    }

    json provider_identity(ProviderKind k) const {
        if (cfg_.offline_fixtures) return {{"offline", fs::absolute(*cfg_.offline_fixtures).lexically_normal().string()}};
        const auto& p = cfg_.provider(k);
        return {{"endpoint", p.endpoint}, {"model_name", p.model_name}};
    }

    // ---- artifact bookkeeping -------------------------------------------------------

    /// Recorded hash of an input artifact; content hash when it has no sidecar.
    std::string input_hash(const std::string& rel) const {
        const fs::path p = path(rel);
        if (!fs::exists(p)) throw PreconditionError("missing input artifact " + rel);
        const fs::path s = detail::sidecar(p);
        if (fs::exists(s)) return util::read_file(s);
        return util::sha256_hex(util::read_file(p));
    }

    bool forced(Stage s) const { return from_ && s >= *from_; }

    bool fresh(Stage s, const std::vector<std::string>& outputs, const std::string& hash) const {
        if (forced(s)) return false;
        for (const auto& rel : outputs) {
            const fs::path p = path(rel);
            if (!fs::exists(p) || !fs::exists(detail::sidecar(p)) || util::read_file(detail::sidecar(p)) != hash)
                return false;
        }
        return true;
    }

    void write_artifact(const std::string& rel, const std::string& data, const std::string& hash) const {
        util::write_file_atomic(path(rel), data);
        util::write_file_atomic(detail::sidecar(path(rel)), hash);
    }

    void remove_artifact(const std::string& rel) const {
        std::error_code ec;
        fs::remove(path(rel), ec);
        fs::remove(detail::sidecar(path(rel)), ec);
    }

    void write_usage(int n, Stage s, const std::string& purpose) const {
        std::vector<UsageRecord> mine;
        for (const auto& r : usage_->records())
            if (r.slide == n && r.purpose == purpose) mine.push_back(r);
        util::write_file_atomic(path("usage/" + std::to_string(n) + "." + std::string(to_string(s)) + ".jsonl"),
                                usage_jsonl(mine));
    }

    static std::vector<std::string> outputs_of(Stage s, int n) {
        const std::string i = std::to_string(n);
        switch (s) {
            case Stage::narration: return {"transcripts/slide_" + i + ".txt", "transcripts/" + i + ".json"};
            case Stage::ocr: return {"ocr/" + i + ".json", "ocr/" + i + ".tsv"};
            case Stage::layout: return {"layout/" + i + ".json"};
            case Stage::tts: return {"tts/" + i + ".json", "audio/" + i + ".wav"};
            case Stage::matches: return {"matches/" + i + ".json"};
            case Stage::timing: return {"timing/" + i + ".json"};
            case Stage::events: return {"events/" + i + ".json", "diagnostics/" + i + ".jsonl"};
            default: return {};
        }
    }

    void per_slide(Stage s, int n, const std::function<bool()>& body) {
        {
            std::lock_guard lock(mu_);
            if (failed_.count(n)) return;
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const bool ran = body();
            log::info(std::string(to_string(s)), ran ? "done" : "cached",
                      {{"slide", n},
                       {"duration_ms", std::chrono::duration_cast<std::chrono::milliseconds>(
                                           std::chrono::steady_clock::now() - t0)
                                           .count()}});
        } catch (const std::exception& e) {
            for (const auto& rel : outputs_of(s, n)) remove_artifact(rel);
            log::error(std::string(to_string(s)), e.what(), {{"slide", n}});
            std::lock_guard lock(mu_);
            failed_.emplace(n, std::string(to_string(s)) + ": " + e.what());
        }
    }

    // ---- stages ---------------------------------------------------------------------

    std::vector<int> rasterize() {
        const fs::path& in = cfg_.input;
        if (in.empty() || !fs::exists(in)) throw ConfigError("input not found: " + in.string());
        json params{{"dpi", cfg_.dpi}};
        std::vector<std::string> sources;
        std::vector<fs::path> images;
        const bool is_pdf = fs::is_regular_file(in);
        if (is_pdf) {
            params["rasterizer"] = cfg_.rasterizer;
            sources.push_back(util::sha256_hex(util::read_file(in)));
        } else {
            for (const auto& e : fs::directory_iterator(in)) {
                const auto ext = e.path().extension().string();
                if (e.is_regular_file() && (ext == ".png" || ext == ".ppm")) images.push_back(e.path());
            }
            std::sort(images.begin(), images.end(), [](const fs::path& a, const fs::path& b) {
                return detail::natural_less(a.filename().string(), b.filename().string());
            });
            if (images.empty()) throw ConfigError("no .png or .ppm slide images in " + in.string());
            for (const auto& p : images) sources.push_back(util::sha256_hex(util::read_file(p)));
        }
        const std::string hash = detail::stage_hash(Stage::slides, params, sources);
        const std::string manifest = "slides/manifest.json";
        if (fresh(Stage::slides, {manifest}, hash)) {
            const auto count = json::parse(util::read_file(path(manifest))).at("count").get<int>();
            std::vector<int> out;
            for (int n = 0; n < count; ++n) out.push_back(n);
            if (std::all_of(out.begin(), out.end(),
                            [&](int n) { return fs::exists(path("slides/" + std::to_string(n) + ".png")); })) {
                log::info("slides", "cached", {{"slides", count}});
                return out;
            }
        }
        const auto t0 = std::chrono::steady_clock::now();
        if (is_pdf) images = run_rasterizer();
        std::vector<int> out;
        for (std::size_t i = 0; i < images.size(); ++i) {
            const std::string png = encode_png(decode_image(util::read_file(images[i])));
            write_artifact("slides/" + std::to_string(i) + ".png", png, util::sha256_hex(png));
            out.push_back(static_cast<int>(i));
        }
        if (is_pdf) fs::remove_all(path("slides/.raster"));
        write_artifact(manifest,
                       canonical_dump({{"schema_version", kSchemaVersion}, {"count", out.size()}, {"dpi", cfg_.dpi}}),
                       hash);
        log::info("slides", "rasterized",
                  {{"slides", out.size()},
                   {"duration_ms",
                    std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count()}});
        return out;
    }

    std::vector<fs::path> run_rasterizer() const {
        const auto program = find_program(cfg_.rasterizer);
        if (!program) throw ConfigError("PDF rasterizer '" + cfg_.rasterizer + "' not found");
        const fs::path tmp = path("slides/.raster");
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        const auto res = run_process(
            {*program, "-r", std::to_string(cfg_.dpi), "-png", cfg_.input.string(), (tmp / "page").string()});
        if (res.exit_code != 0) throw Error("rasterizer failed: " + res.stderr_text);
        std::vector<fs::path> pages;
        for (const auto& e : fs::directory_iterator(tmp))
            if (e.path().extension() == ".png") pages.push_back(e.path());
        std::sort(pages.begin(), pages.end(), [](const fs::path& a, const fs::path& b) {
            return detail::natural_less(a.filename().string(), b.filename().string());
        });
        if (pages.empty()) throw Error("rasterizer produced no pages");
        return pages;
    }

    std::vector<int> existing_slides(Stage first) const {
        const fs::path manifest = path("slides/manifest.json");
        if (fs::exists(manifest)) {
            const int count = json::parse(util::read_file(manifest)).at("count").get<int>();
            std::vector<int> out;
            for (int n = 0; n < count; ++n) out.push_back(n);
            return out;
        }
        static const std::map<Stage, std::string> input_dir{
            {Stage::narration, "slides"}, {Stage::ocr, "slides"},     {Stage::layout, "ocr"},
            {Stage::tts, "transcripts"},  {Stage::matches, "transcripts"}, {Stage::timing, "tts"},
            {Stage::events, "matches"},   {Stage::video, "events"}};
        std::set<int> found;
        const fs::path dir = path(input_dir.at(first));
        if (fs::is_directory(dir))
            for (const auto& e : fs::directory_iterator(dir))
                if (auto n = detail::numeric_stem(e.path()); n && e.path().extension() != ".hash") found.insert(*n);
        if (found.empty()) throw PreconditionError("no cached inputs found in " + dir.string());
        return {found.begin(), found.end()};
    }

    bool narration(int n) {
        const std::string i = std::to_string(n);
        const std::string image_rel = "slides/" + i + ".png";
        std::vector<std::string> inputs{input_hash(image_rel)};
        std::string prior;
        for (int k = std::max(0, n - cfg_.narration_context); k < n; ++k) {
            const std::string rel = "transcripts/" + std::to_string(k) + ".json";
            if (!fs::exists(path(rel))) continue;
            inputs.push_back(input_hash(rel));
            const auto t = json::parse(util::read_file(path(rel))).get<Transcript>();
            if (!prior.empty()) prior += "\n\n";
            prior += t.stripped_text;
        }
        const std::string hash = detail::stage_hash(Stage::narration, provider_identity(ProviderKind::llm), inputs);
        const auto outs = outputs_of(Stage::narration, n);
        if (fresh(Stage::narration, outs, hash)) return false;
        const std::string raw = generate_narration(util::read_file(path(image_rel)), prior, *llm_, n);
        const Transcript t = parse_transcript(raw);
        write_artifact(outs[0], raw, hash);
        write_artifact(outs[1], canonical_dump(t), hash);
        write_usage(n, Stage::narration, "narration");
        return true;
    }

    bool ocr(int n) {
        const std::string i = std::to_string(n);
        const std::string image_rel = "slides/" + i + ".png";
        const std::string hash =
            detail::stage_hash(Stage::ocr, provider_identity(ProviderKind::ocr), {input_hash(image_rel)});
        const auto outs = outputs_of(Stage::ocr, n);
        if (fresh(Stage::ocr, {outs[0]}, hash) || fresh(Stage::ocr, {outs[1]}, hash)) return false;
        const auto doc = run_ocr(util::read_file(path(image_rel)), *ocr_, n);
        const bool is_json = doc.backend == OcrBackend::read_v4_json;
        remove_artifact(is_json ? outs[1] : outs[0]);
        write_artifact(is_json ? outs[0] : outs[1], doc.payload, hash);
        write_usage(n, Stage::ocr, "ocr");
        return true;
    }

    bool layout(int n) {
        const std::string i = std::to_string(n);
        const std::string json_rel = "ocr/" + i + ".json", tsv_rel = "ocr/" + i + ".tsv";
        const bool is_json = fs::exists(path(json_rel));
        const std::string ocr_rel = is_json ? json_rel : tsv_rel;
        const std::string image_rel = "slides/" + i + ".png";
        std::vector<std::string> inputs{input_hash(ocr_rel)};
        int w = 0, h = 0;
        if (fs::exists(path(image_rel))) {
            inputs.push_back(input_hash(image_rel));
            const Image img = decode_image(util::read_file(path(image_rel)));
            w = img.width;
            h = img.height;
        } else if (cfg_.page_size) {
            std::tie(w, h) = *cfg_.page_size;
        } else {
            throw PreconditionError("page size unknown for slide " + i + ": no slide image and no --width/--height");
        }
        const std::string hash = detail::stage_hash(Stage::layout, {{"width", w}, {"height", h}}, inputs);
        const auto outs = outputs_of(Stage::layout, n);
        if (fresh(Stage::layout, outs, hash)) return false;
        const OcrBackendDoc doc{is_json ? OcrBackend::read_v4_json : OcrBackend::tesseract_tsv,
                                util::read_file(path(ocr_rel)), n};
        OcrLayout l = ingest(doc, w, h);
        l.slide_index = n;
        write_artifact(outs[0], canonical_dump(l), hash);
        return true;
    }

    Transcript load_transcript(int n) const {
        return json::parse(util::read_file(path("transcripts/" + std::to_string(n) + ".json"))).get<Transcript>();
    }

    OcrLayout load_layout(int n) const {
        return json::parse(util::read_file(path("layout/" + std::to_string(n) + ".json"))).get<OcrLayout>();
    }

    bool tts(int n) {
        const std::string i = std::to_string(n);
        const std::string tr = "transcripts/" + i + ".json";
        const std::string hash = detail::stage_hash(Stage::tts, provider_identity(ProviderKind::tts), {input_hash(tr)});
        const auto outs = outputs_of(Stage::tts, n);
        if (fresh(Stage::tts, outs, hash)) return false;
        const auto r = synthesize_speech(tts_input(load_transcript(n)), *tts_, n);
        std::string audio = r.audio;
        if (audio.empty()) audio = make_silent_wav(r.timestamps.empty() ? 0 : r.timestamps.back().end_ms);
        write_artifact(outs[0], canonical_dump(json(r.timestamps)), hash);
        write_artifact(outs[1], audio, hash);
        write_usage(n, Stage::tts, "tts");
        return true;
    }

    bool matches(int n) {
        const std::string i = std::to_string(n);
        const std::string tr = "transcripts/" + i + ".json", lr = "layout/" + i + ".json";
        json params = cfg_.match;
        if (cfg_.match.method == Method::llm) params["llm"] = provider_identity(ProviderKind::llm);
        const std::string hash = detail::stage_hash(Stage::matches, params, {input_hash(tr), input_hash(lr)});
        const auto outs = outputs_of(Stage::matches, n);
        if (fresh(Stage::matches, outs, hash)) return false;
        const Transcript t = load_transcript(n);
        OcrLayout l = load_layout(n);
        l.slide_index = n;
        json list = json::array();
        for (std::size_t m = 0; m < t.markers.size(); ++m) {
            const auto& mk = t.markers[m];
            const auto [before, after] = marker_context(t, mk);
            LlmClient* llm = cfg_.match.method == Method::llm ? llm_.get() : nullptr;
            const MatchResult r = match_location(mk.phrase, l, cfg_.match, llm, MatchContext{before, after});
            list.push_back({{"marker_index", m}, {"phrase", mk.phrase}, {"result", r}});
        }
        write_artifact(outs[0],
                       canonical_dump({{"schema_version", kSchemaVersion},
                                       {"slide_index", n},
                                       {"config", cfg_.match},
                                       {"matches", list}}),
                       hash);
        if (cfg_.match.method == Method::llm) write_usage(n, Stage::matches, "alignment");
        else util::write_file_atomic(path("usage/" + i + ".matches.jsonl"), "");
        return true;
    }

    bool timing(int n) {
        const std::string i = std::to_string(n);
        const std::string tr = "transcripts/" + i + ".json", ts = "tts/" + i + ".json";
        const std::string hash = detail::stage_hash(Stage::timing, {{"fallback", cfg_.timing_fallback}},
                                                    {input_hash(tr), input_hash(ts)});
        const auto outs = outputs_of(Stage::timing, n);
        if (fresh(Stage::timing, outs, hash)) return false;
        const Transcript t = load_transcript(n);
        const auto stamps = json::parse(util::read_file(path(ts))).get<std::vector<WordTimestamp>>();
        json list = json::array();
        for (std::size_t m = 0; m < t.markers.size(); ++m) {
            const auto& mk = t.markers[m];
            json entry{{"marker_index", m}, {"phrase", mk.phrase}, {"occurrence_index", mk.occurrence_index}};
            try {
                const auto iv = lookup_time(mk, stamps, cfg_.timing_fallback);
                entry["start_ms"] = iv.start_ms;
                entry["end_ms"] = iv.end_ms;
                entry["status"] = "found";
            } catch (const OccurrenceNotFound&) {
                entry["status"] = "not_found";
            }
            list.push_back(entry);
        }
        write_artifact(outs[0],
                       canonical_dump({{"schema_version", kSchemaVersion}, {"slide_index", n}, {"intervals", list}}),
                       hash);
        return true;
    }

    bool events(int n) {
        const std::string i = std::to_string(n);
        const std::string tr = "transcripts/" + i + ".json", mr = "matches/" + i + ".json", tm = "timing/" + i + ".json",
                          lr = "layout/" + i + ".json";
        const std::string hash = detail::stage_hash(Stage::events, json::object(),
                                                    {input_hash(tr), input_hash(mr), input_hash(tm), input_hash(lr)});
        const auto outs = outputs_of(Stage::events, n);
        if (fresh(Stage::events, outs, hash)) return false;
        const Transcript t = load_transcript(n);
        const OcrLayout l = load_layout(n);
        const json mj = json::parse(util::read_file(path(mr)));
        const json tj = json::parse(util::read_file(path(tm)));
        const auto& ml = mj.at("matches");
        const auto& tl = tj.at("intervals");
        if (ml.size() != t.markers.size() || tl.size() != t.markers.size())
            throw PreconditionError("matches/timing of slide " + i + " do not cover the transcript's markers");
        std::vector<MatchResult> results;
        std::vector<std::optional<TimeInterval>> intervals;
        for (std::size_t m = 0; m < t.markers.size(); ++m) {
            results.push_back(ml[m].at("result").get<MatchResult>());
            if (tl[m].value("status", "") == "found")
                intervals.emplace_back(TimeInterval{tl[m].at("start_ms").get<std::int64_t>(),
                                                    tl[m].at("end_ms").get<std::int64_t>()});
            else
                intervals.emplace_back(std::nullopt);
        }
        const auto built = build_events(n, t.markers, results, intervals, l);
        write_artifact(outs[0], canonical_dump(events_document(n, built.events)), hash);
        write_artifact(outs[1], detail::jsonl(built.diagnostics), hash);
        return true;
    }

    void merge_usage(const std::vector<int>& slides) const {
        std::string all;
        for (int n : slides) {
            for (Stage s : {Stage::narration, Stage::ocr, Stage::tts, Stage::matches}) {
                const fs::path p = path("usage/" + std::to_string(n) + "." + std::string(to_string(s)) + ".jsonl");
                if (fs::exists(p)) all += util::read_file(p);
            }
        }
        util::write_file_atomic(path("usage.jsonl"), all);
    }

    RenderPlan write_plan(const std::vector<int>& slides) const {
        RenderPlan plan;
        plan.style = cfg_.render.style;
        plan.fps = cfg_.render.fps;
        plan.width = cfg_.render.width;
        plan.height = cfg_.render.height;
        std::set<int> failed;
        {
            std::lock_guard lock(mu_);
            for (const auto& [n, e] : failed_) failed.insert(n);
        }
        std::string diagnostics;
        for (int n : slides) {
            if (failed.count(n)) continue;
            const std::string i = std::to_string(n);
            if (!fs::exists(path("events/" + i + ".json"))) continue;
            SlidePlan s;
            s.slide_index = n;
            s.image = "slides/" + i + ".png";
            s.audio = "audio/" + i + ".wav";
            if (fs::exists(path(s.audio))) s.audio_duration_ms = wav_duration_ms(util::read_file(path(s.audio)));
            s.events = parse_events_document(json::parse(util::read_file(path("events/" + i + ".json"))));
            const fs::path dp = path("diagnostics/" + i + ".jsonl");
            if (fs::exists(dp)) {
                const std::string d = util::read_file(dp);
                diagnostics += d;
                std::size_t pos = 0;
                while (pos < d.size()) {
                    const auto nl = d.find('\n', pos);
                    plan.diagnostics.push_back(json::parse(d.substr(pos, nl - pos)));
                    pos = nl == std::string::npos ? d.size() : nl + 1;
                }
            }
            plan.slides.push_back(std::move(s));
        }
        util::write_file_atomic(path("diagnostics.jsonl"), diagnostics);
        util::write_file_atomic(path("plan.json"), canonical_dump(plan));
        return plan;
    }

    fs::path video(const RenderPlan& plan, int jobs) {
        if (plan.slides.empty()) throw PreconditionError("no slide is ready to render");
        std::vector<std::string> inputs{util::sha256_hex(json(plan).dump())};
        for (const auto& s : plan.slides) {
            inputs.push_back(input_hash(s.image));
            inputs.push_back(input_hash(s.audio));
        }
        const std::string hash = detail::stage_hash(Stage::video, {{"encoder", cfg_.render.encoder}}, inputs);
        if (fresh(Stage::video, {"lecture.mp4"}, hash)) return path("lecture.mp4");
        const auto t0 = std::chrono::steady_clock::now();
        RenderOptions ro;
        ro.encoder = cfg_.render.encoder;
        ro.jobs = jobs;
        const auto out = render_video(plan, cfg_.workdir, cfg_.workdir, ro);
        util::write_file_atomic(detail::sidecar(*out), hash);
        log::info("video", "done",
                  {{"duration_ms",
                    std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count()}});
        return *out;
    }

    PipelineConfig cfg_;
    OnlineClients online_;
    std::optional<Stage> from_;
    std::unique_ptr<UsageLog> usage_;
    std::map<ProviderKind, std::unique_ptr<ProviderGate>> gates_;
    std::unique_ptr<LlmClient> llm_raw_;
    std::unique_ptr<TtsClient> tts_raw_;
    std::unique_ptr<OcrClient> ocr_raw_;
    std::unique_ptr<LlmClient> llm_;
    std::unique_ptr<TtsClient> tts_;
    std::unique_ptr<OcrClient> ocr_;
    mutable std::mutex mu_;
    std::map<int, std::string> failed_;
};

}  // namespace slidecast
