#include <CLI11.hpp>

#include <iostream>

#include "slidecast/costmodel.hpp"
#include "slidecast/evalkit.hpp"
#include "slidecast/pipeline.hpp"
#include "slidecast/providers_http.hpp"

using namespace slidecast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

struct MatchFlags {
    std::string granularity = "word";
    std::string method = "simple";
    std::optional<double> tau;
    std::optional<int> slack;

    void add(CLI::App* app) {
        app->add_option("--granularity", granularity, "word or line")->check(CLI::IsMember({"word", "line"}));
        app->add_option("--method", method, "simple, fuzzy or llm")->check(CLI::IsMember({"simple", "fuzzy", "llm"}));
        app->add_option("--tau", tau, "fuzzy similarity threshold");
        app->add_option("--slack", slack, "fuzzy window slack in words");
    }

    void apply(MatchConfig& m, const CLI::App* app) const {
        if (app->count("--granularity")) m.granularity = json(granularity).get<Granularity>();
        if (app->count("--method")) m.method = json(method).get<Method>();
        if (tau) m.fuzzy_threshold = *tau;
        if (slack) m.fuzzy_window_slack = *slack;
        m.validate();
    }
};

OnlineClients http_clients() {
    OnlineClients c;
    c.llm = [](const ProviderConfig& p) -> std::unique_ptr<LlmClient> { return std::make_unique<HttpLlmClient>(p); };
    c.tts = [](const ProviderConfig& p) -> std::unique_ptr<TtsClient> { return std::make_unique<HttpTtsClient>(p); };
    c.ocr = [](const ProviderConfig& p) -> std::unique_ptr<OcrClient> { return std::make_unique<HttpOcrClient>(p); };
    return c;
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(util::read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

// Shared by every workdir-based subcommand.
struct PipelineFlags {
    std::string config;
    std::string input;
    std::string workdir;
    std::string offline;
    int jobs = 1;
    std::vector<int> slides;

    void add(CLI::App* app, bool with_input) {
        app->add_option("--config", config, "pipeline config JSON");
        if (with_input) app->add_option("--input", input, "PDF file or directory of slide images");
        app->add_option("--workdir", workdir, "work directory");
        app->add_option("--offline", offline, "fixture directory; replaces every provider with a mock");
        app->add_option("--jobs", jobs, "slides processed in parallel")->check(CLI::PositiveNumber);
        app->add_option("--slide", slides, "restrict to these slide indices");
    }

    PipelineConfig load() const {
        PipelineConfig c;
        if (!config.empty()) c = load_pipeline_config(read_json_file(config), fs::path(config).parent_path());
        else
            for (auto& [k, p] : c.providers) apply_env_overrides(p);
        if (!input.empty()) c.input = input;
        if (!workdir.empty()) c.workdir = workdir;
        if (!offline.empty()) c.offline_fixtures = offline;
        return c;
    }
};

int run_pipeline(PipelineConfig cfg, RunOptions opts) {
    Pipeline p(std::move(cfg), http_clients());
    const RunSummary s = p.run(opts);
    for (const auto& [n, err] : s.failed) std::cerr << "slide " << n << " failed: " << err << "\n";
    if (s.global_error) std::cerr << "error: " << *s.global_error << "\n";
    std::cout << "slides: " << s.slide_count << ", failed: " << s.failed.size();
    if (s.video) std::cout << ", video: " << s.video->string();
    std::cout << "\n";
    return s.exit_code() == 0 ? kExitOk : kExitPartial;
}

std::unique_ptr<LlmClient> eval_llm(const std::string& offline, const std::string& config) {
    if (!offline.empty()) return std::make_unique<MockLlmClient>(offline);
    ProviderConfig p{ProviderKind::llm};
    if (!config.empty()) {
        const json j = read_json_file(config);
        if (j.contains("providers") && j["providers"].contains("llm")) p = j["providers"]["llm"].get<ProviderConfig>();
        p.kind = ProviderKind::llm;
    }
    apply_env_overrides(p);
    p.validate_online();
    return std::make_unique<HttpLlmClient>(p);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slidecast: slide decks to narrated lecture videos with synchronized highlights"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "run the full pipeline");
    PipelineFlags gen_flags;
    gen_flags.add(gen, true);
    MatchFlags gen_match;
    gen_match.add(gen);
    std::string gen_from, gen_fallback, gen_encoder, gen_rasterizer;
    std::optional<int> gen_fps, gen_dpi;
    bool gen_events_only = false;
    gen->add_option("--from", gen_from, "recompute from this stage on")
        ->check(CLI::IsMember({"slides", "narration", "transcripts", "ocr", "layout", "tts", "matches", "timing",
                               "events", "video"}));
    gen->add_option("--timing-fallback", gen_fallback, "off or fuzzy")->check(CLI::IsMember({"off", "fuzzy"}));
    gen->add_option("--fps", gen_fps, "output frame rate")->check(CLI::PositiveNumber);
    gen->add_option("--dpi", gen_dpi, "PDF rasterization resolution")->check(CLI::PositiveNumber);
    gen->add_option("--encoder", gen_encoder, "video encoder executable");
    gen->add_option("--rasterizer", gen_rasterizer, "PDF rasterizer executable");
    gen->add_flag("--events-only", gen_events_only, "stop after render events and plan.json");

    // ocr-ingest
    auto* ocr_cmd = app.add_subcommand("ocr-ingest", "convert ocr/<n>.json|.tsv into layout/<n>.json");
    PipelineFlags ocr_flags;
    ocr_flags.add(ocr_cmd, false);
    std::optional<int> ocr_w, ocr_h;
    ocr_cmd->add_option("--width", ocr_w, "page width when slides/<n>.png is absent");
    ocr_cmd->add_option("--height", ocr_h, "page height when slides/<n>.png is absent");

    // align
    auto* align = app.add_subcommand("align", "match highlight phrases to layout elements");
    PipelineFlags align_flags;
    align_flags.add(align, false);
    MatchFlags align_match;
    align_match.add(align);

    // time
    auto* time_cmd = app.add_subcommand("time", "look up marker intervals and build render events");
    PipelineFlags time_flags;
    time_flags.add(time_cmd, false);
    std::string time_fallback;
    time_cmd->add_option("--timing-fallback", time_fallback, "off or fuzzy")->check(CLI::IsMember({"off", "fuzzy"}));

    // render
    auto* render = app.add_subcommand("render", "composite and encode a render plan");
    std::string plan_path, style_path, render_encoder = "ffmpeg", render_out;
    std::optional<int> render_fps;
    bool render_events_only = false;
    int render_jobs = 1;
    render->add_option("--plan", plan_path, "plan.json")->required();
    render->add_option("--fps", render_fps, "output frame rate")->check(CLI::PositiveNumber);
    render->add_option("--style", style_path, "highlight style JSON");
    render->add_option("--encoder", render_encoder, "video encoder executable");
    render->add_option("--out", render_out, "output directory (default: the plan's directory)");
    render->add_option("--jobs", render_jobs, "slides encoded in parallel")->check(CLI::PositiveNumber);
    render->add_flag("--events-only", render_events_only, "write events/ and diagnostics.jsonl only");

    // eval
    auto* eval = app.add_subcommand("eval", "score location matching on an annotated dataset");
    std::string eval_dataset, eval_averaging = "micro", eval_report = "report.json", eval_offline, eval_config;
    MatchFlags eval_match;
    eval_match.add(eval);
    std::optional<std::size_t> eval_sample;
    std::uint64_t eval_seed = 0;
    int eval_jobs = 1;
    bool eval_all = false;
    eval->add_option("--dataset", eval_dataset, "dataset directory with manifest.json")->required();
    eval->add_option("--sample", eval_sample, "evaluate a random subset of this size");
    eval->add_option("--seed", eval_seed, "sampling seed");
    eval->add_option("--averaging", eval_averaging, "micro, macro, micro-all or macro-all")
        ->check(CLI::IsMember({"micro", "macro", "micro-all", "macro-all"}));
    eval->add_option("--report", eval_report, "where to write report.json");
    eval->add_option("--offline", eval_offline, "mock LLM fixture directory for the llm method");
    eval->add_option("--config", eval_config, "pipeline config holding providers.llm");
    eval->add_option("--jobs", eval_jobs, "instances matched in parallel")->check(CLI::PositiveNumber);
    eval->add_flag("--all-configs", eval_all, "evaluate every granularity/method combination");

    // compare-llms
    auto* cmp = app.add_subcommand("compare-llms", "word-level LLM matching accuracy across models");
    std::string cmp_dataset, cmp_models, cmp_averaging = "micro", cmp_report = "comparison.json", cmp_offline;
    std::optional<std::size_t> cmp_sample;
    std::uint64_t cmp_seed = 0;
    int cmp_jobs = 1;
    cmp->add_option("--dataset", cmp_dataset, "dataset directory with manifest.json")->required();
    cmp->add_option("--models", cmp_models, "JSON list of LLM provider configs")->required();
    cmp->add_option("--sample", cmp_sample, "evaluate a random subset of this size");
    cmp->add_option("--seed", cmp_seed, "sampling seed");
    cmp->add_option("--averaging", cmp_averaging, "micro, macro, micro-all or macro-all")
        ->check(CLI::IsMember({"micro", "macro", "micro-all", "macro-all"}));
    cmp->add_option("--report", cmp_report, "where to write the JSON report");
    cmp->add_option("--offline", cmp_offline, "serve every model from this mock fixture directory");
    cmp->add_option("--jobs", cmp_jobs, "instances matched in parallel")->check(CLI::PositiveNumber);

    // cost
    auto* cost = app.add_subcommand("cost", "estimate API cost");
    std::int64_t cost_slides = 1;
    std::string cost_prices, cost_usage = "defaults";
    bool cost_json_out = false;
    cost->add_option("--slides", cost_slides, "number of slides")->check(CLI::NonNegativeNumber);
    cost->add_option("--prices", cost_prices, "price sheet JSON");
    cost->add_option("--usage", cost_usage, "per-slide usage JSON, a usage.jsonl log, or 'defaults'");
    cost->add_flag("--json", cost_json_out, "print JSON instead of a table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) {
            PipelineConfig cfg = gen_flags.load();
            gen_match.apply(cfg.match, gen);
            if (!gen_fallback.empty()) cfg.timing_fallback = json(gen_fallback).get<TimingFallback>();
            if (gen_fps) cfg.render.fps = *gen_fps;
            if (gen_dpi) cfg.dpi = *gen_dpi;
            if (!gen_encoder.empty()) cfg.render.encoder = gen_encoder;
            if (!gen_rasterizer.empty()) cfg.rasterizer = gen_rasterizer;
            if (gen_events_only) cfg.render.events_only = true;
            RunOptions opts;
            if (!gen_from.empty()) opts.from = parse_stage(gen_from);
            opts.jobs = gen_flags.jobs;
            opts.slides = gen_flags.slides;
            return run_pipeline(std::move(cfg), opts);
        }
        if (*ocr_cmd) {
            PipelineConfig cfg = ocr_flags.load();
            if (ocr_w && ocr_h) cfg.page_size = std::make_pair(*ocr_w, *ocr_h);
            return run_pipeline(std::move(cfg), {Stage::layout, Stage::layout, ocr_flags.jobs, ocr_flags.slides});
        }
        if (*align) {
            PipelineConfig cfg = align_flags.load();
            align_match.apply(cfg.match, align);
            return run_pipeline(std::move(cfg), {Stage::matches, Stage::matches, align_flags.jobs, align_flags.slides});
        }
        if (*time_cmd) {
            PipelineConfig cfg = time_flags.load();
            if (!time_fallback.empty()) cfg.timing_fallback = json(time_fallback).get<TimingFallback>();
            return run_pipeline(std::move(cfg), {Stage::timing, Stage::events, time_flags.jobs, time_flags.slides});
        }
        if (*render) {
            RenderPlan plan = read_json_file(plan_path).get<RenderPlan>();
            if (render_fps) plan.fps = *render_fps;
            if (!style_path.empty()) plan.style = read_json_file(style_path).get<HighlightStyle>();
            const fs::path base = fs::path(plan_path).parent_path();
            RenderOptions ro;
            ro.encoder = render_encoder;
            ro.events_only = render_events_only;
            ro.jobs = render_jobs;
            const auto video = render_video(plan, base, render_out.empty() ? base : fs::path(render_out), ro);
            if (video) std::cout << video->string() << "\n";
            return kExitOk;
        }
        if (*eval) {
            auto instances = load_dataset(eval_dataset);
            if (eval_sample) instances = sample_instances(instances, *eval_sample, eval_seed);
            EvalOptions eo{parse_averaging(eval_averaging), eval_jobs};
            std::vector<MatchConfig> configs;
            if (eval_all) {
                for (auto g : {Granularity::word, Granularity::line})
                    for (auto m : {Method::simple, Method::fuzzy, Method::llm}) {
                        MatchConfig c;
                        eval_match.apply(c, eval);
                        c.granularity = g;
                        c.method = m;
                        configs.push_back(c);
                    }
            } else {
                MatchConfig c;
                eval_match.apply(c, eval);
                configs.push_back(c);
            }
            const bool need_llm =
                std::any_of(configs.begin(), configs.end(), [](const MatchConfig& c) { return c.method == Method::llm; });
            std::unique_ptr<LlmClient> llm;
            if (need_llm) {
                llm = eval_llm(eval_offline, eval_config);
            }
            std::vector<EvalReport> reports;
            std::vector<std::string> errors;
            for (const auto& c : configs) {
                try {
                    reports.push_back(evaluate(instances, c, c.method == Method::llm ? llm.get() : nullptr, eo));
                    errors.emplace_back();
                } catch (const ProviderError& e) {
                    reports.emplace_back();
                    errors.emplace_back(e.what());
                }
            }
            std::vector<TableRow> rows;
            json out = json::array();
            for (std::size_t i = 0; i < configs.size(); ++i) {
                rows.push_back({config_label(configs[i]), errors[i].empty() ? &reports[i] : nullptr, errors[i]});
                if (errors[i].empty()) out.push_back(reports[i]);
                else out.push_back({{"config", configs[i]}, {"error", errors[i]}});
            }
            std::cout << render_table("Location matching accuracy", rows);
            util::write_file_atomic(eval_report, canonical_dump(configs.size() == 1 && errors[0].empty() ? out[0] : out));
            bool any_failed = false;
            for (const auto& e : errors) any_failed = any_failed || !e.empty();
            return any_failed ? kExitPartial : kExitOk;
        }
        if (*cmp) {
            auto instances = load_dataset(cmp_dataset);
            if (cmp_sample) instances = sample_instances(instances, *cmp_sample, cmp_seed);
            std::vector<ProviderConfig> models;
            for (const auto& m : read_json_file(cmp_models)) {
                ProviderConfig p = m.get<ProviderConfig>();
                p.kind = ProviderKind::llm;
                models.push_back(p);
            }
            if (cmp_offline.empty())
                for (const auto& m : models) m.validate_online();
            LlmFactory factory = [&](const ProviderConfig& p) -> std::unique_ptr<LlmClient> {
                if (!cmp_offline.empty()) return std::make_unique<MockLlmClient>(cmp_offline);
                return std::make_unique<HttpLlmClient>(p);
            };
            const auto results = compare_llms(instances, models, factory, {parse_averaging(cmp_averaging), cmp_jobs});
            std::cout << render_comparison_table(results);
            json out = json::array();
            bool any_failed = false;
            for (const auto& r : results) {
                json j{{"model_name", r.model_name}};
                if (r.report) j["report"] = *r.report;
                else {
                    j["error"] = r.error;
                    any_failed = true;
                }
                out.push_back(j);
            }
            util::write_file_atomic(cmp_report, canonical_dump(out));
            return any_failed ? kExitPartial : kExitOk;
        }
        if (*cost) {
            PriceSheet prices;
            if (!cost_prices.empty()) prices = read_json_file(cost_prices).get<PriceSheet>();
            CostBreakdown c;
            json out;
            if (cost_usage == "defaults" || fs::path(cost_usage).extension() == ".json") {
                SlideUsage u;
                if (cost_usage != "defaults") u = read_json_file(cost_usage).get<SlideUsage>();
                const CostBreakdown per_slide = slide_cost(u, prices);
                for (std::int64_t i = 0; i < cost_slides; ++i) c += per_slide;
                out = {{"mode", "estimate"},
                       {"slides", cost_slides},
                       {"per_slide", cost_json(per_slide)},
                       {"lecture", cost_json(c)},
                       {"lecture_display", lecture_cost(cost_slides, u, prices).format(2)}};
            } else {
                const auto records = parse_usage_jsonl(util::read_file(cost_usage));
                c = cost_of_records(records, prices);
                out = {{"mode", "measured"}, {"records", records.size()}, {"lecture", cost_json(c)},
                       {"lecture_display", c.total().format(2)}};
            }
            if (cost_json_out) {
                std::cout << canonical_dump(out);
            } else {
                std::cout << render_cost_table(c) << "Total (rounded): " << out["lecture_display"].get<std::string>()
                          << "\n";
            }
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EncoderMissing& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPartial;
    }
    return kExitOk;
}
