#pragma once

// Accuracy evaluation of highlight location matching against an annotated dataset.
//
// Dataset layout:
//   <root>/manifest.json   {"schema_version": 1, "dataset_id": "...", "instances": [...]}
//   <root>/<slide_ref>     OcrLayout JSON, shared by every instance that references it
//
// Instance fields: id, slide_ref, phrase, context_before, context_after,
// true_word_ids, optional true_line_ids (derived from the true words' lines when
// absent), subset ("math_heavy" | "text_heavy").

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/errors.hpp"
#include "slidecast/matcher.hpp"
#include "slidecast/providers.hpp"
#include "slidecast/util.hpp"

namespace slidecast {

enum class Subset { math_heavy, text_heavy };

NLOHMANN_JSON_SERIALIZE_ENUM(Subset, {{Subset::math_heavy, "math_heavy"}, {Subset::text_heavy, "text_heavy"}})

enum class Averaging { micro, macro, micro_all, macro_all };

NLOHMANN_JSON_SERIALIZE_ENUM(Averaging, {{Averaging::micro, "micro"},
                                         {Averaging::macro, "macro"},
                                         {Averaging::micro_all, "micro-all"},
                                         {Averaging::macro_all, "macro-all"}})

inline const char* to_string(Averaging a) {
    switch (a) {
        case Averaging::micro: return "micro";
        case Averaging::macro: return "macro";
        case Averaging::micro_all: return "micro-all";
        case Averaging::macro_all: return "macro-all";
    }
    return "?";
}

inline Averaging parse_averaging(const std::string& s) {
    for (auto a : {Averaging::micro, Averaging::macro, Averaging::micro_all, Averaging::macro_all})
        if (s == to_string(a)) return a;
    throw ConfigError("unknown averaging '" + s + "' (micro, macro, micro-all, macro-all)");
}

struct AnnotatedInstance {
    std::string dataset_id;
    std::string id;
    std::string slide_ref;
    std::string phrase;
    std::string context_before;
    std::string context_after;
    std::vector<int> true_word_ids;
    std::vector<int> true_line_ids;
    Subset subset = Subset::text_heavy;
    std::shared_ptr<const OcrLayout> layout;

    const std::vector<int>& truth(Granularity g) const { return g == Granularity::word ? true_word_ids : true_line_ids; }
};

namespace detail {

inline std::vector<int> sorted_unique(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline std::vector<int> lines_of_words(const std::vector<int>& word_ids, const OcrLayout& layout) {
    std::vector<int> out;
    for (int w : word_ids) out.push_back(*layout.words.at(static_cast<std::size_t>(w)).line_id);
    return sorted_unique(std::move(out));
}

}  // namespace detail

/// Loads and validates a dataset directory.
inline std::vector<AnnotatedInstance> load_dataset(const std::filesystem::path& root) {
    const auto manifest_path = root / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw SchemaError("missing " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(util::read_file(manifest_path));
    } catch (const json::exception& e) {
        throw SchemaError("manifest.json is not valid JSON: " + std::string(e.what()));
    }
    if (!manifest.is_object() || !manifest.contains("instances") || !manifest["instances"].is_array())
        throw SchemaError("manifest.json needs an \"instances\" array");
    if (manifest.value("schema_version", kSchemaVersion) != kSchemaVersion)
        throw SchemaError("unsupported manifest schema_version");
    const std::string dataset_id = manifest.value("dataset_id", root.filename().string());

    std::map<std::string, std::shared_ptr<const OcrLayout>> layouts;
    std::set<std::string> seen_ids;
    std::vector<AnnotatedInstance> out;
    int index = 0;
    for (const auto& j : manifest["instances"]) {
        const std::string where = "instance " + std::to_string(index++);
        AnnotatedInstance inst;
        try {
            inst.dataset_id = dataset_id;
            inst.id = j.at("id").get<std::string>();
            inst.slide_ref = j.at("slide_ref").get<std::string>();
            inst.phrase = j.at("phrase").get<std::string>();
            inst.context_before = j.value("context_before", std::string{});
            inst.context_after = j.value("context_after", std::string{});
            inst.true_word_ids = detail::sorted_unique(j.at("true_word_ids").get<std::vector<int>>());
            if (j.contains("true_line_ids"))
                inst.true_line_ids = detail::sorted_unique(j.at("true_line_ids").get<std::vector<int>>());
            inst.subset = j.at("subset").get<Subset>();
            if (!j.at("subset").is_string() || (j["subset"] != "math_heavy" && j["subset"] != "text_heavy"))
                throw SchemaError(where + ": subset must be math_heavy or text_heavy");
        } catch (const json::exception& e) {
            throw SchemaError(where + ": " + e.what());
        }
        if (!seen_ids.insert(inst.id).second) throw SchemaError(where + ": duplicate id '" + inst.id + "'");
        if (inst.true_word_ids.empty()) throw SchemaError(inst.id + ": true_word_ids is empty");
        if (text::normalized_words(inst.phrase).empty()) throw SchemaError(inst.id + ": phrase is empty");

        auto& layout = layouts[inst.slide_ref];
        if (!layout) {
            const auto path = root / inst.slide_ref;
            if (!std::filesystem::exists(path)) throw SchemaError(inst.id + ": missing layout " + inst.slide_ref);
            try {
                auto parsed = std::make_shared<OcrLayout>(json::parse(util::read_file(path)).get<OcrLayout>());
                parsed->validate();
                layout = std::move(parsed);
            } catch (const json::exception& e) {
                throw SchemaError(inst.slide_ref + ": " + e.what());
            } catch (const ParseError& e) {
                throw SchemaError(inst.slide_ref + ": " + e.what());
            }
        }
        inst.layout = layout;
        for (int w : inst.true_word_ids) {
            if (w < 0 || w >= static_cast<int>(layout->words.size()))
                throw DanglingId(inst.id + ": word id " + std::to_string(w) + " not in " + inst.slide_ref);
        }
        for (int l : inst.true_line_ids) {
            if (l < 0 || l >= static_cast<int>(layout->lines.size()))
                throw DanglingId(inst.id + ": line id " + std::to_string(l) + " not in " + inst.slide_ref);
        }
        if (!j.contains("true_line_ids")) inst.true_line_ids = detail::lines_of_words(inst.true_word_ids, *layout);
        out.push_back(std::move(inst));
    }
    return out;
}

// ---- scoring ---------------------------------------------------------------------

struct InstanceScore {
    std::string id;
    Subset subset = Subset::text_heavy;
    std::vector<int> predicted;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    bool matched = false;
};

struct Metrics {
    std::int64_t n = 0;
    std::int64_t matched = 0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    double msr = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct EvalReport {
    MatchConfig config;
    Averaging averaging = Averaging::micro;
    Metrics overall;
    std::map<Subset, Metrics> per_subset;
    std::vector<InstanceScore> per_instance;
};

inline InstanceScore score_instance(const std::string& id, Subset subset, std::vector<int> predicted,
                                    const std::vector<int>& truth) {
    InstanceScore s;
    s.id = id;
    s.subset = subset;
    s.predicted = detail::sorted_unique(std::move(predicted));
    s.matched = !s.predicted.empty();
    const std::set<int> t(truth.begin(), truth.end());
    for (int p : s.predicted) (t.count(p) ? s.tp : s.fp) += 1;
    s.fn = static_cast<std::int64_t>(t.size()) - s.tp;
    return s;
}

inline double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

/// Aggregates instance scores. P/R are over matched instances unless the averaging
/// is one of the *-all variants, where unmatched instances count as tp = fp = 0, fn = |truth|.
inline Metrics aggregate(const std::vector<const InstanceScore*>& scores, Averaging averaging) {
    Metrics m;
    m.n = static_cast<std::int64_t>(scores.size());
    const bool include_unmatched = averaging == Averaging::micro_all || averaging == Averaging::macro_all;
    const bool macro = averaging == Averaging::macro || averaging == Averaging::macro_all;
    double p_sum = 0, r_sum = 0;
    std::int64_t counted = 0;
    for (const auto* s : scores) {
        if (s->matched) ++m.matched;
        if (!s->matched && !include_unmatched) continue;
        ++counted;
        m.tp += s->tp;
        m.fp += s->fp;
        m.fn += s->fn;
        if (s->tp + s->fp > 0) p_sum += static_cast<double>(s->tp) / static_cast<double>(s->tp + s->fp);
        if (s->tp + s->fn > 0) r_sum += static_cast<double>(s->tp) / static_cast<double>(s->tp + s->fn);
    }
    if (m.n > 0) m.msr = 100.0 * static_cast<double>(m.matched) / static_cast<double>(m.n);
    if (macro) {
        if (counted > 0) {
            m.precision = 100.0 * p_sum / static_cast<double>(counted);
            m.recall = 100.0 * r_sum / static_cast<double>(counted);
        }
    } else {
        if (m.tp + m.fp > 0) m.precision = 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
        if (m.tp + m.fn > 0) m.recall = 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    }
    m.f1 = harmonic(m.precision, m.recall);
    return m;
}

inline EvalReport build_report(const MatchConfig& cfg, Averaging averaging, std::vector<InstanceScore> scores) {
    EvalReport r;
    r.config = cfg;
    r.averaging = averaging;
    r.per_instance = std::move(scores);
    std::vector<const InstanceScore*> all;
    std::map<Subset, std::vector<const InstanceScore*>> by_subset{{Subset::text_heavy, {}}, {Subset::math_heavy, {}}};
    for (const auto& s : r.per_instance) {
        all.push_back(&s);
        by_subset[s.subset].push_back(&s);
    }
    r.overall = aggregate(all, averaging);
    for (const auto& [subset, list] : by_subset) r.per_subset[subset] = aggregate(list, averaging);
    return r;
}

/// Anything that proposes element ids for an instance at a configuration.
using Matcher = std::function<MatchResult(const AnnotatedInstance&, const MatchConfig&)>;

inline Matcher location_matcher(LlmClient* llm) {
    return [llm](const AnnotatedInstance& inst, const MatchConfig& cfg) {
        return match_location(inst.phrase, *inst.layout, cfg, cfg.method == Method::llm ? llm : nullptr,
                              {inst.context_before, inst.context_after});
    };
}

struct EvalOptions {
    Averaging averaging = Averaging::micro;
    int jobs = 1;
};

/// Runs `matcher` on every instance (optionally in parallel) and scores the results.
/// Errors from the matcher propagate after all workers stop.
inline EvalReport evaluate_with(const std::vector<AnnotatedInstance>& instances, const MatchConfig& cfg,
                                const Matcher& matcher, const EvalOptions& opts = {}) {
    cfg.validate();
    std::vector<InstanceScore> scores(instances.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < instances.size(); i = next++) {
            try {
                const auto& inst = instances[i];
                const MatchResult r = matcher(inst, cfg);
                scores[i] = score_instance(inst.id, inst.subset, r.matched_ids, inst.truth(cfg.granularity));
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = instances.size();
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(instances.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return build_report(cfg, opts.averaging, std::move(scores));
}

inline EvalReport evaluate(const std::vector<AnnotatedInstance>& instances, const MatchConfig& cfg,
                           LlmClient* llm = nullptr, const EvalOptions& opts = {}) {
    if (cfg.method == Method::llm && !llm) throw PreconditionError("llm configuration needs an LLM client");
    return evaluate_with(instances, cfg, location_matcher(llm), opts);
}

// ---- multi-model comparison --------------------------------------------------------

struct ModelReport {
    std::string model_name;
    std::optional<EvalReport> report;
    std::string error;  // set when the model failed
};

using LlmFactory = std::function<std::unique_ptr<LlmClient>(const ProviderConfig&)>;

/// Word-level LLM evaluation per model; a failing model is recorded, not fatal.
inline std::vector<ModelReport> compare_llms(const std::vector<AnnotatedInstance>& instances,
                                             const std::vector<ProviderConfig>& configs, const LlmFactory& factory,
                                             const EvalOptions& opts = {}) {
    if (configs.empty()) throw PreconditionError("compare_llms needs at least one model configuration");
    MatchConfig cfg;
    cfg.granularity = Granularity::word;
    cfg.method = Method::llm;
    std::vector<ModelReport> out;
    for (const auto& pc : configs) {
        ModelReport mr;
        mr.model_name = pc.model_name;
        try {
            auto client = factory(pc);
            mr.report = evaluate(instances, cfg, client.get(), opts);
        } catch (const std::exception& e) {
            mr.error = e.what();
            log::warn("eval", "model failed", {{"model", pc.model_name}, {"error", e.what()}});
        }
        out.push_back(std::move(mr));
    }
    return out;
}

// ---- sampling ------------------------------------------------------------------------

namespace detail {
// Unbiased integer in [0, bound) from a 64-bit engine by rejection.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}
}  // namespace detail

/// Deterministic subset of n instances: mt19937_64(seed) drives a Fisher-Yates shuffle of the
/// indices, the first n are kept and returned in dataset order. n >= size returns everything.
inline std::vector<AnnotatedInstance> sample_instances(const std::vector<AnnotatedInstance>& instances, std::size_t n,
                                                       std::uint64_t seed) {
    if (n >= instances.size()) return instances;
    std::vector<std::size_t> idx(instances.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[detail::bounded(rng, i + 1)]);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<AnnotatedInstance> out;
    for (auto i : idx) out.push_back(instances[i]);
    return out;
}

// ---- reporting ------------------------------------------------------------------------

inline std::string config_label(const MatchConfig& cfg) {
    const char g = cfg.granularity == Granularity::word ? 'W' : 'L';
    const char m = cfg.method == Method::simple ? 'S' : cfg.method == Method::fuzzy ? 'F' : 'L';
    std::string method = cfg.method == Method::simple ? "Simple" : cfg.method == Method::fuzzy ? "Fuzzy" : "LLM";
    return std::string{g, m} + " (" + (cfg.granularity == Granularity::word ? "Word" : "Line") + ", " + method + ")";
}

struct TableRow {
    std::string label;
    const EvalReport* report = nullptr;  // null renders as a failed row
    std::string note;
};

namespace detail {
inline constexpr int kLabelWidth = 24;
inline constexpr int kCellWidth = 7;
inline constexpr int kGroupWidth = 4 * kCellWidth;

inline std::string pad_right(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
}
inline std::string center(const std::string& s, std::size_t w) {
    if (s.size() >= w) return s;
    const std::size_t left = (w - s.size()) / 2;
    return std::string(left, ' ') + s + std::string(w - s.size() - left, ' ');
}
inline std::string cell(double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(1) << std::setw(kCellWidth) << v;
    return o.str();
}
inline std::string rstrip(std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}
}  // namespace detail

/// Fixed-width accuracy table: one row per configuration (or model), column groups
/// Overall / Text-Heavy / Math-Heavy, each with MSR(%), Prec., Rec., F1 to one decimal.
inline std::string render_table(const std::string& title, const std::vector<TableRow>& rows) {
    using namespace detail;
    std::int64_t n = 0;
    for (const auto& r : rows)
        if (r.report) n = std::max(n, r.report->overall.n);
    std::ostringstream out;
    out << title << "\n";
    const std::string groups[] = {"Overall (N=" + std::to_string(n) + ")", "Text-Heavy Subset", "Math-Heavy Subset"};
    std::string line = pad_right("", kLabelWidth);
    for (const auto& g : groups) line += " |" + center(g, kGroupWidth);
    out << rstrip(line) << "\n";
    line = pad_right("Configuration", kLabelWidth);
    for (int g = 0; g < 3; ++g) {
        line += " |";
        for (const char* h : {"MSR(%)", "Prec.", "Rec.", "F1"}) {
            std::ostringstream c;
            c << std::setw(kCellWidth) << h;
            line += c.str();
        }
    }
    out << line << "\n";
    line = std::string(kLabelWidth, '-');
    for (int g = 0; g < 3; ++g) line += "-+" + std::string(kGroupWidth, '-');
    out << line << "\n";
    for (const auto& row : rows) {
        line = pad_right(row.label, kLabelWidth);
        if (!row.report) {
            line += " | failed: " + row.note;
            out << line << "\n";
            continue;
        }
        const Metrics* ms[] = {&row.report->overall, &row.report->per_subset.at(Subset::text_heavy),
                               &row.report->per_subset.at(Subset::math_heavy)};
        for (const Metrics* m : ms) {
            line += " |";
            if (m->n == 0) {
                for (int c = 0; c < 4; ++c) line += pad_right("", kCellWidth - 1) + "-";
            } else {
                line += cell(m->msr) + cell(m->precision) + cell(m->recall) + cell(m->f1);
            }
        }
        out << line << "\n";
    }
    if (!rows.empty()) {
        const EvalReport* any = nullptr;
        for (const auto& r : rows)
            if (r.report && !any) any = r.report;
        if (any) {
            out << "Averaging: " << to_string(any->averaging)
                << (any->averaging == Averaging::micro || any->averaging == Averaging::macro
                        ? " over matched instances"
                        : " over all instances")
                << "\n";
        }
    }
    return out.str();
}

inline std::string render_comparison_table(const std::vector<ModelReport>& models) {
    std::vector<TableRow> rows;
    for (const auto& m : models) rows.push_back({m.model_name, m.report ? &*m.report : nullptr, m.error});
    return render_table("Word-level location accuracy by model", rows);
}

inline void to_json(json& j, const Metrics& m) {
    j = json{{"n", m.n},   {"matched", m.matched},     {"tp", m.tp},         {"fp", m.fp}, {"fn", m.fn},
             {"msr", m.msr}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

inline void to_json(json& j, const InstanceScore& s) {
    j = json{{"id", s.id}, {"subset", s.subset}, {"predicted", s.predicted}, {"tp", s.tp},
             {"fp", s.fp}, {"fn", s.fn},         {"matched", s.matched}};
}

inline void to_json(json& j, const EvalReport& r) {
    json subsets = json::object();
    for (const auto& [k, v] : r.per_subset) subsets[json(k).get<std::string>()] = v;
    j = json{{"schema_version", kSchemaVersion},
             {"config", r.config},
             {"averaging", r.averaging},
             {"overall", r.overall},
             {"per_subset", subsets},
             {"per_instance", r.per_instance}};
}

}  // namespace slidecast
