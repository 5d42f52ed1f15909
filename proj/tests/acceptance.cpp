// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fakes.hpp"
#include "oracles.hpp"
#include "slidecast/costmodel.hpp"
#include "slidecast/evalkit.hpp"
#include "slidecast/levenshtein.hpp"
#include "slidecast/matcher.hpp"
#include "slidecast/pipeline.hpp"
#include "slidecast/renderer.hpp"
#include "slidecast/timing.hpp"
#include "slidecast/transcript.hpp"

using namespace slidecast;

namespace {

const fs::path kRepoFixtures = SLIDECAST_REPO_FIXTURES;

struct Outcome {
    bool ok = true;
    std::string detail;

    void check(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1 ---------------------------------------------------------------------------------------
Outcome cost_model_exactness() {
    Outcome o;
    const SlideUsage u;
    const PriceSheet p;
    double best_ms = 1e9;
    for (int rep = 0; rep < 5; ++rep) {
        const auto t0 = Clock::now();
        const auto slide = slide_cost(u, p);
        const auto l60 = lecture_cost(60, u, p), l100 = lecture_cost(100, u, p), l30 = lecture_cost(30, u, p);
        best_ms = std::min(best_ms, ms_since(t0));
        o.check(slide.total() == Usd::from_micros(15500), "slide total " + slide.total().format(6));
        o.check(l60 == Usd::from_micros(930000), "60 slides " + l60.format(6));
        o.check(l100 == Usd::from_micros(1550000), "100 slides " + l100.format(6));
        o.check(l30 == Usd::from_micros(465000), "30 slides " + l30.format(6));
        o.check(l30.format(2) == "$0.47", "30 slides display " + l30.format(2));
        o.check(l60.format(2) == "$0.93" && l100.format(2) == "$1.55", "display of 60/100 slides");
    }
    o.check(best_ms < 1.0, "runtime " + fmt("%.3f ms", best_ms));
    if (o.ok) o.detail = "$0.0155/slide, $0.93, $1.55, $0.47; " + fmt("%.4f ms", best_ms);
    return o;
}

// 2 ---------------------------------------------------------------------------------------
Outcome evaluation_harness() {
    Outcome o;
    const auto ds = load_dataset(kRepoFixtures / "eval20");
    o.check(ds.size() == 20, "fixture size " + std::to_string(ds.size()));

    // (a) oracle matcher
    MatchConfig cfg;
    const auto perfect = evaluate_with(ds, cfg, [](const AnnotatedInstance& i, const MatchConfig& c) {
        return MatchResult::from_ids(i.truth(c.granularity), c.granularity);
    });
    for (double v : {perfect.overall.msr, perfect.overall.precision, perfect.overall.recall, perfect.overall.f1})
        o.check(v == 100.0, "oracle matcher metric " + fmt("%.4f", v));

    // (b) scripted matcher with planted tp/fp/fn, micro averages computed by hand
    long tp = 0, fp = 0, fn = 0;
    std::map<std::string, std::vector<int>> plan;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto truth = ds[i].truth(Granularity::word);
        const int drop = truth.size() > 1 ? static_cast<int>(i % 2) : 0;
        const int extra = static_cast<int>(i % 3);
        std::vector<int> pred(truth.begin(), truth.end() - drop);
        int added = 0;
        for (int id = 0; id < static_cast<int>(ds[i].layout->words.size()) && added < extra; ++id) {
            if (std::find(truth.begin(), truth.end(), id) == truth.end()) {
                pred.push_back(id);
                ++added;
            }
        }
        tp += static_cast<long>(truth.size()) - drop;
        fp += added;
        fn += drop;
        plan[ds[i].id] = pred;
    }
    const auto scripted = evaluate_with(ds, cfg, [&](const AnnotatedInstance& i, const MatchConfig& c) {
        return MatchResult::from_ids(plan.at(i.id), c.granularity);
    });
    const double prec = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double rec = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f1 = 2 * prec * rec / (prec + rec);
    auto close4 = [](double a, double b) { return std::round(a * 1e4) == std::round(b * 1e4); };
    o.check(close4(scripted.overall.precision, prec), "precision " + fmt("%.6f", scripted.overall.precision));
    o.check(close4(scripted.overall.recall, rec), "recall " + fmt("%.6f", scripted.overall.recall));
    o.check(close4(scripted.overall.f1, f1), "f1 " + fmt("%.6f", scripted.overall.f1));
    o.check(scripted.overall.msr == 100.0, "scripted msr");

    // (c) table layout
    std::vector<EvalReport> reports;
    std::vector<TableRow> rows;
    for (auto g : {Granularity::word, Granularity::line})
        for (auto m : {Method::simple, Method::fuzzy, Method::llm}) {
            MatchConfig c;
            c.granularity = g;
            c.method = m;
            reports.push_back(evaluate_with(ds, c, [](const AnnotatedInstance& i, const MatchConfig& cc) {
                return MatchResult::from_ids(i.truth(cc.granularity), cc.granularity);
            }));
        }
    std::size_t k = 0;
    for (auto g : {Granularity::word, Granularity::line})
        for (auto m : {Method::simple, Method::fuzzy, Method::llm}) {
            MatchConfig c;
            c.granularity = g;
            c.method = m;
            rows.push_back({config_label(c), &reports[k++], ""});
        }
    const std::string table = render_table("Accuracy", rows);
    std::vector<std::string> lines;
    std::istringstream in(table);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    o.check(lines.size() == 1 + 3 + 6 + 1, "table line count " + std::to_string(lines.size()));
    if (lines.size() == 11) {
        o.check(lines[1] ==
                    "                         |       Overall (N=20)        |     Text-Heavy Subset       |     "
                    "Math-Heavy Subset",
                "group header: " + lines[1]);
        o.check(lines[2] ==
                    "Configuration            | MSR(%)  Prec.   Rec.     F1 | MSR(%)  Prec.   Rec.     F1 | MSR(%)  "
                    "Prec.   Rec.     F1",
                "column header: " + lines[2]);
        const std::vector<std::string> labels{"WS (Word, Simple)", "WF (Word, Fuzzy)", "WL (Word, LLM)",
                                              "LS (Line, Simple)", "LF (Line, Fuzzy)", "LL (Line, LLM)"};
        for (std::size_t r = 0; r < 6; ++r) {
            const auto& row = lines[4 + r];
            o.check(row.rfind(labels[r], 0) == 0, "row label: " + row);
            o.check(row.size() == lines[2].size() && row[25] == '|' && row[55] == '|' && row[85] == '|',
                    "row alignment: " + row);
        }
    }
    if (o.ok)
        o.detail = "oracle 100/100/100/100; micro P " + fmt("%.4f", prec) + " R " + fmt("%.4f", rec) +
                   "; 6-row table layout exact";
    return o;
}

// 3 ---------------------------------------------------------------------------------------
OcrLayout random_layout(std::mt19937& rng, const std::vector<std::string>& vocab, int max_words) {
    std::vector<std::vector<std::string>> lines;
    int total = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_words));
    while (total > 0) {
        const int n = std::min(total, 1 + static_cast<int>(rng() % 8));
        std::vector<std::string> line;
        for (int i = 0; i < n; ++i) line.push_back(vocab[rng() % vocab.size()]);
        lines.push_back(line);
        total -= n;
    }
    return oracle::make_layout(lines);
}

std::string random_phrase(std::mt19937& rng, const OcrLayout& layout, const std::vector<std::string>& vocab) {
    std::string p;
    if (rng() % 2 == 0) {
        const auto start = rng() % layout.words.size();
        const auto len = 1 + rng() % 3;
        for (std::size_t i = start; i < std::min(layout.words.size(), start + len); ++i)
            p += (p.empty() ? "" : " ") + layout.words[i].text;
    } else {
        for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) p += (p.empty() ? "" : " ") + vocab[rng() % vocab.size()];
    }
    if (rng() % 5 == 0 && p.size() > 2) p[1] = 'q';
    return p;
}

Outcome matcher_oracle_equivalence() {
    Outcome o;
    const auto t0 = Clock::now();
    const std::vector<std::string> vocab{"loss", "lost", "the", "Loss,", "gradient", "gradiant", "descent",
                                         "a",    "x",    "f(x)", "w.r.t.", "xy"};
    std::mt19937 rng(20240601);
    int simple_ok = 0, fuzzy_ok = 0;
    const int n = 200;
    for (int iter = 0; iter < n; ++iter) {
        const auto layout = random_layout(rng, vocab, 50);
        const auto phrase = random_phrase(rng, layout, vocab);

        std::vector<std::pair<int, int>> runs;
        for (const auto& r : find_word_runs(phrase, layout)) runs.emplace_back(r.first, r.count);
        const auto want_runs = oracle::all_exact_runs(phrase, layout);
        std::vector<int> want_ids;
        for (const auto& [first, len] : want_runs)
            for (int k = 0; k < len; ++k) want_ids.push_back(first + k);
        std::sort(want_ids.begin(), want_ids.end());
        want_ids.erase(std::unique(want_ids.begin(), want_ids.end()), want_ids.end());
        const auto simple = match_simple(phrase, layout, Granularity::word);
        if (runs == want_runs && simple.matched_ids == want_ids) ++simple_ok;

        const int slack = static_cast<int>(rng() % 3);
        const auto got = best_fuzzy_window(phrase, layout, slack);
        const auto want = oracle::best_window(phrase, layout, slack);
        bool same = got.has_value() == want.has_value();
        if (same && got) same = got->first == want->first && got->count == want->len && got->score == want->score;
        if (same) {
            const auto fuzzy = match_fuzzy(phrase, layout, Granularity::word, 0.8, slack);
            std::vector<int> ids;
            if (want && want->score > 0.8)
                for (int k = 0; k < want->len; ++k) ids.push_back(want->first + k);
            same = fuzzy.matched_ids == ids;
        }
        if (same) ++fuzzy_ok;
    }
    const double ms = ms_since(t0);
    o.check(simple_ok == n, "simple agreement " + std::to_string(simple_ok) + "/" + std::to_string(n));
    o.check(fuzzy_ok == n, "fuzzy agreement " + std::to_string(fuzzy_ok) + "/" + std::to_string(n));
    o.check(ms < 30000, "runtime " + fmt("%.0f ms", ms));
    if (o.ok) o.detail = "200/200 simple, 200/200 fuzzy; " + fmt("%.0f ms", ms);
    return o;
}

// 4 ---------------------------------------------------------------------------------------
Outcome levenshtein_axioms() {
    Outcome o;
    const std::u32string alphabet = U"abcxyzé θ-";
    std::mt19937 rng(99);
    auto random_string = [&] {
        std::u32string s;
        for (std::size_t i = 0, n = rng() % 41; i < n; ++i) s += alphabet[rng() % alphabet.size()];
        return s;
    };
    long violations = 0;
    const int triples = 10000;
    for (int i = 0; i < triples; ++i) {
        const auto a = random_string(), b = random_string(), c = random_string();
        const auto ab = levenshtein(a, b), ba = levenshtein(b, a), bc = levenshtein(b, c), ac = levenshtein(a, c);
        if (levenshtein(a, a) != 0) ++violations;
        if ((ab == 0) != (a == b)) ++violations;
        if (ab != ba) ++violations;
        if (ac > ab + bc) ++violations;
        const std::size_t diff = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
        if (ab < diff) ++violations;
    }
    o.check(violations == 0, std::to_string(violations) + " violations");
    if (o.ok) o.detail = "10000 triples, 0 violations";
    return o;
}

// 5 ---------------------------------------------------------------------------------------
Outcome timing_oracle_equivalence() {
    Outcome o;
    const std::vector<std::string> vocab{"the", "loss", "model", "gradient", "descent", "is", "x"};
    std::mt19937 rng(5151);
    long checks = 0, agree = 0;
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<std::string> phrase_words;
        for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) phrase_words.push_back(vocab[rng() % vocab.size()]);
        std::vector<std::string> stream;
        for (std::size_t i = 0, n = 5 + rng() % 40; i < n; ++i) {
            if (rng() % 6 == 0) stream.insert(stream.end(), phrase_words.begin(), phrase_words.end());
            else stream.push_back(vocab[rng() % vocab.size()]);
        }
        std::vector<WordTimestamp> ts;
        std::int64_t at = static_cast<std::int64_t>(rng() % 100);
        for (const auto& w : stream) {
            const std::int64_t len = 50 + static_cast<std::int64_t>(rng() % 400);
            ts.push_back({w, at, at + len});
            at += len + static_cast<std::int64_t>(rng() % 50);
        }
        const std::string phrase = text::join(phrase_words);
        for (int k = 1; k <= 12; ++k) {
            HighlightMarker m;
            m.phrase = phrase;
            m.occurrence_index = k;
            m.word_count = static_cast<int>(phrase_words.size());
            const auto want = oracle::kth_timing_run(phrase, ts, k);
            ++checks;
            try {
                const auto got = lookup_time(m, ts);
                if (want && got.start_ms == want->first && got.end_ms == want->second) ++agree;
            } catch (const OccurrenceNotFound&) {
                if (!want) ++agree;
            }
        }
    }
    o.check(agree == checks, std::to_string(agree) + "/" + std::to_string(checks) + " agree");
    if (o.ok) o.detail = std::to_string(checks) + " lookups, 100% agreement";
    return o;
}

// 6 ---------------------------------------------------------------------------------------
Outcome transcript_round_trip() {
    Outcome o;
    const auto example = parse_transcript("uses highlight(gradient descent) to find");
    o.check(example.markers.size() == 1 && example.markers[0].phrase == "gradient descent", "worked example");
    const std::vector<std::string> words{"the", "Loss", "gradient", "descent,", "w.r.t.", "x", "is", "(see", "above)",
                                         "Cross-Entropy", "model", "σ", "=", "f(x)", "3.14"};
    const std::vector<std::string> phrases{"gradient descent", "f(x)", "loss", "one minus (a + b)", "w.r.t. x",
                                           "s = Wx + b", "phi sub j (L to the j)", "g((x))", "Cross-Entropy Loss"};
    std::mt19937 rng(1000);
    int good = 0;
    const int n = 1000;
    for (int iter = 0; iter < n; ++iter) {
        std::string raw;
        int expected = 0;
        for (int i = 0, len = 3 + static_cast<int>(rng() % 20); i < len; ++i) {
            if (!raw.empty()) raw += ' ';
            if (rng() % 4 == 0 || (i == len - 1 && expected == 0)) {
                raw += "highlight(" + phrases[rng() % phrases.size()] + ")";
                ++expected;
            } else {
                raw += words[rng() % words.size()];
            }
        }
        const auto t = parse_transcript(raw);
        bool ok = static_cast<int>(t.markers.size()) == expected && parse_transcript(tts_input(t)).markers.empty();
        const auto seq = stripped_words(t);
        for (const auto& m : t.markers) {
            if (!ok) break;
            const auto pw = text::normalized_words(m.phrase);
            if (static_cast<std::size_t>(m.word_offset + m.word_count) > seq.size()) {
                ok = false;
                break;
            }
            const std::vector<std::string> window(seq.begin() + m.word_offset,
                                                  seq.begin() + m.word_offset + m.word_count);
            ok = window == pw;
        }
        good += ok;
    }
    o.check(good == n, std::to_string(good) + "/" + std::to_string(n) + " round trips");
    if (o.ok) o.detail = "1000/1000 round trips; worked example parses";
    return o;
}

// 7 ---------------------------------------------------------------------------------------
PipelineConfig deck_config(const fs::path& workdir) {
    const fs::path deck = kRepoFixtures / "deck3";
    PipelineConfig c = load_pipeline_config(json::parse(util::read_file(deck / "config.json")), deck);
    c.workdir = workdir;
    c.render.events_only = true;
    return c;
}

std::map<std::string, std::string> determinism_surface(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const char* d : {"events", "matches"})
        for (const auto& e : fs::directory_iterator(root / d))
            if (e.path().extension() == ".json") out[std::string(d) + "/" + e.path().filename().string()] = util::read_file(e.path());
    out["usage.jsonl"] = util::read_file(root / "usage.jsonl");
    return out;
}

Outcome end_to_end_determinism() {
    Outcome o;
    const auto dir = fakes::temp_dir("acceptance_determinism");
    std::vector<std::map<std::string, std::string>> surfaces;
    double worst = 0;
    int k = 0;
    for (int jobs : {1, 1, 4, 4}) {
        RunOptions opts;
        opts.jobs = jobs;
        const auto t0 = Clock::now();
        const auto s = Pipeline(deck_config(dir / ("run" + std::to_string(k++)))).run(opts);
        worst = std::max(worst, ms_since(t0));
        o.check(s.exit_code() == 0 && s.slide_count == 3, "pipeline run failed");
        surfaces.push_back(determinism_surface(dir / ("run" + std::to_string(k - 1))));
    }
    o.check(surfaces[0].size() == 7, "expected 3 events + 3 matches + usage, got " + std::to_string(surfaces[0].size()));
    for (std::size_t i = 1; i < surfaces.size(); ++i) o.check(surfaces[i] == surfaces[0], "run " + std::to_string(i) + " differs");
    o.check(worst < 10000, "runtime " + fmt("%.0f ms", worst));
    if (o.ok) o.detail = "4 runs (jobs 1,1,4,4) byte-identical; slowest " + fmt("%.0f ms", worst);
    return o;
}

// 8 ---------------------------------------------------------------------------------------
Outcome renderer_frames() {
    Outcome o;
    const Image base = decode_image(util::read_file(kRepoFixtures / "deck3" / "slides" / "slide_0.png"));
    const auto layout = ingest({OcrBackend::read_v4_json, util::read_file(kRepoFixtures / "deck3" / "ocr" / "slide_0.json"), 0},
                               base.width, base.height);
    HighlightMarker m;
    m.phrase = "Gradient Descent";
    m.occurrence_index = 1;
    const auto built = build_events(0, {m}, {match_simple(m.phrase, layout, Granularity::word)},
                                    {TimeInterval{300, 800}}, layout);
    o.check(built.events.size() == 1, "fixture event not built");
    if (!o.ok) return o;
    const HighlightStyle style;
    const Box box = bounding_box(built.events[0].polygons.at(0));
    const Box ext = overlay_extent(box, style, base.width, base.height);
    for (std::int64_t f : {8, 9, 24, 25}) {
        const Image frame = compose_frame(base, built.events, f, 30, style);
        long inside = 0, outside = 0;
        for (int y = 0; y < base.height; ++y)
            for (int x = 0; x < base.width; ++x) {
                if (std::equal(frame.at(x, y), frame.at(x, y) + 3, base.at(x, y))) continue;
                const bool in = x >= ext.x_min && x < ext.x_max && y >= ext.y_min && y < ext.y_max;
                (in ? inside : outside)++;
            }
        const bool active = f == 9 || f == 24;
        o.check(outside == 0, "frame " + std::to_string(f) + ": pixels changed outside the event box");
        o.check(active ? inside > 0 : inside == 0, "frame " + std::to_string(f) + ": overlay presence wrong");
    }
    const auto [first, last] = event_frames(built.events[0], 30);
    o.check(first == 9 && last == 24, "frame range " + std::to_string(first) + ".." + std::to_string(last));
    if (o.ok) o.detail = "overlay on frames 9..24; frames 8 and 25 equal the slide";
    return o;
}

// 9 ---------------------------------------------------------------------------------------
Outcome usage_accounting() {
    Outcome o;
    const auto dir = fakes::temp_dir("acceptance_usage");
    auto cfg = deck_config(dir / "w");
    cfg.match.method = Method::llm;
    const auto s = Pipeline(cfg).run();
    o.check(s.exit_code() == 0, "pipeline run failed");
    const PriceSheet prices;
    const auto logged = parse_usage_jsonl(util::read_file(dir / "w" / "usage.jsonl"));
    Usd summed;
    for (const auto& r : s.calls) summed += cost_of_record(r, prices).total();
    const Usd from_log = cost_of_records(logged, prices).total();
    o.check(!s.calls.empty() && logged.size() == s.calls.size(), "record counts differ");
    o.check(from_log.micros() == summed.micros(),
            "usage.jsonl " + from_log.format(6) + " vs records " + summed.format(6));
    if (o.ok)
        o.detail = std::to_string(logged.size()) + " records, both " + from_log.format(6);
    return o;
}

}  // namespace

int main() {
    log::ScopedSink quiet{[](const json&) {}};
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 cost-model exactness", cost_model_exactness},
        {"2 evaluation harness (substituted property checks)", evaluation_harness},
        {"3 matcher oracle equivalence", matcher_oracle_equivalence},
        {"4 levenshtein metric axioms", levenshtein_axioms},
        {"5 timing oracle equivalence", timing_oracle_equivalence},
        {"6 transcript round trip", transcript_round_trip},
        {"7 end-to-end determinism", end_to_end_determinism},
        {"8 renderer frame correctness", renderer_frames},
        {"9 usage/cost accounting consistency", usage_accounting},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %s: %s\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        failed += !o.ok;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
