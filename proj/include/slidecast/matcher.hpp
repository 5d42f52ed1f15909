#pragma once

// Location matching: which OCR elements of a slide show a highlight phrase.
// Six configurations: granularity {word, line} x method {simple, fuzzy, llm}.

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/levenshtein.hpp"
#include "slidecast/llm_client.hpp"
#include "slidecast/log.hpp"
#include "slidecast/text.hpp"

namespace slidecast {

/// Contiguous run of word elements [first, first + count).
struct WordRun {
    int first = 0;
    int count = 0;
    friend bool operator==(const WordRun&, const WordRun&) = default;
};

namespace detail {

inline std::vector<std::string> normalized_texts(const std::vector<OcrElement>& elems) {
    std::vector<std::string> out;
    out.reserve(elems.size());
    for (const auto& e : elems) out.push_back(text::normalize_text(e.text));
    return out;
}

inline void check_ids(const MatchResult& r, const OcrLayout& layout) {
    const auto n = static_cast<int>(layout.elements(r.granularity).size());
    for (int id : r.matched_ids) {
        if (id < 0 || id >= n) throw Error("matcher produced id " + std::to_string(id) + " outside the layout");
    }
}

}  // namespace detail

/// Every run of consecutive words whose space-joined normalized text equals the normalized phrase.
inline std::vector<WordRun> find_word_runs(std::string_view phrase, const OcrLayout& layout) {
    const std::string target = text::normalize_text(phrase);
    std::vector<WordRun> runs;
    if (target.empty()) return runs;
    const auto words = detail::normalized_texts(layout.words);
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string acc;
        for (std::size_t j = i; j < words.size(); ++j) {
            if (j > i) acc += ' ';
            acc += words[j];
            if (acc.size() > target.size()) break;
            if (acc == target) {
                runs.push_back({static_cast<int>(i), static_cast<int>(j - i + 1)});
                break;
            }
            if (target.compare(0, acc.size(), acc) != 0) break;
        }
    }
    return runs;
}

/// Exact matching: lines containing the phrase, or every exact word run.
inline MatchResult match_simple(std::string_view phrase, const OcrLayout& layout, Granularity granularity) {
    std::vector<int> ids;
    if (granularity == Granularity::line) {
        const std::string target = text::normalize_text(phrase);
        if (!target.empty()) {
            const auto lines = detail::normalized_texts(layout.lines);
            for (std::size_t i = 0; i < lines.size(); ++i) {
                if (lines[i].find(target) != std::string::npos) ids.push_back(static_cast<int>(i));
            }
        }
    } else {
        for (const auto& run : find_word_runs(phrase, layout)) {
            for (int k = 0; k < run.count; ++k) ids.push_back(run.first + k);
        }
    }
    auto r = MatchResult::from_ids(std::move(ids), granularity);
    detail::check_ids(r, layout);
    return r;
}

struct FuzzyWindow {
    int first = 0;
    int count = 0;
    double score = 0.0;
};

/// Highest-scoring window of k-slack .. k+slack consecutive words (k = phrase word
/// count), ties to the earliest start and then the shorter window. No threshold applied.
inline std::optional<FuzzyWindow> best_fuzzy_window(std::string_view phrase, const OcrLayout& layout, int slack) {
    const auto phrase_words = text::normalized_words(phrase);
    if (phrase_words.empty() || layout.words.empty()) return std::nullopt;
    const std::u32string target = text::to_u32(text::join(phrase_words));
    const auto words = detail::normalized_texts(layout.words);
    const int n = static_cast<int>(words.size());
    const int k = static_cast<int>(phrase_words.size());
    const int min_len = std::max(1, k - slack);
    const int max_len = k + slack;

    std::optional<FuzzyWindow> best;
    for (int start = 0; start < n; ++start) {
        std::string acc;
        for (int len = 1; len <= max_len && start + len <= n; ++len) {
            if (len > 1) acc += ' ';
            acc += words[static_cast<std::size_t>(start + len - 1)];
            if (len < min_len) continue;
            const double s = similarity_normalized(target, text::to_u32(acc));
            if (!best || s > best->score) best = FuzzyWindow{start, len, s};
        }
    }
    return best;
}

/// Best similarity of the phrase against a line: the whole line or any phrase-length substring.
inline double line_fuzzy_score(const std::u32string& target, const std::u32string& line) {
    double best = similarity_normalized(target, line);
    if (line.size() > target.size()) {
        for (std::size_t i = 0; i + target.size() <= line.size(); ++i) {
            best = std::max(best, similarity_normalized(target, std::u32string_view(line).substr(i, target.size())));
            if (best == 1.0) break;
        }
    }
    return best;
}

/// Levenshtein-thresholded matching. Word granularity returns the single best
/// window scoring above `threshold`; line granularity returns every line above it.
inline MatchResult match_fuzzy(std::string_view phrase, const OcrLayout& layout, Granularity granularity,
                               double threshold, int slack) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw PreconditionError("fuzzy threshold must lie in [0, 1]");
    if (granularity == Granularity::word) {
        const auto best = best_fuzzy_window(phrase, layout, slack);
        if (!best || !(best->score > threshold)) return MatchResult::none(granularity);
        std::vector<int> ids;
        for (int k = 0; k < best->count; ++k) ids.push_back(best->first + k);
        auto r = MatchResult::from_ids(std::move(ids), granularity, best->score);
        detail::check_ids(r, layout);
        return r;
    }

    const std::string normalized = text::normalize_text(phrase);
    if (normalized.empty()) return MatchResult::none(granularity);
    const std::u32string target = text::to_u32(normalized);
    std::vector<int> ids;
    std::optional<double> top;
    for (const auto& line : layout.lines) {
        const double s = line_fuzzy_score(target, text::to_u32(text::normalize_text(line.text)));
        if (s > threshold) {
            ids.push_back(line.id);
            top = std::max(top.value_or(0.0), s);
        }
    }
    auto r = MatchResult::from_ids(std::move(ids), granularity, top);
    detail::check_ids(r, layout);
    return r;
}

// ---- LLM matching ---------------------------------------------------------

struct LlmCandidate {
    int id = 0;         // element id in the layout
    std::string text;   // OCR text verbatim
};

struct LlmMatchRequest {
    std::string phrase;
    std::string context_before;
    std::string context_after;
    Granularity granularity = Granularity::word;
    std::vector<LlmCandidate> candidates;  // reading order; shown to the model numbered from 1
};

inline constexpr std::string_view kAlignmentTask =
    "Considering the target phrase, its surrounding context, and the candidate text elements (which represent "
    "content visually present on the slide), identify the index(es) corresponding to the candidate element(s) that "
    "best match the target highlight phrase in its given context.";
inline constexpr std::string_view kAlignmentAnswerFormat =
    "Answer with a JSON array of candidate numbers, for example [2] or [3, 4]. Answer [] if no candidate matches.";
inline constexpr std::string_view kReformatInstruction = "Reply with only a JSON array of integers.";
inline constexpr std::string_view kPromptRule = "----------------------------------------";

inline LlmMatchRequest make_llm_request(std::string phrase, std::string before, std::string after,
                                        const OcrLayout& layout, Granularity granularity) {
    LlmMatchRequest req;
    req.phrase = std::move(phrase);
    req.context_before = std::move(before);
    req.context_after = std::move(after);
    req.granularity = granularity;
    for (const auto& e : layout.elements(granularity)) req.candidates.push_back({e.id, e.text});
    return req;
}

inline std::string build_alignment_prompt(const LlmMatchRequest& req) {
    std::ostringstream p;
    p << "Text preceding highlight phrase:\n... " << req.context_before << " ...\n\n";
    p << "Target Highlight Phrase:\n`" << req.phrase << "`\n\n";
    p << "Text succeeding highlight phrase:\n... " << req.context_after << " ...\n\n";
    p << kPromptRule << "\n\n";
    p << "Candidate OCR Text Elements from Slide:\n";
    for (std::size_t i = 0; i < req.candidates.size(); ++i) p << (i + 1) << ". " << req.candidates[i].text << "\n";
    p << "\n" << kPromptRule << "\n\n";
    p << "Task:\n" << kAlignmentTask << "\n" << kAlignmentAnswerFormat << "\n";
    return p.str();
}

/// Fields recovered from a prompt built by build_alignment_prompt (used by offline mocks).
struct ParsedAlignmentPrompt {
    std::string phrase;
    std::string context_before;
    std::string context_after;
    std::vector<std::string> candidates;
};

inline std::optional<ParsedAlignmentPrompt> parse_alignment_prompt(std::string_view prompt) {
    auto between = [&](std::string_view start, std::string_view stop) -> std::optional<std::string> {
        const auto a = prompt.find(start);
        if (a == std::string_view::npos) return std::nullopt;
        const auto from = a + start.size();
        const auto b = prompt.find(stop, from);
        if (b == std::string_view::npos) return std::nullopt;
        return std::string(prompt.substr(from, b - from));
    };
    auto unwrap_context = [](std::string s) {
        if (s.rfind("... ", 0) == 0) s.erase(0, 4);
        if (s.size() >= 4 && s.compare(s.size() - 4, 4, " ...") == 0) s.erase(s.size() - 4);
        return s;
    };
    ParsedAlignmentPrompt out;
    const auto before = between("Text preceding highlight phrase:\n", "\n\nTarget Highlight Phrase:");
    const auto phrase = between("Target Highlight Phrase:\n`", "`\n\nText succeeding");
    const auto after = between("Text succeeding highlight phrase:\n", "\n\n" + std::string(kPromptRule));
    const auto cands = between("Candidate OCR Text Elements from Slide:\n", "\n" + std::string(kPromptRule));
    if (!before || !phrase || !after || !cands) return std::nullopt;
    out.context_before = unwrap_context(*before);
    out.phrase = *phrase;
    out.context_after = unwrap_context(*after);
    std::istringstream lines(*cands);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const auto dot = line.find(". ");
        if (dot == std::string::npos) continue;
        out.candidates.push_back(line.substr(dot + 2));
    }
    return out;
}

/// Parses a reply holding a bare JSON array of integers (optionally inside a code fence).
inline std::optional<std::vector<long long>> parse_index_reply(std::string_view reply) {
    std::string s(reply);
    auto trim = [](std::string& x) {
        const auto b = x.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) {
            x.clear();
            return;
        }
        x = x.substr(b, x.find_last_not_of(" \t\r\n") - b + 1);
    };
    trim(s);
    if (s.rfind("```", 0) == 0) {
        const auto nl = s.find('\n');
        const auto close = s.rfind("```");
        if (nl == std::string::npos || close <= nl) return std::nullopt;
        s = s.substr(nl + 1, close - nl - 1);
        trim(s);
    }
    json parsed;
    try {
        parsed = json::parse(s);
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (!parsed.is_array()) return std::nullopt;
    std::vector<long long> out;
    for (const auto& v : parsed) {
        if (!v.is_number_integer()) return std::nullopt;
        out.push_back(v.get<long long>());
    }
    return out;
}

/// Semantic matching through a language model. The reply's 1-based candidate
/// numbers map back to element ids; out-of-range numbers are dropped with a warning.
inline MatchResult match_llm(const LlmMatchRequest& req, LlmClient& llm, int slide = -1) {
    if (req.candidates.empty()) throw PreconditionError("LLM matching needs at least one candidate");
    LlmRequest call{build_alignment_prompt(req), {}, "alignment", slide};
    auto indices = parse_index_reply(llm.complete(call).text);
    if (!indices) {
        call.prompt += "\n";
        call.prompt += kReformatInstruction;
        indices = parse_index_reply(llm.complete(call).text);
        if (!indices) throw MalformedReply("alignment reply is not a JSON array of integers");
    }
    std::vector<int> ids;
    std::vector<long long> dropped;
    for (long long i : *indices) {
        if (i >= 1 && i <= static_cast<long long>(req.candidates.size())) {
            ids.push_back(req.candidates[static_cast<std::size_t>(i - 1)].id);
        } else {
            dropped.push_back(i);
        }
    }
    if (!dropped.empty()) {
        log::warn("matcher", "LLM reply contained out-of-range candidate numbers",
                  {{"slide", slide}, {"phrase", req.phrase}, {"dropped", dropped}});
    }
    return MatchResult::from_ids(std::move(ids), req.granularity);
}

/// Transcript context around the phrase, used only by the llm method.
struct MatchContext {
    std::string before;
    std::string after;
};

/// Dispatches to the configured method.
inline MatchResult match_location(std::string_view phrase, const OcrLayout& layout, const MatchConfig& cfg,
                                  LlmClient* llm = nullptr, const MatchContext& context = {}) {
    cfg.validate();
    if ((cfg.method == Method::llm) != (llm != nullptr)) {
        throw PreconditionError("an LLM client must be supplied exactly when the method is llm");
    }
    MatchResult r;
    switch (cfg.method) {
        case Method::simple:
            r = match_simple(phrase, layout, cfg.granularity);
            break;
        case Method::fuzzy:
            r = match_fuzzy(phrase, layout, cfg.granularity, cfg.fuzzy_threshold, cfg.fuzzy_window_slack);
            break;
        case Method::llm:
            if (layout.elements(cfg.granularity).empty()) return MatchResult::none(cfg.granularity);
            r = match_llm(make_llm_request(std::string(phrase), context.before, context.after, layout, cfg.granularity),
                          *llm, layout.slide_index);
            break;
    }
    detail::check_ids(r, layout);
    return r;
}

}  // namespace slidecast
