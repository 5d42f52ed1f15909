#pragma once

// Provider interfaces (LLM, TTS, OCR), usage metering, admission control and
// the offline fixture-backed mocks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "slidecast/core.hpp"
#include "slidecast/errors.hpp"
#include "slidecast/levenshtein.hpp"
#include "slidecast/llm_client.hpp"
#include "slidecast/log.hpp"
#include "slidecast/matcher.hpp"
#include "slidecast/media.hpp"
#include "slidecast/ocr_ingest.hpp"
#include "slidecast/text.hpp"
#include "slidecast/transcript.hpp"
#include "slidecast/util.hpp"

namespace slidecast {

enum class ProviderKind { llm, tts, ocr };

NLOHMANN_JSON_SERIALIZE_ENUM(ProviderKind, {{ProviderKind::llm, "llm"}, {ProviderKind::tts, "tts"}, {ProviderKind::ocr, "ocr"}})

inline const char* to_string(ProviderKind k) {
    switch (k) {
        case ProviderKind::llm: return "llm";
        case ProviderKind::tts: return "tts";
        case ProviderKind::ocr: return "ocr";
    }
    return "?";
}

struct ProviderConfig {
    ProviderKind kind = ProviderKind::llm;
    std::string endpoint;
    std::string credential;
    std::string model_name;
    double rate_limit = 2.0;  // requests per second
    int retries = 3;
    int timeout_ms = 60000;
    int max_in_flight = 4;
    int backoff_ms = 500;

    void validate() const {
        if (retries < 0) throw ConfigError(std::string(to_string(kind)) + ": retries must be >= 0");
        if (!(rate_limit > 0)) throw ConfigError(std::string(to_string(kind)) + ": rate_limit must be > 0");
        if (timeout_ms <= 0) throw ConfigError(std::string(to_string(kind)) + ": timeout_ms must be > 0");
        if (max_in_flight <= 0) throw ConfigError(std::string(to_string(kind)) + ": max_in_flight must be > 0");
        if (backoff_ms < 0) throw ConfigError(std::string(to_string(kind)) + ": backoff_ms must be >= 0");
    }

    /// Online use also needs somewhere to send requests and a key.
    void validate_online() const {
        validate();
        if (endpoint.empty()) throw ConfigError(std::string(to_string(kind)) + ": endpoint is not set");
        if (credential.empty()) throw ConfigError(std::string(to_string(kind)) + ": credential is not set");
    }
};

// The credential is deliberately not serialized.
inline void to_json(json& j, const ProviderConfig& c) {
    j = json{{"kind", c.kind},           {"endpoint", c.endpoint}, {"model_name", c.model_name},
             {"rate_limit", c.rate_limit}, {"retries", c.retries},  {"timeout_ms", c.timeout_ms},
             {"max_in_flight", c.max_in_flight}, {"backoff_ms", c.backoff_ms}};
}

inline void from_json(const json& j, ProviderConfig& c) {
    c.kind = j.value("kind", c.kind);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.credential = j.value("credential", c.credential);
    c.model_name = j.value("model_name", c.model_name);
    c.rate_limit = j.value("rate_limit", c.rate_limit);
    c.retries = j.value("retries", c.retries);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    if (j.contains("credential_env")) {
        if (const char* v = std::getenv(j.at("credential_env").get<std::string>().c_str())) c.credential = v;
    }
}

/// Environment overrides: SLIDECAST_<KIND>_ENDPOINT, _API_KEY, _MODEL.
inline void apply_env_overrides(ProviderConfig& c) {
    std::string prefix = "SLIDECAST_";
    for (char ch : std::string(to_string(c.kind))) prefix.push_back(static_cast<char>(std::toupper(ch)));
    if (const char* v = std::getenv((prefix + "_ENDPOINT").c_str())) c.endpoint = v;
    if (const char* v = std::getenv((prefix + "_API_KEY").c_str())) c.credential = v;
    if (const char* v = std::getenv((prefix + "_MODEL").c_str())) c.model_name = v;
}

// ---- usage ------------------------------------------------------------------

struct UsageRecord {
    ProviderKind kind = ProviderKind::llm;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t characters = 0;
    std::int64_t pages = 0;
    std::int64_t timestamp = 0;  // epoch ms
    int slide = -1;
    std::string purpose;

    void validate() const {
        if (input_tokens < 0 || output_tokens < 0 || characters < 0 || pages < 0)
            throw SchemaError("usage counts must be >= 0");
    }
    friend bool operator==(const UsageRecord&, const UsageRecord&) = default;
};

inline void to_json(json& j, const UsageRecord& r) {
    j = json{{"kind", r.kind},           {"input_tokens", r.input_tokens}, {"output_tokens", r.output_tokens},
             {"characters", r.characters}, {"pages", r.pages},           {"timestamp", r.timestamp},
             {"slide", r.slide},         {"purpose", r.purpose}};
}

inline void from_json(const json& j, UsageRecord& r) {
    r.kind = j.at("kind").get<ProviderKind>();
    r.input_tokens = j.value("input_tokens", std::int64_t{0});
    r.output_tokens = j.value("output_tokens", std::int64_t{0});
    r.characters = j.value("characters", std::int64_t{0});
    r.pages = j.value("pages", std::int64_t{0});
    r.timestamp = j.value("timestamp", std::int64_t{0});
    r.slide = j.value("slide", -1);
    r.purpose = j.value("purpose", std::string{});
    r.validate();
}

/// Thread-safe append-only list of usage records.
class UsageLog {
public:
    void append(UsageRecord r) {
        r.validate();
        std::lock_guard lock(mu_);
        records_.push_back(std::move(r));
    }
    std::vector<UsageRecord> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }
    std::size_t size() const {
        std::lock_guard lock(mu_);
        return records_.size();
    }

private:
    mutable std::mutex mu_;
    std::vector<UsageRecord> records_;
};

inline std::string usage_jsonl(const std::vector<UsageRecord>& records) {
    std::string out;
    for (const auto& r : records) out += json(r).dump() + "\n";
    return out;
}

inline std::vector<UsageRecord> parse_usage_jsonl(const std::string& content) {
    std::vector<UsageRecord> out;
    std::istringstream in(content);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line).get<UsageRecord>());
        } catch (const json::exception& e) {
            throw SchemaError("usage line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

using Clock = std::function<std::int64_t()>;

inline std::int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// ---- admission control --------------------------------------------------------

/// Token bucket with capacity 1: admissions are spaced at least 1/rate apart.
class TokenBucket {
public:
    explicit TokenBucket(double rate) : interval_(std::chrono::duration<double>(1.0 / rate)) {}

    void acquire() {
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard lock(mu_);
            const auto now = std::chrono::steady_clock::now();
            slot = std::max(now, next_);
            next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
        }
        std::this_thread::sleep_until(slot);
    }

private:
    std::mutex mu_;
    std::chrono::duration<double> interval_;
    std::chrono::steady_clock::time_point next_{};
};

/// Shared per-provider gate: rate limit, in-flight cap and retry with exponential backoff.
/// Only ProviderError is retried; total attempts = retries + 1.
class ProviderGate {
public:
    explicit ProviderGate(const ProviderConfig& cfg)
        : bucket_(cfg.rate_limit), slots_(cfg.max_in_flight), retries_(cfg.retries), backoff_ms_(cfg.backoff_ms) {
        cfg.validate();
    }

    template <class F>
    auto call(F&& f) -> decltype(f()) {
        for (int attempt = 0;; ++attempt) {
            bucket_.acquire();
            slots_.acquire();
            try {
                auto result = f();
                slots_.release();
                return result;
            } catch (const ProviderError& e) {
                slots_.release();
                if (attempt >= retries_) throw;
                const auto delay = std::chrono::milliseconds(static_cast<std::int64_t>(backoff_ms_) << std::min(attempt, 20));
                log::warn("providers", "call failed, retrying", {{"attempt", attempt + 1}, {"error", e.what()}});
                std::this_thread::sleep_for(delay);
            } catch (...) {
                slots_.release();
                throw;
            }
        }
    }

private:
    TokenBucket bucket_;
    std::counting_semaphore<> slots_;
    int retries_;
    int backoff_ms_;
};

// ---- TTS / OCR interfaces -----------------------------------------------------------

struct TtsResult {
    std::string audio;  // WAV bytes
    std::vector<WordTimestamp> timestamps;
};

class TtsClient {
public:
    virtual ~TtsClient() = default;
    virtual TtsResult synthesize(const std::string& text, int slide) = 0;
};

class OcrClient {
public:
    virtual ~OcrClient() = default;
    virtual OcrBackendDoc recognize(const std::string& image, int slide) = 0;
};

// ---- metered wrappers ------------------------------------------------------------------
// Each logical call that succeeds appends exactly one record to `usage`.

class MeteredLlm : public LlmClient {
public:
    MeteredLlm(LlmClient& inner, ProviderGate& gate, UsageLog& usage, Clock clock = wall_clock_ms)
        : inner_(inner), gate_(gate), usage_(usage), clock_(std::move(clock)) {}

    LlmReply complete(const LlmRequest& request) override {
        LlmReply reply = gate_.call([&] { return inner_.complete(request); });
        UsageRecord r;
        r.kind = ProviderKind::llm;
        r.input_tokens = reply.input_tokens;
        r.output_tokens = reply.output_tokens;
        r.timestamp = clock_();
        r.slide = request.slide;
        r.purpose = request.purpose;
        usage_.append(std::move(r));
        return reply;
    }

private:
    LlmClient& inner_;
    ProviderGate& gate_;
    UsageLog& usage_;
    Clock clock_;
};

class MeteredTts : public TtsClient {
public:
    MeteredTts(TtsClient& inner, ProviderGate& gate, UsageLog& usage, Clock clock = wall_clock_ms)
        : inner_(inner), gate_(gate), usage_(usage), clock_(std::move(clock)) {}

    TtsResult synthesize(const std::string& text, int slide) override {
        TtsResult result = gate_.call([&] { return inner_.synthesize(text, slide); });
        UsageRecord r;
        r.kind = ProviderKind::tts;
        r.characters = static_cast<std::int64_t>(text::to_u32(text).size());
        r.timestamp = clock_();
        r.slide = slide;
        r.purpose = "tts";
        usage_.append(std::move(r));
        return result;
    }

private:
    TtsClient& inner_;
    ProviderGate& gate_;
    UsageLog& usage_;
    Clock clock_;
};

class MeteredOcr : public OcrClient {
public:
    MeteredOcr(OcrClient& inner, ProviderGate& gate, UsageLog& usage, Clock clock = wall_clock_ms)
        : inner_(inner), gate_(gate), usage_(usage), clock_(std::move(clock)) {}

    OcrBackendDoc recognize(const std::string& image, int slide) override {
        OcrBackendDoc doc = gate_.call([&] { return inner_.recognize(image, slide); });
        UsageRecord r;
        r.kind = ProviderKind::ocr;
        r.pages = 1;
        r.timestamp = clock_();
        r.slide = slide;
        r.purpose = "ocr";
        usage_.append(std::move(r));
        return doc;
    }

private:
    OcrClient& inner_;
    ProviderGate& gate_;
    UsageLog& usage_;
    Clock clock_;
};

// ---- operations -------------------------------------------------------------------------

inline constexpr std::string_view kNarrationPrompt =
    "You are recording the spoken narration for one slide of a lecture video. The slide image is attached.\n"
    "\n"
    "Write the words the lecturer says while this slide is on screen:\n"
    "- Explain the content thoroughly, as a teacher would, rather than reading the slide aloud.\n"
    "- Continue naturally from the narration of the previous slide, if one is given below.\n"
    "- Describe any diagrams, charts or figures that carry meaning.\n"
    "- When the slide shows notation or formulas, say what they mean in words.\n"
    "- When you mention a term, phrase or formula that is written on the slide, wrap it in a highlight(...) marker,\n"
    "  copying the slide's wording character for character. Example: \"we start with the highlight(learning "
    "rate) and\".\n"
    "- Never put one highlight(...) inside another, and keep any parentheses inside a marker balanced.\n"
    "- Output only the narration text: no headings, lists, stage directions or quotation marks around it.\n";

inline std::string build_narration_prompt(const std::string& prior_context) {
    std::string p(kNarrationPrompt);
    p += "\nNarration of the previous slide:\n";
    p += prior_context.empty() ? std::string("(none, this is the first slide)") : prior_context;
    p += "\n";
    return p;
}

/// Asks the LLM for a marker-annotated narration; one regeneration if the markers do not parse.
inline std::string generate_narration(const std::string& slide_image, const std::string& prior_context, LlmClient& llm,
                                      int slide = -1) {
    if (slide_image.empty()) throw PreconditionError("slide image is empty");
    decode_image(slide_image);
    LlmRequest req{build_narration_prompt(prior_context), slide_image, "narration", slide};
    std::string text = llm.complete(req).text;
    try {
        parse_transcript(text);
        return text;
    } catch (const TranscriptError& first) {
        log::warn("narration", "malformed highlight markers, regenerating", {{"slide", slide}, {"error", first.what()}});
        req.prompt += "\nYour previous answer could not be used: " + std::string(first.what()) +
                      ". Write the narration again and make sure every highlight( has a matching ) and no marker is "
                      "nested or empty.\n";
    }
    text = llm.complete(req).text;
    try {
        parse_transcript(text);
    } catch (const TranscriptError& second) {
        throw PersistentlyMalformed("narration for slide " + std::to_string(slide) +
                                    " still malformed after regeneration: " + second.what());
    }
    return text;
}

/// Synthesizes `text` and checks the returned timestamps.
inline TtsResult synthesize_speech(const std::string& text, TtsClient& tts, int slide = -1) {
    if (text::split_whitespace(text).empty()) throw PreconditionError("TTS text is empty");
    TtsResult r = tts.synthesize(text, slide);
    std::int64_t prev = 0;
    for (const auto& w : r.timestamps) {
        if (w.start_ms < prev || w.end_ms < w.start_ms) throw ProviderError("TTS timestamps are not monotone");
        prev = w.start_ms;
    }
    if (!r.timestamps.empty() && !r.audio.empty() && wav_duration_ms(r.audio) < r.timestamps.back().end_ms)
        throw ProviderError("TTS audio is shorter than its last timestamp");
    return r;
}

inline OcrBackendDoc run_ocr(const std::string& slide_image, OcrClient& ocr, int slide = -1) {
    if (slide_image.empty()) throw PreconditionError("slide image is empty");
    decode_image(slide_image);
    return ocr.recognize(slide_image, slide);
}

// ---- offline mocks ------------------------------------------------------------------------
// Fixture layout:
//   narration/slide_<n>.txt   canned narration
//   ocr/slide_<n>.json        Read v4 payload (or ocr/slide_<n>.tsv for tesseract)
//   align.json                optional {"<phrase>": [candidate numbers]}; heuristic otherwise

inline std::int64_t approx_tokens(std::size_t bytes) { return static_cast<std::int64_t>((bytes + 3) / 4); }

inline constexpr std::int64_t kMockImageTokens = 258;

namespace detail {

// Best contiguous candidate window by similarity to the phrase; [] below 0.5.
inline std::vector<long long> heuristic_alignment(const ParsedAlignmentPrompt& p) {
    const auto target = text::to_u32(text::normalize_text(p.phrase));
    const int k = std::max<int>(1, static_cast<int>(text::normalized_words(p.phrase).size()));
    std::vector<std::u32string> cands;
    for (const auto& c : p.candidates) cands.push_back(text::to_u32(text::normalize_text(c)));
    double best = 0.5;
    std::vector<long long> out;
    const int n = static_cast<int>(cands.size());
    for (int i = 0; i < n; ++i) {
        std::u32string window;
        for (int j = i; j < n && j < i + k + 2; ++j) {
            if (j > i) window += U' ';
            window += cands[static_cast<std::size_t>(j)];
            double s = similarity_normalized(window, target);
            if (j == i && !target.empty() && cands[static_cast<std::size_t>(i)].find(target) != std::u32string::npos)
                s = 1.0;
            if (s > best) {
                best = s;
                out.clear();
                for (int m = i; m <= j; ++m) out.push_back(m + 1);
            }
        }
    }
    return out;
}

}  // namespace detail

class MockLlmClient : public LlmClient {
public:
    explicit MockLlmClient(std::filesystem::path fixture_dir) : dir_(std::move(fixture_dir)) {
        const auto align = dir_ / "align.json";
        if (std::filesystem::exists(align)) scripted_ = json::parse(util::read_file(align));
    }

    LlmReply complete(const LlmRequest& req) override {
        LlmReply reply;
        if (req.purpose == "narration") {
            const auto path = dir_ / "narration" / ("slide_" + std::to_string(req.slide) + ".txt");
            if (!std::filesystem::exists(path)) throw ProviderError("no canned narration at " + path.string());
            reply.text = util::read_file(path);
        } else if (req.purpose == "alignment") {
            const auto parsed = parse_alignment_prompt(req.prompt);
            if (!parsed) throw ProviderError("mock cannot parse alignment prompt");
            const auto key = text::normalize_text(parsed->phrase);
            if (scripted_.is_object() && scripted_.contains(key)) {
                reply.text = scripted_.at(key).dump();
            } else {
                reply.text = json(detail::heuristic_alignment(*parsed)).dump();
            }
        } else {
            throw ProviderError("mock LLM has no behavior for purpose '" + req.purpose + "'");
        }
        reply.input_tokens = approx_tokens(req.prompt.size()) + (req.image.empty() ? 0 : kMockImageTokens);
        reply.output_tokens = approx_tokens(reply.text.size());
        return reply;
    }

private:
    std::filesystem::path dir_;
    json scripted_;
};

inline constexpr std::int64_t kMockWordMs = 500;

/// One word per whitespace token, 500 ms each, silent audio of matching length.
class MockTtsClient : public TtsClient {
public:
    TtsResult synthesize(const std::string& text, int) override {
        TtsResult r;
        std::int64_t at = 0;
        for (const auto& span : text::split_whitespace(text)) {
            r.timestamps.push_back({text.substr(span.begin, span.end - span.begin), at, at + kMockWordMs});
            at += kMockWordMs;
        }
        r.audio = make_silent_wav(at);
        return r;
    }
};

class MockOcrClient : public OcrClient {
public:
    explicit MockOcrClient(std::filesystem::path fixture_dir) : dir_(std::move(fixture_dir)) {}

    OcrBackendDoc recognize(const std::string&, int slide) override {
        const auto base = dir_ / "ocr" / ("slide_" + std::to_string(slide));
        auto json_path = base;
        json_path += ".json";
        auto tsv_path = base;
        tsv_path += ".tsv";
        if (std::filesystem::exists(json_path)) return {OcrBackend::read_v4_json, util::read_file(json_path), slide};
        if (std::filesystem::exists(tsv_path)) return {OcrBackend::tesseract_tsv, util::read_file(tsv_path), slide};
        throw ProviderError("no canned OCR result for slide " + std::to_string(slide));
    }

private:
    std::filesystem::path dir_;
};

/// Replies produced by a callback; handy for scripted tests and evaluation oracles.
class FunctionLlmClient : public LlmClient {
public:
    using Fn = std::function<LlmReply(const LlmRequest&)>;
    explicit FunctionLlmClient(Fn fn) : fn_(std::move(fn)) {}
    LlmReply complete(const LlmRequest& req) override { return fn_(req); }

private:
    Fn fn_;
};

/// Returns queued replies in order; a reply equal to kFail throws ProviderError instead.
class ScriptedLlmClient : public LlmClient {
public:
    static constexpr std::string_view kFail = "\x01" "fail";

    explicit ScriptedLlmClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}

    LlmReply complete(const LlmRequest& req) override {
        std::lock_guard lock(mu_);
        requests_.push_back(req);
        if (next_ >= replies_.size()) throw ProviderError("scripted LLM ran out of replies");
        const std::string& text = replies_[next_++];
        if (text == kFail) throw ProviderError("scripted failure");
        return {text, approx_tokens(req.prompt.size()), approx_tokens(text.size())};
    }

    std::size_t calls() const {
        std::lock_guard lock(mu_);
        return requests_.size();
    }
    std::vector<LlmRequest> requests() const {
        std::lock_guard lock(mu_);
        return requests_;
    }

private:
    mutable std::mutex mu_;
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
    std::vector<LlmRequest> requests_;
};

}  // namespace slidecast
