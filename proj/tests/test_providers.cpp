#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "slidecast/providers.hpp"

using namespace slidecast;
namespace fs = std::filesystem;

namespace {

const std::string& tiny_png() {
    static const std::string png = encode_png(Image(16, 9));
    return png;
}

ProviderConfig fast_config(ProviderKind kind, int retries = 3) {
    ProviderConfig c;
    c.kind = kind;
    c.rate_limit = 1000;
    c.retries = retries;
    c.backoff_ms = 1;
    return c;
}

fs::path fixture_dir() {
    const auto dir = fs::temp_directory_path() / "slidecast_provider_fixture";
    fs::remove_all(dir);
    util::write_file_atomic(dir / "narration" / "slide_0.txt", "We define the highlight(objective function) first.");
    util::write_file_atomic(dir / "ocr" / "slide_0.json", R"({"readResult": {"blocks": []}})");
    return dir;
}

}  // namespace

TEST(ProviderConfig, Validation) {
    ProviderConfig c;
    EXPECT_NO_THROW(c.validate());
    c.retries = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c.retries = 0;
    c.rate_limit = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.rate_limit = 1;
    EXPECT_THROW(c.validate_online(), ConfigError);
    c.endpoint = "https://example.invalid/v1";
    c.credential = "k";
    EXPECT_NO_THROW(c.validate_online());
}

TEST(ProviderConfig, JsonOmitsCredential) {
    ProviderConfig c;
    c.credential = "secret";
    c.model_name = "m";
    const json j = c;
    EXPECT_FALSE(j.contains("credential"));
    EXPECT_EQ(j.get<ProviderConfig>().model_name, "m");
}

TEST(ProviderConfig, EnvOverride) {
    ProviderConfig c;
    c.kind = ProviderKind::tts;
    setenv("SLIDECAST_TTS_API_KEY", "from-env", 1);
    apply_env_overrides(c);
    unsetenv("SLIDECAST_TTS_API_KEY");
    EXPECT_EQ(c.credential, "from-env");
}

TEST(UsageRecord, JsonlRoundTrip) {
    std::vector<UsageRecord> rs = {{ProviderKind::llm, 10, 5, 0, 0, 0, 1, "narration"},
                                   {ProviderKind::ocr, 0, 0, 0, 1, 7, 2, "ocr"}};
    EXPECT_EQ(parse_usage_jsonl(usage_jsonl(rs)), rs);
    EXPECT_THROW(parse_usage_jsonl(R"({"kind": "tts", "characters": -1})"), SchemaError);
    EXPECT_THROW(parse_usage_jsonl("{oops"), SchemaError);
}

TEST(Gate, RetrySucceedsWhenFailuresBelowAttempts) {
    for (int retries = 0; retries <= 3; ++retries) {
        for (int failures = 0; failures <= retries + 1; ++failures) {
            std::vector<std::string> replies(static_cast<std::size_t>(failures), std::string(ScriptedLlmClient::kFail));
            replies.push_back("ok");
            ScriptedLlmClient inner(replies);
            ProviderGate gate(fast_config(ProviderKind::llm, retries));
            UsageLog usage;
            MeteredLlm llm(inner, gate, usage, [] { return std::int64_t{0}; });
            if (failures <= retries) {
                EXPECT_EQ(llm.complete({"p", {}, "x", 0}).text, "ok");
                EXPECT_EQ(inner.calls(), static_cast<std::size_t>(failures + 1));
                EXPECT_EQ(usage.size(), 1u);
            } else {
                EXPECT_THROW(llm.complete({"p", {}, "x", 0}), ProviderError);
                EXPECT_EQ(inner.calls(), static_cast<std::size_t>(retries + 1));
                EXPECT_EQ(usage.size(), 0u);
            }
        }
    }
}

TEST(Gate, NonProviderErrorsAreNotRetried) {
    int calls = 0;
    FunctionLlmClient inner([&](const LlmRequest&) -> LlmReply {
        ++calls;
        throw PreconditionError("bad");
    });
    ProviderGate gate(fast_config(ProviderKind::llm));
    UsageLog usage;
    MeteredLlm llm(inner, gate, usage);
    EXPECT_THROW(llm.complete({}), PreconditionError);
    EXPECT_EQ(calls, 1);
}

TEST(Gate, RateLimitSpacesAdmissions) {
    auto cfg = fast_config(ProviderKind::llm);
    cfg.rate_limit = 50;  // 20 ms apart
    ProviderGate gate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 6; ++i) gate.call([] { return 0; });
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    EXPECT_GE(elapsed, std::chrono::milliseconds(95));
}

TEST(Gate, InFlightCap) {
    auto cfg = fast_config(ProviderKind::llm);
    cfg.max_in_flight = 2;
    ProviderGate gate(cfg);
    std::atomic<int> now{0}, peak{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&] {
            gate.call([&] {
                const int v = ++now;
                int p = peak.load();
                while (v > p && !peak.compare_exchange_weak(p, v)) {
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
                --now;
                return 0;
            });
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(peak.load(), 2);
}

TEST(Gate, ConcurrentUsageLoggingIsComplete) {
    MockTtsClient inner;
    ProviderGate gate(fast_config(ProviderKind::tts));
    UsageLog usage;
    MeteredTts tts(inner, gate, usage);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 5; ++i) tts.synthesize("a b c", t);
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(usage.size(), 40u);
}

TEST(Narration, MockFixtureContainsMarker) {
    const auto dir = fixture_dir();
    MockLlmClient llm(dir);
    const auto text = generate_narration(tiny_png(), "", llm, 0);
    EXPECT_GE(parse_transcript(text).markers.size(), 1u);
    fs::remove_all(dir);
}

TEST(Narration, MalformedReplyRetriedOnce) {
    ScriptedLlmClient llm({"the highlight(loss is", "the highlight(loss) is"});
    EXPECT_EQ(generate_narration(tiny_png(), "prior", llm, 4), "the highlight(loss) is");
    ASSERT_EQ(llm.calls(), 2u);
    const auto reqs = llm.requests();
    EXPECT_EQ(reqs[0].purpose, "narration");
    EXPECT_EQ(reqs[0].slide, 4);
    EXPECT_EQ(reqs[0].image, tiny_png());
    EXPECT_NE(reqs[0].prompt.find("prior"), std::string::npos);
    EXPECT_GT(reqs[1].prompt.size(), reqs[0].prompt.size());
}

TEST(Narration, PersistentlyMalformed) {
    ScriptedLlmClient llm({"highlight(a", "highlight(highlight(b))"});
    EXPECT_THROW(generate_narration(tiny_png(), "", llm), PersistentlyMalformed);
    EXPECT_EQ(llm.calls(), 2u);
}

TEST(Narration, BadImageFailsBeforeAnyCall) {
    ScriptedLlmClient llm({"x"});
    EXPECT_THROW(generate_narration("", "", llm), PreconditionError);
    EXPECT_THROW(generate_narration("not an image", "", llm), PreconditionError);
    EXPECT_EQ(llm.calls(), 0u);
}

TEST(Speech, MockHelloWorld) {
    MockTtsClient tts;
    const auto r = synthesize_speech("hello world", tts);
    ASSERT_EQ(r.timestamps.size(), 2u);
    EXPECT_EQ(r.timestamps[0], (WordTimestamp{"hello", 0, 500}));
    EXPECT_EQ(r.timestamps[1], (WordTimestamp{"world", 500, 1000}));
    EXPECT_EQ(wav_duration_ms(r.audio), 1000);
}

TEST(Speech, CharacterUsage) {
    std::string text;
    while (text.size() < 600) text += "word ";
    text.resize(600);
    MockTtsClient inner;
    ProviderGate gate(fast_config(ProviderKind::tts));
    UsageLog usage;
    MeteredTts tts(inner, gate, usage);
    synthesize_speech(text, tts);
    ASSERT_EQ(usage.size(), 1u);
    EXPECT_EQ(usage.records()[0].characters, 600);
    EXPECT_EQ(usage.records()[0].kind, ProviderKind::tts);
}

TEST(Speech, EmptyTextRejected) {
    MockTtsClient tts;
    EXPECT_THROW(synthesize_speech("", tts), PreconditionError);
    EXPECT_THROW(synthesize_speech("   ", tts), PreconditionError);
}

TEST(Speech, NonMonotoneTimestampsRejected) {
    struct Bad : TtsClient {
        TtsResult synthesize(const std::string&, int) override {
            return {make_silent_wav(1000), {{"b", 500, 600}, {"a", 100, 200}}};
        }
    } bad;
    EXPECT_THROW(synthesize_speech("a b", bad), ProviderError);
}

TEST(Ocr, MockPayloadAndPageUsage) {
    const auto dir = fixture_dir();
    MockOcrClient inner(dir);
    ProviderGate gate(fast_config(ProviderKind::ocr));
    UsageLog usage;
    MeteredOcr ocr(inner, gate, usage);
    const auto doc = run_ocr(tiny_png(), ocr, 0);
    EXPECT_EQ(doc.backend, OcrBackend::read_v4_json);
    EXPECT_EQ(doc.slide_index, 0);
    ASSERT_EQ(usage.size(), 1u);
    EXPECT_EQ(usage.records()[0].pages, 1);
    EXPECT_THROW(run_ocr("\x89PNG garbage", ocr, 0), PreconditionError);
    EXPECT_EQ(usage.size(), 1u);
    fs::remove_all(dir);
}

TEST(MockLlm, AlignmentHeuristicAndScript) {
    const auto dir = fixture_dir();
    const auto layout_req = [] {
        LlmMatchRequest r;
        r.phrase = "objective function";
        r.candidates = {{0, "Minimize"}, {1, "the"}, {2, "Objective"}, {3, "Function"}, {4, "now"}};
        return r;
    }();
    {
        MockLlmClient llm(dir);
        EXPECT_EQ(match_llm(layout_req, llm).matched_ids, (std::vector<int>{2, 3}));
    }
    util::write_file_atomic(dir / "align.json", R"({"objective function": [5]})");
    {
        MockLlmClient llm(dir);
        EXPECT_EQ(match_llm(layout_req, llm).matched_ids, (std::vector<int>{4}));
    }
    fs::remove_all(dir);
}

TEST(MockLlm, PureFunctionOfRequest) {
    const auto dir = fixture_dir();
    MockLlmClient a(dir), b(dir);
    const LlmRequest req{build_narration_prompt(""), tiny_png(), "narration", 0};
    const auto ra = a.complete(req);
    const auto rb = b.complete(req);
    EXPECT_EQ(ra.text, rb.text);
    EXPECT_EQ(ra.input_tokens, rb.input_tokens);
    EXPECT_EQ(ra.output_tokens, rb.output_tokens);
    EXPECT_THROW(a.complete({"p", {}, "narration", 9}), ProviderError);
    fs::remove_all(dir);
}
