#pragma once

// Live HTTP provider clients (cpp-httplib). Wire formats:
//   LLM  OpenAI-compatible POST {endpoint}/chat/completions, image sent as a data URL.
//   TTS  POST {endpoint}/audio/speech with word timestamps, JSON reply
//        {"audio": base64 WAV, "word_timestamps": [{"word", "start", "end"}]} in seconds.
//   OCR  Azure Image Analysis 4.0: POST {endpoint}/computervision/imageanalysis:analyze
//        ?api-version=2023-10-01&features=read with the raw image body.
// Transport failures and non-2xx statuses raise ProviderError, which the gate retries.

#include <cmath>
#include <memory>
#include <string>

#include <httplib.h>

#include "slidecast/providers.hpp"

namespace slidecast {

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // without trailing slash
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint is not an absolute URL: " + url);
    const auto slash = url.find('/', scheme + 3);
    SplitUrl out{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

inline std::unique_ptr<httplib::Client> make_http_client(const SplitUrl& url, int timeout_ms) {
    auto cli = std::make_unique<httplib::Client>(url.origin);
    const auto sec = timeout_ms / 1000;
    const auto usec = (timeout_ms % 1000) * 1000;
    cli->set_connection_timeout(sec, usec);
    cli->set_read_timeout(sec, usec);
    cli->set_write_timeout(sec, usec);
    return cli;
}

inline const httplib::Response& check_response(const httplib::Result& res, const std::string& what) {
    if (!res) throw ProviderError(what + ": " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw ProviderError(what + ": HTTP " + std::to_string(res->status) + " " + res->body.substr(0, 300));
    return *res;
}

inline json parse_body(const httplib::Response& res, const std::string& what) {
    try {
        return json::parse(res.body);
    } catch (const json::exception& e) {
        throw ProviderError(what + ": response is not JSON: " + e.what());
    }
}

inline std::string image_mime(const std::string& image) {
    return detail::is_png(image) ? "image/png" : "image/x-portable-pixmap";
}

}  // namespace detail

class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(ProviderConfig cfg) : cfg_(std::move(cfg)), url_(detail::split_url(cfg_.endpoint)) {}

    LlmReply complete(const LlmRequest& req) override {
        json content = json::array({{{"type", "text"}, {"text", req.prompt}}});
        if (!req.image.empty()) {
            content.push_back({{"type", "image_url"},
                               {"image_url", {{"url", "data:" + detail::image_mime(req.image) + ";base64," +
                                                          util::base64_encode(req.image)}}}});
        }
        const json body{{"model", cfg_.model_name},
                        {"messages", json::array({{{"role", "user"}, {"content", content}}})},
                        {"temperature", 0}};
        auto cli = detail::make_http_client(url_, cfg_.timeout_ms);
        const httplib::Headers headers{{"Authorization", "Bearer " + cfg_.credential}};
        const auto result = cli->Post(url_.path + "/chat/completions", headers, body.dump(), "application/json");
        const auto& res = detail::check_response(result, "llm");
        const json reply = detail::parse_body(res, "llm");
        try {
            LlmReply out;
            out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            if (reply.contains("usage")) {
                out.input_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
                out.output_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
            }
            return out;
        } catch (const json::exception& e) {
            throw ProviderError(std::string("llm: unexpected response shape: ") + e.what());
        }
    }

private:
    ProviderConfig cfg_;
    detail::SplitUrl url_;
};

class HttpTtsClient : public TtsClient {
public:
    explicit HttpTtsClient(ProviderConfig cfg, std::string voice = "sarah")
        : cfg_(std::move(cfg)), url_(detail::split_url(cfg_.endpoint)), voice_(std::move(voice)) {}

    TtsResult synthesize(const std::string& text, int) override {
        const json body{{"input", text},
                        {"voice", voice_},
                        {"response_format", "wav"},
                        {"word_timestamps", true},
                        {"model", cfg_.model_name}};
        auto cli = detail::make_http_client(url_, cfg_.timeout_ms);
        const httplib::Headers headers{{"Authorization", "Bearer " + cfg_.credential}};
        const auto result = cli->Post(url_.path + "/audio/speech", headers, body.dump(), "application/json");
        const auto& res = detail::check_response(result, "tts");
        const json reply = detail::parse_body(res, "tts");
        try {
            TtsResult out;
            out.audio = util::base64_decode(reply.at("audio").get<std::string>());
            for (const auto& w : reply.at("word_timestamps")) {
                out.timestamps.push_back({w.at("word").get<std::string>(),
                                          std::llround(w.at("start").get<double>() * 1000.0),
                                          std::llround(w.at("end").get<double>() * 1000.0)});
            }
            return out;
        } catch (const std::exception& e) {
            throw ProviderError(std::string("tts: unexpected response shape: ") + e.what());
        }
    }

private:
    ProviderConfig cfg_;
    detail::SplitUrl url_;
    std::string voice_;
};

class HttpOcrClient : public OcrClient {
public:
    explicit HttpOcrClient(ProviderConfig cfg) : cfg_(std::move(cfg)), url_(detail::split_url(cfg_.endpoint)) {}

    OcrBackendDoc recognize(const std::string& image, int slide) override {
        auto cli = detail::make_http_client(url_, cfg_.timeout_ms);
        const httplib::Headers headers{{"Ocp-Apim-Subscription-Key", cfg_.credential}};
        const auto result =
            cli->Post(url_.path + "/computervision/imageanalysis:analyze?api-version=2023-10-01&features=read", headers,
                      image, "application/octet-stream");
        const auto& res = detail::check_response(result, "ocr");
        detail::parse_body(res, "ocr");
        return {OcrBackend::read_v4_json, res.body, slide};
    }

private:
    ProviderConfig cfg_;
    detail::SplitUrl url_;
};

}  // namespace slidecast
