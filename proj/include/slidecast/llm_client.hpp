#pragma once

#include <cstdint>
#include <string>

namespace slidecast {

struct LlmRequest {
    std::string prompt;
    std::string image;    // encoded image bytes, empty for text-only requests
    std::string purpose;  // "narration" or "alignment"
    int slide = -1;
};

struct LlmReply {
    std::string text;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

/// Chat-style language model. Implementations must be safe to call from several threads.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual LlmReply complete(const LlmRequest& request) = 0;
};

}  // namespace slidecast
