#pragma once

#include "editprop/errors.hpp"
#include "editprop/media.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace editprop {

// Prompt token sequence; position 0 always holds the special token.
struct PromptTokens {
    std::vector<int32_t> ids;
};

// Whitespace word-hashing tokenizer with a fixed 1024-bucket vocabulary.
// The special token occupies the extra id just past the hash range.
class ToyTokenizer {
public:
    static constexpr int32_t kHashBuckets = 1024;

    explicit ToyTokenizer(int32_t special_token = kHashBuckets) : special_(special_token) {}

    int32_t vocab_size() const { return kHashBuckets + 1; }
    int32_t special_token() const { return special_; }

    std::vector<int32_t> tokenize(const std::string& caption) const;

private:
    int32_t special_;
};

// [special] ++ tokenize(caption)
PromptTokens compose_prompt(const ToyTokenizer& tok, const std::string& caption);

class CaptionProvider {
public:
    virtual ~CaptionProvider() = default;
    virtual std::string id() const = 0;
    virtual std::string caption_frame(const VideoTensor& frame) = 0;
};

// Returns a fixed configurable string regardless of frame content.
class StubCaptionProvider : public CaptionProvider {
public:
    explicit StubCaptionProvider(std::string text = "a scene") : text_(std::move(text)) {}
    std::string id() const override { return "stub"; }
    std::string caption_frame(const VideoTensor&) override { return text_; }

private:
    std::string text_;
};

// Checked wrapper: enforces the single-frame precondition and surfaces
// provider failures as CaptionError with the provider identity.
std::string caption(CaptionProvider& provider, const VideoTensor& frame);

} // namespace editprop
