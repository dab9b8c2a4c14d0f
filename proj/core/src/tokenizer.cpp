#include "editprop/tokenizer.hpp"

#include "editprop/tensor.hpp"

#include <cctype>

namespace editprop {

std::vector<int32_t> ToyTokenizer::tokenize(const std::string& caption) const {
    std::vector<int32_t> ids;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            ids.push_back(int32_t(fnv1a64(word.data(), word.size()) % kHashBuckets));
            word.clear();
        }
    };
    for (char ch : caption) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            word.push_back(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    flush();
    return ids;
}

PromptTokens compose_prompt(const ToyTokenizer& tok, const std::string& caption) {
    PromptTokens p;
    p.ids.push_back(tok.special_token());
    for (int32_t id : tok.tokenize(caption)) p.ids.push_back(id);
    return p;
}

std::string caption(CaptionProvider& provider, const VideoTensor& frame) {
    if (frame.data.t != 1) throw ShapeError("caption input must be a single frame");
    std::string text;
    try {
        text = provider.caption_frame(frame);
    } catch (const std::exception& e) {
        throw CaptionError("caption provider '" + provider.id() + "' failed: " + e.what());
    }
    if (text.empty()) {
        throw CaptionError("caption provider '" + provider.id() + "' returned empty text");
    }
    return text;
}

} // namespace editprop
