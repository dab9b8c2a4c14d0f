#pragma once

#include "editprop/media.hpp"

#include <string>
#include <utility>
#include <vector>

namespace editprop {

// Unit-norm frame embedding. Real CLIP backends plug in behind this; the
// bundled toy provider pools pixels so the metric plumbing is hermetic.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual std::vector<float> embed(const VideoTensor& frame) const = 0;
};

// 8×8 average pool per channel, concatenated and unit-normalized.
class ToyEmbeddingProvider : public EmbeddingProvider {
public:
    std::string id() const override { return "toy-pool8"; }
    std::vector<float> embed(const VideoTensor& frame) const override;
};

// Mean over frames of cosine(embed(gen_t), embed(edited_first)).
double clip_score(const VideoTensor& gen, const VideoTensor& edited_first,
                  const EmbeddingProvider& provider);

// Mean over frame index of cosine(embed(gen_t), embed(input_t)).
double input_similarity(const VideoTensor& gen, const VideoTensor& input,
                        const EmbeddingProvider& provider);

// Mean squared pixel error restricted to preserve==1 positions.
double background_mse(const VideoTensor& gen, const VideoTensor& input,
                      const PixelMask& preserve);

// Flat key=value report, one metric per line, fixed formatting.
void write_metric_report(const std::string& path,
                         const std::vector<std::pair<std::string, double>>& entries);

} // namespace editprop
