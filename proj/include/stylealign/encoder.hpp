#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stylealign/autodiff.hpp"
#include "stylealign/rng.hpp"
#include "stylealign/tensor.hpp"

namespace stylealign {

struct EncoderConfig {
    int64_t feature_dim = 16;
    int64_t backbone_dim = 32;
    int64_t hidden_dim = 32;  // projection head hidden width
    int64_t embed_dim = 32;   // shared embedding space
    int64_t vocab_size = 0;
    int64_t cls_token_id = 0;
    bool speech_context_mixing = false;
    double ln_eps = 1e-5;

    void validate() const;
};

// Two linear maps with a GELU between them, layer norm after the second.
struct ProjectionHeadParams {
    Tensor w1;  // backbone_dim x hidden_dim
    Tensor b1;  // hidden_dim
    Tensor w2;  // hidden_dim x embed_dim
    Tensor b2;  // embed_dim
    Tensor ln_gamma;  // embed_dim
    Tensor ln_beta;   // embed_dim
};

// Trainable per-frame linear map standing in for a pretrained speech
// backbone, with an optional clip-context mixing layer
// (H'_t = gelu(H_t + ctx W + b), ctx = masked mean over frames).
struct SpeechBackboneParams {
    Tensor frame_projection;  // feature_dim x backbone_dim
    Tensor mix_weight;        // backbone_dim x backbone_dim (mixing only)
    Tensor mix_bias;          // backbone_dim (mixing only)
};

// Trainable token-embedding table; the sequence representation is the CLS
// row plus the mean of the remaining token rows.
struct TextBackboneParams {
    Tensor token_embeddings;  // vocab_size x backbone_dim
};

struct ModelParams {
    EncoderConfig config;
    SpeechBackboneParams speech;
    TextBackboneParams text;
    ProjectionHeadParams speech_head;
    ProjectionHeadParams text_head;
    Tensor log_tau;  // scalar

    static ModelParams init(const EncoderConfig& config, double tau_init,
                            Rng& rng);

    // Visits every trainable tensor in a fixed order (the registry order
    // used by the optimizer, checkpoints, and gradient checks).
    void visit(const std::function<void(const std::string&, Tensor&)>& fn);
    std::vector<std::pair<std::string, Tensor*>> param_registry();
    int64_t parameter_count();
};

// Handles to a model's parameter leaves on a tape, in registry order.
struct HeadNodes {
    ValueId w1, b1, w2, b2, ln_gamma, ln_beta;
};

struct ModelNodes {
    ValueId frame_projection;
    ValueId mix_weight, mix_bias;
    ValueId token_embeddings;
    HeadNodes speech_head;
    HeadNodes text_head;
    ValueId log_tau;
    std::vector<ValueId> ordered;  // registry order
};

ModelNodes register_model(Tape& tape, ModelParams& params, bool trainable);

// A fixed-length speech batch: n clips of frames_per_clip frames stacked
// into one (n*frames_per_clip) x feature_dim matrix plus a validity mask.
struct SpeechBatch {
    Tensor stacked;
    std::vector<uint8_t> mask;
    int64_t count = 0;
    int64_t frames_per_clip = 0;
};

// Graph builders. All return n x embed_dim matrices of embeddings.
ValueId project_rows(Tape& tape, ValueId h, const HeadNodes& head, double eps);
ValueId encode_speech_rows(Tape& tape, const SpeechBatch& batch,
                           const ModelNodes& model, const EncoderConfig& config);
ValueId encode_text_rows(Tape& tape,
                         const std::vector<std::vector<int64_t>>& token_batch,
                         const ModelNodes& model, const EncoderConfig& config);

// Pure single-input wrappers (deterministic functions of input and params).
Tensor project(const Tensor& h, const ProjectionHeadParams& head, double eps);
Tensor encode_speech(const Tensor& features, const std::vector<uint8_t>& mask,
                     ModelParams& params);
Tensor encode_text(const std::vector<int64_t>& tokens, ModelParams& params);

}  // namespace stylealign
