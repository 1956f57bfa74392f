#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylealign/adam.hpp"
#include "stylealign/corpus.hpp"
#include "stylealign/encoder.hpp"
#include "stylealign/losses.hpp"

namespace stylealign {

struct TrainConfig {
    TrainMode mode = TrainMode::kIntrinsic;
    int64_t steps = 4500;
    int64_t batch_size = 32;
    // Paper default; reference configs raise it for randomly-initialized
    // desk-scale backbones.
    double learning_rate = 1e-5;
    double tau_init = 0.07;
    double tau_min = kTauMin;
    double tau_max = kTauMax;
    bool class_balanced = false;
    bool multitask = true;
    uint64_t seed = 0;
    int64_t embed_dim = 32;
    int64_t backbone_dim = 32;
    int64_t hidden_dim = 0;  // 0 = embed_dim
    bool speech_context_mixing = false;
    double classification_weight = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int64_t eval_every = 0;  // 0 = never
    std::string checkpoint_path;
    std::string trace_path;

    void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::ordered_json& json);
TrainConfig train_config_from_file(const std::filesystem::path& path);
nlohmann::ordered_json train_config_to_json(const TrainConfig& config);

struct TraceRow {
    int64_t step = 0;
    double contrastive = 0.0;
    double classification = 0.0;
    double tau = 0.0;
};

std::string format_trace_row(const TraceRow& row);

// Self-contained trained model: everything eval and guidance need.
struct Checkpoint {
    TrainConfig config;
    TagVocabulary vocabulary;
    Tokenizer tokenizer;
    ModelParams params;
    int64_t adam_step = 0;
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
    int64_t step = 0;
    std::string rng_batch;
    std::string rng_fit;
    std::string rng_captions;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TraceRow> trace;  // rows produced by this invocation
};

// Runs the training loop from scratch or from a resume checkpoint (training
// continues to config.steps). The optional eval hook fires every
// config.eval_every steps with current parameters.
TrainResult train(
    const TrainConfig& config, const Corpus& corpus,
    const Checkpoint* resume = nullptr, std::ostream* log = nullptr,
    const std::function<void(int64_t, ModelParams&)>& eval_hook = {});

// Builds the encoder configuration a training run derives from its corpus.
EncoderConfig encoder_config_for(const TrainConfig& config,
                                 const CorpusManifest& manifest);

// One frozen training batch with a deterministic objective, for gradient
// checking: caption picks are sampled once, so the loss is a pure function
// of the parameters.
struct ObjectiveFixture {
    ModelParams params;
    EncoderConfig encoder_config;
    SpeechBatch batch;
    std::vector<std::vector<int64_t>> captions;
    std::vector<std::vector<int64_t>> bank_tokens;
    Tensor tags;
    TrainMode mode = TrainMode::kIntrinsic;
    bool multitask = true;
    double classification_weight = 1.0;

    double loss();
    // Loss plus gradients in parameter-registry order.
    std::pair<double, std::vector<Tensor>> loss_and_grads();
};

ObjectiveFixture make_objective_fixture(const TrainConfig& config,
                                        const Corpus& corpus,
                                        int64_t batch_size);

}  // namespace stylealign
