#include "stylealign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>

#include "stylealign/errors.hpp"

namespace stylealign {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
    if (steps < 1) {
        throw ConfigError("train config: steps must be >= 1");
    }
    if (batch_size < 2) {
        throw ConfigError(
            "train config: batch_size must be >= 2 (a singleton batch has zero "
            "contrastive loss)");
    }
    if (!(learning_rate > 0.0)) {
        throw ConfigError("train config: learning_rate must be positive");
    }
    if (!(tau_init > 0.0)) {
        throw ConfigError("train config: tau_init must be positive");
    }
    if (!(tau_min > 0.0) || !(tau_max > tau_min)) {
        throw ConfigError("train config: invalid tau bounds");
    }
    if (tau_init < tau_min || tau_init > tau_max) {
        throw ConfigError("train config: tau_init outside clamping bounds");
    }
    if (embed_dim < 1 || backbone_dim < 1 || hidden_dim < 0) {
        throw ConfigError("train config: invalid model dimensions");
    }
    if (classification_weight < 0.0) {
        throw ConfigError("train config: classification_weight must be >= 0");
    }
    if (eval_every < 0) {
        throw ConfigError("train config: eval_every must be >= 0");
    }
}

namespace {

template <typename T>
void read_field(const ordered_json& json, const char* key, T& out) {
    if (json.contains(key)) {
        out = json.at(key).get<T>();
    }
}

}  // namespace

TrainConfig train_config_from_json(const ordered_json& json) {
    static const std::set<std::string> known = {
        "mode",          "steps",          "batch_size",
        "learning_rate", "tau_init",       "tau_min",
        "tau_max",       "class_balanced", "multitask",
        "seed",          "embed_dim",      "backbone_dim",
        "hidden_dim",    "speech_context_mixing",
        "classification_weight",           "adam_beta1",
        "adam_beta2",    "adam_epsilon",   "eval_every",
        "checkpoint_path",                 "trace_path"};
    for (const auto& [key, _] : json.items()) {
        if (!known.count(key)) {
            throw ConfigError("train config: unknown field '" + key + "'");
        }
    }
    TrainConfig c;
    if (json.contains("mode")) {
        c.mode = parse_train_mode(json.at("mode").get<std::string>());
    }
    read_field(json, "steps", c.steps);
    read_field(json, "batch_size", c.batch_size);
    read_field(json, "learning_rate", c.learning_rate);
    read_field(json, "tau_init", c.tau_init);
    read_field(json, "tau_min", c.tau_min);
    read_field(json, "tau_max", c.tau_max);
    read_field(json, "class_balanced", c.class_balanced);
    read_field(json, "multitask", c.multitask);
    read_field(json, "seed", c.seed);
    read_field(json, "embed_dim", c.embed_dim);
    read_field(json, "backbone_dim", c.backbone_dim);
    read_field(json, "hidden_dim", c.hidden_dim);
    read_field(json, "speech_context_mixing", c.speech_context_mixing);
    read_field(json, "classification_weight", c.classification_weight);
    read_field(json, "adam_beta1", c.adam_beta1);
    read_field(json, "adam_beta2", c.adam_beta2);
    read_field(json, "adam_epsilon", c.adam_epsilon);
    read_field(json, "eval_every", c.eval_every);
    read_field(json, "checkpoint_path", c.checkpoint_path);
    read_field(json, "trace_path", c.trace_path);
    return c;
}

TrainConfig train_config_from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("train config: cannot open " + path.string());
    }
    ordered_json json;
    try {
        in >> json;
    } catch (const std::exception& e) {
        throw ConfigError("train config: parse error in " + path.string() +
                          ": " + e.what());
    }
    return train_config_from_json(json);
}

ordered_json train_config_to_json(const TrainConfig& c) {
    ordered_json json;
    json["mode"] = train_mode_name(c.mode);
    json["steps"] = c.steps;
    json["batch_size"] = c.batch_size;
    json["learning_rate"] = c.learning_rate;
    json["tau_init"] = c.tau_init;
    json["tau_min"] = c.tau_min;
    json["tau_max"] = c.tau_max;
    json["class_balanced"] = c.class_balanced;
    json["multitask"] = c.multitask;
    json["seed"] = c.seed;
    json["embed_dim"] = c.embed_dim;
    json["backbone_dim"] = c.backbone_dim;
    json["hidden_dim"] = c.hidden_dim;
    json["speech_context_mixing"] = c.speech_context_mixing;
    json["classification_weight"] = c.classification_weight;
    json["adam_beta1"] = c.adam_beta1;
    json["adam_beta2"] = c.adam_beta2;
    json["adam_epsilon"] = c.adam_epsilon;
    json["eval_every"] = c.eval_every;
    json["checkpoint_path"] = c.checkpoint_path;
    json["trace_path"] = c.trace_path;
    return json;
}

std::string format_trace_row(const TraceRow& row) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld\t%.17g\t%.17g\t%.17g",
                  static_cast<long long>(row.step), row.contrastive,
                  row.classification, row.tau);
    return buf;
}

EncoderConfig encoder_config_for(const TrainConfig& config,
                                 const CorpusManifest& manifest) {
    EncoderConfig ec;
    ec.feature_dim = manifest.feature_dim;
    ec.backbone_dim = config.backbone_dim;
    ec.hidden_dim = config.hidden_dim > 0 ? config.hidden_dim : config.embed_dim;
    ec.embed_dim = config.embed_dim;
    ec.vocab_size = manifest.tokenizer.size();
    ec.cls_token_id = Tokenizer::kClsId;
    ec.speech_context_mixing = config.speech_context_mixing;
    return ec;
}

namespace {

void check_mode_compatibility(TrainMode mode, CorpusKind kind) {
    bool ok = false;
    switch (mode) {
        case TrainMode::kIntrinsic:
            ok = kind == CorpusKind::kIntrinsic;
            break;
        case TrainMode::kSituational:
            // The contrastive-only recipe also runs on intrinsic corpora
            // (that is exactly the w/o-multitask comparison).
            ok = kind == CorpusKind::kSituational ||
                 kind == CorpusKind::kIntrinsic;
            break;
        case TrainMode::kCombined:
            ok = kind == CorpusKind::kCombined;
            break;
    }
    if (!ok) {
        throw ConfigError("train: corpus kind '" + corpus_kind_name(kind) +
                          "' is incompatible with mode '" +
                          train_mode_name(mode) + "'");
    }
}

// Index sampler over the train split for all mode/balancing combinations.
class BatchSampler {
public:
    BatchSampler(const Corpus& corpus, const TrainConfig& config) {
        const auto& examples = corpus.train;
        if (config.mode == TrainMode::kCombined) {
            std::vector<size_t> intrinsic_side, situational_side;
            for (size_t i = 0; i < examples.size(); ++i) {
                if (example_is_situational(examples[i],
                                           corpus.manifest.vocabulary)) {
                    situational_side.push_back(i);
                } else {
                    intrinsic_side.push_back(i);
                }
            }
            if (config.class_balanced) {
                combined_weighted_ = true;
                intrinsic_ = std::move(intrinsic_side);
                situational_ = std::move(situational_side);
                if (intrinsic_.empty() || situational_.empty()) {
                    throw ConfigError("train: combined corpus is missing one side");
                }
                auto weights =
                    class_balanced_weights(examples, corpus.manifest.vocabulary);
                intrinsic_cum_ = side_cumulative(weights, intrinsic_);
                situational_cum_ = side_cumulative(weights, situational_);
            } else {
                stream_ = std::make_unique<BalancedStream>(
                    std::move(intrinsic_side), std::move(situational_side));
            }
        } else if (config.class_balanced) {
            cumulative_ = cumulative_weights(
                class_balanced_weights(examples, corpus.manifest.vocabulary));
        } else {
            uniform_count_ = examples.size();
        }
    }

    size_t next(Rng& rng) const {
        if (stream_) {
            return stream_->next(rng);
        }
        if (combined_weighted_) {
            const bool second = rng.next_below(2) == 1;
            const auto& side = second ? situational_ : intrinsic_;
            const auto& cum = second ? situational_cum_ : intrinsic_cum_;
            return side[rng.next_weighted(cum)];
        }
        if (!cumulative_.empty()) {
            return rng.next_weighted(cumulative_);
        }
        return static_cast<size_t>(rng.next_below(uniform_count_));
    }

private:
    static std::vector<double> side_cumulative(const std::vector<double>& w,
                                               const std::vector<size_t>& side) {
        std::vector<double> local(side.size());
        for (size_t i = 0; i < side.size(); ++i) {
            local[i] = w[side[i]];
        }
        return cumulative_weights(local);
    }

    std::unique_ptr<BalancedStream> stream_;
    bool combined_weighted_ = false;
    std::vector<size_t> intrinsic_, situational_;
    std::vector<double> intrinsic_cum_, situational_cum_;
    std::vector<double> cumulative_;
    size_t uniform_count_ = 0;
};

}  // namespace

namespace {

struct FixtureLoss {
    double total;
    double contrastive;
    double classification;
    std::vector<Tensor> grads;
};

FixtureLoss eval_fixture(ObjectiveFixture& fixture, bool with_grads) {
    Tape tape;
    ModelNodes nodes = register_model(tape, fixture.params, true);
    ValueId speech =
        encode_speech_rows(tape, fixture.batch, nodes, fixture.encoder_config);
    ValueId text =
        encode_text_rows(tape, fixture.captions, nodes, fixture.encoder_config);
    ValueId tag_embs;
    const bool classify =
        fixture.mode == TrainMode::kIntrinsic && fixture.multitask;
    if (classify) {
        tag_embs =
            encode_text_rows(tape, fixture.bank_tokens, nodes,
                             fixture.encoder_config);
    }
    LossNodes loss = total_loss_nodes(
        tape, speech, text, nodes.log_tau, fixture.mode, fixture.multitask,
        fixture.classification_weight, tag_embs,
        classify ? &fixture.tags : nullptr);
    FixtureLoss out;
    out.total = tape.value(loss.total).item();
    out.contrastive = tape.value(loss.contrastive).item();
    out.classification =
        loss.has_classification ? tape.value(loss.classification).item() : 0.0;
    if (with_grads) {
        tape.backward(loss.total);
        out.grads.reserve(nodes.ordered.size());
        for (ValueId id : nodes.ordered) {
            out.grads.push_back(tape.grad(id));
        }
    }
    return out;
}

}  // namespace

double ObjectiveFixture::loss() { return eval_fixture(*this, false).total; }

std::pair<double, std::vector<Tensor>> ObjectiveFixture::loss_and_grads() {
    FixtureLoss out = eval_fixture(*this, true);
    return {out.total, std::move(out.grads)};
}

ObjectiveFixture make_objective_fixture(const TrainConfig& config,
                                        const Corpus& corpus,
                                        int64_t batch_size) {
    config.validate();
    if (batch_size < 2 ||
        batch_size > static_cast<int64_t>(corpus.train.size())) {
        throw ConfigError("objective fixture: invalid batch size");
    }
    ObjectiveFixture fixture;
    fixture.encoder_config = encoder_config_for(config, corpus.manifest);
    fixture.mode = config.mode;
    fixture.multitask = config.multitask;
    fixture.classification_weight = config.classification_weight;

    Rng init_rng = Rng::derive(config.seed, "init");
    fixture.params =
        ModelParams::init(fixture.encoder_config, config.tau_init, init_rng);

    Rng fit_rng = Rng::derive(config.seed, "fit");
    Rng caption_rng = Rng::derive(config.seed, "captions");
    const int64_t fixed_length = corpus.manifest.fixed_length;
    const int64_t m = corpus.manifest.vocabulary.count();
    fixture.batch.count = batch_size;
    fixture.batch.frames_per_clip = fixed_length;
    fixture.batch.stacked = Tensor::zeros(
        {batch_size * fixed_length, fixture.encoder_config.feature_dim});
    fixture.tags = Tensor::zeros({batch_size, m});
    for (int64_t b = 0; b < batch_size; ++b) {
        const TrainingExample& ex = corpus.train[static_cast<size_t>(b)];
        auto [fitted, fit_mask] = fit_length(ex.features, fixed_length, fit_rng);
        std::copy(fitted.data(), fitted.data() + fitted.size(),
                  fixture.batch.stacked.row(b * fixed_length));
        fixture.batch.mask.insert(fixture.batch.mask.end(), fit_mask.begin(),
                                  fit_mask.end());
        fixture.captions.push_back(ex.caption_tokens);
        for (int64_t k = 0; k < m; ++k) {
            fixture.tags.at(b, k) = ex.tags[static_cast<size_t>(k)] ? 1.0 : 0.0;
        }
    }
    if (fixture.mode == TrainMode::kIntrinsic && fixture.multitask) {
        auto picks = sample_tag_captions(corpus.bank, caption_rng);
        for (size_t k = 0; k < picks.size(); ++k) {
            fixture.bank_tokens.push_back(corpus.bank.tokens_by_tag[k][picks[k]]);
        }
    }
    return fixture;
}

TrainResult train(const TrainConfig& config, const Corpus& corpus,
                  const Checkpoint* resume, std::ostream* log,
                  const std::function<void(int64_t, ModelParams&)>& eval_hook) {
    config.validate();
    check_mode_compatibility(config.mode, corpus.manifest.kind);
    const bool classify =
        config.mode == TrainMode::kIntrinsic && config.multitask;
    if (classify) {
        if (corpus.manifest.vocabulary.tags.empty()) {
            throw ConfigError("train: intrinsic mode requires a tag vocabulary");
        }
        if (corpus.bank.tokens_by_tag.empty()) {
            throw ConfigError("train: intrinsic mode requires a paraphrase bank");
        }
    }
    if (corpus.train.empty()) {
        throw ConfigError("train: corpus has no training examples");
    }

    const EncoderConfig ec = encoder_config_for(config, corpus.manifest);

    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.vocabulary = corpus.manifest.vocabulary;
    ckpt.tokenizer = corpus.manifest.tokenizer;

    Rng batch_rng, fit_rng, caption_rng;
    int64_t start_step = 0;
    if (resume != nullptr) {
        ckpt.params = resume->params;
        if (ckpt.params.config.feature_dim != ec.feature_dim ||
            ckpt.params.config.vocab_size != ec.vocab_size ||
            ckpt.params.config.embed_dim != ec.embed_dim) {
            throw ConfigError("train: resume checkpoint does not match config/corpus");
        }
        batch_rng.restore_state(resume->rng_batch);
        fit_rng.restore_state(resume->rng_fit);
        caption_rng.restore_state(resume->rng_captions);
        start_step = resume->step;
        if (start_step >= config.steps) {
            throw ConfigError("train: checkpoint already at or past target steps");
        }
    } else {
        Rng init_rng = Rng::derive(config.seed, "init");
        ckpt.params = ModelParams::init(ec, config.tau_init, init_rng);
        batch_rng = Rng::derive(config.seed, "batch");
        fit_rng = Rng::derive(config.seed, "fit");
        caption_rng = Rng::derive(config.seed, "captions");
    }
    ModelParams& params = ckpt.params;

    auto registry = params.param_registry();
    std::vector<Tensor*> param_ptrs;
    std::vector<const Tensor*> param_const_ptrs;
    for (auto& [name, tensor] : registry) {
        param_ptrs.push_back(tensor);
        param_const_ptrs.push_back(tensor);
    }
    AdamConfig adam_config{config.learning_rate, config.adam_beta1,
                           config.adam_beta2, config.adam_epsilon};
    AdamState adam(adam_config, param_const_ptrs);
    if (resume != nullptr) {
        adam.restore(resume->adam_step, resume->adam_m, resume->adam_v);
    }

    BatchSampler sampler(corpus, config);

    std::ofstream trace_out;
    if (!config.trace_path.empty()) {
        trace_out.open(config.trace_path,
                       resume ? std::ios::app : std::ios::trunc);
        if (!trace_out) {
            throw IoError("train: cannot open trace file " + config.trace_path);
        }
    }

    const int64_t fixed_length = corpus.manifest.fixed_length;
    const double log_tau_min = std::log(config.tau_min);
    const double log_tau_max = std::log(config.tau_max);
    const int64_t m = corpus.manifest.vocabulary.count();

    TrainResult result;
    for (int64_t step = start_step + 1; step <= config.steps; ++step) {
        // Assemble the batch: sample, fit to fixed length, stack.
        std::vector<size_t> indices(static_cast<size_t>(config.batch_size));
        for (auto& idx : indices) {
            idx = sampler.next(batch_rng);
        }
        Tensor stacked =
            Tensor::zeros({config.batch_size * fixed_length, ec.feature_dim});
        std::vector<uint8_t> mask;
        mask.reserve(static_cast<size_t>(config.batch_size * fixed_length));
        std::vector<std::vector<int64_t>> captions;
        Tensor tags = Tensor::zeros({config.batch_size, m});
        for (int64_t b = 0; b < config.batch_size; ++b) {
            const TrainingExample& ex = corpus.train[indices[static_cast<size_t>(b)]];
            auto [fitted, fit_mask] = fit_length(ex.features, fixed_length, fit_rng);
            std::copy(fitted.data(), fitted.data() + fitted.size(),
                      stacked.row(b * fixed_length));
            mask.insert(mask.end(), fit_mask.begin(), fit_mask.end());
            captions.push_back(ex.caption_tokens);
            for (int64_t k = 0; k < m; ++k) {
                tags.at(b, k) = ex.tags[static_cast<size_t>(k)] ? 1.0 : 0.0;
            }
        }

        TraceRow row;
        row.step = step;
        try {
            Tape tape;
            ModelNodes nodes = register_model(tape, params, true);
            SpeechBatch batch{std::move(stacked), std::move(mask),
                              config.batch_size, fixed_length};
            ValueId speech = encode_speech_rows(tape, batch, nodes, ec);
            ValueId text = encode_text_rows(tape, captions, nodes, ec);

            ValueId tag_embs;
            if (classify) {
                auto picks = sample_tag_captions(corpus.bank, caption_rng);
                std::vector<std::vector<int64_t>> bank_tokens;
                bank_tokens.reserve(picks.size());
                for (size_t k = 0; k < picks.size(); ++k) {
                    bank_tokens.push_back(corpus.bank.tokens_by_tag[k][picks[k]]);
                }
                tag_embs = encode_text_rows(tape, bank_tokens, nodes, ec);
            }
            LossNodes loss = total_loss_nodes(
                tape, speech, text, nodes.log_tau, config.mode, config.multitask,
                config.classification_weight, tag_embs,
                classify ? &tags : nullptr);

            row.contrastive = tape.value(loss.contrastive).item();
            row.classification = loss.has_classification
                                     ? tape.value(loss.classification).item()
                                     : 0.0;
            row.tau = std::exp(params.log_tau.item());
            if (!std::isfinite(tape.value(loss.total).item())) {
                throw NumericError("non-finite loss");
            }

            tape.backward(loss.total);
            std::vector<Tensor> grads;
            grads.reserve(nodes.ordered.size());
            for (ValueId id : nodes.ordered) {
                grads.push_back(tape.grad(id));
            }
            adam.step(param_ptrs, grads);
        } catch (const NumericError& e) {
            throw NumericError("train: aborted at step " + std::to_string(step) +
                               ": " + e.what());
        }
        params.log_tau.at(0) =
            std::clamp(params.log_tau.item(), log_tau_min, log_tau_max);

        result.trace.push_back(row);
        if (trace_out.is_open()) {
            trace_out << format_trace_row(row) << "\n";
        }
        if (log != nullptr && (step % 100 == 0 || step == config.steps)) {
            *log << "step " << step << " contrastive " << row.contrastive
                 << " classification " << row.classification << " tau "
                 << row.tau << "\n";
        }
        if (eval_hook && config.eval_every > 0 && step % config.eval_every == 0) {
            eval_hook(step, params);
        }
    }

    ckpt.step = config.steps;
    ckpt.adam_step = adam.step_count();
    ckpt.adam_m = adam.first_moments();
    ckpt.adam_v = adam.second_moments();
    ckpt.rng_batch = batch_rng.save_state();
    ckpt.rng_fit = fit_rng.save_state();
    ckpt.rng_captions = caption_rng.save_state();
    if (!config.checkpoint_path.empty()) {
        save_checkpoint(ckpt, config.checkpoint_path);
    }
    result.checkpoint = std::move(ckpt);
    return result;
}

}  // namespace stylealign
