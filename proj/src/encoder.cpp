#include "stylealign/encoder.hpp"

#include <cmath>

#include "stylealign/errors.hpp"

namespace stylealign {

void EncoderConfig::validate() const {
    if (feature_dim < 1 || backbone_dim < 1 || hidden_dim < 1 || embed_dim < 1) {
        throw ConfigError("encoder config: dimensions must be positive");
    }
    if (vocab_size < 1) {
        throw ConfigError("encoder config: vocab_size must be positive");
    }
    if (cls_token_id < 0 || cls_token_id >= vocab_size) {
        throw ConfigError("encoder config: cls_token_id outside vocabulary");
    }
    if (ln_eps <= 0.0) {
        throw ConfigError("encoder config: ln_eps must be positive");
    }
}

namespace {

Tensor uniform_fan_init(int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros({fan_in, fan_out});
    for (int64_t i = 0; i < t.size(); ++i) {
        t.at(i) = rng.next_double(-a, a);
    }
    return t;
}

ProjectionHeadParams init_head(const EncoderConfig& c, Rng& rng) {
    ProjectionHeadParams head;
    head.w1 = uniform_fan_init(c.backbone_dim, c.hidden_dim, rng);
    head.b1 = Tensor::zeros({c.hidden_dim});
    head.w2 = uniform_fan_init(c.hidden_dim, c.embed_dim, rng);
    head.b2 = Tensor::zeros({c.embed_dim});
    head.ln_gamma = Tensor::full({c.embed_dim}, 1.0);
    head.ln_beta = Tensor::zeros({c.embed_dim});
    return head;
}

Tensor row_vector_copy(const Tensor& v) {
    std::vector<double> data(v.data(), v.data() + v.size());
    return Tensor::vector(std::move(data));
}

}  // namespace

ModelParams ModelParams::init(const EncoderConfig& config, double tau_init,
                              Rng& rng) {
    config.validate();
    if (!(tau_init > 0.0)) {
        throw ConfigError("model init: tau_init must be positive");
    }
    ModelParams p;
    p.config = config;
    p.speech.frame_projection =
        uniform_fan_init(config.feature_dim, config.backbone_dim, rng);
    if (config.speech_context_mixing) {
        p.speech.mix_weight =
            uniform_fan_init(config.backbone_dim, config.backbone_dim, rng);
        p.speech.mix_bias = Tensor::zeros({config.backbone_dim});
    }
    p.text.token_embeddings =
        uniform_fan_init(config.vocab_size, config.backbone_dim, rng);
    p.speech_head = init_head(config, rng);
    p.text_head = init_head(config, rng);
    p.log_tau = Tensor::scalar(std::log(tau_init));
    return p;
}

void ModelParams::visit(
    const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("speech.frame_projection", speech.frame_projection);
    if (config.speech_context_mixing) {
        fn("speech.mix_weight", speech.mix_weight);
        fn("speech.mix_bias", speech.mix_bias);
    }
    fn("text.token_embeddings", text.token_embeddings);
    fn("speech_head.w1", speech_head.w1);
    fn("speech_head.b1", speech_head.b1);
    fn("speech_head.w2", speech_head.w2);
    fn("speech_head.b2", speech_head.b2);
    fn("speech_head.ln_gamma", speech_head.ln_gamma);
    fn("speech_head.ln_beta", speech_head.ln_beta);
    fn("text_head.w1", text_head.w1);
    fn("text_head.b1", text_head.b1);
    fn("text_head.w2", text_head.w2);
    fn("text_head.b2", text_head.b2);
    fn("text_head.ln_gamma", text_head.ln_gamma);
    fn("text_head.ln_beta", text_head.ln_beta);
    fn("temperature.log_tau", log_tau);
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::param_registry() {
    std::vector<std::pair<std::string, Tensor*>> registry;
    visit([&](const std::string& name, Tensor& t) {
        registry.emplace_back(name, &t);
    });
    return registry;
}

int64_t ModelParams::parameter_count() {
    int64_t n = 0;
    visit([&](const std::string&, Tensor& t) { n += t.size(); });
    return n;
}

ModelNodes register_model(Tape& tape, ModelParams& params, bool trainable) {
    ModelNodes nodes;
    auto reg = [&](Tensor& t) {
        ValueId id = tape.leaf(t, trainable);
        nodes.ordered.push_back(id);
        return id;
    };
    nodes.frame_projection = reg(params.speech.frame_projection);
    if (params.config.speech_context_mixing) {
        nodes.mix_weight = reg(params.speech.mix_weight);
        nodes.mix_bias = reg(params.speech.mix_bias);
    }
    nodes.token_embeddings = reg(params.text.token_embeddings);
    auto reg_head = [&](ProjectionHeadParams& h) {
        HeadNodes hn;
        hn.w1 = reg(h.w1);
        hn.b1 = reg(h.b1);
        hn.w2 = reg(h.w2);
        hn.b2 = reg(h.b2);
        hn.ln_gamma = reg(h.ln_gamma);
        hn.ln_beta = reg(h.ln_beta);
        return hn;
    };
    nodes.speech_head = reg_head(params.speech_head);
    nodes.text_head = reg_head(params.text_head);
    nodes.log_tau = reg(params.log_tau);
    return nodes;
}

ValueId project_rows(Tape& tape, ValueId h, const HeadNodes& head, double eps) {
    ValueId hidden =
        tape.gelu(tape.add_rowvec(tape.matmul(h, head.w1), head.b1));
    ValueId out = tape.add_rowvec(tape.matmul(hidden, head.w2), head.b2);
    return tape.layer_norm_rows(out, head.ln_gamma, head.ln_beta, eps);
}

ValueId encode_speech_rows(Tape& tape, const SpeechBatch& batch,
                           const ModelNodes& model,
                           const EncoderConfig& config) {
    if (batch.count < 1 || batch.frames_per_clip < 1) {
        throw ShapeError("encode_speech: empty batch");
    }
    if (batch.stacked.rank() != 2 ||
        batch.stacked.dim(0) != batch.count * batch.frames_per_clip) {
        throw ShapeError("encode_speech: stacked feature shape mismatch");
    }
    if (batch.stacked.dim(1) != config.feature_dim) {
        throw ShapeError("encode_speech: feature_dim mismatch, got " +
                         batch.stacked.shape_string());
    }
    ValueId x = tape.constant(batch.stacked);
    ValueId frames = tape.matmul(x, model.frame_projection);
    if (config.speech_context_mixing) {
        ValueId ctx = tape.segment_masked_mean(frames, batch.mask, batch.count);
        ValueId injected =
            tape.add_rowvec(tape.matmul(ctx, model.mix_weight), model.mix_bias);
        frames = tape.gelu(
            tape.add(frames, tape.repeat_rows(injected, batch.frames_per_clip)));
    }
    ValueId pooled = tape.segment_masked_mean(frames, batch.mask, batch.count);
    return project_rows(tape, pooled, model.speech_head, config.ln_eps);
}

ValueId encode_text_rows(Tape& tape,
                         const std::vector<std::vector<int64_t>>& token_batch,
                         const ModelNodes& model,
                         const EncoderConfig& config) {
    if (token_batch.empty()) {
        throw ShapeError("encode_text: empty batch");
    }
    std::vector<ValueId> rows;
    rows.reserve(token_batch.size());
    for (const auto& tokens : token_batch) {
        if (tokens.empty()) {
            throw ShapeError("encode_text: empty token sequence");
        }
        ValueId gathered = tape.gather_rows(model.token_embeddings, tokens);
        rows.push_back(tape.cls_bag_combine(gathered));
    }
    ValueId h = tape.concat_rows(rows);
    return project_rows(tape, h, model.text_head, config.ln_eps);
}

Tensor project(const Tensor& h, const ProjectionHeadParams& head, double eps) {
    require_rank(h, 1, "project");
    Tape tape;
    HeadNodes hn;
    ProjectionHeadParams copy = head;
    hn.w1 = tape.constant(copy.w1);
    hn.b1 = tape.constant(copy.b1);
    hn.w2 = tape.constant(copy.w2);
    hn.b2 = tape.constant(copy.b2);
    hn.ln_gamma = tape.constant(copy.ln_gamma);
    hn.ln_beta = tape.constant(copy.ln_beta);
    std::vector<double> data(h.data(), h.data() + h.size());
    ValueId input = tape.constant(Tensor::matrix(1, h.dim(0), std::move(data)));
    ValueId out = project_rows(tape, input, hn, eps);
    return row_vector_copy(tape.value(out));
}

Tensor encode_speech(const Tensor& features, const std::vector<uint8_t>& mask,
                     ModelParams& params) {
    require_rank(features, 2, "encode_speech");
    if (static_cast<int64_t>(mask.size()) != features.dim(0)) {
        throw ShapeError("encode_speech: mask length mismatch");
    }
    Tape tape;
    ModelNodes nodes = register_model(tape, params, false);
    SpeechBatch batch;
    batch.stacked = features;
    batch.mask = mask;
    batch.count = 1;
    batch.frames_per_clip = features.dim(0);
    ValueId out = encode_speech_rows(tape, batch, nodes, params.config);
    return row_vector_copy(tape.value(out));
}

Tensor encode_text(const std::vector<int64_t>& tokens, ModelParams& params) {
    Tape tape;
    ModelNodes nodes = register_model(tape, params, false);
    ValueId out = encode_text_rows(tape, {tokens}, nodes, params.config);
    return row_vector_copy(tape.value(out));
}

}  // namespace stylealign
