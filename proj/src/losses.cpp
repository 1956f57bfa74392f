#include "stylealign/losses.hpp"

#include <cmath>

#include "stylealign/corpus.hpp"
#include "stylealign/errors.hpp"

namespace stylealign {

TrainMode parse_train_mode(const std::string& name) {
    if (name == "intrinsic") {
        return TrainMode::kIntrinsic;
    }
    if (name == "situational") {
        return TrainMode::kSituational;
    }
    if (name == "combined") {
        return TrainMode::kCombined;
    }
    throw ConfigError("mode: expected intrinsic, situational, or combined; got '" +
                      name + "'");
}

std::string train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::kIntrinsic:
            return "intrinsic";
        case TrainMode::kSituational:
            return "situational";
        case TrainMode::kCombined:
            return "combined";
    }
    return "?";
}

Tensor cosine_similarity_matrix(const Tensor& speech_embs,
                                const Tensor& text_embs) {
    Tape tape;
    ValueId s = tape.constant(speech_embs);
    ValueId t = tape.constant(text_embs);
    return tape.value(cosine_similarity_matrix_node(tape, s, t));
}

ValueId cosine_similarity_matrix_node(Tape& tape, ValueId speech_embs,
                                      ValueId text_embs) {
    ValueId a = tape.l2_normalize_rows(speech_embs);
    ValueId b = tape.l2_normalize_rows(text_embs);
    return tape.matmul_nt(a, b);
}

ValueId contrastive_loss_node(Tape& tape, ValueId similarity,
                              ValueId tau_node) {
    const Tensor& s = tape.value(similarity);
    if (s.rank() != 2 || s.dim(0) != s.dim(1)) {
        throw ContractError("contrastive_loss: similarity matrix is not square, " +
                            s.shape_string());
    }
    if (!(tape.value(tau_node).item() > 0.0)) {
        throw ContractError("contrastive_loss: tau must be positive");
    }
    const int64_t n = s.dim(0);
    ValueId scaled = tape.div_by_scalar(similarity, tau_node);
    ValueId diag = tape.diagonal(scaled);
    ValueId row_lse = tape.logsumexp_rows(scaled);
    ValueId col_lse = tape.logsumexp_rows(tape.transpose(scaled));
    ValueId row_term = tape.sum(tape.sub(row_lse, diag));
    ValueId col_term = tape.sum(tape.sub(col_lse, diag));
    return tape.scale(tape.add(row_term, col_term),
                      1.0 / (2.0 * static_cast<double>(n)));
}

double contrastive_loss(const Tensor& similarity, double tau) {
    Tape tape;
    ValueId s = tape.constant(similarity);
    ValueId t = tape.constant(Tensor::scalar(tau));
    return tape.value(contrastive_loss_node(tape, s, t)).item();
}

std::vector<size_t> sample_tag_captions(const ParaphraseBank& bank, Rng& rng) {
    std::vector<size_t> picks;
    picks.reserve(bank.captions_by_tag.size());
    for (size_t k = 0; k < bank.captions_by_tag.size(); ++k) {
        const auto& captions = bank.captions_by_tag[k];
        if (captions.empty()) {
            throw ConfigError("paraphrase bank: tag index " + std::to_string(k) +
                              " has no captions");
        }
        picks.push_back(static_cast<size_t>(rng.next_below(captions.size())));
    }
    return picks;
}

ValueId classification_loss_node(Tape& tape, ValueId speech_embs,
                                 ValueId tag_embs, Tensor tags) {
    const Tensor& s = tape.value(speech_embs);
    const Tensor& e = tape.value(tag_embs);
    if (s.rank() != 2 || e.rank() != 2 || s.dim(1) != e.dim(1)) {
        throw ShapeError("classification_loss: embedding width mismatch " +
                         s.shape_string() + " vs " + e.shape_string());
    }
    if (tags.rank() != 2 || tags.dim(0) != s.dim(0) || tags.dim(1) != e.dim(0)) {
        throw ShapeError("classification_loss: tag matrix shape mismatch " +
                         tags.shape_string());
    }
    ValueId logits = tape.matmul_nt(speech_embs, tag_embs);
    return tape.bce_with_logits(logits, std::move(tags));
}

double classification_loss(const Tensor& speech_embs, const Tensor& tag_embs,
                           const Tensor& tags) {
    Tape tape;
    ValueId s = tape.constant(speech_embs);
    ValueId e = tape.constant(tag_embs);
    return tape.value(classification_loss_node(tape, s, e, tags)).item();
}

LossNodes total_loss_nodes(Tape& tape, ValueId speech_embs, ValueId text_embs,
                           ValueId log_tau, TrainMode mode, bool multitask,
                           double classification_weight, ValueId tag_embs,
                           const Tensor* tags) {
    LossNodes out;
    ValueId tau = tape.exp(log_tau);
    ValueId sim = cosine_similarity_matrix_node(tape, speech_embs, text_embs);
    out.contrastive = contrastive_loss_node(tape, sim, tau);
    const bool classify = mode == TrainMode::kIntrinsic && multitask;
    if (classify) {
        if (!tag_embs.valid() || tags == nullptr) {
            throw ContractError("total_loss: classification term requires tag "
                                "embeddings and a tag matrix");
        }
        out.classification =
            classification_loss_node(tape, speech_embs, tag_embs, *tags);
        out.has_classification = true;
        ValueId weighted = classification_weight == 1.0
                               ? out.classification
                               : tape.scale(out.classification,
                                            classification_weight);
        out.total = tape.add(out.contrastive, weighted);
    } else {
        out.total = out.contrastive;
    }
    return out;
}

}  // namespace stylealign
