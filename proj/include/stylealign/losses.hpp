#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylealign/autodiff.hpp"
#include "stylealign/rng.hpp"
#include "stylealign/tensor.hpp"

namespace stylealign {

struct ParaphraseBank;  // corpus.hpp

// Training recipe selector: intrinsic adds the classification term,
// situational and combined train with the contrastive loss alone.
enum class TrainMode { kIntrinsic, kSituational, kCombined };

TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

// Default clamping bounds for tau = exp(log_tau).
inline constexpr double kTauMin = 0.001;
inline constexpr double kTauMax = 100.0;

// Cosine similarities between two embedding batches (rows are embeddings).
// Throws DegenerateInputError on any zero-norm row.
Tensor cosine_similarity_matrix(const Tensor& speech_embs,
                                const Tensor& text_embs);
ValueId cosine_similarity_matrix_node(Tape& tape, ValueId speech_embs,
                                      ValueId text_embs);

// Bidirectional InfoNCE over a square similarity matrix whose diagonal holds
// the positive pairs; tau_node is a scalar temperature node. Row and column
// softmaxes use the max-shifted log-sum-exp form.
ValueId contrastive_loss_node(Tape& tape, ValueId similarity, ValueId tau_node);
double contrastive_loss(const Tensor& similarity, double tau);

// One fresh caption index per tag, uniform over that tag's paraphrases.
std::vector<size_t> sample_tag_captions(const ParaphraseBank& bank, Rng& rng);

// BCE-with-logits classification against live text-encoder tag embeddings.
// Logits are raw dot products; the per-example loss sums over all tags and
// the result is the batch mean.
ValueId classification_loss_node(Tape& tape, ValueId speech_embs,
                                 ValueId tag_embs, Tensor tags);
double classification_loss(const Tensor& speech_embs, const Tensor& tag_embs,
                           const Tensor& tags);

struct LossNodes {
    ValueId total;
    ValueId contrastive;
    ValueId classification;  // valid only when has_classification
    bool has_classification = false;
};

// Composes the mode's objective from already-encoded batches.
// tag_embs/tags are consulted only when the mode and multitask flag call
// for the classification term.
LossNodes total_loss_nodes(Tape& tape, ValueId speech_embs, ValueId text_embs,
                           ValueId log_tau, TrainMode mode, bool multitask,
                           double classification_weight, ValueId tag_embs,
                           const Tensor* tags);

}  // namespace stylealign
