#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylealign/corpus.hpp"
#include "stylealign/encoder.hpp"
#include "stylealign/tensor.hpp"

namespace stylealign {

// Rank of the truth prompt in one score row, descending; ties with a lower
// column index count against the truth (deterministic, pessimistic-by-index).
int64_t rank_of_truth(std::span<const double> scores, int64_t truth_index);

struct RetrievalResult {
    std::vector<int64_t> ranks;
    double r_at_1 = 0.0;   // percent
    double r_at_10 = 0.0;  // percent
    int64_t median_rank = 0;  // lower median
};

RetrievalResult retrieval_metrics(const Tensor& similarity,
                                  std::span<const int64_t> truth);

// Embeds the template prompt per class label and predicts the
// highest-cosine class per clip (softmax-invariant argmax, lowest index
// wins ties). Labels must be distinct.
std::vector<int64_t> classify_zero_shot(const Tensor& speech_embs,
                                        const std::vector<std::string>& labels,
                                        ModelParams& params,
                                        const Tokenizer& tokenizer);

struct ClassificationResult {
    int64_t classes = 0;
    std::vector<int64_t> confusion;  // classes x classes, row = gold
    double uar = 0.0;       // percent
    double macro_f1 = 0.0;  // percent
    int64_t confusion_at(int64_t gold, int64_t pred) const {
        return confusion[static_cast<size_t>(gold * classes + pred)];
    }
};

ClassificationResult classification_metrics(std::span<const int64_t> predictions,
                                            std::span<const int64_t> gold,
                                            int64_t classes);

// Embeds every eval clip (variable length, all frames valid) row-by-row.
Tensor embed_eval_clips(const std::vector<TrainingExample>& clips,
                        ModelParams& params);
Tensor embed_prompts(const std::vector<EvalPrompt>& prompts,
                     ModelParams& params);

// Report files: one '#' header line carrying the timestamp and wall time
// (the only unstable bytes), then a stable pretty-printed JSON body.
void write_report(const std::filesystem::path& path,
                  const nlohmann::ordered_json& body, double wall_time_s);
nlohmann::ordered_json read_report_body(const std::filesystem::path& path);

}  // namespace stylealign
