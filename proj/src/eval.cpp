#include "stylealign/eval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "stylealign/errors.hpp"
#include "stylealign/losses.hpp"

namespace stylealign {

int64_t rank_of_truth(std::span<const double> scores, int64_t truth_index) {
    if (truth_index < 0 || truth_index >= static_cast<int64_t>(scores.size())) {
        throw ContractError("rank_of_truth: truth index out of range");
    }
    const double truth_score = scores[static_cast<size_t>(truth_index)];
    int64_t rank = 1;
    for (int64_t j = 0; j < static_cast<int64_t>(scores.size()); ++j) {
        if (j == truth_index) {
            continue;
        }
        const double s = scores[static_cast<size_t>(j)];
        if (s > truth_score || (s == truth_score && j < truth_index)) {
            ++rank;
        }
    }
    return rank;
}

RetrievalResult retrieval_metrics(const Tensor& similarity,
                                  std::span<const int64_t> truth) {
    require_rank(similarity, 2, "retrieval_metrics");
    const int64_t n_clips = similarity.dim(0);
    const int64_t n_prompts = similarity.dim(1);
    if (static_cast<int64_t>(truth.size()) != n_clips) {
        throw ContractError("retrieval_metrics: truth size mismatch");
    }
    RetrievalResult result;
    result.ranks.reserve(static_cast<size_t>(n_clips));
    int64_t hits1 = 0, hits10 = 0;
    for (int64_t i = 0; i < n_clips; ++i) {
        if (truth[static_cast<size_t>(i)] < 0 ||
            truth[static_cast<size_t>(i)] >= n_prompts) {
            throw ContractError("retrieval_metrics: truth index out of range");
        }
        const int64_t rank = rank_of_truth(
            std::span<const double>(similarity.row(i),
                                    static_cast<size_t>(n_prompts)),
            truth[static_cast<size_t>(i)]);
        result.ranks.push_back(rank);
        hits1 += rank <= 1;
        hits10 += rank <= 10;
    }
    result.r_at_1 = 100.0 * hits1 / static_cast<double>(n_clips);
    result.r_at_10 = 100.0 * hits10 / static_cast<double>(n_clips);
    std::vector<int64_t> sorted = result.ranks;
    std::sort(sorted.begin(), sorted.end());
    result.median_rank = sorted[(sorted.size() - 1) / 2];  // lower median
    return result;
}

std::vector<int64_t> classify_zero_shot(const Tensor& speech_embs,
                                        const std::vector<std::string>& labels,
                                        ModelParams& params,
                                        const Tokenizer& tokenizer) {
    if (labels.size() < 2) {
        throw ConfigError("classify_zero_shot: need at least 2 classes");
    }
    std::set<std::string> distinct(labels.begin(), labels.end());
    if (distinct.size() != labels.size()) {
        throw ConfigError("classify_zero_shot: duplicate class labels");
    }
    Tensor prompt_embs = Tensor::zeros(
        {static_cast<int64_t>(labels.size()), params.config.embed_dim});
    for (size_t c = 0; c < labels.size(); ++c) {
        Tensor emb =
            encode_text(tokenizer.encode(zero_shot_prompt(labels[c])), params);
        std::copy(emb.data(), emb.data() + emb.size(),
                  prompt_embs.row(static_cast<int64_t>(c)));
    }
    // Softmax over cosine scores would not change the argmax; skip it.
    Tensor scores = cosine_similarity_matrix(speech_embs, prompt_embs);
    std::vector<int64_t> predictions(static_cast<size_t>(speech_embs.dim(0)));
    for (int64_t i = 0; i < scores.dim(0); ++i) {
        int64_t best = 0;
        for (int64_t c = 1; c < scores.dim(1); ++c) {
            if (scores.at(i, c) > scores.at(i, best)) {
                best = c;
            }
        }
        predictions[static_cast<size_t>(i)] = best;
    }
    return predictions;
}

ClassificationResult classification_metrics(
    std::span<const int64_t> predictions, std::span<const int64_t> gold,
    int64_t classes) {
    if (predictions.size() != gold.size() || predictions.empty()) {
        throw ContractError("classification_metrics: prediction/gold mismatch");
    }
    if (classes < 2) {
        throw ConfigError("classification_metrics: need at least 2 classes");
    }
    ClassificationResult result;
    result.classes = classes;
    result.confusion.assign(static_cast<size_t>(classes * classes), 0);
    for (size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0 || gold[i] >= classes || predictions[i] < 0 ||
            predictions[i] >= classes) {
            throw ContractError("classification_metrics: label out of range");
        }
        result.confusion[static_cast<size_t>(gold[i] * classes +
                                             predictions[i])] += 1;
    }
    double recall_sum = 0.0;
    double f1_sum = 0.0;
    for (int64_t c = 0; c < classes; ++c) {
        int64_t support = 0, predicted = 0;
        for (int64_t j = 0; j < classes; ++j) {
            support += result.confusion_at(c, j);
            predicted += result.confusion_at(j, c);
        }
        if (support == 0) {
            throw ConfigError("classification_metrics: class " +
                              std::to_string(c) +
                              " has no gold instances (UAR undefined)");
        }
        const int64_t tp = result.confusion_at(c, c);
        const double recall = static_cast<double>(tp) / support;
        recall_sum += recall;
        const double precision =
            predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
        // Zero-division convention: F1 = 0 when precision + recall = 0.
        const double f1 = (precision + recall) > 0.0
                              ? 2.0 * precision * recall / (precision + recall)
                              : 0.0;
        f1_sum += f1;
    }
    result.uar = 100.0 * recall_sum / static_cast<double>(classes);
    result.macro_f1 = 100.0 * f1_sum / static_cast<double>(classes);
    return result;
}

Tensor embed_eval_clips(const std::vector<TrainingExample>& clips,
                        ModelParams& params) {
    if (clips.empty()) {
        throw ConfigError("embed_eval_clips: empty clip list");
    }
    Tensor out = Tensor::zeros({static_cast<int64_t>(clips.size()),
                                params.config.embed_dim});
    for (size_t i = 0; i < clips.size(); ++i) {
        std::vector<uint8_t> mask(
            static_cast<size_t>(clips[i].features.dim(0)), 1);
        Tensor emb = encode_speech(clips[i].features, mask, params);
        std::copy(emb.data(), emb.data() + emb.size(),
                  out.row(static_cast<int64_t>(i)));
    }
    return out;
}

Tensor embed_prompts(const std::vector<EvalPrompt>& prompts,
                     ModelParams& params) {
    if (prompts.empty()) {
        throw ConfigError("embed_prompts: empty prompt list");
    }
    Tensor out = Tensor::zeros({static_cast<int64_t>(prompts.size()),
                                params.config.embed_dim});
    for (size_t i = 0; i < prompts.size(); ++i) {
        Tensor emb = encode_text(prompts[i].caption_tokens, params);
        std::copy(emb.data(), emb.data() + emb.size(),
                  out.row(static_cast<int64_t>(i)));
    }
    return out;
}

void write_report(const std::filesystem::path& path,
                  const nlohmann::ordered_json& body, double wall_time_s) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("report: cannot open for writing: " + path.string());
    }
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    char header[96];
    std::snprintf(header, sizeof(header), "# generated %s wall_time_s %.3f",
                  stamp, wall_time_s);
    out << header << "\n" << body.dump(2) << "\n";
    if (!out) {
        throw IoError("report: write failed: " + path.string());
    }
}

nlohmann::ordered_json read_report_body(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("report: cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("# generated", 0) != 0) {
        throw IoError("report: missing header line in " + path.string());
    }
    nlohmann::ordered_json body;
    in >> body;
    return body;
}

}  // namespace stylealign
