#include "stylealign/guidance.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "stylealign/errors.hpp"
#include "stylealign/losses.hpp"

namespace stylealign {

SelectionResult best_of_n(const CandidateSet& set, ModelParams& params) {
    if (set.candidates.empty()) {
        throw ConfigError("best_of_n: no candidates");
    }
    Tensor prompt_emb = encode_text(set.prompt_tokens, params);
    Tensor speech_embs = Tensor::zeros(
        {static_cast<int64_t>(set.candidates.size()), params.config.embed_dim});
    for (size_t j = 0; j < set.candidates.size(); ++j) {
        std::vector<uint8_t> mask(
            static_cast<size_t>(set.candidates[j].dim(0)), 1);
        Tensor emb = encode_speech(set.candidates[j], mask, params);
        std::copy(emb.data(), emb.data() + emb.size(),
                  speech_embs.row(static_cast<int64_t>(j)));
    }
    Tensor prompt_matrix = Tensor::matrix(
        1, prompt_emb.size(),
        std::vector<double>(prompt_emb.data(),
                            prompt_emb.data() + prompt_emb.size()));
    Tensor scores = cosine_similarity_matrix(speech_embs, prompt_matrix);

    SelectionResult result;
    result.prompt_norm = linalg::l2_norm(prompt_emb.data(), prompt_emb.size());
    result.scores.resize(set.candidates.size());
    for (size_t j = 0; j < set.candidates.size(); ++j) {
        result.scores[j] = scores.at(static_cast<int64_t>(j), 0);
        if (result.scores[j] > result.scores[static_cast<size_t>(result.chosen)]) {
            result.chosen = static_cast<int64_t>(j);
        }
    }
    return result;
}

SynthParams synth_params_from_manifest(const CorpusManifest& manifest) {
    if (manifest.signatures.empty()) {
        throw ConfigError(
            "guidance: corpus has no planted signatures; synthetic candidates "
            "need a generated corpus");
    }
    SynthParams synth;
    synth.signatures = manifest.signatures;
    synth.frames = manifest.fixed_length;
    if (!manifest.generator_echo.empty()) {
        const auto echo = nlohmann::json::parse(manifest.generator_echo);
        synth.noise_sigma = echo.value("noise_sigma", 0.0);
        synth.signature_scale = echo.value("signature_scale", 1.0);
        synth.frames = echo.value("frames", manifest.fixed_length);
    }
    return synth;
}

CandidateSet synth_candidates(const std::vector<int64_t>& style_tags,
                              const QualitySpread& spread, int64_t n, Rng& rng,
                              const SynthParams& synth,
                              const TagVocabulary& vocab,
                              const Tokenizer& tokenizer) {
    if (style_tags.empty()) {
        throw ConfigError("synth_candidates: style_tags is empty");
    }
    if (n < 1) {
        throw ConfigError("synth_candidates: n must be >= 1");
    }
    if (!(spread.hi >= spread.lo)) {
        throw ConfigError("synth_candidates: invalid quality spread");
    }
    const int64_t m = synth.signatures.dim(0);
    const int64_t dim = synth.signatures.dim(1);
    std::vector<std::string> names;
    for (int64_t k : style_tags) {
        if (k < 0 || k >= m) {
            throw ConfigError("synth_candidates: unknown tag index " +
                              std::to_string(k));
        }
        names.push_back(vocab.tags[static_cast<size_t>(k)].name);
    }

    CandidateSet set;
    set.prompt = caption_for_tags(names);
    set.prompt_tokens = tokenizer.encode(set.prompt);

    std::vector<double> prompt_mix(static_cast<size_t>(dim), 0.0);
    for (int64_t k : style_tags) {
        for (int64_t d = 0; d < dim; ++d) {
            prompt_mix[static_cast<size_t>(d)] += synth.signatures.at(k, d);
        }
    }
    for (double& v : prompt_mix) {
        v /= static_cast<double>(style_tags.size());
    }

    std::vector<int64_t> others;
    for (int64_t k = 0; k < m; ++k) {
        if (std::find(style_tags.begin(), style_tags.end(), k) ==
            style_tags.end()) {
            others.push_back(k);
        }
    }

    for (int64_t j = 0; j < n; ++j) {
        const double alpha = spread.lo == spread.hi
                                 ? spread.lo
                                 : rng.next_double(spread.lo, spread.hi);
        // Distractor mixture over tags disjoint from the prompt.
        std::vector<double> distractor_mix(static_cast<size_t>(dim), 0.0);
        if (!others.empty()) {
            const size_t picks =
                std::min(style_tags.size(), others.size());
            std::vector<int64_t> pool = others;
            rng.shuffle(pool);
            for (size_t t = 0; t < picks; ++t) {
                for (int64_t d = 0; d < dim; ++d) {
                    distractor_mix[static_cast<size_t>(d)] +=
                        synth.signatures.at(pool[t], d);
                }
            }
            for (double& v : distractor_mix) {
                v /= static_cast<double>(picks);
            }
        }
        Tensor features = Tensor::zeros({synth.frames, dim});
        for (int64_t t = 0; t < synth.frames; ++t) {
            double* row = features.row(t);
            for (int64_t d = 0; d < dim; ++d) {
                const double blended =
                    alpha * prompt_mix[static_cast<size_t>(d)] +
                    (1.0 - alpha) * distractor_mix[static_cast<size_t>(d)];
                row[d] = synth.signature_scale * blended +
                         synth.noise_sigma * rng.next_gaussian();
            }
        }
        set.candidates.push_back(std::move(features));
        set.hidden_scores.push_back(alpha);
    }
    return set;
}

namespace {

// Two-sided 97.5% Student t quantiles for df 1..30.
double t_critical(int64_t df) {
    static const double table[] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) {
        throw ContractError("t_critical: df must be >= 1");
    }
    if (df <= 30) {
        return table[df - 1];
    }
    return 1.96;
}

}  // namespace

GuidanceReport guidance_experiment(ModelParams& params, const Corpus& corpus,
                                   int64_t trials_per_tag, int64_t n,
                                   const QualitySpread& spread, uint64_t seed) {
    if (trials_per_tag < 1) {
        throw ConfigError("guidance_experiment: trials_per_tag must be >= 1");
    }
    const SynthParams synth = synth_params_from_manifest(corpus.manifest);
    const TagVocabulary& vocab = corpus.manifest.vocabulary;
    Rng rng = Rng::derive(seed, "guidance");

    GuidanceReport report;
    report.trials_per_tag = trials_per_tag;
    report.candidates_per_trial = n;
    report.seed = seed;

    std::vector<double> tag_diffs;
    for (int64_t k = 0; k < vocab.count(); ++k) {
        GuidanceReport::PerTag row;
        row.tag = vocab.tags[static_cast<size_t>(k)].name;
        for (int64_t trial = 0; trial < trials_per_tag; ++trial) {
            CandidateSet set =
                synth_candidates({k}, spread, n, rng, synth, vocab,
                                 corpus.manifest.tokenizer);
            SelectionResult sel = best_of_n(set, params);
            const double selected =
                set.hidden_scores[static_cast<size_t>(sel.chosen)];
            const double baseline = set.hidden_scores[0];
            row.selected_mean += selected;
            row.baseline_mean += baseline;
        }
        row.selected_mean /= static_cast<double>(trials_per_tag);
        row.baseline_mean /= static_cast<double>(trials_per_tag);
        row.diff_mean = row.selected_mean - row.baseline_mean;
        tag_diffs.push_back(row.diff_mean);
        report.pooled_selected += row.selected_mean;
        report.pooled_baseline += row.baseline_mean;
        report.per_tag.push_back(std::move(row));
    }
    const double k_tags = static_cast<double>(report.per_tag.size());
    report.pooled_selected /= k_tags;
    report.pooled_baseline /= k_tags;
    report.pooled_diff = report.pooled_selected - report.pooled_baseline;

    if (tag_diffs.size() >= 2) {
        double mean = 0.0;
        for (double d : tag_diffs) {
            mean += d;
        }
        mean /= k_tags;
        double var = 0.0;
        for (double d : tag_diffs) {
            var += (d - mean) * (d - mean);
        }
        var /= (k_tags - 1.0);
        const double half = t_critical(static_cast<int64_t>(tag_diffs.size()) - 1) *
                            std::sqrt(var / k_tags);
        report.ci_lo = mean - half;
        report.ci_hi = mean + half;
    } else {
        report.ci_lo = report.ci_hi = report.pooled_diff;
    }
    return report;
}

}  // namespace stylealign
