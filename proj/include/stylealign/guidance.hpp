#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylealign/corpus.hpp"
#include "stylealign/encoder.hpp"
#include "stylealign/rng.hpp"
#include "stylealign/tensor.hpp"

namespace stylealign {

// Per-candidate fidelity distribution; degenerate when lo == hi.
struct QualitySpread {
    double lo = 0.0;
    double hi = 1.0;
};

struct CandidateSet {
    std::string prompt;
    std::vector<int64_t> prompt_tokens;
    std::vector<Tensor> candidates;          // frames x feature_dim each
    std::vector<double> hidden_scores;       // synthetic fidelity; may be empty
};

struct SelectionResult {
    int64_t chosen = 0;
    std::vector<double> scores;
    double prompt_norm = 0.0;
};

// Scores every candidate against the prompt in the joint space and keeps the
// best; ties go to the lowest index.
SelectionResult best_of_n(const CandidateSet& set, ModelParams& params);

// Planted-signature stand-in for a TTS model: candidate j blends the
// prompt's signature mixture with a disjoint distractor mixture at fidelity
// alpha_j ~ U[lo, hi], plus frame noise. The hidden score is alpha_j.
struct SynthParams {
    Tensor signatures;  // M x feature_dim
    double noise_sigma = 0.0;
    double signature_scale = 1.0;
    int64_t frames = 1;
};

SynthParams synth_params_from_manifest(const CorpusManifest& manifest);

CandidateSet synth_candidates(const std::vector<int64_t>& style_tags,
                              const QualitySpread& spread, int64_t n, Rng& rng,
                              const SynthParams& synth,
                              const TagVocabulary& vocab,
                              const Tokenizer& tokenizer);

struct GuidanceReport {
    struct PerTag {
        std::string tag;
        double selected_mean = 0.0;
        double baseline_mean = 0.0;
        double diff_mean = 0.0;
    };
    std::vector<PerTag> per_tag;
    double pooled_selected = 0.0;
    double pooled_baseline = 0.0;
    double pooled_diff = 0.0;
    // 95% CI of the paired difference across per-tag means (t critical,
    // df = tags - 1); per-tag clustering keeps the untrained negative
    // control honest.
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int64_t trials_per_tag = 0;
    int64_t candidates_per_trial = 0;
    uint64_t seed = 0;
};

// Selected-vs-first-candidate comparison over every vocabulary tag.
GuidanceReport guidance_experiment(ModelParams& params, const Corpus& corpus,
                                   int64_t trials_per_tag, int64_t n,
                                   const QualitySpread& spread, uint64_t seed);

}  // namespace stylealign
