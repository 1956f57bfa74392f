#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stylealign/rng.hpp"
#include "stylealign/tensor.hpp"

namespace stylealign {

enum class TagKind { kIntrinsic, kSituational };
enum class CorpusKind { kIntrinsic, kSituational, kCombined };

TagKind parse_tag_kind(const std::string& name);
std::string tag_kind_name(TagKind kind);
CorpusKind parse_corpus_kind(const std::string& name);
std::string corpus_kind_name(CorpusKind kind);

struct TagVocabulary {
    struct Entry {
        std::string name;
        TagKind kind = TagKind::kIntrinsic;
    };
    std::vector<Entry> tags;

    int64_t count() const { return static_cast<int64_t>(tags.size()); }
    std::optional<int64_t> index_of(std::string_view name) const;
};

// Whitespace tokenizer over a closed, case-folded vocabulary.
// Ids 0 and 1 are reserved for CLS and UNK; UNK never appears in encoded
// output — out-of-vocabulary tokens are an error instead.
struct Tokenizer {
    static constexpr const char* kClsToken = "<cls>";
    static constexpr const char* kUnkToken = "<unk>";
    static constexpr int64_t kClsId = 0;
    static constexpr int64_t kUnkId = 1;

    std::vector<std::string> tokens;
    std::map<std::string, int64_t> ids;

    static Tokenizer from_tokens(std::vector<std::string> tokens);
    // Closed vocabulary collected from the given texts (reserved ids first).
    static Tokenizer build(const std::vector<std::string>& texts);

    // Case-folds, splits on whitespace, prepends CLS.
    std::vector<int64_t> encode(std::string_view text) const;
    int64_t size() const { return static_cast<int64_t>(tokens.size()); }
};

std::string case_fold(std::string_view text);

struct TrainingExample {
    std::string example_id;
    Tensor features;  // frames x feature_dim
    std::string caption;
    std::vector<int64_t> caption_tokens;  // CLS-prefixed
    std::vector<uint8_t> tags;            // multi-hot, length M
};

struct EvalPrompt {
    std::string caption;
    std::vector<uint8_t> tags;
    std::vector<int64_t> caption_tokens;
};

// Caption paraphrases per tag, indexed in vocabulary order.
struct ParaphraseBank {
    std::vector<std::vector<std::string>> captions_by_tag;
    std::vector<std::vector<std::vector<int64_t>>> tokens_by_tag;
};

// Recipe for a synthetic corpus whose labels are decodable by construction:
// every tag owns a random unit signature in feature space and an example's
// frames carry the scaled mean of its active-tag signatures plus noise.
struct PlantedSpec {
    int64_t tag_count = 8;
    int64_t feature_dim = 16;
    int64_t frames = 20;        // manifest fixed length L
    double frame_jitter = 0.25; // per-example frame counts in L*(1 +/- jitter)
    double noise_sigma = 0.1;
    double signature_scale = 1.0;
    int64_t train_examples = 512;
    int64_t eval_examples = 128;
    // 1.0 = uniform tag profile; otherwise most/least common tag ratio.
    double imbalance_ratio = 1.0;
    // Probability weights for examples carrying 1, 2, ... active tags.
    std::vector<double> tag_set_size_weights = {0.5, 0.3, 0.2};
    // >0 pins the number of distinct eval tag combinations (= prompts);
    // 0 derives prompts from the realized eval combos.
    int64_t eval_prompts = 0;
    // Fraction of situational-side examples for combined corpora.
    double situational_fraction = 0.5;
    CorpusKind kind = CorpusKind::kIntrinsic;
    uint64_t seed = 0;

    void validate() const;
};

struct CorpusManifest {
    int64_t schema_version = 1;
    CorpusKind kind = CorpusKind::kIntrinsic;
    int64_t feature_dim = 0;
    int64_t fixed_length = 0;
    TagVocabulary vocabulary;
    Tokenizer tokenizer;
    Tensor signatures;           // M x feature_dim; empty unless planted
    std::string generator_echo;  // PlantedSpec JSON, if planted
};

struct Corpus {
    CorpusManifest manifest;
    std::vector<TrainingExample> train;
    std::vector<TrainingExample> eval;
    std::vector<EvalPrompt> prompts;
    ParaphraseBank bank;
    std::vector<int64_t> eval_truth;  // eval clip -> prompt index
};

// Caption wording shared by the generator, paraphrase bank, and the
// zero-shot classification template.
std::string caption_for_tags(const std::vector<std::string>& tag_names);
std::string zero_shot_prompt(const std::string& label);
std::vector<std::string> paraphrase_templates();

PlantedSpec planted_spec_from_json(const nlohmann::ordered_json& json);
PlantedSpec planted_spec_from_file(const std::filesystem::path& path);
nlohmann::ordered_json planted_spec_to_json(const PlantedSpec& spec);

Corpus generate_planted_corpus(const PlantedSpec& spec);
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

// Flat feature container shared by corpora and candidate files.
void write_feature_file(const std::filesystem::path& path,
                        const std::vector<Tensor>& clips);
std::vector<Tensor> read_feature_file(const std::filesystem::path& path);

// Random fixed-length fitting: contiguous window when too long, zero padding
// with a false mask when too short.
std::pair<Tensor, std::vector<uint8_t>> fit_length(const Tensor& features,
                                                   int64_t target, Rng& rng);

// Normalized sampling weights: mean of inverse active-tag frequencies.
std::vector<double> class_balanced_weights(
    const std::vector<TrainingExample>& examples, const TagVocabulary& vocab);

bool example_is_situational(const TrainingExample& example,
                            const TagVocabulary& vocab);

// Equal-probability stream over two example pools; the smaller side repeats
// as often as needed (draws are i.i.d. with replacement).
class BalancedStream {
public:
    BalancedStream(std::vector<size_t> first_side, std::vector<size_t> second_side);
    size_t next(Rng& rng) const;

private:
    std::vector<size_t> first_;
    std::vector<size_t> second_;
};

}  // namespace stylealign
