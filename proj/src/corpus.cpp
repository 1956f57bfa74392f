#include "stylealign/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stylealign/errors.hpp"

namespace stylealign {

using ordered_json = nlohmann::ordered_json;

TagKind parse_tag_kind(const std::string& name) {
    if (name == "intrinsic") {
        return TagKind::kIntrinsic;
    }
    if (name == "situational") {
        return TagKind::kSituational;
    }
    throw ConfigError("tag kind: expected intrinsic or situational, got '" +
                      name + "'");
}

std::string tag_kind_name(TagKind kind) {
    return kind == TagKind::kIntrinsic ? "intrinsic" : "situational";
}

CorpusKind parse_corpus_kind(const std::string& name) {
    if (name == "intrinsic") {
        return CorpusKind::kIntrinsic;
    }
    if (name == "situational") {
        return CorpusKind::kSituational;
    }
    if (name == "combined") {
        return CorpusKind::kCombined;
    }
    throw ConfigError(
        "corpus kind: expected intrinsic, situational, or combined; got '" +
        name + "'");
}

std::string corpus_kind_name(CorpusKind kind) {
    switch (kind) {
        case CorpusKind::kIntrinsic:
            return "intrinsic";
        case CorpusKind::kSituational:
            return "situational";
        case CorpusKind::kCombined:
            return "combined";
    }
    return "?";
}

std::optional<int64_t> TagVocabulary::index_of(std::string_view name) const {
    for (size_t i = 0; i < tags.size(); ++i) {
        if (tags[i].name == name) {
            return static_cast<int64_t>(i);
        }
    }
    return std::nullopt;
}

std::string case_fold(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(static_cast<char>(
            std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

Tokenizer Tokenizer::from_tokens(std::vector<std::string> token_list) {
    Tokenizer t;
    if (token_list.size() < 2 || token_list[0] != kClsToken ||
        token_list[1] != kUnkToken) {
        throw ConfigError("tokenizer: vocabulary must start with reserved " +
                          std::string(kClsToken) + " and " + kUnkToken);
    }
    t.tokens = std::move(token_list);
    for (size_t i = 0; i < t.tokens.size(); ++i) {
        auto [it, inserted] = t.ids.emplace(t.tokens[i], static_cast<int64_t>(i));
        if (!inserted) {
            throw ConfigError("tokenizer: duplicate token '" + t.tokens[i] + "'");
        }
    }
    return t;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts) {
    std::vector<std::string> token_list = {kClsToken, kUnkToken};
    std::set<std::string> seen(token_list.begin(), token_list.end());
    for (const auto& text : texts) {
        std::istringstream in(case_fold(text));
        std::string word;
        while (in >> word) {
            if (seen.insert(word).second) {
                token_list.push_back(word);
            }
        }
    }
    return from_tokens(std::move(token_list));
}

std::vector<int64_t> Tokenizer::encode(std::string_view text) const {
    std::vector<int64_t> out = {kClsId};
    std::istringstream in(case_fold(text));
    std::string word;
    while (in >> word) {
        auto it = ids.find(word);
        if (it == ids.end()) {
            throw VocabularyError("tokenizer: '" + word +
                                  "' is not in the vocabulary");
        }
        out.push_back(it->second);
    }
    if (out.size() == 1) {
        throw ConfigError("tokenizer: caption is empty");
    }
    return out;
}

std::string caption_for_tags(const std::vector<std::string>& tag_names) {
    std::string joined;
    for (size_t i = 0; i < tag_names.size(); ++i) {
        if (i) {
            joined += " ";
        }
        joined += tag_names[i];
    }
    return "a person is speaking in a " + joined + " style";
}

std::string zero_shot_prompt(const std::string& label) {
    return "A person is speaking in a " + label + " style";
}

std::vector<std::string> paraphrase_templates() {
    return {
        "a person is speaking in a {} style",
        "the speaker talks in a {} manner",
        "this voice sounds {}",
        "speech delivered with a {} quality",
        "a recording of a {} sounding voice",
        "someone speaks and the delivery is {}",
    };
}

void PlantedSpec::validate() const {
    if (tag_count < 1) {
        throw ConfigError("planted spec: tag_count must be >= 1");
    }
    if (feature_dim < 1 || frames < 1) {
        throw ConfigError("planted spec: feature_dim and frames must be >= 1");
    }
    if (noise_sigma < 0.0) {
        throw ConfigError("planted spec: noise_sigma must be >= 0");
    }
    if (frame_jitter < 0.0 || frame_jitter >= 1.0) {
        throw ConfigError("planted spec: frame_jitter must be in [0, 1)");
    }
    if (!(signature_scale > 0.0)) {
        throw ConfigError("planted spec: signature_scale must be positive");
    }
    if (train_examples < tag_count || eval_examples < tag_count) {
        throw ConfigError(
            "planted spec: each split needs at least one example per tag");
    }
    if (imbalance_ratio < 1.0) {
        throw ConfigError("planted spec: imbalance_ratio must be >= 1");
    }
    if (tag_set_size_weights.empty()) {
        throw ConfigError("planted spec: tag_set_size_weights is empty");
    }
    double total = 0.0;
    for (double w : tag_set_size_weights) {
        if (w < 0.0) {
            throw ConfigError("planted spec: negative tag-set size weight");
        }
        total += w;
    }
    if (!(total > 0.0)) {
        throw ConfigError("planted spec: tag-set size weights sum to zero");
    }
    if (eval_prompts < 0) {
        throw ConfigError("planted spec: eval_prompts must be >= 0");
    }
    if (eval_prompts > 0 && eval_prompts < tag_count) {
        throw ConfigError(
            "planted spec: eval_prompts must cover every tag (>= tag_count)");
    }
    if (eval_prompts > eval_examples) {
        throw ConfigError("planted spec: eval_prompts exceeds eval_examples");
    }
    if (situational_fraction <= 0.0 || situational_fraction >= 1.0) {
        if (kind == CorpusKind::kCombined) {
            throw ConfigError(
                "planted spec: situational_fraction must lie in (0, 1)");
        }
    }
}

namespace {

const std::vector<std::string>& intrinsic_name_pool() {
    static const std::vector<std::string> pool = {
        "raspy", "deep",  "bright",   "nasal", "smooth", "gravelly",
        "breathy", "sharp", "mellow", "airy",  "tense",  "flat",
        "husky",  "crisp", "warm",    "thin"};
    return pool;
}

const std::vector<std::string>& situational_name_pool() {
    static const std::vector<std::string> pool = {
        "angry",   "cheerful",  "sad",     "calm",    "fearful", "excited",
        "bored",   "surprised", "sleepy",  "confused", "serious", "playful",
        "anxious", "proud",     "gentle",  "hesitant"};
    return pool;
}

std::string pool_name(const std::vector<std::string>& pool, int64_t i,
                      const char* fallback_prefix) {
    if (i < static_cast<int64_t>(pool.size())) {
        return pool[static_cast<size_t>(i)];
    }
    return std::string(fallback_prefix) + std::to_string(i);
}

// Largest-remainder apportionment of `total` slots over `probs`.
// With min_one, every cell is floor-guaranteed one slot first.
std::vector<int64_t> apportion(int64_t total, const std::vector<double>& probs,
                               bool min_one) {
    const size_t n = probs.size();
    std::vector<int64_t> counts(n, 0);
    int64_t remaining = total;
    if (min_one) {
        if (total < static_cast<int64_t>(n)) {
            throw ConfigError("apportion: not enough slots to cover every cell");
        }
        for (auto& c : counts) {
            c = 1;
        }
        remaining -= static_cast<int64_t>(n);
    }
    double norm = 0.0;
    for (double p : probs) {
        norm += p;
    }
    std::vector<std::pair<double, size_t>> fractional(n);
    int64_t assigned = 0;
    for (size_t k = 0; k < n; ++k) {
        const double target = remaining * probs[k] / norm;
        const int64_t base = static_cast<int64_t>(std::floor(target));
        counts[k] += base;
        assigned += base;
        fractional[k] = {target - base, k};
    }
    std::sort(fractional.begin(), fractional.end(),
              [](const auto& a, const auto& b) {
                  if (a.first != b.first) {
                      return a.first > b.first;
                  }
                  return a.second < b.second;
              });
    const int64_t extras = remaining - assigned;
    for (int64_t i = 0; i < extras; ++i) {
        counts[fractional[static_cast<size_t>(i)].second] += 1;
    }
    return counts;
}

// Power-law profile across the group's tags; ratio 1 = uniform.
std::vector<double> tag_profile(size_t count, double ratio) {
    std::vector<double> p(count, 1.0);
    if (count > 1 && ratio > 1.0) {
        for (size_t k = 0; k < count; ++k) {
            p[k] = std::pow(ratio, -static_cast<double>(k) /
                                       static_cast<double>(count - 1));
        }
    }
    return p;
}

// Deals tag combinations for `count` examples over the given tag indices:
// sizes apportioned by size weights, per-tag slots by the profile, the tag
// deck shuffled and dealt without duplicates within an example.
std::vector<std::vector<int64_t>> deal_combos(
    const std::vector<int64_t>& group_tags, int64_t count,
    const std::vector<double>& profile,
    const std::vector<double>& size_weights, Rng& rng) {
    const size_t max_size =
        std::min(size_weights.size(), group_tags.size());
    std::vector<double> sw(size_weights.begin(),
                           size_weights.begin() + max_size);
    std::vector<int64_t> size_counts = apportion(count, sw, false);
    std::vector<int64_t> sizes;
    sizes.reserve(static_cast<size_t>(count));
    for (size_t s = 0; s < size_counts.size(); ++s) {
        for (int64_t i = 0; i < size_counts[s]; ++i) {
            sizes.push_back(static_cast<int64_t>(s) + 1);
        }
    }
    rng.shuffle(sizes);

    int64_t total_slots = 0;
    for (int64_t s : sizes) {
        total_slots += s;
    }
    std::vector<int64_t> slot_counts = apportion(total_slots, profile, true);
    std::vector<int64_t> deck;
    deck.reserve(static_cast<size_t>(total_slots));
    for (size_t k = 0; k < group_tags.size(); ++k) {
        for (int64_t i = 0; i < slot_counts[k]; ++i) {
            deck.push_back(group_tags[k]);
        }
    }
    rng.shuffle(deck);

    std::vector<std::vector<int64_t>> combos;
    combos.reserve(sizes.size());
    size_t pos = 0;
    for (int64_t want : sizes) {
        std::vector<int64_t> combo;
        for (int64_t taken = 0; taken < want && pos < deck.size(); ++taken) {
            size_t j = pos;
            while (j < deck.size() &&
                   std::find(combo.begin(), combo.end(), deck[j]) != combo.end()) {
                ++j;
            }
            if (j == deck.size()) {
                break;  // only duplicates left; example keeps fewer tags
            }
            std::swap(deck[pos], deck[j]);
            combo.push_back(deck[pos]);
            ++pos;
        }
        std::sort(combo.begin(), combo.end());
        combos.push_back(std::move(combo));
    }
    return combos;
}

std::vector<uint8_t> multi_hot(const std::vector<int64_t>& combo, int64_t m) {
    std::vector<uint8_t> hot(static_cast<size_t>(m), 0);
    for (int64_t k : combo) {
        hot[static_cast<size_t>(k)] = 1;
    }
    return hot;
}

struct BinHeader {
    static constexpr char kMagic[8] = {'S', 'A', 'F', 'E', 'A', 'T', '0', '1'};
    uint64_t count = 0;
    uint64_t feature_dim = 0;
};

}  // namespace

PlantedSpec planted_spec_from_json(const ordered_json& json) {
    static const std::set<std::string> known = {
        "tag_count",      "feature_dim",       "frames",
        "frame_jitter",   "noise_sigma",       "signature_scale",
        "train_examples", "eval_examples",     "imbalance_ratio",
        "tag_set_size_weights",                "eval_prompts",
        "situational_fraction",                "kind",
        "seed"};
    for (const auto& [key, _] : json.items()) {
        if (!known.count(key)) {
            throw ConfigError("planted spec: unknown field '" + key + "'");
        }
    }
    PlantedSpec spec;
    auto get = [&](const char* key, auto& out) {
        if (json.contains(key)) {
            out = json.at(key).get<std::decay_t<decltype(out)>>();
        }
    };
    get("tag_count", spec.tag_count);
    get("feature_dim", spec.feature_dim);
    get("frames", spec.frames);
    get("frame_jitter", spec.frame_jitter);
    get("noise_sigma", spec.noise_sigma);
    get("signature_scale", spec.signature_scale);
    get("train_examples", spec.train_examples);
    get("eval_examples", spec.eval_examples);
    get("imbalance_ratio", spec.imbalance_ratio);
    get("tag_set_size_weights", spec.tag_set_size_weights);
    get("eval_prompts", spec.eval_prompts);
    get("situational_fraction", spec.situational_fraction);
    if (json.contains("kind")) {
        spec.kind = parse_corpus_kind(json.at("kind").get<std::string>());
    }
    get("seed", spec.seed);
    return spec;
}

PlantedSpec planted_spec_from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("planted spec: cannot open " + path.string());
    }
    ordered_json json;
    try {
        in >> json;
    } catch (const std::exception& e) {
        throw ConfigError("planted spec: parse error in " + path.string() +
                          ": " + e.what());
    }
    return planted_spec_from_json(json);
}

ordered_json planted_spec_to_json(const PlantedSpec& spec) {
    ordered_json json;
    json["tag_count"] = spec.tag_count;
    json["feature_dim"] = spec.feature_dim;
    json["frames"] = spec.frames;
    json["frame_jitter"] = spec.frame_jitter;
    json["noise_sigma"] = spec.noise_sigma;
    json["signature_scale"] = spec.signature_scale;
    json["train_examples"] = spec.train_examples;
    json["eval_examples"] = spec.eval_examples;
    json["imbalance_ratio"] = spec.imbalance_ratio;
    json["tag_set_size_weights"] = spec.tag_set_size_weights;
    json["eval_prompts"] = spec.eval_prompts;
    json["situational_fraction"] = spec.situational_fraction;
    json["kind"] = corpus_kind_name(spec.kind);
    json["seed"] = spec.seed;
    return json;
}

Corpus generate_planted_corpus(const PlantedSpec& spec) {
    static_assert(std::endian::native == std::endian::little,
                  "feature files are little-endian");
    spec.validate();
    const int64_t m = spec.tag_count;

    Rng sig_rng = Rng::derive(spec.seed, "signatures");
    Rng combo_rng = Rng::derive(spec.seed, "combos");
    Rng noise_rng = Rng::derive(spec.seed, "noise");

    Corpus corpus;
    corpus.manifest.kind = spec.kind;
    corpus.manifest.feature_dim = spec.feature_dim;
    corpus.manifest.fixed_length = spec.frames;

    // Tag vocabulary: fixed name pools keyed by kind.
    TagVocabulary& vocab = corpus.manifest.vocabulary;
    const int64_t intrinsic_count =
        spec.kind == CorpusKind::kIntrinsic
            ? m
            : (spec.kind == CorpusKind::kSituational ? 0 : (m + 1) / 2);
    for (int64_t k = 0; k < m; ++k) {
        TagVocabulary::Entry entry;
        if (k < intrinsic_count) {
            entry.name = pool_name(intrinsic_name_pool(), k, "style");
            entry.kind = TagKind::kIntrinsic;
        } else {
            entry.name =
                pool_name(situational_name_pool(), k - intrinsic_count, "mood");
            entry.kind = TagKind::kSituational;
        }
        vocab.tags.push_back(std::move(entry));
    }

    // Unit signatures per tag.
    Tensor signatures = Tensor::zeros({m, spec.feature_dim});
    for (int64_t k = 0; k < m; ++k) {
        double* row = signatures.row(k);
        double norm2 = 0.0;
        for (int64_t d = 0; d < spec.feature_dim; ++d) {
            row[d] = sig_rng.next_gaussian();
            norm2 += row[d] * row[d];
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (int64_t d = 0; d < spec.feature_dim; ++d) {
            row[d] *= inv;
        }
    }
    corpus.manifest.signatures = signatures;

    // Kind groups (tag indices) with per-group profiles.
    std::vector<std::vector<int64_t>> groups;
    if (spec.kind == CorpusKind::kCombined) {
        std::vector<int64_t> a, b;
        for (int64_t k = 0; k < m; ++k) {
            (vocab.tags[static_cast<size_t>(k)].kind == TagKind::kIntrinsic ? a
                                                                            : b)
                .push_back(k);
        }
        groups = {a, b};
    } else {
        std::vector<int64_t> all(static_cast<size_t>(m));
        for (int64_t k = 0; k < m; ++k) {
            all[static_cast<size_t>(k)] = k;
        }
        groups = {all};
    }

    auto group_counts = [&](int64_t total) {
        std::vector<int64_t> counts;
        if (groups.size() == 1) {
            counts = {total};
        } else {
            int64_t sit = static_cast<int64_t>(
                std::llround(total * spec.situational_fraction));
            sit = std::clamp<int64_t>(sit, 1, total - 1);
            counts = {total - sit, sit};
        }
        return counts;
    };

    auto make_example = [&](const std::vector<int64_t>& combo,
                            const std::string& id) {
        TrainingExample ex;
        ex.example_id = id;
        ex.tags = multi_hot(combo, m);
        std::vector<std::string> names;
        for (int64_t k : combo) {
            names.push_back(vocab.tags[static_cast<size_t>(k)].name);
        }
        ex.caption = caption_for_tags(names);

        // Frame count jittered around the manifest fixed length.
        int64_t frames = spec.frames;
        if (spec.frame_jitter > 0.0) {
            const int64_t lo = std::max<int64_t>(
                1, static_cast<int64_t>(
                       std::llround(spec.frames * (1.0 - spec.frame_jitter))));
            const int64_t hi = std::max(
                lo, static_cast<int64_t>(
                        std::llround(spec.frames * (1.0 + spec.frame_jitter))));
            frames = lo + static_cast<int64_t>(
                              combo_rng.next_below(static_cast<uint64_t>(
                                  hi - lo + 1)));
        }

        std::vector<double> mix(static_cast<size_t>(spec.feature_dim), 0.0);
        for (int64_t k : combo) {
            for (int64_t d = 0; d < spec.feature_dim; ++d) {
                mix[static_cast<size_t>(d)] += signatures.at(k, d);
            }
        }
        for (double& v : mix) {
            v = v / static_cast<double>(combo.size()) * spec.signature_scale;
        }
        ex.features = Tensor::zeros({frames, spec.feature_dim});
        for (int64_t t = 0; t < frames; ++t) {
            double* row = ex.features.row(t);
            for (int64_t d = 0; d < spec.feature_dim; ++d) {
                row[d] = mix[static_cast<size_t>(d)] +
                         spec.noise_sigma * noise_rng.next_gaussian();
            }
        }
        return ex;
    };

    // Train split: dealt from the profile deck.
    {
        std::vector<int64_t> counts = group_counts(spec.train_examples);
        std::vector<std::vector<int64_t>> combos;
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            auto profile = tag_profile(groups[gi].size(), spec.imbalance_ratio);
            auto dealt = deal_combos(groups[gi], counts[gi], profile,
                                     spec.tag_set_size_weights, combo_rng);
            combos.insert(combos.end(), dealt.begin(), dealt.end());
        }
        combo_rng.shuffle(combos);
        for (size_t i = 0; i < combos.size(); ++i) {
            char id[32];
            std::snprintf(id, sizeof(id), "train-%05zu", i);
            corpus.train.push_back(make_example(combos[i], id));
        }
    }

    // Eval split: either pinned to a combo catalogue or dealt like train.
    std::vector<std::vector<int64_t>> eval_combos;
    if (spec.eval_prompts > 0) {
        std::vector<std::vector<int64_t>> catalogue;
        std::set<std::vector<int64_t>> seen;
        for (int64_t k = 0; k < m; ++k) {
            catalogue.push_back({k});
            seen.insert({k});
        }
        // Extra combos of size >= 2 drawn within kind groups.
        std::vector<double> big_sizes(spec.tag_set_size_weights.begin(),
                                      spec.tag_set_size_weights.end());
        if (big_sizes.size() < 2) {
            if (static_cast<int64_t>(catalogue.size()) < spec.eval_prompts) {
                throw ConfigError(
                    "planted spec: eval_prompts needs multi-tag size weights");
            }
        } else {
            big_sizes[0] = 0.0;  // sizes >= 2 only
        }
        auto cumulative_sizes = cumulative_weights(big_sizes);
        size_t group_cursor = 0;
        int64_t attempts = 0;
        while (static_cast<int64_t>(catalogue.size()) < spec.eval_prompts) {
            if (++attempts > 100000) {
                throw ConfigError(
                    "planted spec: cannot realize eval_prompts distinct combos");
            }
            const auto& group = groups[group_cursor];
            group_cursor = (group_cursor + 1) % groups.size();
            const int64_t size = std::min<int64_t>(
                static_cast<int64_t>(combo_rng.next_weighted(cumulative_sizes)) +
                    1,
                static_cast<int64_t>(group.size()));
            if (size < 2) {
                continue;
            }
            auto profile = tag_profile(group.size(), spec.imbalance_ratio);
            auto cum = cumulative_weights(profile);
            std::vector<int64_t> combo;
            while (static_cast<int64_t>(combo.size()) < size) {
                int64_t k = group[combo_rng.next_weighted(cum)];
                if (std::find(combo.begin(), combo.end(), k) == combo.end()) {
                    combo.push_back(k);
                }
            }
            std::sort(combo.begin(), combo.end());
            if (seen.insert(combo).second) {
                catalogue.push_back(std::move(combo));
            }
        }
        for (int64_t i = 0; i < spec.eval_examples; ++i) {
            eval_combos.push_back(
                catalogue[static_cast<size_t>(i) % catalogue.size()]);
        }
    } else {
        std::vector<int64_t> counts = group_counts(spec.eval_examples);
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            auto profile = tag_profile(groups[gi].size(), spec.imbalance_ratio);
            auto dealt = deal_combos(groups[gi], counts[gi], profile,
                                     spec.tag_set_size_weights, combo_rng);
            eval_combos.insert(eval_combos.end(), dealt.begin(), dealt.end());
        }
    }
    for (size_t i = 0; i < eval_combos.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "eval-%05zu", i);
        corpus.eval.push_back(make_example(eval_combos[i], id));
    }

    // One prompt per distinct eval combo, in lexicographic multi-hot order.
    std::map<std::vector<uint8_t>, int64_t> prompt_index;
    for (const auto& combo : eval_combos) {
        prompt_index.emplace(multi_hot(combo, m), 0);
    }
    int64_t next_prompt = 0;
    for (auto& [hot, idx] : prompt_index) {
        idx = next_prompt++;
        EvalPrompt prompt;
        prompt.tags = hot;
        std::vector<std::string> names;
        for (int64_t k = 0; k < m; ++k) {
            if (hot[static_cast<size_t>(k)]) {
                names.push_back(vocab.tags[static_cast<size_t>(k)].name);
            }
        }
        prompt.caption = caption_for_tags(names);
        corpus.prompts.push_back(std::move(prompt));
    }
    for (const auto& ex : corpus.eval) {
        corpus.eval_truth.push_back(prompt_index.at(ex.tags));
    }

    // Paraphrase bank: one caption per template per tag.
    corpus.bank.captions_by_tag.resize(static_cast<size_t>(m));
    for (int64_t k = 0; k < m; ++k) {
        for (const auto& tmpl : paraphrase_templates()) {
            std::string caption = tmpl;
            const auto pos = caption.find("{}");
            caption.replace(pos, 2, vocab.tags[static_cast<size_t>(k)].name);
            corpus.bank.captions_by_tag[static_cast<size_t>(k)].push_back(
                std::move(caption));
        }
    }

    // Vocabulary over every text surface this corpus can be asked to encode.
    std::vector<std::string> texts;
    for (const auto& ex : corpus.train) {
        texts.push_back(ex.caption);
    }
    for (const auto& ex : corpus.eval) {
        texts.push_back(ex.caption);
    }
    for (const auto& prompt : corpus.prompts) {
        texts.push_back(prompt.caption);
    }
    for (const auto& captions : corpus.bank.captions_by_tag) {
        for (const auto& caption : captions) {
            texts.push_back(caption);
        }
    }
    for (const auto& entry : vocab.tags) {
        texts.push_back(zero_shot_prompt(entry.name));
    }
    corpus.manifest.tokenizer = Tokenizer::build(texts);

    const Tokenizer& tok = corpus.manifest.tokenizer;
    for (auto& ex : corpus.train) {
        ex.caption_tokens = tok.encode(ex.caption);
    }
    for (auto& ex : corpus.eval) {
        ex.caption_tokens = tok.encode(ex.caption);
    }
    for (auto& prompt : corpus.prompts) {
        prompt.caption_tokens = tok.encode(prompt.caption);
    }
    corpus.bank.tokens_by_tag.resize(static_cast<size_t>(m));
    for (int64_t k = 0; k < m; ++k) {
        for (const auto& caption :
             corpus.bank.captions_by_tag[static_cast<size_t>(k)]) {
            corpus.bank.tokens_by_tag[static_cast<size_t>(k)].push_back(
                tok.encode(caption));
        }
    }

    corpus.manifest.generator_echo = planted_spec_to_json(spec).dump();
    return corpus;
}

void write_feature_file(const std::filesystem::path& path,
                        const std::vector<Tensor>& clips) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("feature file: cannot open for writing: " + path.string());
    }
    BinHeader header;
    header.count = clips.size();
    header.feature_dim = clips.empty() ? 0
                                       : static_cast<uint64_t>(clips[0].dim(1));
    out.write(BinHeader::kMagic, sizeof(BinHeader::kMagic));
    const uint64_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&header.count), sizeof(header.count));
    out.write(reinterpret_cast<const char*>(&header.feature_dim),
              sizeof(header.feature_dim));
    for (const Tensor& clip : clips) {
        if (clip.rank() != 2 ||
            static_cast<uint64_t>(clip.dim(1)) != header.feature_dim) {
            throw ShapeError("feature file: inconsistent clip shapes");
        }
        const uint64_t frames = static_cast<uint64_t>(clip.dim(0));
        out.write(reinterpret_cast<const char*>(&frames), sizeof(frames));
    }
    for (const Tensor& clip : clips) {
        out.write(reinterpret_cast<const char*>(clip.data()),
                  static_cast<std::streamsize>(clip.size() * sizeof(double)));
    }
    if (!out) {
        throw IoError("feature file: write failed: " + path.string());
    }
}

std::vector<Tensor> read_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("feature file: missing: " + path.string());
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, BinHeader::kMagic, sizeof(magic)) != 0) {
        throw ConfigError("feature file: bad magic in " + path.string());
    }
    uint64_t version = 0, count = 0, feature_dim = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    in.read(reinterpret_cast<char*>(&feature_dim), sizeof(feature_dim));
    if (!in || version != 1) {
        throw ConfigError("feature file: unsupported version in " +
                          path.string());
    }
    std::vector<uint64_t> frames(count);
    for (uint64_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(&frames[i]), sizeof(uint64_t));
    }
    std::vector<Tensor> clips;
    clips.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        Tensor clip = Tensor::zeros({static_cast<int64_t>(frames[i]),
                                     static_cast<int64_t>(feature_dim)});
        in.read(reinterpret_cast<char*>(clip.data()),
                static_cast<std::streamsize>(clip.size() * sizeof(double)));
        clips.push_back(std::move(clip));
    }
    if (!in) {
        throw ConfigError("feature file: truncated: " + path.string());
    }
    return clips;
}

namespace {

ordered_json example_record(const TrainingExample& ex, const char* split,
                            const char* file, int64_t index,
                            const TagVocabulary& vocab) {
    ordered_json rec;
    rec["type"] = "example";
    rec["id"] = ex.example_id;
    rec["split"] = split;
    rec["caption"] = ex.caption;
    std::vector<std::string> names;
    for (size_t k = 0; k < ex.tags.size(); ++k) {
        if (ex.tags[k]) {
            names.push_back(vocab.tags[k].name);
        }
    }
    rec["tags"] = names;
    rec["frames"] = ex.features.dim(0);
    rec["file"] = file;
    rec["index"] = index;
    return rec;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "manifest.jsonl");
        if (!out) {
            throw IoError("corpus: cannot write manifest in " + dir.string());
        }
        ordered_json header;
        header["type"] = "header";
        header["schema_version"] = corpus.manifest.schema_version;
        header["kind"] = corpus_kind_name(corpus.manifest.kind);
        header["feature_dim"] = corpus.manifest.feature_dim;
        header["fixed_length"] = corpus.manifest.fixed_length;
        ordered_json tags = ordered_json::array();
        for (const auto& entry : corpus.manifest.vocabulary.tags) {
            tags.push_back({{"name", entry.name},
                            {"kind", tag_kind_name(entry.kind)}});
        }
        header["tags"] = tags;
        header["tokens"] = corpus.manifest.tokenizer.tokens;
        if (!corpus.manifest.signatures.empty()) {
            ordered_json sig = ordered_json::array();
            const Tensor& s = corpus.manifest.signatures;
            for (int64_t k = 0; k < s.dim(0); ++k) {
                sig.push_back(std::vector<double>(
                    s.row(k), s.row(k) + s.dim(1)));
            }
            header["signatures"] = sig;
        }
        if (!corpus.manifest.generator_echo.empty()) {
            header["generator"] =
                ordered_json::parse(corpus.manifest.generator_echo);
        }
        out << header.dump() << "\n";
        for (size_t i = 0; i < corpus.train.size(); ++i) {
            out << example_record(corpus.train[i], "train", "train.features.bin",
                                  static_cast<int64_t>(i),
                                  corpus.manifest.vocabulary)
                       .dump()
                << "\n";
        }
        for (size_t i = 0; i < corpus.eval.size(); ++i) {
            out << example_record(corpus.eval[i], "eval", "eval.features.bin",
                                  static_cast<int64_t>(i),
                                  corpus.manifest.vocabulary)
                       .dump()
                << "\n";
        }
        if (!out) {
            throw IoError("corpus: manifest write failed");
        }
    }
    {
        std::vector<Tensor> clips;
        for (const auto& ex : corpus.train) {
            clips.push_back(ex.features);
        }
        write_feature_file(dir / "train.features.bin", clips);
    }
    {
        std::vector<Tensor> clips;
        for (const auto& ex : corpus.eval) {
            clips.push_back(ex.features);
        }
        write_feature_file(dir / "eval.features.bin", clips);
    }
    {
        std::ofstream out(dir / "prompts.jsonl");
        if (!out) {
            throw IoError("corpus: cannot write prompts.jsonl");
        }
        for (const auto& prompt : corpus.prompts) {
            ordered_json rec;
            rec["caption"] = prompt.caption;
            std::vector<std::string> names;
            for (size_t k = 0; k < prompt.tags.size(); ++k) {
                if (prompt.tags[k]) {
                    names.push_back(corpus.manifest.vocabulary.tags[k].name);
                }
            }
            rec["tags"] = names;
            out << rec.dump() << "\n";
        }
    }
    {
        std::ofstream out(dir / "paraphrases.json");
        if (!out) {
            throw IoError("corpus: cannot write paraphrases.json");
        }
        ordered_json bank;
        bank["schema_version"] = 1;
        ordered_json captions;
        for (size_t k = 0; k < corpus.bank.captions_by_tag.size(); ++k) {
            captions[corpus.manifest.vocabulary.tags[k].name] =
                corpus.bank.captions_by_tag[k];
        }
        bank["captions"] = captions;
        out << bank.dump(2) << "\n";
    }
}

namespace {

std::vector<uint8_t> tags_from_names(const ordered_json& names,
                                     const TagVocabulary& vocab,
                                     const std::string& context) {
    std::vector<uint8_t> hot(static_cast<size_t>(vocab.count()), 0);
    for (const auto& name : names) {
        auto idx = vocab.index_of(name.get<std::string>());
        if (!idx) {
            throw ConfigError("corpus: unknown tag '" +
                              name.get<std::string>() + "' in " + context);
        }
        hot[static_cast<size_t>(*idx)] = 1;
    }
    return hot;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& dir) {
    std::ifstream manifest_in(dir / "manifest.jsonl");
    if (!manifest_in) {
        throw ConfigError("corpus: manifest.jsonl not found in " + dir.string());
    }
    std::string line;
    if (!std::getline(manifest_in, line)) {
        throw ConfigError("corpus: manifest.jsonl is empty");
    }
    ordered_json header;
    try {
        header = ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("corpus: manifest header parse error: ") +
                          e.what());
    }
    if (header.value("type", "") != "header") {
        throw ConfigError("corpus: first manifest record is not a header");
    }

    Corpus corpus;
    corpus.manifest.schema_version = header.at("schema_version").get<int64_t>();
    if (corpus.manifest.schema_version != 1) {
        throw ConfigError("corpus: unsupported manifest schema version");
    }
    corpus.manifest.kind =
        parse_corpus_kind(header.at("kind").get<std::string>());
    corpus.manifest.feature_dim = header.at("feature_dim").get<int64_t>();
    corpus.manifest.fixed_length = header.at("fixed_length").get<int64_t>();
    for (const auto& tag : header.at("tags")) {
        TagVocabulary::Entry entry;
        entry.name = tag.at("name").get<std::string>();
        entry.kind = parse_tag_kind(tag.at("kind").get<std::string>());
        if (corpus.manifest.vocabulary.index_of(entry.name)) {
            throw ConfigError("corpus: duplicate tag name '" + entry.name + "'");
        }
        corpus.manifest.vocabulary.tags.push_back(std::move(entry));
    }
    if (corpus.manifest.vocabulary.tags.empty()) {
        throw ConfigError("corpus: empty tag vocabulary");
    }
    corpus.manifest.tokenizer =
        Tokenizer::from_tokens(header.at("tokens").get<std::vector<std::string>>());
    if (header.contains("signatures")) {
        const auto& sig = header.at("signatures");
        const int64_t m = static_cast<int64_t>(sig.size());
        corpus.manifest.signatures =
            Tensor::zeros({m, corpus.manifest.feature_dim});
        for (int64_t k = 0; k < m; ++k) {
            const auto row = sig[static_cast<size_t>(k)].get<std::vector<double>>();
            if (static_cast<int64_t>(row.size()) != corpus.manifest.feature_dim) {
                throw ConfigError("corpus: signature width mismatch");
            }
            std::copy(row.begin(), row.end(),
                      corpus.manifest.signatures.row(k));
        }
    }
    if (header.contains("generator")) {
        corpus.manifest.generator_echo = header.at("generator").dump();
    }

    auto train_clips = read_feature_file(dir / "train.features.bin");
    auto eval_clips = read_feature_file(dir / "eval.features.bin");

    const Tokenizer& tok = corpus.manifest.tokenizer;
    int64_t train_cursor = 0;
    int64_t eval_cursor = 0;
    while (std::getline(manifest_in, line)) {
        if (line.empty()) {
            continue;
        }
        ordered_json rec;
        try {
            rec = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("corpus: manifest record parse error: ") +
                              e.what());
        }
        if (rec.value("type", "") != "example") {
            throw ConfigError("corpus: unexpected manifest record type");
        }
        TrainingExample ex;
        ex.example_id = rec.at("id").get<std::string>();
        ex.caption = rec.at("caption").get<std::string>();
        if (ex.caption.empty()) {
            throw ConfigError("corpus: empty caption in " + ex.example_id);
        }
        ex.tags = tags_from_names(rec.at("tags"), corpus.manifest.vocabulary,
                                  ex.example_id);
        if (std::count(ex.tags.begin(), ex.tags.end(), 1) == 0) {
            throw ConfigError("corpus: example " + ex.example_id +
                              " has no active tags");
        }
        try {
            ex.caption_tokens = tok.encode(ex.caption);
        } catch (const VocabularyError& e) {
            throw VocabularyError(std::string(e.what()) + " (example " +
                                  ex.example_id + ")");
        }
        const std::string split = rec.at("split").get<std::string>();
        const int64_t index = rec.at("index").get<int64_t>();
        const int64_t frames = rec.at("frames").get<int64_t>();
        std::vector<Tensor>* clips = nullptr;
        int64_t* cursor = nullptr;
        if (split == "train") {
            clips = &train_clips;
            cursor = &train_cursor;
        } else if (split == "eval") {
            clips = &eval_clips;
            cursor = &eval_cursor;
        } else {
            throw ConfigError("corpus: unknown split '" + split + "' in " +
                              ex.example_id);
        }
        if (index != *cursor) {
            throw ConfigError("corpus: out-of-order feature index for " +
                              ex.example_id);
        }
        if (index >= static_cast<int64_t>(clips->size())) {
            throw ConfigError("corpus: missing feature blob for " +
                              ex.example_id);
        }
        ex.features = std::move((*clips)[static_cast<size_t>(index)]);
        ++*cursor;
        if (ex.features.dim(0) != frames) {
            throw ConfigError("corpus: frame count mismatch for " +
                              ex.example_id);
        }
        if (ex.features.dim(1) != corpus.manifest.feature_dim) {
            throw ConfigError("corpus: feature_dim mismatch for " +
                              ex.example_id);
        }
        if (frames < 1) {
            throw ConfigError("corpus: example " + ex.example_id +
                              " has no frames");
        }
        (split == "train" ? corpus.train : corpus.eval).push_back(std::move(ex));
    }
    if (train_cursor != static_cast<int64_t>(train_clips.size()) ||
        eval_cursor != static_cast<int64_t>(eval_clips.size())) {
        throw ConfigError("corpus: feature blobs without manifest records");
    }
    if (corpus.train.empty()) {
        throw ConfigError("corpus: train split is empty");
    }
    if (corpus.eval.empty()) {
        throw ConfigError("corpus: eval split is empty");
    }

    // Prompts and the eval truth mapping (matched by tag set).
    std::ifstream prompts_in(dir / "prompts.jsonl");
    if (!prompts_in) {
        throw ConfigError("corpus: prompts.jsonl not found in " + dir.string());
    }
    std::map<std::vector<uint8_t>, int64_t> prompt_index;
    while (std::getline(prompts_in, line)) {
        if (line.empty()) {
            continue;
        }
        ordered_json rec = ordered_json::parse(line);
        EvalPrompt prompt;
        prompt.caption = rec.at("caption").get<std::string>();
        prompt.tags = tags_from_names(rec.at("tags"), corpus.manifest.vocabulary,
                                      "prompt '" + prompt.caption + "'");
        prompt.caption_tokens = tok.encode(prompt.caption);
        auto [it, inserted] = prompt_index.emplace(
            prompt.tags, static_cast<int64_t>(corpus.prompts.size()));
        if (!inserted) {
            throw ConfigError("corpus: duplicate prompt tag set for '" +
                              prompt.caption + "'");
        }
        corpus.prompts.push_back(std::move(prompt));
    }
    if (corpus.prompts.empty()) {
        throw ConfigError("corpus: prompt list is empty");
    }
    for (const auto& ex : corpus.eval) {
        auto it = prompt_index.find(ex.tags);
        if (it == prompt_index.end()) {
            throw ConfigError("corpus: eval example " + ex.example_id +
                              " has no matching prompt");
        }
        corpus.eval_truth.push_back(it->second);
    }

    // Paraphrase bank.
    std::ifstream bank_in(dir / "paraphrases.json");
    if (!bank_in) {
        throw ConfigError("corpus: paraphrases.json not found in " +
                          dir.string());
    }
    ordered_json bank_json;
    try {
        bank_in >> bank_json;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("corpus: paraphrases parse error: ") +
                          e.what());
    }
    const auto& captions = bank_json.at("captions");
    corpus.bank.captions_by_tag.resize(corpus.manifest.vocabulary.tags.size());
    corpus.bank.tokens_by_tag.resize(corpus.manifest.vocabulary.tags.size());
    for (size_t k = 0; k < corpus.manifest.vocabulary.tags.size(); ++k) {
        const std::string& name = corpus.manifest.vocabulary.tags[k].name;
        if (!captions.contains(name) || captions.at(name).empty()) {
            throw ConfigError("corpus: paraphrase bank has no captions for tag '" +
                              name + "'");
        }
        for (const auto& caption : captions.at(name)) {
            corpus.bank.captions_by_tag[k].push_back(caption.get<std::string>());
            corpus.bank.tokens_by_tag[k].push_back(
                tok.encode(caption.get<std::string>()));
        }
    }
    return corpus;
}

std::pair<Tensor, std::vector<uint8_t>> fit_length(const Tensor& features,
                                                   int64_t target, Rng& rng) {
    require_rank(features, 2, "fit_length");
    const int64_t frames = features.dim(0);
    const int64_t dim = features.dim(1);
    if (frames < 1 || target < 1) {
        throw ContractError("fit_length: frames and target must be >= 1");
    }
    Tensor out = Tensor::zeros({target, dim});
    std::vector<uint8_t> mask(static_cast<size_t>(target), 1);
    if (frames >= target) {
        const int64_t start =
            frames == target
                ? 0
                : static_cast<int64_t>(rng.next_below(
                      static_cast<uint64_t>(frames - target + 1)));
        for (int64_t t = 0; t < target; ++t) {
            std::copy(features.row(start + t), features.row(start + t) + dim,
                      out.row(t));
        }
    } else {
        for (int64_t t = 0; t < frames; ++t) {
            std::copy(features.row(t), features.row(t) + dim, out.row(t));
        }
        for (int64_t t = frames; t < target; ++t) {
            mask[static_cast<size_t>(t)] = 0;
        }
    }
    return {std::move(out), std::move(mask)};
}

std::vector<double> class_balanced_weights(
    const std::vector<TrainingExample>& examples, const TagVocabulary& vocab) {
    const size_t m = static_cast<size_t>(vocab.count());
    std::vector<int64_t> counts(m, 0);
    for (const auto& ex : examples) {
        bool any = false;
        for (size_t k = 0; k < m; ++k) {
            if (ex.tags[k]) {
                ++counts[k];
                any = true;
            }
        }
        if (!any) {
            throw ConfigError("class_balanced_weights: example " +
                              ex.example_id + " has no active tags");
        }
    }
    for (size_t k = 0; k < m; ++k) {
        if (counts[k] == 0) {
            throw ConfigError("class_balanced_weights: tag '" +
                              vocab.tags[k].name + "' has no examples");
        }
    }
    const double n = static_cast<double>(examples.size());
    std::vector<double> weights(examples.size(), 0.0);
    double total = 0.0;
    for (size_t i = 0; i < examples.size(); ++i) {
        double acc = 0.0;
        int64_t active = 0;
        for (size_t k = 0; k < m; ++k) {
            if (examples[i].tags[k]) {
                acc += n / static_cast<double>(counts[k]);  // 1 / f_k
                ++active;
            }
        }
        weights[i] = acc / static_cast<double>(active);
        total += weights[i];
    }
    for (double& w : weights) {
        w /= total;
    }
    return weights;
}

bool example_is_situational(const TrainingExample& example,
                            const TagVocabulary& vocab) {
    for (size_t k = 0; k < example.tags.size(); ++k) {
        if (example.tags[k] &&
            vocab.tags[k].kind == TagKind::kSituational) {
            return true;
        }
    }
    return false;
}

BalancedStream::BalancedStream(std::vector<size_t> first_side,
                               std::vector<size_t> second_side)
    : first_(std::move(first_side)), second_(std::move(second_side)) {
    if (first_.empty() || second_.empty()) {
        throw ConfigError("upsample_balance: both sides must be nonempty");
    }
}

size_t BalancedStream::next(Rng& rng) const {
    const bool second = rng.next_below(2) == 1;
    const auto& side = second ? second_ : first_;
    return side[static_cast<size_t>(rng.next_below(side.size()))];
}

}  // namespace stylealign
