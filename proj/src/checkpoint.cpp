// Checkpoint container: an 8-byte magic, a version, a JSON header with the
// config echo plus RNG states, then raw little-endian tensor blocks so
// parameter round trips are bit-exact.

#include <bit>
#include <cstring>
#include <fstream>

#include "stylealign/errors.hpp"
#include "stylealign/trainer.hpp"

namespace stylealign {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'S', 'A', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint64_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian");

void write_tensor(std::ofstream& out, const std::string& name,
                  const Tensor& t) {
    const uint32_t name_len = static_cast<uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
    out.write(name.data(), name_len);
    const uint32_t rank = static_cast<uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int64_t d = 0; d < t.rank(); ++d) {
        const uint64_t dim = static_cast<uint64_t>(t.dim(d));
        out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::pair<std::string, Tensor> read_tensor(std::ifstream& in,
                                           const std::string& path) {
    uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    if (!in || rank > 2) {
        throw IoError("checkpoint: corrupt tensor record in " + path);
    }
    std::vector<int64_t> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) {
        uint64_t dim = 0;
        in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
        shape[d] = static_cast<int64_t>(dim);
    }
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) {
        throw IoError("checkpoint: truncated tensor data in " + path);
    }
    return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("checkpoint: cannot open for writing: " + path.string());
    }

    ordered_json header;
    header["schema_version"] = 1;
    header["train_config"] = train_config_to_json(ckpt.config);
    ordered_json enc;
    const EncoderConfig& ec = ckpt.params.config;
    enc["feature_dim"] = ec.feature_dim;
    enc["backbone_dim"] = ec.backbone_dim;
    enc["hidden_dim"] = ec.hidden_dim;
    enc["embed_dim"] = ec.embed_dim;
    enc["vocab_size"] = ec.vocab_size;
    enc["cls_token_id"] = ec.cls_token_id;
    enc["speech_context_mixing"] = ec.speech_context_mixing;
    enc["ln_eps"] = ec.ln_eps;
    header["encoder_config"] = enc;
    ordered_json tags = ordered_json::array();
    for (const auto& entry : ckpt.vocabulary.tags) {
        tags.push_back({{"name", entry.name}, {"kind", tag_kind_name(entry.kind)}});
    }
    header["tags"] = tags;
    header["tokens"] = ckpt.tokenizer.tokens;
    header["step"] = ckpt.step;
    header["adam_step"] = ckpt.adam_step;
    header["rng"] = {{"batch", ckpt.rng_batch},
                     {"fit", ckpt.rng_fit},
                     {"captions", ckpt.rng_captions}};
    const std::string header_text = header.dump();

    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    const uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(),
              static_cast<std::streamsize>(header_text.size()));

    Checkpoint& mutable_ckpt = const_cast<Checkpoint&>(ckpt);
    auto registry = mutable_ckpt.params.param_registry();
    const uint64_t tensor_count = registry.size() * 3;
    out.write(reinterpret_cast<const char*>(&tensor_count),
              sizeof(tensor_count));
    if (ckpt.adam_m.size() != registry.size() ||
        ckpt.adam_v.size() != registry.size()) {
        throw ContractError("checkpoint: optimizer moments do not match registry");
    }
    for (size_t i = 0; i < registry.size(); ++i) {
        write_tensor(out, registry[i].first, *registry[i].second);
    }
    for (size_t i = 0; i < registry.size(); ++i) {
        write_tensor(out, "adam.m." + registry[i].first, ckpt.adam_m[i]);
    }
    for (size_t i = 0; i < registry.size(); ++i) {
        write_tensor(out, "adam.v." + registry[i].first, ckpt.adam_v[i]);
    }
    if (!out) {
        throw IoError("checkpoint: write failed: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("checkpoint: cannot open " + path.string());
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw IoError("checkpoint: bad magic bytes in " + path.string());
    }
    uint64_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kVersion) {
        throw IoError("checkpoint: unsupported version in " + path.string());
    }
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw IoError("checkpoint: truncated header in " + path.string());
    }
    ordered_json header;
    try {
        header = ordered_json::parse(header_text);
    } catch (const std::exception& e) {
        throw IoError("checkpoint: header parse error: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.config = train_config_from_json(header.at("train_config"));
    const auto& enc = header.at("encoder_config");
    EncoderConfig ec;
    ec.feature_dim = enc.at("feature_dim").get<int64_t>();
    ec.backbone_dim = enc.at("backbone_dim").get<int64_t>();
    ec.hidden_dim = enc.at("hidden_dim").get<int64_t>();
    ec.embed_dim = enc.at("embed_dim").get<int64_t>();
    ec.vocab_size = enc.at("vocab_size").get<int64_t>();
    ec.cls_token_id = enc.at("cls_token_id").get<int64_t>();
    ec.speech_context_mixing = enc.at("speech_context_mixing").get<bool>();
    ec.ln_eps = enc.at("ln_eps").get<double>();
    for (const auto& tag : header.at("tags")) {
        TagVocabulary::Entry entry;
        entry.name = tag.at("name").get<std::string>();
        entry.kind = parse_tag_kind(tag.at("kind").get<std::string>());
        ckpt.vocabulary.tags.push_back(std::move(entry));
    }
    ckpt.tokenizer = Tokenizer::from_tokens(
        header.at("tokens").get<std::vector<std::string>>());
    ckpt.step = header.at("step").get<int64_t>();
    ckpt.adam_step = header.at("adam_step").get<int64_t>();
    ckpt.rng_batch = header.at("rng").at("batch").get<std::string>();
    ckpt.rng_fit = header.at("rng").at("fit").get<std::string>();
    ckpt.rng_captions = header.at("rng").at("captions").get<std::string>();

    // Zero-initialized parameters, then filled from the tensor blocks.
    Rng dummy(0);
    ckpt.params = ModelParams::init(ec, ckpt.config.tau_init, dummy);
    auto registry = ckpt.params.param_registry();
    ckpt.adam_m.resize(registry.size());
    ckpt.adam_v.resize(registry.size());

    uint64_t tensor_count = 0;
    in.read(reinterpret_cast<char*>(&tensor_count), sizeof(tensor_count));
    if (tensor_count != registry.size() * 3) {
        throw IoError("checkpoint: tensor count mismatch in " + path.string());
    }
    auto find_param = [&](const std::string& name) -> size_t {
        for (size_t i = 0; i < registry.size(); ++i) {
            if (registry[i].first == name) {
                return i;
            }
        }
        throw IoError("checkpoint: unexpected tensor '" + name + "'");
    };
    std::vector<bool> seen(registry.size() * 3, false);
    for (uint64_t t = 0; t < tensor_count; ++t) {
        auto [name, tensor] = read_tensor(in, path.string());
        size_t slot;
        Tensor* dest;
        if (name.rfind("adam.m.", 0) == 0) {
            slot = find_param(name.substr(7));
            dest = &ckpt.adam_m[slot];
            slot += registry.size();
        } else if (name.rfind("adam.v.", 0) == 0) {
            slot = find_param(name.substr(7));
            dest = &ckpt.adam_v[slot];
            slot += registry.size() * 2;
        } else {
            slot = find_param(name);
            dest = registry[slot].second;
        }
        if (!dest->same_shape(tensor) && dest->size() != 0) {
            throw IoError("checkpoint: shape mismatch for tensor '" + name + "'");
        }
        *dest = std::move(tensor);
        if (seen[slot]) {
            throw IoError("checkpoint: duplicate tensor '" + name + "'");
        }
        seen[slot] = true;
    }
    for (bool s : seen) {
        if (!s) {
            throw IoError("checkpoint: missing tensors in " + path.string());
        }
    }
    return ckpt;
}

}  // namespace stylealign
