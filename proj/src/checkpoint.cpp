#include "cmdrisk/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "cmdrisk/error.hpp"

namespace cmdrisk::model {

namespace {

using nlohmann::json;

json config_to_json(const Config& c) {
    return json{{"hidden_size", c.hidden_size},
                {"dropout_prob", c.dropout_prob},
                {"attention_heads", c.attention_heads},
                {"hidden_layers", c.hidden_layers},
                {"intermediate_size", c.intermediate_size},
                {"vocab_size", c.vocab_size},
                {"max_len", c.max_len},
                {"output_classes", c.output_classes},
                {"initializer_range", c.initializer_range}};
}

Config config_from_json(const json& j) {
    Config c;
    c.hidden_size = j.at("hidden_size").get<int>();
    c.dropout_prob = j.at("dropout_prob").get<double>();
    c.attention_heads = j.at("attention_heads").get<int>();
    c.hidden_layers = j.at("hidden_layers").get<int>();
    c.intermediate_size = j.at("intermediate_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.output_classes = j.at("output_classes").get<int>();
    c.initializer_range = j.at("initializer_range").get<double>();
    c.validate();
    return c;
}

char hex_char(uint64_t nibble) { return "0123456789abcdef"[nibble & 0xf]; }

std::string hash_hex(uint64_t h) {
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = hex_char(h);
        h >>= 4;
    }
    return s;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& manifest_path, const Params<T>& params,
                     const Config& config, const std::vector<std::string>& skip) {
    const std::string blob_path = manifest_path + ".bin";
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw ConfigError("cannot open '" + blob_path + "' for writing");

    json tensors = json::array();
    uint64_t offset = 0;
    std::vector<float> buf;
    for (const auto& ref : params.tensor_refs()) {
        if (std::find(skip.begin(), skip.end(), ref.name) != skip.end()) continue;
        buf.resize(ref.size());
        for (size_t i = 0; i < ref.size(); ++i) buf[i] = static_cast<float>(ref.data[i]);
        const size_t bytes = buf.size() * sizeof(float);
        blob.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(bytes));
        tensors.push_back(json{{"name", ref.name},
                               {"shape", {ref.rows, ref.cols}},
                               {"offset", offset},
                               {"bytes", bytes},
                               {"fnv1a", hash_hex(fnv1a(buf.data(), bytes))}});
        offset += bytes;
    }
    if (!blob) throw ConfigError("write to '" + blob_path + "' failed");
    blob.close();

    json manifest{{"format", "ckpt v1"},
                  {"dtype", "float32-le"},
                  {"config", config_to_json(config)},
                  {"tensors", tensors}};
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + manifest_path + "' for writing");
    out << manifest.dump(2) << "\n";
    if (!out) throw ConfigError("write to '" + manifest_path + "' failed");
}

CheckpointInfo read_checkpoint_info(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint manifest '" + manifest_path + "'");
    json manifest = json::parse(in, nullptr, true);
    if (manifest.value("format", "") != "ckpt v1")
        throw ParseError("'" + manifest_path + "' is not a ckpt v1 manifest");
    CheckpointInfo info;
    info.config = config_from_json(manifest.at("config"));
    for (const auto& t : manifest.at("tensors"))
        info.tensor_names.push_back(t.at("name").get<std::string>());
    return info;
}

template <typename T>
std::vector<std::string> load_checkpoint(const std::string& manifest_path, Params<T>& params) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint manifest '" + manifest_path + "'");
    json manifest = json::parse(in, nullptr, true);
    if (manifest.value("format", "") != "ckpt v1")
        throw ParseError("'" + manifest_path + "' is not a ckpt v1 manifest");

    const std::string blob_path = manifest_path + ".bin";
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw ConfigError("cannot open checkpoint blob '" + blob_path + "'");

    auto refs = params.tensor_refs();
    std::vector<std::string> loaded;
    std::vector<float> buf;
    for (const auto& t : manifest.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        auto it = std::find_if(refs.begin(), refs.end(),
                               [&](const auto& r) { return r.name == name; });
        if (it == refs.end()) throw ParseError("checkpoint tensor '" + name + "' is unknown");
        const auto shape = t.at("shape");
        if (shape.at(0).get<size_t>() != it->rows || shape.at(1).get<size_t>() != it->cols)
            throw ParseError("checkpoint tensor '" + name + "' shape mismatch");
        const uint64_t offset = t.at("offset").get<uint64_t>();
        const size_t bytes = t.at("bytes").get<size_t>();
        if (bytes != it->size() * sizeof(float))
            throw ParseError("checkpoint tensor '" + name + "' byte count mismatch");
        buf.resize(it->size());
        blob.seekg(static_cast<std::streamoff>(offset));
        blob.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
        if (!blob) throw ParseError("checkpoint blob truncated at tensor '" + name + "'");
        if (hash_hex(fnv1a(buf.data(), bytes)) != t.at("fnv1a").get<std::string>())
            throw ParseError("checkpoint tensor '" + name + "' failed its checksum");
        for (size_t i = 0; i < buf.size(); ++i) it->data[i] = static_cast<T>(buf[i]);
        loaded.push_back(name);
    }
    return loaded;
}

template <typename T>
Params<T> load_params(const std::string& manifest_path, Config& config_out, uint64_t seed) {
    CheckpointInfo info = read_checkpoint_info(manifest_path);
    config_out = info.config;
    Params<T> params = init_params<T>(info.config, seed);
    load_checkpoint(manifest_path, params);
    return params;
}

template void save_checkpoint<float>(const std::string&, const Params<float>&, const Config&,
                                     const std::vector<std::string>&);
template void save_checkpoint<double>(const std::string&, const Params<double>&, const Config&,
                                      const std::vector<std::string>&);
template std::vector<std::string> load_checkpoint<float>(const std::string&, Params<float>&);
template std::vector<std::string> load_checkpoint<double>(const std::string&, Params<double>&);
template Params<float> load_params<float>(const std::string&, Config&, uint64_t);
template Params<double> load_params<double>(const std::string&, Config&, uint64_t);

}  // namespace cmdrisk::model
