#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "cmdrisk/checkpoint.hpp"
#include "cmdrisk/error.hpp"

using namespace cmdrisk;
using namespace cmdrisk::model;
namespace fs = std::filesystem;

namespace {

Config small_config() {
    Config c;
    c.hidden_size = 16;
    c.attention_heads = 2;
    c.hidden_layers = 2;
    c.intermediate_size = 32;
    c.vocab_size = 100;
    c.max_len = 16;
    return c;
}

std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round-trip restores every tensor bit-exactly") {
    Config cfg = small_config();
    auto params = init_params<float>(cfg, 5);
    std::string path = temp_path("cmdrisk_ckpt_test.json");
    save_checkpoint(path, params, cfg);

    Config loaded_cfg;
    auto loaded = load_params<float>(path, loaded_cfg, 99);
    CHECK(loaded_cfg.hidden_size == cfg.hidden_size);
    CHECK(loaded_cfg.vocab_size == cfg.vocab_size);

    auto a = params.tensor_refs();
    auto b = loaded.tensor_refs();
    for (size_t k = 0; k < a.size(); ++k)
        for (size_t i = 0; i < a[k].size(); ++i) CHECK(a[k].data[i] == b[k].data[i]);

    fs::remove(path);
    fs::remove(path + ".bin");
}

TEST_CASE("backbone export drops the task heads") {
    Config cfg = small_config();
    auto params = init_params<float>(cfg, 6);
    std::string path = temp_path("cmdrisk_ckpt_backbone.json");
    save_checkpoint(path, params, cfg, head_tensor_names());

    CheckpointInfo info = read_checkpoint_info(path);
    for (const std::string& head : head_tensor_names())
        for (const std::string& name : info.tensor_names) CHECK(name != head);
    bool has_backbone = false;
    for (const std::string& name : info.tensor_names)
        if (name == "layer1.ff2") has_backbone = true;
    CHECK(has_backbone);

    // Loading a backbone leaves head tensors at their fresh-init values.
    auto target = init_params<float>(cfg, 123);
    auto head_before = target.cls_w.v;
    auto loaded_names = load_checkpoint(path, target);
    CHECK(loaded_names.size() == info.tensor_names.size());
    CHECK(target.cls_w.v == head_before);
    CHECK(target.tok_emb.v == params.tok_emb.v);

    fs::remove(path);
    fs::remove(path + ".bin");
}

TEST_CASE("corrupted blobs fail their checksum") {
    Config cfg = small_config();
    auto params = init_params<float>(cfg, 7);
    std::string path = temp_path("cmdrisk_ckpt_corrupt.json");
    save_checkpoint(path, params, cfg);

    {
        std::fstream blob(path + ".bin", std::ios::in | std::ios::out | std::ios::binary);
        blob.seekp(64);
        char junk = 0x5a;
        blob.write(&junk, 1);
    }
    auto target = init_params<float>(cfg, 8);
    CHECK_THROWS_AS(load_checkpoint(path, target), ParseError);

    fs::remove(path);
    fs::remove(path + ".bin");
}

TEST_CASE("shape mismatches are rejected") {
    Config cfg = small_config();
    auto params = init_params<float>(cfg, 9);
    std::string path = temp_path("cmdrisk_ckpt_shape.json");
    save_checkpoint(path, params, cfg);

    Config other = cfg;
    other.hidden_size = 32;
    other.intermediate_size = 64;
    auto target = init_params<float>(other, 9);
    CHECK_THROWS_AS(load_checkpoint(path, target), ParseError);

    fs::remove(path);
    fs::remove(path + ".bin");
}
