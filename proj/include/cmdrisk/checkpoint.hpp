#pragma once

#include <string>
#include <vector>

#include "cmdrisk/model.hpp"

namespace cmdrisk::model {

// Checkpoint = JSON manifest (config + per-tensor name/shape/offset/checksum)
// next to a flat little-endian float32 blob at <path>.bin.
//
// `skip` drops tensors by exact name (used to export a backbone without the
// task heads).
template <typename T>
void save_checkpoint(const std::string& manifest_path, const Params<T>& params,
                     const Config& config, const std::vector<std::string>& skip = {});

inline const std::vector<std::string>& head_tensor_names() {
    static const std::vector<std::string> names = {"mlm_bias", "nsp_w", "nsp_b", "cls_w", "cls_b"};
    return names;
}

struct CheckpointInfo {
    Config config;
    std::vector<std::string> tensor_names;
};

CheckpointInfo read_checkpoint_info(const std::string& manifest_path);

// Loads tensors by name into `params` (already shaped for `config`).
// Tensors absent from the checkpoint keep their current values; checksum or
// shape mismatches throw. Returns the names actually loaded.
template <typename T>
std::vector<std::string> load_checkpoint(const std::string& manifest_path, Params<T>& params);

// Convenience: reads config from the manifest, initializes fresh parameters
// with `seed` and overlays every stored tensor.
template <typename T>
Params<T> load_params(const std::string& manifest_path, Config& config_out, uint64_t seed = 0);

}  // namespace cmdrisk::model
