#pragma once

#include <string>

#include "cmdrisk/baselines.hpp"
#include "cmdrisk/model.hpp"
#include "cmdrisk/trainer.hpp"

namespace cmdrisk {

// Aggregate configuration behind the CLI. The key=value config file covers
// every architecture/training symbol with its production default; any key
// may be overridden.
struct AppConfig {
    model::Config model;          // H, p_d, n_A, n_h, h_i, V, L, C, sigma_init
    train::TrainConfig train;     // B, E, learning rate, mask rate, seed
    baselines::BaselineConfig baseline;  // c, S, alpha schedule, w2v epochs
    size_t bpe_target_size = 20000;
};

AppConfig default_app_config();

// Reduced profile for CPU-scale runs.
AppConfig desk_app_config();

// Parses `key = value` lines ('#' comments). Unknown keys are an error.
AppConfig parse_app_config(std::istream& in, AppConfig base);
AppConfig load_app_config(const std::string& path, AppConfig base);

void write_app_config(std::ostream& out, const AppConfig& cfg);

}  // namespace cmdrisk
