#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmdrisk/bpe.hpp"
#include "cmdrisk/dataset.hpp"
#include "cmdrisk/metrics.hpp"
#include "cmdrisk/model.hpp"
#include "cmdrisk/risk.hpp"

namespace cmdrisk::train {

struct PretrainExample {
    std::string command_a;
    std::string command_b;
    bool is_next = false;  // true when b directly follows a in the same script
};

struct TrainConfig {
    int batch_size = 128;
    int epochs = 16;
    double learning_rate = 3e-4;
    double mask_rate = 0.15;
    double negative_ratio = 0.5;
    uint64_t seed = 0;
    int threads = 1;
    int64_t max_steps = 0;  // 0: run the full epoch budget
};

// Adjacent command pairs from every script; with probability negative_ratio
// the successor is replaced by a command drawn from a different script.
std::vector<PretrainExample> annotate_corpus(const std::vector<std::vector<std::string>>& scripts,
                                             double negative_ratio, uint64_t seed);

// Selects ceil(mask_rate * real-token-count) non-special positions (always
// at least one); 80% become MASK, 10% a random ordinary token, 10% stay.
// Original ids are recorded as targets at the selected positions.
ModelInput apply_masking(const ModelInput& input, const bpe::Vocabulary& vocab, double mask_rate,
                         uint64_t seed);

struct StepRecord {
    int64_t step = 0;
    int epoch = 0;
    double mlm_loss = 0.0;
    double nsp_loss = 0.0;
    double cls_loss = 0.0;
    double total_loss = 0.0;
    double learning_rate = 0.0;
    uint64_t seed = 0;
};

using Telemetry = std::function<void(const StepRecord&)>;

// Appends one line-delimited JSON record per step.
Telemetry file_telemetry(const std::string& path);

struct PretrainResult {
    model::Config config;
    model::Params<float> params;  // full parameter set, heads included
    bool diverged = false;
    int64_t steps = 0;
    std::vector<double> loss_curve;  // total loss per step
};

// Two-task pretraining (masked LM + next-command) with Adam. On divergence
// stops and returns the parameters from before the failing update.
PretrainResult pretrain(const std::vector<std::vector<std::string>>& scripts,
                        const bpe::Vocabulary& vocab, const model::Config& mcfg,
                        const TrainConfig& tcfg, const Telemetry& telemetry = {});

// Writes the backbone only (task heads dropped) as a checkpoint.
void export_backbone(const std::string& manifest_path, const PretrainResult& result);

struct RiskClassifier {
    model::Config config;
    model::Params<float> params;
    bpe::Vocabulary vocab;
};

struct Prediction {
    RiskClass risk = RiskClass::SAFE;
    std::array<double, 3> probs{0.0, 0.0, 0.0};
};

struct FinetuneResult {
    RiskClassifier classifier;
    int best_epoch = -1;
    double best_dev_f1 = -1.0;
    std::vector<double> dev_f1_per_epoch;
};

// End-to-end classification finetuning (backbone + head). The epoch with the
// best dev micro-F1 over {RISKY, BLOCKED} is kept. backbone_checkpoint, when
// given, overlays its tensors on the fresh initialization.
FinetuneResult finetune(const std::vector<data::LabeledCommand>& train_split,
                        const std::vector<data::LabeledCommand>& dev_split,
                        const bpe::Vocabulary& vocab, const model::Config& mcfg,
                        const TrainConfig& tcfg,
                        const std::optional<std::string>& backbone_checkpoint = std::nullopt,
                        const Telemetry& telemetry = {});

Prediction predict_risk(const RiskClassifier& classifier, const std::string& command);

// Ordered batch inference; items may be evaluated on several threads.
std::vector<Prediction> batch_predict(const RiskClassifier& classifier,
                                      const std::vector<std::string>& commands, int threads = 1);

eval::ConfusionMatrix evaluate_confusion(const RiskClassifier& classifier,
                                         const std::vector<data::LabeledCommand>& data,
                                         int threads = 1);

void save_classifier(const std::string& manifest_path, const RiskClassifier& classifier);
RiskClassifier load_classifier(const std::string& manifest_path, const std::string& vocab_path);

}  // namespace cmdrisk::train
