#include "cmdrisk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <thread>

#include "cmdrisk/checkpoint.hpp"
#include "cmdrisk/error.hpp"
#include "cmdrisk/rng.hpp"

namespace cmdrisk::train {

using model::Config;
using model::Params;

std::vector<PretrainExample> annotate_corpus(const std::vector<std::vector<std::string>>& scripts,
                                             double negative_ratio, uint64_t seed) {
    if (negative_ratio < 0.0 || negative_ratio > 1.0)
        throw ConfigError("negative_ratio must be in [0,1]");

    struct PoolEntry {
        size_t script;
        const std::string* cmd;
    };
    std::vector<PoolEntry> pool;
    bool any_pair = false;
    for (size_t i = 0; i < scripts.size(); ++i) {
        if (scripts[i].size() >= 2) any_pair = true;
        for (const std::string& c : scripts[i])
            if (!c.empty()) pool.push_back(PoolEntry{i, &c});
    }
    if (!any_pair) throw TrainingError("corpus has no script with at least two commands");

    Rng rng(mix_seed(seed, 0xa0a7));
    std::vector<PretrainExample> out;
    for (size_t i = 0; i < scripts.size(); ++i) {
        const auto& s = scripts[i];
        for (size_t j = 0; j + 1 < s.size(); ++j) {
            if (s[j].empty() || s[j + 1].empty()) continue;
            PretrainExample ex;
            ex.command_a = s[j];
            if (rng.uniform() < negative_ratio) {
                // Replacement must come from another script.
                bool foreign = false;
                for (const PoolEntry& e : pool)
                    if (e.script != i) {
                        foreign = true;
                        break;
                    }
                if (!foreign)
                    throw TrainingError("negative sampling needs commands from a second script");
                const PoolEntry* pick = nullptr;
                do {
                    pick = &pool[rng.below(pool.size())];
                } while (pick->script == i);
                ex.command_b = *pick->cmd;
                ex.is_next = false;
            } else {
                ex.command_b = s[j + 1];
                ex.is_next = true;
            }
            out.push_back(std::move(ex));
        }
    }
    return out;
}

ModelInput apply_masking(const ModelInput& input, const bpe::Vocabulary& vocab, double mask_rate,
                         uint64_t seed) {
    if (mask_rate <= 0.0 || mask_rate > 1.0) throw ConfigError("mask_rate must be in (0,1]");

    std::vector<size_t> candidates;
    for (size_t t = 0; t < input.ids.size(); ++t) {
        if (input.attn_mask[t] != 1) continue;
        if (vocab.is_special(input.ids[t])) continue;
        candidates.push_back(t);
    }
    if (candidates.empty())
        throw TrainingError("apply_masking: input has no maskable (non-special) token");

    size_t k = static_cast<size_t>(
        std::ceil(mask_rate * static_cast<double>(candidates.size())));
    k = std::max<size_t>(1, std::min(k, candidates.size()));

    Rng rng(mix_seed(seed, 0x3a5c));
    // Partial Fisher-Yates: the first k entries become the selection.
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    std::vector<size_t> chosen(candidates.begin(), candidates.begin() + k);
    std::sort(chosen.begin(), chosen.end());

    const int32_t n_ordinary =
        256 + static_cast<int32_t>(vocab.merges().size());  // bytes + merged tokens
    const int32_t first_merged = vocab.first_merged_id();

    ModelInput masked = input;
    masked.masked_positions.clear();
    masked.masked_targets.clear();
    for (size_t pos : chosen) {
        masked.masked_positions.push_back(static_cast<int32_t>(pos));
        masked.masked_targets.push_back(input.ids[pos]);
        double r = rng.uniform();
        if (r < 0.8) {
            masked.ids[pos] = vocab.mask_id();
        } else if (r < 0.9) {
            int32_t idx = static_cast<int32_t>(rng.below(n_ordinary));
            masked.ids[pos] = idx < 256 ? idx : first_merged + (idx - 256);
        }  // else: keep the original token
    }
    return masked;
}

Telemetry file_telemetry(const std::string& path) {
    auto out = std::make_shared<std::ofstream>(path, std::ios::binary | std::ios::app);
    if (!*out) throw ConfigError("cannot open telemetry file '" + path + "'");
    return [out](const StepRecord& r) {
        (*out) << "{\"step\":" << r.step << ",\"epoch\":" << r.epoch << ",\"mlm\":" << r.mlm_loss
               << ",\"nsp\":" << r.nsp_loss << ",\"cls\":" << r.cls_loss
               << ",\"total\":" << r.total_loss << ",\"lr\":" << r.learning_rate
               << ",\"seed\":" << r.seed << "}\n";
        out->flush();
    };
}

namespace {

bool losses_finite(const model::BatchStats<float>& s) {
    return std::isfinite(s.total) && std::isfinite(s.mlm) && std::isfinite(s.nsp) &&
           std::isfinite(s.cls);
}

}  // namespace

PretrainResult pretrain(const std::vector<std::vector<std::string>>& scripts,
                        const bpe::Vocabulary& vocab, const model::Config& mcfg,
                        const TrainConfig& tcfg, const Telemetry& telemetry) {
    mcfg.validate();
    if (tcfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");

    std::vector<PretrainExample> examples =
        annotate_corpus(scripts, tcfg.negative_ratio, tcfg.seed);

    // Tokenized pair inputs are fixed across epochs; masking varies per epoch.
    std::vector<ModelInput> inputs;
    inputs.reserve(examples.size());
    for (const PretrainExample& ex : examples) {
        ModelInput in = vocab.build_input(ex.command_a, ex.command_b, mcfg.max_len);
        in.pair_label = ex.is_next ? 1 : 0;
        inputs.push_back(std::move(in));
    }

    PretrainResult result;
    result.config = mcfg;
    result.params = model::init_params<float>(mcfg, tcfg.seed);
    auto adam = model::make_adam_state(result.params);
    Params<float> grads = model::zero_params<float>(mcfg);

    model::Heads heads;
    heads.mlm = true;
    heads.nsp = true;

    std::vector<size_t> order(inputs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int64_t step = 0;
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(tcfg.seed, 0xe70c, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (size_t off = 0; off < order.size(); off += tcfg.batch_size) {
            size_t end = std::min(order.size(), off + static_cast<size_t>(tcfg.batch_size));
            std::vector<ModelInput> batch;
            batch.reserve(end - off);
            for (size_t b = off; b < end; ++b) {
                uint64_t mask_seed = mix_seed(tcfg.seed, static_cast<uint64_t>(epoch) << 32 | b);
                batch.push_back(
                    apply_masking(inputs[order[b]], vocab, tcfg.mask_rate, mask_seed));
            }

            auto grefs = grads.tensor_refs();
            for (auto& r : grefs) std::fill(r.data, r.data + r.size(), 0.0f);
            model::BatchStats<float> stats =
                model::backward(result.params, mcfg, batch, heads, true,
                                mix_seed(tcfg.seed, 0xd0, static_cast<uint64_t>(step)), grads,
                                tcfg.threads);
            if (!losses_finite(stats)) {
                result.diverged = true;
                return result;  // params are from before this step
            }
            try {
                model::adam_step(result.params, grads, adam, tcfg.learning_rate);
            } catch (const TrainingError&) {
                result.diverged = true;
                return result;
            }
            ++step;
            result.steps = step;
            result.loss_curve.push_back(static_cast<double>(stats.total));
            if (telemetry) {
                StepRecord r;
                r.step = step;
                r.epoch = epoch;
                r.mlm_loss = stats.mlm;
                r.nsp_loss = stats.nsp;
                r.total_loss = stats.total;
                r.learning_rate = tcfg.learning_rate;
                r.seed = tcfg.seed;
                telemetry(r);
            }
            if (tcfg.max_steps > 0 && step >= tcfg.max_steps) return result;
        }
    }
    return result;
}

void export_backbone(const std::string& manifest_path, const PretrainResult& result) {
    model::save_checkpoint(manifest_path, result.params, result.config,
                           model::head_tensor_names());
}

namespace {

Prediction predict_with(const Params<float>& params, const Config& cfg,
                        const bpe::Vocabulary& vocab, const std::string& command) {
    ModelInput in = vocab.build_input(command, std::nullopt, cfg.max_len);
    auto enc = model::forward_encoder(params, cfg, in, false, 0);
    std::vector<float> logits = model::cls_logits(params, cfg, enc.pooled);
    std::vector<float> probs = model::softmax(logits);
    Prediction p;
    for (size_t c = 0; c < 3 && c < probs.size(); ++c) p.probs[c] = probs[c];
    p.risk = argmax_danger(p.probs);
    return p;
}

double dev_rb_f1(const eval::ConfusionMatrix& cm) {
    eval::ClassMetrics m = eval::micro_avg_positive(cm);
    return m.f1 ? *m.f1 : -1.0;
}

}  // namespace

FinetuneResult finetune(const std::vector<data::LabeledCommand>& train_split,
                        const std::vector<data::LabeledCommand>& dev_split,
                        const bpe::Vocabulary& vocab, const model::Config& mcfg,
                        const TrainConfig& tcfg,
                        const std::optional<std::string>& backbone_checkpoint,
                        const Telemetry& telemetry) {
    mcfg.validate();
    if (train_split.empty()) throw TrainingError("finetune: empty training split");
    {
        std::set<RiskClass> classes;
        for (const auto& lc : train_split) classes.insert(lc.label);
        if (classes.size() < 2)
            throw TrainingError("finetune: training split contains a single class");
    }

    FinetuneResult result;
    result.classifier.config = mcfg;
    result.classifier.vocab = vocab;
    result.classifier.params = model::init_params<float>(mcfg, tcfg.seed);
    if (backbone_checkpoint)
        model::load_checkpoint(*backbone_checkpoint, result.classifier.params);

    std::vector<ModelInput> inputs;
    inputs.reserve(train_split.size());
    for (const auto& lc : train_split) {
        ModelInput in = vocab.build_input(lc.command, std::nullopt, mcfg.max_len);
        in.class_label = static_cast<int32_t>(lc.label);
        inputs.push_back(std::move(in));
    }

    auto adam = model::make_adam_state(result.classifier.params);
    Params<float> grads = model::zero_params<float>(mcfg);
    model::Heads heads;
    heads.cls = true;

    std::vector<size_t> order(inputs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    Params<float> best_params = result.classifier.params;
    int64_t step = 0;
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(tcfg.seed, 0xf7e0, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (size_t off = 0; off < order.size(); off += tcfg.batch_size) {
            size_t end = std::min(order.size(), off + static_cast<size_t>(tcfg.batch_size));
            std::vector<ModelInput> batch;
            for (size_t b = off; b < end; ++b) batch.push_back(inputs[order[b]]);

            auto grefs = grads.tensor_refs();
            for (auto& r : grefs) std::fill(r.data, r.data + r.size(), 0.0f);
            model::BatchStats<float> stats =
                model::backward(result.classifier.params, mcfg, batch, heads, true,
                                mix_seed(tcfg.seed, 0xf1, static_cast<uint64_t>(step)), grads,
                                tcfg.threads);
            if (!losses_finite(stats)) throw TrainingError("finetune: loss diverged");
            model::adam_step(result.classifier.params, grads, adam, tcfg.learning_rate);
            ++step;
            if (telemetry) {
                StepRecord r;
                r.step = step;
                r.epoch = epoch;
                r.cls_loss = stats.cls;
                r.total_loss = stats.total;
                r.learning_rate = tcfg.learning_rate;
                r.seed = tcfg.seed;
                telemetry(r);
            }
            if (tcfg.max_steps > 0 && step >= tcfg.max_steps) break;
        }

        double f1 = -1.0;
        if (!dev_split.empty()) {
            eval::ConfusionMatrix cm =
                evaluate_confusion(result.classifier, dev_split, tcfg.threads);
            f1 = dev_rb_f1(cm);
        }
        result.dev_f1_per_epoch.push_back(f1);
        if (f1 > result.best_dev_f1) {
            result.best_dev_f1 = f1;
            result.best_epoch = epoch;
            best_params = result.classifier.params;
        }
        if (tcfg.max_steps > 0 && step >= tcfg.max_steps) break;
    }

    if (!dev_split.empty() && result.best_epoch >= 0)
        result.classifier.params = std::move(best_params);
    return result;
}

Prediction predict_risk(const RiskClassifier& classifier, const std::string& command) {
    return predict_with(classifier.params, classifier.config, classifier.vocab, command);
}

std::vector<Prediction> batch_predict(const RiskClassifier& classifier,
                                      const std::vector<std::string>& commands, int threads) {
    std::vector<Prediction> out(commands.size());
    int n_threads = std::max(1, threads);
    n_threads = static_cast<int>(std::min<size_t>(n_threads, commands.size()));
    if (n_threads <= 1) {
        for (size_t i = 0; i < commands.size(); ++i) out[i] = predict_risk(classifier, commands[i]);
        return out;
    }
    std::vector<std::thread> pool;
    size_t chunk = (commands.size() + n_threads - 1) / n_threads;
    for (int w = 0; w < n_threads; ++w) {
        size_t b = std::min(commands.size(), w * chunk);
        size_t e = std::min(commands.size(), (w + 1) * chunk);
        pool.emplace_back([&, b, e] {
            for (size_t i = b; i < e; ++i) out[i] = predict_risk(classifier, commands[i]);
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

eval::ConfusionMatrix evaluate_confusion(const RiskClassifier& classifier,
                                         const std::vector<data::LabeledCommand>& data,
                                         int threads) {
    std::vector<std::string> commands;
    commands.reserve(data.size());
    for (const auto& lc : data) commands.push_back(lc.command);
    std::vector<Prediction> preds = batch_predict(classifier, commands, threads);
    eval::ConfusionMatrix cm;
    for (size_t i = 0; i < data.size(); ++i) cm.add(data[i].label, preds[i].risk);
    return cm;
}

void save_classifier(const std::string& manifest_path, const RiskClassifier& classifier) {
    model::save_checkpoint(manifest_path, classifier.params, classifier.config);
}

RiskClassifier load_classifier(const std::string& manifest_path, const std::string& vocab_path) {
    RiskClassifier c;
    c.vocab = bpe::Vocabulary::load_file(vocab_path);
    c.params = model::load_params<float>(manifest_path, c.config);
    return c;
}

}  // namespace cmdrisk::train
