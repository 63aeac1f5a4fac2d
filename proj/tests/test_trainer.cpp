#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"

#include "cmdrisk/checkpoint.hpp"
#include "cmdrisk/error.hpp"
#include "cmdrisk/rng.hpp"
#include "cmdrisk/trainer.hpp"

using namespace cmdrisk;
using namespace cmdrisk::train;
namespace fs = std::filesystem;

namespace {

bpe::Vocabulary tiny_vocab() {
    std::vector<std::string> corpus;
    auto scripts = data::generate_synthetic_scripts(80, 1);
    for (const auto& s : scripts)
        for (const auto& c : s) corpus.push_back(c);
    return bpe::train_bpe(corpus, 400);
}

model::Config tiny_model() {
    model::Config c;
    c.hidden_size = 16;
    c.attention_heads = 2;
    c.hidden_layers = 1;
    c.intermediate_size = 32;
    c.vocab_size = 400;
    c.max_len = 48;
    return c;
}

}  // namespace

TEST_CASE("annotate_corpus emits adjacent pairs; zero ratio keeps all positives") {
    std::vector<std::vector<std::string>> scripts = {{"c1", "c2", "c3"}, {"d1", "d2"}};
    auto ex = annotate_corpus(scripts, 0.0, 1);
    REQUIRE(ex.size() == 3);
    CHECK(ex[0].command_a == "c1");
    CHECK(ex[0].command_b == "c2");
    CHECK(ex[0].is_next);
    CHECK(ex[1].command_a == "c2");
    CHECK(ex[1].command_b == "c3");
    CHECK(ex[2].command_a == "d1");
    CHECK(ex[2].command_b == "d2");
}

TEST_CASE("annotate_corpus negatives come from other scripts at the right rate") {
    std::vector<std::vector<std::string>> scripts;
    for (int s = 0; s < 101; ++s) {
        std::vector<std::string> script;
        for (int c = 0; c < 100; ++c)
            script.push_back("s" + std::to_string(s) + "_c" + std::to_string(c));
        scripts.push_back(std::move(script));
    }
    auto ex = annotate_corpus(scripts, 0.5, 7);
    REQUIRE(ex.size() == 101 * 99);

    size_t negatives = 0;
    for (const auto& e : ex) {
        std::string a_script = e.command_a.substr(0, e.command_a.find('_'));
        std::string b_script = e.command_b.substr(0, e.command_b.find('_'));
        if (!e.is_next) {
            negatives++;
            CHECK(a_script != b_script);  // never from the same script
        } else {
            CHECK(a_script == b_script);
        }
    }
    double frac = double(negatives) / double(ex.size());
    CHECK(std::abs(frac - 0.5) < 0.02);

    auto again = annotate_corpus(scripts, 0.5, 7);
    CHECK(again.size() == ex.size());
    for (size_t i = 0; i < 50; ++i) {
        CHECK(again[i].command_b == ex[i].command_b);
        CHECK(again[i].is_next == ex[i].is_next);
    }
}

TEST_CASE("annotate_corpus error cases") {
    CHECK_THROWS_AS(annotate_corpus({{"one"}, {"two"}}, 0.5, 1), TrainingError);
    // A single multi-command script cannot donate foreign negatives.
    CHECK_THROWS_AS(annotate_corpus({std::vector<std::string>(50, "x")}, 1.0, 1), TrainingError);
    CHECK_NOTHROW(annotate_corpus({std::vector<std::string>(5, "x")}, 0.0, 1));
}

TEST_CASE("apply_masking selects ceil(rate * real) non-special positions") {
    auto vocab = tiny_vocab();
    // 20 real (non-special) tokens.
    std::string cmd(20, 'z');
    ModelInput in = vocab.build_input(cmd, std::nullopt, 32);
    size_t real = 0;
    for (size_t t = 0; t < in.ids.size(); ++t)
        if (in.attn_mask[t] == 1 && !vocab.is_special(in.ids[t])) real++;
    REQUIRE(real == 20);

    ModelInput masked = apply_masking(in, vocab, 0.15, 3);
    CHECK(masked.masked_positions.size() == 3);  // ceil(0.15 * 20)
    for (size_t i = 0; i < masked.masked_positions.size(); ++i) {
        int32_t pos = masked.masked_positions[i];
        CHECK(in.attn_mask[pos] == 1);
        CHECK_FALSE(vocab.is_special(in.ids[pos]));
        CHECK(masked.masked_targets[i] == in.ids[pos]);
    }
    // Unselected positions are untouched.
    std::set<int32_t> sel(masked.masked_positions.begin(), masked.masked_positions.end());
    for (size_t t = 0; t < in.ids.size(); ++t)
        if (!sel.count(static_cast<int32_t>(t))) CHECK(masked.ids[t] == in.ids[t]);

    // At least one position selected even at minuscule rates.
    ModelInput tiny = vocab.build_input("x", std::nullopt, 8);
    ModelInput tiny_masked = apply_masking(tiny, vocab, 0.01, 4);
    CHECK(tiny_masked.masked_positions.size() == 1);
}

TEST_CASE("apply_masking replacement mix is 80/10/10 and never hits specials") {
    auto vocab = tiny_vocab();
    std::string cmd = "rm -rf /tmp/scratch && systemctl restart nginx";
    ModelInput in = vocab.build_input(cmd, std::nullopt, 48);

    size_t mask_tok = 0, unchanged = 0, random_tok = 0, total = 0;
    for (uint64_t seed = 0; total < 100000; ++seed) {
        ModelInput m = apply_masking(in, vocab, 0.4, seed);
        for (size_t i = 0; i < m.masked_positions.size(); ++i) {
            int32_t pos = m.masked_positions[i];
            int32_t now = m.ids[pos];
            int32_t was = in.ids[pos];
            CHECK((now == vocab.mask_id() || !vocab.is_special(now)));
            if (now == vocab.mask_id())
                mask_tok++;
            else if (now == was)
                unchanged++;
            else
                random_tok++;
            total++;
        }
    }
    CHECK(std::abs(double(mask_tok) / total - 0.8) < 0.01);
    // A random draw can reproduce the original token, so "unchanged"
    // slightly exceeds 10% and "different random" slightly misses it.
    CHECK(std::abs(double(unchanged) / total - 0.1) < 0.015);
    CHECK(std::abs(double(random_tok) / total - 0.1) < 0.015);

    CHECK_THROWS_AS(
        apply_masking(vocab.build_input("", std::nullopt, 8), vocab, 0.15, 1),
        TrainingError);
}

TEST_CASE("pretraining on a toy corpus: sane start, falling loss, replayable") {
    auto vocab = tiny_vocab();
    auto scripts = data::generate_synthetic_scripts(150, 2);
    model::Config mcfg = tiny_model();

    TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.epochs = 3;
    tcfg.learning_rate = 1e-3;
    tcfg.seed = 11;
    tcfg.max_steps = 40;

    std::vector<StepRecord> telemetry;
    PretrainResult res =
        pretrain(scripts, vocab, mcfg, tcfg, [&](const StepRecord& r) { telemetry.push_back(r); });
    CHECK_FALSE(res.diverged);
    REQUIRE(res.steps == 40);
    REQUIRE(telemetry.size() == 40);

    // Start near ln(V) + ln(2).
    double expected = std::log(double(mcfg.vocab_size)) + std::log(2.0);
    CHECK(std::abs(res.loss_curve.front() - expected) / expected < 0.2);

    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += res.loss_curve[i];
        last += res.loss_curve[res.loss_curve.size() - 1 - i];
    }
    CHECK(last < first);

    PretrainResult res2 = pretrain(scripts, vocab, mcfg, tcfg);
    REQUIRE(res2.loss_curve.size() == res.loss_curve.size());
    for (size_t i = 0; i < res.loss_curve.size(); ++i)
        CHECK(res.loss_curve[i] == res2.loss_curve[i]);  // bit-identical replay

    // Exported checkpoint retains the backbone and drops the task heads.
    std::string path = (fs::temp_directory_path() / "cmdrisk_backbone_test.json").string();
    export_backbone(path, res);
    auto info = model::read_checkpoint_info(path);
    for (const auto& head : model::head_tensor_names())
        for (const auto& name : info.tensor_names) CHECK(name != head);
    fs::remove(path);
    fs::remove(path + ".bin");
}

TEST_CASE("finetune overfits a small sample and predicts deterministically") {
    auto vocab = tiny_vocab();
    model::Config mcfg = tiny_model();
    mcfg.dropout_prob = 0.0;  // capacity check wants noiseless optimization

    auto pool = data::generate_synthetic_dataset(400, {0.5, 0.45, 0.05}, 5);
    std::vector<data::LabeledCommand> train64(pool.begin(), pool.begin() + 64);
    {
        std::set<RiskClass> classes;
        for (const auto& lc : train64) classes.insert(lc.label);
        REQUIRE(classes.size() >= 2);
    }

    TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.epochs = 300;
    tcfg.learning_rate = 3e-3;
    tcfg.seed = 3;

    FinetuneResult res = finetune(train64, {}, vocab, mcfg, tcfg);
    eval::ConfusionMatrix cm = evaluate_confusion(res.classifier, train64);
    CHECK(cm.accuracy() == doctest::Approx(1.0));

    // predict_risk: normalized probabilities, argmax class, pure function.
    Prediction p1 = predict_risk(res.classifier, train64[0].command);
    Prediction p2 = predict_risk(res.classifier, train64[0].command);
    CHECK(p1.probs == p2.probs);
    CHECK(p1.risk == p2.risk);
    CHECK(p1.probs[0] + p1.probs[1] + p1.probs[2] == doctest::Approx(1.0).epsilon(1e-6));
    int best = 0;
    for (int c = 1; c < 3; ++c)
        if (p1.probs[c] > p1.probs[best]) best = c;
    CHECK(static_cast<int>(p1.risk) == best);
}

TEST_CASE("finetune rejects a single-class training split") {
    auto vocab = tiny_vocab();
    std::vector<data::LabeledCommand> only_safe;
    for (int i = 0; i < 10; ++i)
        only_safe.push_back({"ls /tmp/" + std::to_string(i), RiskClass::SAFE, "t"});
    TrainConfig tcfg;
    CHECK_THROWS_AS(finetune(only_safe, {}, vocab, tiny_model(), tcfg), TrainingError);
}

TEST_CASE("classifier save/load round-trip preserves outputs") {
    auto vocab = tiny_vocab();
    model::Config mcfg = tiny_model();
    auto pool = data::generate_synthetic_dataset(400, {0.6, 0.35, 0.05}, 9);
    std::vector<data::LabeledCommand> train(pool.begin(), pool.begin() + 48);

    TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.epochs = 2;
    tcfg.seed = 21;
    FinetuneResult res = finetune(train, {}, vocab, mcfg, tcfg);

    fs::path dir = fs::temp_directory_path();
    std::string ckpt = (dir / "cmdrisk_cls_test.json").string();
    std::string vpath = (dir / "cmdrisk_cls_test.vocab").string();
    save_classifier(ckpt, res.classifier);
    res.classifier.vocab.save_file(vpath);

    RiskClassifier loaded = load_classifier(ckpt, vpath);
    for (const auto& lc : pool) {
        Prediction a = predict_risk(res.classifier, lc.command);
        Prediction b = predict_risk(loaded, lc.command);
        CHECK(a.risk == b.risk);
        CHECK(a.probs == b.probs);
    }
    fs::remove(ckpt);
    fs::remove(ckpt + ".bin");
    fs::remove(vpath);
}

TEST_CASE("batch_predict matches sequential calls in order") {
    auto vocab = tiny_vocab();
    model::Config mcfg = tiny_model();
    auto pool = data::generate_synthetic_dataset(400, {0.6, 0.35, 0.05}, 13);
    std::vector<data::LabeledCommand> train(pool.begin(), pool.begin() + 32);
    TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.epochs = 1;
    FinetuneResult res = finetune(train, {}, vocab, mcfg, tcfg);

    std::vector<std::string> cmds;
    for (int i = 0; i < 40; ++i) cmds.push_back(pool[i].command);
    auto seq = batch_predict(res.classifier, cmds, 1);
    auto par = batch_predict(res.classifier, cmds, 2);
    REQUIRE(seq.size() == par.size());
    for (size_t i = 0; i < seq.size(); ++i) {
        CHECK(seq[i].risk == par[i].risk);
        CHECK(seq[i].probs == par[i].probs);
    }
}
