#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cmdrisk/input.hpp"
#include "cmdrisk/tensor.hpp"

namespace cmdrisk::model {

// Architecture hyperparameters. Defaults are the production configuration;
// desk_config() is the reduced profile used for CPU-scale experiments.
struct Config {
    int hidden_size = 256;
    double dropout_prob = 0.1;
    int attention_heads = 4;
    int hidden_layers = 4;
    int intermediate_size = 1024;
    int vocab_size = 20000;
    int max_len = 1024;
    int output_classes = 3;
    double initializer_range = 0.02;

    int head_dim() const { return hidden_size / attention_heads; }
    void validate() const;  // throws ConfigError on bad combinations
};

Config desk_config();

template <typename T>
struct LayerParams {
    Mat<T> wq, wk, wv, wo;  // hidden x hidden, stored in x out
    std::vector<T> bq, bk, bv, bo;
    std::vector<T> ln1_g, ln1_b;
    Mat<T> ff1;  // hidden x intermediate
    std::vector<T> ff1_b;
    Mat<T> ff2;  // intermediate x hidden
    std::vector<T> ff2_b;
    std::vector<T> ln2_g, ln2_b;
};

template <typename T>
struct TensorRef {
    std::string name;
    T* data;
    size_t rows;
    size_t cols;
    size_t size() const { return rows * cols; }
};

// Full weight set. The MLM head shares the token embedding matrix (only its
// bias is separate); nsp/cls heads read the pooled vector.
template <typename T>
struct Params {
    Mat<T> tok_emb;  // vocab x hidden
    Mat<T> pos_emb;  // max_len x hidden
    Mat<T> seg_emb;  // 2 x hidden
    std::vector<T> emb_ln_g, emb_ln_b;
    std::vector<LayerParams<T>> layers;
    Mat<T> pooler_w;  // hidden x hidden
    std::vector<T> pooler_b;
    std::vector<T> mlm_bias;  // vocab
    Mat<T> nsp_w;             // hidden x 2
    std::vector<T> nsp_b;
    Mat<T> cls_w;  // hidden x classes
    std::vector<T> cls_b;

    // Stable enumeration used by init, Adam, checkpoints and gradcheck.
    std::vector<TensorRef<T>> tensor_refs();
    std::vector<TensorRef<const T>> tensor_refs() const;
};

// All-zero parameter set with the right shapes (gradient buffers).
template <typename T>
Params<T> zero_params(const Config& config);

// Weights ~ Normal(0, initializer_range^2) truncated at +-2 sigma,
// layer-norm gains 1, biases 0. Bit-deterministic for a given seed.
template <typename T>
Params<T> init_params(const Config& config, uint64_t seed);

template <typename T>
struct LnCache {
    Mat<T> xhat;
    std::vector<T> rstd;
};

template <typename T>
struct LayerCache {
    Mat<T> x_in;
    Mat<T> q, k, v;
    std::vector<Mat<T>> probs;    // per head, pre-dropout softmax rows
    std::vector<Mat<T>> probs_d;  // post-dropout
    Mat<T> ctx;
    Mat<T> attn_drop;  // dropout factors on the attention projection
    Mat<T> r1;
    LnCache<T> ln1;
    Mat<T> y;
    Mat<T> ff1_pre;
    Mat<T> ff_act;
    Mat<T> ff_drop;
    Mat<T> r2;
    LnCache<T> ln2;
};

template <typename T>
struct ForwardCache {
    size_t eff_len = 0;
    bool train_mode = false;
    Mat<T> emb_sum;
    LnCache<T> emb_ln;
    Mat<T> emb_drop;
    Mat<T> x0;
    std::vector<LayerCache<T>> layers;
    Mat<T> hidden;  // eff_len x hidden
    std::vector<T> pooled_pre, pooled;
};

template <typename T>
struct EncoderOutput {
    Mat<T> hidden;          // max_len x hidden; rows past the real length are zero
    std::vector<T> pooled;  // hidden
};

// Embeddings + self-attention stack + tanh pooler over the CLS position.
// Eval mode (train_mode = false) is a pure function of (params, input).
template <typename T>
EncoderOutput<T> forward_encoder(const Params<T>& params, const Config& config,
                                 const ModelInput& input, bool train_mode = false,
                                 uint64_t dropout_seed = 0);

// Training-path forward that records every intermediate needed by backward.
template <typename T>
void forward_cached(const Params<T>& params, const Config& config, const ModelInput& input,
                    bool train_mode, uint64_t dropout_seed, ForwardCache<T>& cache);

// Tied-projection MLM logits for the given sequence positions.
template <typename T>
Mat<T> mlm_logits(const Params<T>& params, const Config& config, const Mat<T>& hidden,
                  const std::vector<int32_t>& positions);

template <typename T>
std::array<T, 2> nsp_logits(const Params<T>& params, const std::vector<T>& pooled);

// Dropout applies to pooled in train mode only.
template <typename T>
std::vector<T> cls_logits(const Params<T>& params, const Config& config,
                          const std::vector<T>& pooled, bool train_mode = false,
                          uint64_t dropout_seed = 0);

// -log softmax(logits)[target], stabilized by max subtraction.
template <typename T>
T cross_entropy(const T* logits, size_t n, int32_t target);

template <typename T>
T cross_entropy(const std::vector<T>& logits, int32_t target);

// Mean of per-row losses for a batch of logit rows.
template <typename T>
T cross_entropy_mean(const Mat<T>& logits, const std::vector<int32_t>& targets);

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits);

struct Heads {
    bool mlm = false;
    bool nsp = false;
    bool cls = false;
};

template <typename T>
struct BatchStats {
    T total = T(0);
    T mlm = T(0);
    T nsp = T(0);
    T cls = T(0);
    size_t mlm_positions = 0;
    size_t examples = 0;
};

// Forward + manual backprop over a batch; gradients are accumulated into
// `grads` (caller zeroes them). Per-example losses use mean reduction. With
// threads > 1 batch items are evaluated in parallel and reduced in a fixed
// order, so results are deterministic for a given thread count.
template <typename T>
BatchStats<T> backward(const Params<T>& params, const Config& config,
                       const std::vector<ModelInput>& batch, Heads heads, bool train_mode,
                       uint64_t dropout_seed, Params<T>& grads, int threads = 1);

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m, v;  // aligned with tensor_refs() order
    int64_t step = 0;
};

template <typename T>
AdamState<T> make_adam_state(Params<T>& params);

// Standard Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
// Non-finite gradients raise TrainingError naming the offending tensor.
template <typename T>
void adam_step(Params<T>& params, Params<T>& grads, AdamState<T>& state, double learning_rate,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// FNV-1a 64 over raw bytes; checkpoint integrity hash.
uint64_t fnv1a(const void* data, size_t bytes);

}  // namespace cmdrisk::model
