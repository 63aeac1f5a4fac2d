#include "cmdrisk/model.hpp"

#include <cmath>
#include <thread>

#include "cmdrisk/error.hpp"
#include "cmdrisk/rng.hpp"

namespace cmdrisk::model {

void Config::validate() const {
    if (hidden_size <= 0 || attention_heads <= 0 || hidden_layers <= 0 ||
        intermediate_size <= 0 || vocab_size <= 0 || max_len <= 0 || output_classes <= 0)
        throw ConfigError("model config: all sizes must be positive");
    if (hidden_size % attention_heads != 0)
        throw ConfigError("model config: hidden size must divide evenly into attention heads");
    if (dropout_prob < 0.0 || dropout_prob >= 1.0)
        throw ConfigError("model config: dropout probability must be in [0,1)");
    if (initializer_range <= 0.0) throw ConfigError("model config: initializer range must be > 0");
}

Config desk_config() {
    Config c;
    c.hidden_size = 64;
    c.attention_heads = 4;
    c.hidden_layers = 2;
    c.intermediate_size = 256;
    c.vocab_size = 1000;
    c.max_len = 128;
    return c;
}

// ---------------------------------------------------------------------------
// Parameter plumbing
// ---------------------------------------------------------------------------

namespace {

template <typename RefT, typename P>
std::vector<TensorRef<RefT>> refs_impl(P& p) {
    std::vector<TensorRef<RefT>> out;
    auto mat = [&](const std::string& name, auto& m) {
        out.push_back({name, m.v.data(), m.rows, m.cols});
    };
    auto vec = [&](const std::string& name, auto& v) {
        out.push_back({name, v.data(), 1, v.size()});
    };
    mat("tok_emb", p.tok_emb);
    mat("pos_emb", p.pos_emb);
    mat("seg_emb", p.seg_emb);
    vec("emb_ln_g", p.emb_ln_g);
    vec("emb_ln_b", p.emb_ln_b);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        auto& ly = p.layers[l];
        std::string pre = "layer" + std::to_string(l) + ".";
        mat(pre + "wq", ly.wq);
        vec(pre + "bq", ly.bq);
        mat(pre + "wk", ly.wk);
        vec(pre + "bk", ly.bk);
        mat(pre + "wv", ly.wv);
        vec(pre + "bv", ly.bv);
        mat(pre + "wo", ly.wo);
        vec(pre + "bo", ly.bo);
        vec(pre + "ln1_g", ly.ln1_g);
        vec(pre + "ln1_b", ly.ln1_b);
        mat(pre + "ff1", ly.ff1);
        vec(pre + "ff1_b", ly.ff1_b);
        mat(pre + "ff2", ly.ff2);
        vec(pre + "ff2_b", ly.ff2_b);
        vec(pre + "ln2_g", ly.ln2_g);
        vec(pre + "ln2_b", ly.ln2_b);
    }
    mat("pooler_w", p.pooler_w);
    vec("pooler_b", p.pooler_b);
    vec("mlm_bias", p.mlm_bias);
    mat("nsp_w", p.nsp_w);
    vec("nsp_b", p.nsp_b);
    mat("cls_w", p.cls_w);
    vec("cls_b", p.cls_b);
    return out;
}

}  // namespace

template <typename T>
std::vector<TensorRef<T>> Params<T>::tensor_refs() {
    return refs_impl<T>(*this);
}

template <typename T>
std::vector<TensorRef<const T>> Params<T>::tensor_refs() const {
    return refs_impl<const T>(*this);
}

template <typename T>
Params<T> zero_params(const Config& config) {
    config.validate();
    const size_t H = config.hidden_size;
    const size_t V = config.vocab_size;
    const size_t L = config.max_len;
    const size_t I = config.intermediate_size;
    const size_t C = config.output_classes;

    Params<T> p;
    p.tok_emb = Mat<T>(V, H);
    p.pos_emb = Mat<T>(L, H);
    p.seg_emb = Mat<T>(2, H);
    p.emb_ln_g.assign(H, T(0));
    p.emb_ln_b.assign(H, T(0));
    p.layers.resize(config.hidden_layers);
    for (auto& ly : p.layers) {
        ly.wq = Mat<T>(H, H);
        ly.wk = Mat<T>(H, H);
        ly.wv = Mat<T>(H, H);
        ly.wo = Mat<T>(H, H);
        ly.bq.assign(H, T(0));
        ly.bk.assign(H, T(0));
        ly.bv.assign(H, T(0));
        ly.bo.assign(H, T(0));
        ly.ln1_g.assign(H, T(0));
        ly.ln1_b.assign(H, T(0));
        ly.ff1 = Mat<T>(H, I);
        ly.ff1_b.assign(I, T(0));
        ly.ff2 = Mat<T>(I, H);
        ly.ff2_b.assign(H, T(0));
        ly.ln2_g.assign(H, T(0));
        ly.ln2_b.assign(H, T(0));
    }
    p.pooler_w = Mat<T>(H, H);
    p.pooler_b.assign(H, T(0));
    p.mlm_bias.assign(V, T(0));
    p.nsp_w = Mat<T>(H, 2);
    p.nsp_b.assign(2, T(0));
    p.cls_w = Mat<T>(H, C);
    p.cls_b.assign(C, T(0));
    return p;
}

template <typename T>
Params<T> init_params(const Config& config, uint64_t seed) {
    Params<T> p = zero_params<T>(config);
    Rng rng(mix_seed(seed, 0x1417));
    const double sigma = config.initializer_range;

    auto fill_normal = [&](Mat<T>& m) {
        for (T& x : m.v) x = static_cast<T>(rng.truncated_normal(sigma));
    };
    auto fill_ones = [](std::vector<T>& v) { std::fill(v.begin(), v.end(), T(1)); };

    fill_normal(p.tok_emb);
    fill_normal(p.pos_emb);
    fill_normal(p.seg_emb);
    fill_ones(p.emb_ln_g);
    for (auto& ly : p.layers) {
        fill_normal(ly.wq);
        fill_normal(ly.wk);
        fill_normal(ly.wv);
        fill_normal(ly.wo);
        fill_ones(ly.ln1_g);
        fill_normal(ly.ff1);
        fill_normal(ly.ff2);
        fill_ones(ly.ln2_g);
    }
    fill_normal(p.pooler_w);
    fill_normal(p.nsp_w);
    fill_normal(p.cls_w);
    return p;
}

// ---------------------------------------------------------------------------
// Forward primitives
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void add_bias(Mat<T>& y, const std::vector<T>& b) {
    for (size_t r = 0; r < y.rows; ++r) {
        T* row = y.row(r);
        for (size_t c = 0; c < y.cols; ++c) row[c] += b[c];
    }
}

// y = layernorm(x) * g + b, per row; caches xhat and 1/std.
template <typename T>
void layernorm_forward(const Mat<T>& x, const std::vector<T>& g, const std::vector<T>& b,
                       Mat<T>& y, LnCache<T>& cache) {
    const size_t H = x.cols;
    y.rows = x.rows;
    y.cols = H;
    y.v.resize(x.rows * H);
    cache.xhat = Mat<T>(x.rows, H);
    cache.rstd.assign(x.rows, T(0));
    for (size_t r = 0; r < x.rows; ++r) {
        const T* xr = x.row(r);
        T mean = T(0);
        for (size_t c = 0; c < H; ++c) mean += xr[c];
        mean /= static_cast<T>(H);
        T var = T(0);
        for (size_t c = 0; c < H; ++c) {
            T d = xr[c] - mean;
            var += d * d;
        }
        var /= static_cast<T>(H);
        T rstd = T(1) / std::sqrt(var + T(1e-12));
        cache.rstd[r] = rstd;
        T* xh = cache.xhat.row(r);
        T* yr = y.row(r);
        for (size_t c = 0; c < H; ++c) {
            xh[c] = (xr[c] - mean) * rstd;
            yr[c] = xh[c] * g[c] + b[c];
        }
    }
}

// dx from upstream dy; accumulates dg/db.
template <typename T>
void layernorm_backward(const Mat<T>& dy, const LnCache<T>& cache, const std::vector<T>& g,
                        Mat<T>& dx, std::vector<T>& dg, std::vector<T>& db) {
    const size_t H = dy.cols;
    dx.rows = dy.rows;
    dx.cols = H;
    dx.v.assign(dy.rows * H, T(0));
    for (size_t r = 0; r < dy.rows; ++r) {
        const T* dyr = dy.row(r);
        const T* xh = cache.xhat.row(r);
        T rstd = cache.rstd[r];
        T sum_dxh = T(0), sum_dxh_xh = T(0);
        for (size_t c = 0; c < H; ++c) {
            T dxh = dyr[c] * g[c];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[c];
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
        }
        T inv_h = T(1) / static_cast<T>(H);
        T* dxr = dx.row(r);
        for (size_t c = 0; c < H; ++c) {
            T dxh = dyr[c] * g[c];
            dxr[c] = rstd * (dxh - sum_dxh * inv_h - xh[c] * sum_dxh_xh * inv_h);
        }
    }
}

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
T gelu_grad(T x) {
    T phi = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794);  // N(0,1) pdf
    T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
    return cdf + x * phi;
}

// Inverted dropout factors: 0 with probability p, else 1/(1-p).
template <typename T>
void fill_dropout(Mat<T>& mask, size_t rows, size_t cols, double p, Rng& rng) {
    mask = Mat<T>(rows, cols);
    const T keep = static_cast<T>(1.0 / (1.0 - p));
    for (T& x : mask.v) x = (rng.uniform() < p) ? T(0) : keep;
}

template <typename T>
void apply_mask_inplace(Mat<T>& x, const Mat<T>& mask) {
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] *= mask.v[i];
}

template <typename T>
void validate_input(const Config& config, const ModelInput& input) {
    size_t n = input.ids.size();
    if (n == 0 || n > static_cast<size_t>(config.max_len) || input.segments.size() != n ||
        input.attn_mask.size() != n)
        throw ContractViolation("model input shape mismatch");
    for (size_t t = 0; t < n; ++t) {
        if (input.ids[t] < 0 || input.ids[t] >= config.vocab_size)
            throw ContractViolation("token id out of range");
        if (input.segments[t] < 0 || input.segments[t] > 1)
            throw ContractViolation("segment id out of range");
        if (input.attn_mask[t] != 0 && input.attn_mask[t] != 1)
            throw ContractViolation("attention mask must be 0/1");
    }
    for (int32_t pos : input.masked_positions) {
        if (pos < 0 || static_cast<size_t>(pos) >= n || input.attn_mask[pos] != 1)
            throw ContractViolation("masked position outside attended sequence");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder forward
// ---------------------------------------------------------------------------

template <typename T>
void forward_cached(const Params<T>& params, const Config& config, const ModelInput& input,
                    bool train_mode, uint64_t dropout_seed, ForwardCache<T>& cache) {
    validate_input<T>(config, input);
    const size_t H = config.hidden_size;
    const size_t nh = config.attention_heads;
    const size_t D = config.head_dim();
    const size_t eff = std::max<size_t>(input.effective_len(), 1);
    const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(D));
    const bool drop = train_mode && config.dropout_prob > 0.0;
    Rng rng(mix_seed(dropout_seed, 0xd209));

    cache.eff_len = eff;
    cache.train_mode = train_mode;

    // Embedding sum + layernorm + dropout.
    cache.emb_sum = Mat<T>(eff, H);
    for (size_t t = 0; t < eff; ++t) {
        const T* tok = params.tok_emb.row(input.ids[t]);
        const T* pos = params.pos_emb.row(t);
        const T* seg = params.seg_emb.row(input.segments[t]);
        T* out = cache.emb_sum.row(t);
        for (size_t c = 0; c < H; ++c) out[c] = tok[c] + pos[c] + seg[c];
    }
    layernorm_forward(cache.emb_sum, params.emb_ln_g, params.emb_ln_b, cache.x0, cache.emb_ln);
    if (drop) {
        fill_dropout(cache.emb_drop, eff, H, config.dropout_prob, rng);
        apply_mask_inplace(cache.x0, cache.emb_drop);
    } else {
        cache.emb_drop = Mat<T>();
    }

    // Additive key mask within the attended prefix.
    std::vector<T> key_mask(eff, T(0));
    for (size_t u = 0; u < eff; ++u)
        if (input.attn_mask[u] == 0) key_mask[u] = T(-1e9);

    cache.layers.assign(config.hidden_layers, LayerCache<T>());
    Mat<T>* x = &cache.x0;
    for (int l = 0; l < config.hidden_layers; ++l) {
        LayerCache<T>& lc = cache.layers[l];
        const LayerParams<T>& lp = params.layers[l];
        if (&lc.x_in != x) lc.x_in = *x;

        matmul_nn(lc.x_in, lp.wq, lc.q);
        add_bias(lc.q, lp.bq);
        matmul_nn(lc.x_in, lp.wk, lc.k);
        add_bias(lc.k, lp.bk);
        matmul_nn(lc.x_in, lp.wv, lc.v);
        add_bias(lc.v, lp.bv);

        lc.probs.assign(nh, Mat<T>());
        if (drop) lc.probs_d.assign(nh, Mat<T>());
        lc.ctx = Mat<T>(eff, H);
        for (size_t a = 0; a < nh; ++a) {
            const size_t off = a * D;
            Mat<T>& probs = lc.probs[a];
            probs = Mat<T>(eff, eff);
            for (size_t t = 0; t < eff; ++t) {
                const T* qr = lc.q.row(t) + off;
                T* sr = probs.row(t);
                T maxv = T(-1e30);
                for (size_t u = 0; u < eff; ++u) {
                    const T* kr = lc.k.row(u) + off;
                    T s = T(0);
                    for (size_t c = 0; c < D; ++c) s += qr[c] * kr[c];
                    s = s * inv_sqrt_d + key_mask[u];
                    sr[u] = s;
                    if (s > maxv) maxv = s;
                }
                T denom = T(0);
                for (size_t u = 0; u < eff; ++u) {
                    sr[u] = std::exp(sr[u] - maxv);
                    denom += sr[u];
                }
                T inv = T(1) / denom;
                for (size_t u = 0; u < eff; ++u) sr[u] *= inv;
            }

            if (drop) {
                // probs_d holds dropout factors; effective attention weights
                // are probs .* probs_d, formed on the fly.
                fill_dropout(lc.probs_d[a], eff, eff, config.dropout_prob, rng);
            }
            for (size_t t = 0; t < eff; ++t) {
                T* ctx = lc.ctx.row(t) + off;
                for (size_t c = 0; c < D; ++c) ctx[c] = T(0);
                const T* pr = probs.row(t);
                const T* fr = drop ? lc.probs_d[a].row(t) : nullptr;
                for (size_t u = 0; u < eff; ++u) {
                    T w = drop ? pr[u] * fr[u] : pr[u];
                    if (w == T(0)) continue;
                    const T* vr = lc.v.row(u) + off;
                    for (size_t c = 0; c < D; ++c) ctx[c] += w * vr[c];
                }
            }
        }

        Mat<T> proj;
        matmul_nn(lc.ctx, lp.wo, proj);
        add_bias(proj, lp.bo);
        if (drop) {
            fill_dropout(lc.attn_drop, eff, H, config.dropout_prob, rng);
            apply_mask_inplace(proj, lc.attn_drop);
        }
        lc.r1 = Mat<T>(eff, H);
        for (size_t i = 0; i < lc.r1.v.size(); ++i) lc.r1.v[i] = lc.x_in.v[i] + proj.v[i];
        layernorm_forward(lc.r1, lp.ln1_g, lp.ln1_b, lc.y, lc.ln1);

        matmul_nn(lc.y, lp.ff1, lc.ff1_pre);
        add_bias(lc.ff1_pre, lp.ff1_b);
        lc.ff_act = Mat<T>(eff, lc.ff1_pre.cols);
        for (size_t i = 0; i < lc.ff_act.v.size(); ++i) lc.ff_act.v[i] = gelu(lc.ff1_pre.v[i]);

        Mat<T> ff2_out;
        matmul_nn(lc.ff_act, lp.ff2, ff2_out);
        add_bias(ff2_out, lp.ff2_b);
        if (drop) {
            fill_dropout(lc.ff_drop, eff, H, config.dropout_prob, rng);
            apply_mask_inplace(ff2_out, lc.ff_drop);
        }
        lc.r2 = Mat<T>(eff, H);
        for (size_t i = 0; i < lc.r2.v.size(); ++i) lc.r2.v[i] = lc.y.v[i] + ff2_out.v[i];

        Mat<T>& out = (l + 1 < config.hidden_layers) ? cache.layers[l + 1].x_in : cache.hidden;
        layernorm_forward(lc.r2, lp.ln2_g, lp.ln2_b, out, lc.ln2);
        x = &out;
    }
    if (config.hidden_layers == 0) cache.hidden = cache.x0;

    // Pooler: tanh(W' * hidden[CLS]).
    cache.pooled_pre.assign(H, T(0));
    const T* h0 = cache.hidden.row(0);
    for (size_t i = 0; i < H; ++i) {
        const T* wrow = params.pooler_w.row(i);
        T hi = h0[i];
        if (hi == T(0)) continue;
        for (size_t o = 0; o < H; ++o) cache.pooled_pre[o] += hi * wrow[o];
    }
    cache.pooled.assign(H, T(0));
    for (size_t o = 0; o < H; ++o) {
        cache.pooled_pre[o] += params.pooler_b[o];
        cache.pooled[o] = std::tanh(cache.pooled_pre[o]);
    }
}

template <typename T>
EncoderOutput<T> forward_encoder(const Params<T>& params, const Config& config,
                                 const ModelInput& input, bool train_mode, uint64_t dropout_seed) {
    ForwardCache<T> cache;
    forward_cached(params, config, input, train_mode, dropout_seed, cache);
    EncoderOutput<T> out;
    out.hidden = Mat<T>(input.ids.size(), config.hidden_size);
    for (size_t t = 0; t < cache.eff_len; ++t) {
        const T* src = cache.hidden.row(t);
        T* dst = out.hidden.row(t);
        std::copy(src, src + config.hidden_size, dst);
    }
    out.pooled = cache.pooled;
    return out;
}

// ---------------------------------------------------------------------------
// Heads and losses
// ---------------------------------------------------------------------------

template <typename T>
Mat<T> mlm_logits(const Params<T>& params, const Config& config, const Mat<T>& hidden,
                  const std::vector<int32_t>& positions) {
    const size_t H = config.hidden_size;
    const size_t V = config.vocab_size;
    Mat<T> logits(positions.size(), V);
    for (size_t i = 0; i < positions.size(); ++i) {
        int32_t pos = positions[i];
        if (pos < 0 || static_cast<size_t>(pos) >= hidden.rows)
            throw ContractViolation("mlm position out of range");
        const T* h = hidden.row(pos);
        T* lr = logits.row(i);
        for (size_t v = 0; v < V; ++v) {
            const T* e = params.tok_emb.row(v);
            T s = params.mlm_bias[v];
            for (size_t c = 0; c < H; ++c) s += h[c] * e[c];
            lr[v] = s;
        }
    }
    return logits;
}

template <typename T>
std::array<T, 2> nsp_logits(const Params<T>& params, const std::vector<T>& pooled) {
    std::array<T, 2> out{params.nsp_b[0], params.nsp_b[1]};
    for (size_t h = 0; h < pooled.size(); ++h) {
        const T* w = params.nsp_w.row(h);
        out[0] += pooled[h] * w[0];
        out[1] += pooled[h] * w[1];
    }
    return out;
}

template <typename T>
std::vector<T> cls_logits(const Params<T>& params, const Config& config,
                          const std::vector<T>& pooled, bool train_mode, uint64_t dropout_seed) {
    const size_t C = config.output_classes;
    std::vector<T> out(params.cls_b.begin(), params.cls_b.end());
    std::vector<T> p = pooled;
    if (train_mode && config.dropout_prob > 0.0) {
        Rng rng(mix_seed(dropout_seed, 0xc150));
        const T keep = static_cast<T>(1.0 / (1.0 - config.dropout_prob));
        for (T& x : p) x = (rng.uniform() < config.dropout_prob) ? T(0) : x * keep;
    }
    for (size_t h = 0; h < p.size(); ++h) {
        if (p[h] == T(0)) continue;
        const T* w = params.cls_w.row(h);
        for (size_t c = 0; c < C; ++c) out[c] += p[h] * w[c];
    }
    return out;
}

template <typename T>
T cross_entropy(const T* logits, size_t n, int32_t target) {
    if (target < 0 || static_cast<size_t>(target) >= n)
        throw ContractViolation("cross_entropy target out of range");
    T maxv = logits[0];
    for (size_t i = 1; i < n; ++i) maxv = std::max(maxv, logits[i]);
    T denom = T(0);
    for (size_t i = 0; i < n; ++i) denom += std::exp(logits[i] - maxv);
    return std::log(denom) - (logits[target] - maxv);
}

template <typename T>
T cross_entropy(const std::vector<T>& logits, int32_t target) {
    return cross_entropy(logits.data(), logits.size(), target);
}

template <typename T>
T cross_entropy_mean(const Mat<T>& logits, const std::vector<int32_t>& targets) {
    if (logits.rows != targets.size())
        throw ContractViolation("cross_entropy_mean length mismatch");
    if (logits.rows == 0) return T(0);
    T sum = T(0);
    for (size_t r = 0; r < logits.rows; ++r)
        sum += cross_entropy(logits.row(r), logits.cols, targets[r]);
    return sum / static_cast<T>(logits.rows);
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
    std::vector<T> p(logits.size());
    T maxv = logits[0];
    for (T x : logits) maxv = std::max(maxv, x);
    T denom = T(0);
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - maxv);
        denom += p[i];
    }
    for (T& x : p) x /= denom;
    return p;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

// dX += dY * W^T, dW += X^T * dY, db += colsum(dY).
template <typename T>
void linear_backward(const Mat<T>& x, const Mat<T>& w, const Mat<T>& dy, Mat<T>& dx_acc,
                     Mat<T>& dw, std::vector<T>& db) {
    Mat<T> dx;
    matmul_nt(dy, w, dx);  // w is in x out; dy (L x out) * w^T -> L x in
    for (size_t i = 0; i < dx.v.size(); ++i) dx_acc.v[i] += dx.v[i];
    matmul_tn_acc(x, dy, dw);
    for (size_t r = 0; r < dy.rows; ++r) {
        const T* row = dy.row(r);
        for (size_t c = 0; c < dy.cols; ++c) db[c] += row[c];
    }
}

template <typename T>
struct ExampleStats {
    T mlm_sum = T(0);  // summed per-position loss
    T nsp = T(0);
    T cls = T(0);
    size_t mlm_count = 0;
    bool has_nsp = false;
    bool has_cls = false;
};

// Forward + backward for one example. Head losses are scaled by the
// batch-level normalizers so accumulated gradients match the mean losses.
template <typename T>
ExampleStats<T> example_backward(const Params<T>& params, const Config& config,
                                 const ModelInput& input, Heads heads, bool train_mode,
                                 uint64_t dropout_seed, double mlm_norm, double nsp_norm,
                                 double cls_norm, Params<T>& g) {
    ExampleStats<T> stats;
    ForwardCache<T> cache;
    forward_cached(params, config, input, train_mode, dropout_seed, cache);

    const size_t H = config.hidden_size;
    const size_t eff = cache.eff_len;
    const size_t nh = config.attention_heads;
    const size_t D = config.head_dim();
    const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(D));
    const bool drop = train_mode && config.dropout_prob > 0.0;

    Mat<T> dhidden(eff, H);
    std::vector<T> dpooled(H, T(0));

    // --- masked LM head (weight-tied) ---
    if (heads.mlm && !input.masked_positions.empty()) {
        const size_t V = config.vocab_size;
        std::vector<T> logits(V), probs(V);
        for (size_t i = 0; i < input.masked_positions.size(); ++i) {
            int32_t pos = input.masked_positions[i];
            int32_t target = input.masked_targets[i];
            if (target < 0 || target >= static_cast<int32_t>(V))
                throw ContractViolation("mlm target out of range");
            const T* h = cache.hidden.row(pos);
            for (size_t v = 0; v < V; ++v) {
                const T* e = params.tok_emb.row(v);
                T s = params.mlm_bias[v];
                for (size_t c = 0; c < H; ++c) s += h[c] * e[c];
                logits[v] = s;
            }
            stats.mlm_sum += cross_entropy(logits.data(), V, target);
            stats.mlm_count++;

            T maxv = logits[0];
            for (T x : logits) maxv = std::max(maxv, x);
            T denom = T(0);
            for (size_t v = 0; v < V; ++v) {
                probs[v] = std::exp(logits[v] - maxv);
                denom += probs[v];
            }
            T inv = T(1) / denom;
            T* dh = dhidden.row(pos);
            const T scale = static_cast<T>(mlm_norm);
            for (size_t v = 0; v < V; ++v) {
                T dl = (probs[v] * inv - (static_cast<int32_t>(v) == target ? T(1) : T(0))) * scale;
                if (dl == T(0)) continue;
                const T* e = params.tok_emb.row(v);
                T* de = g.tok_emb.row(v);
                for (size_t c = 0; c < H; ++c) {
                    dh[c] += dl * e[c];
                    de[c] += dl * h[c];
                }
                g.mlm_bias[v] += dl;
            }
        }
    }

    // --- next-command head ---
    if (heads.nsp && input.pair_label) {
        auto logits = nsp_logits(params, cache.pooled);
        int32_t target = *input.pair_label;
        stats.nsp = cross_entropy(logits.data(), 2, target);
        stats.has_nsp = true;
        T m = std::max(logits[0], logits[1]);
        T e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
        T inv = T(1) / (e0 + e1);
        T d0 = (e0 * inv - (target == 0 ? T(1) : T(0))) * static_cast<T>(nsp_norm);
        T d1 = (e1 * inv - (target == 1 ? T(1) : T(0))) * static_cast<T>(nsp_norm);
        for (size_t h = 0; h < H; ++h) {
            const T* w = params.nsp_w.row(h);
            dpooled[h] += w[0] * d0 + w[1] * d1;
            T* dw = g.nsp_w.row(h);
            dw[0] += cache.pooled[h] * d0;
            dw[1] += cache.pooled[h] * d1;
        }
        g.nsp_b[0] += d0;
        g.nsp_b[1] += d1;
    }

    // --- classification head (dropout on pooled in train mode) ---
    if (heads.cls && input.class_label) {
        const size_t C = config.output_classes;
        std::vector<T> pooled_d = cache.pooled;
        std::vector<T> factors(H, T(1));
        if (drop) {
            Rng crng(mix_seed(dropout_seed, 0xc150));
            const T keep = static_cast<T>(1.0 / (1.0 - config.dropout_prob));
            for (size_t h = 0; h < H; ++h) {
                factors[h] = (crng.uniform() < config.dropout_prob) ? T(0) : keep;
                pooled_d[h] *= factors[h];
            }
        }
        std::vector<T> logits(params.cls_b.begin(), params.cls_b.end());
        for (size_t h = 0; h < H; ++h) {
            if (pooled_d[h] == T(0)) continue;
            const T* w = params.cls_w.row(h);
            for (size_t c = 0; c < C; ++c) logits[c] += pooled_d[h] * w[c];
        }
        int32_t target = *input.class_label;
        stats.cls = cross_entropy(logits.data(), C, target);
        stats.has_cls = true;
        std::vector<T> p = softmax(logits);
        std::vector<T> dl(C);
        for (size_t c = 0; c < C; ++c)
            dl[c] = (p[c] - (static_cast<int32_t>(c) == target ? T(1) : T(0))) *
                    static_cast<T>(cls_norm);
        for (size_t h = 0; h < H; ++h) {
            const T* w = params.cls_w.row(h);
            T* dw = g.cls_w.row(h);
            T acc = T(0);
            for (size_t c = 0; c < C; ++c) {
                acc += w[c] * dl[c];
                dw[c] += pooled_d[h] * dl[c];
            }
            dpooled[h] += acc * factors[h];
        }
        for (size_t c = 0; c < C; ++c) g.cls_b[c] += dl[c];
    }

    // --- pooler backward ---
    {
        const T* h0 = cache.hidden.row(0);
        std::vector<T> dpre(H);
        for (size_t o = 0; o < H; ++o) {
            T t = cache.pooled[o];
            dpre[o] = dpooled[o] * (T(1) - t * t);
            g.pooler_b[o] += dpre[o];
        }
        T* dh0 = dhidden.row(0);
        for (size_t i = 0; i < H; ++i) {
            const T* w = params.pooler_w.row(i);
            T* dw = g.pooler_w.row(i);
            T acc = T(0);
            for (size_t o = 0; o < H; ++o) {
                acc += w[o] * dpre[o];
                dw[o] += h0[i] * dpre[o];
            }
            dh0[i] += acc;
        }
    }

    // --- transformer layers, last to first ---
    Mat<T> dout = std::move(dhidden);
    for (int l = config.hidden_layers - 1; l >= 0; --l) {
        const LayerCache<T>& lc = cache.layers[l];
        const LayerParams<T>& lp = params.layers[l];
        LayerParams<T>& gl = g.layers[l];

        // ln2
        Mat<T> dr2;
        layernorm_backward(dout, lc.ln2, lp.ln2_g, dr2, gl.ln2_g, gl.ln2_b);

        // residual: r2 = y + dropout(ff2_out)
        Mat<T> dff2_out = dr2;
        if (drop) apply_mask_inplace(dff2_out, lc.ff_drop);
        Mat<T> dy = dr2;  // residual branch

        // ff2
        Mat<T> dff_act(eff, lc.ff_act.cols);
        dff_act.zero();
        linear_backward(lc.ff_act, lp.ff2, dff2_out, dff_act, gl.ff2, gl.ff2_b);

        // gelu
        Mat<T> dff1_pre(eff, lc.ff1_pre.cols);
        for (size_t i = 0; i < dff1_pre.v.size(); ++i)
            dff1_pre.v[i] = dff_act.v[i] * gelu_grad(lc.ff1_pre.v[i]);

        // ff1
        linear_backward(lc.y, lp.ff1, dff1_pre, dy, gl.ff1, gl.ff1_b);

        // ln1
        Mat<T> dr1;
        layernorm_backward(dy, lc.ln1, lp.ln1_g, dr1, gl.ln1_g, gl.ln1_b);

        // residual: r1 = x_in + dropout(proj)
        Mat<T> dproj = dr1;
        if (drop) apply_mask_inplace(dproj, lc.attn_drop);
        Mat<T> dx = dr1;  // residual branch

        // output projection
        Mat<T> dctx(eff, H);
        dctx.zero();
        linear_backward(lc.ctx, lp.wo, dproj, dctx, gl.wo, gl.bo);

        // attention heads
        Mat<T> dq(eff, H), dk(eff, H), dv(eff, H);
        dq.zero();
        dk.zero();
        dv.zero();
        Mat<T> dprobs(eff, eff), dscores(eff, eff);
        for (size_t a = 0; a < nh; ++a) {
            const size_t off = a * D;
            const Mat<T>& probs = lc.probs[a];
            const Mat<T>* fmat = drop ? &lc.probs_d[a] : nullptr;

            for (size_t t = 0; t < eff; ++t) {
                const T* dc = dctx.row(t) + off;
                const T* pr = probs.row(t);
                const T* fr = fmat ? fmat->row(t) : nullptr;
                T* dpr = dprobs.row(t);
                for (size_t u = 0; u < eff; ++u) {
                    const T* vr = lc.v.row(u) + off;
                    T w = fr ? pr[u] * fr[u] : pr[u];
                    T dot = T(0);
                    for (size_t c = 0; c < D; ++c) dot += dc[c] * vr[c];
                    // d(effective prob); map back through the dropout factor.
                    dpr[u] = fr ? dot * fr[u] : dot;
                    if (w != T(0)) {
                        T* dvr = dv.row(u) + off;
                        for (size_t c = 0; c < D; ++c) dvr[c] += w * dc[c];
                    }
                }
            }
            // softmax backward per row
            for (size_t t = 0; t < eff; ++t) {
                const T* pr = probs.row(t);
                const T* dpr = dprobs.row(t);
                T dotsum = T(0);
                for (size_t u = 0; u < eff; ++u) dotsum += pr[u] * dpr[u];
                T* dsr = dscores.row(t);
                for (size_t u = 0; u < eff; ++u) dsr[u] = pr[u] * (dpr[u] - dotsum);
            }
            // scores = q k^T / sqrt(D)
            for (size_t t = 0; t < eff; ++t) {
                const T* dsr = dscores.row(t);
                const T* qr = lc.q.row(t) + off;
                T* dqr = dq.row(t) + off;
                for (size_t u = 0; u < eff; ++u) {
                    T s = dsr[u] * inv_sqrt_d;
                    if (s == T(0)) continue;
                    const T* kr = lc.k.row(u) + off;
                    T* dkr = dk.row(u) + off;
                    for (size_t c = 0; c < D; ++c) {
                        dqr[c] += s * kr[c];
                        dkr[c] += s * qr[c];
                    }
                }
            }
        }

        linear_backward(lc.x_in, lp.wq, dq, dx, gl.wq, gl.bq);
        linear_backward(lc.x_in, lp.wk, dk, dx, gl.wk, gl.bk);
        linear_backward(lc.x_in, lp.wv, dv, dx, gl.wv, gl.bv);

        dout = std::move(dx);
    }

    // --- embeddings ---
    if (drop) apply_mask_inplace(dout, cache.emb_drop);
    Mat<T> demb;
    layernorm_backward(dout, cache.emb_ln, params.emb_ln_g, demb, g.emb_ln_g, g.emb_ln_b);
    for (size_t t = 0; t < eff; ++t) {
        const T* d = demb.row(t);
        T* dtok = g.tok_emb.row(input.ids[t]);
        T* dpos = g.pos_emb.row(t);
        T* dseg = g.seg_emb.row(input.segments[t]);
        for (size_t c = 0; c < H; ++c) {
            dtok[c] += d[c];
            dpos[c] += d[c];
            dseg[c] += d[c];
        }
    }
    return stats;
}

}  // namespace

template <typename T>
BatchStats<T> backward(const Params<T>& params, const Config& config,
                       const std::vector<ModelInput>& batch, Heads heads, bool train_mode,
                       uint64_t dropout_seed, Params<T>& grads, int threads) {
    BatchStats<T> stats;
    stats.examples = batch.size();
    if (batch.empty()) return stats;

    size_t mlm_total = 0, nsp_total = 0, cls_total = 0;
    for (const ModelInput& in : batch) {
        if (heads.mlm) mlm_total += in.masked_positions.size();
        if (heads.nsp && in.pair_label) nsp_total++;
        if (heads.cls && in.class_label) cls_total++;
    }
    const double mlm_norm = mlm_total ? 1.0 / static_cast<double>(mlm_total) : 0.0;
    const double nsp_norm = nsp_total ? 1.0 / static_cast<double>(nsp_total) : 0.0;
    const double cls_norm = cls_total ? 1.0 / static_cast<double>(cls_total) : 0.0;

    auto run_range = [&](size_t begin, size_t end, Params<T>& g, BatchStats<T>& s) {
        for (size_t i = begin; i < end; ++i) {
            ExampleStats<T> es =
                example_backward(params, config, batch[i], heads, train_mode,
                                 mix_seed(dropout_seed, i), mlm_norm, nsp_norm, cls_norm, g);
            s.mlm += es.mlm_sum;
            s.mlm_positions += es.mlm_count;
            if (es.has_nsp) s.nsp += es.nsp;
            if (es.has_cls) s.cls += es.cls;
        }
    };

    int n_threads = std::max(1, threads);
    n_threads = static_cast<int>(std::min<size_t>(n_threads, batch.size()));
    if (n_threads == 1) {
        run_range(0, batch.size(), grads, stats);
    } else {
        std::vector<Params<T>> partial(n_threads - 1);
        for (auto& p : partial) p = zero_params<T>(config);
        std::vector<BatchStats<T>> pstats(n_threads);
        std::vector<std::thread> pool;
        size_t chunk = (batch.size() + n_threads - 1) / n_threads;
        for (int w = 1; w < n_threads; ++w) {
            size_t b = std::min(batch.size(), w * chunk);
            size_t e = std::min(batch.size(), (w + 1) * chunk);
            pool.emplace_back([&, w, b, e] { run_range(b, e, partial[w - 1], pstats[w]); });
        }
        run_range(0, std::min(batch.size(), chunk), grads, pstats[0]);
        for (auto& t : pool) t.join();
        // Ordered reduction keeps results deterministic for a fixed thread count.
        auto dst = grads.tensor_refs();
        for (int w = 1; w < n_threads; ++w) {
            auto src = partial[w - 1].tensor_refs();
            for (size_t k = 0; k < dst.size(); ++k)
                for (size_t i = 0; i < dst[k].size(); ++i) dst[k].data[i] += src[k].data[i];
        }
        for (int w = 0; w < n_threads; ++w) {
            stats.mlm += pstats[w].mlm;
            stats.nsp += pstats[w].nsp;
            stats.cls += pstats[w].cls;
            stats.mlm_positions += pstats[w].mlm_positions;
        }
    }

    if (mlm_total) stats.mlm /= static_cast<T>(mlm_total);
    if (nsp_total) stats.nsp /= static_cast<T>(nsp_total);
    if (cls_total) stats.cls /= static_cast<T>(cls_total);
    stats.total = stats.mlm + stats.nsp + stats.cls;
    return stats;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
AdamState<T> make_adam_state(Params<T>& params) {
    AdamState<T> s;
    for (const auto& ref : params.tensor_refs()) {
        s.m.emplace_back(ref.size(), T(0));
        s.v.emplace_back(ref.size(), T(0));
    }
    return s;
}

template <typename T>
void adam_step(Params<T>& params, Params<T>& grads, AdamState<T>& state, double learning_rate,
               double beta1, double beta2, double eps) {
    auto prefs = params.tensor_refs();
    auto grefs = grads.tensor_refs();
    if (state.m.size() != prefs.size()) throw TrainingError("adam state shape mismatch");

    // Validate before touching anything so a diverged step cannot leave the
    // parameters half-updated.
    for (size_t k = 0; k < grefs.size(); ++k) {
        const T* gptr = grefs[k].data;
        const size_t n = grefs[k].size();
        for (size_t i = 0; i < n; ++i)
            if (!std::isfinite(static_cast<double>(gptr[i])))
                throw TrainingError("non-finite gradient in tensor '" + grefs[k].name + "'");
    }

    state.step++;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

    for (size_t k = 0; k < prefs.size(); ++k) {
        T* p = prefs[k].data;
        const T* gptr = grefs[k].data;
        T* m = state.m[k].data();
        T* v = state.v[k].data();
        const size_t n = prefs[k].size();
        for (size_t i = 0; i < n; ++i) {
            double gd = static_cast<double>(gptr[i]);
            double md = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gd;
            double vd = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gd * gd;
            m[i] = static_cast<T>(md);
            v[i] = static_cast<T>(vd);
            double mhat = md / bc1;
            double vhat = vd / bc2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) -
                                  learning_rate * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

uint64_t fnv1a(const void* data, size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 14695981039346656037ULL;
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

#define CMDRISK_INSTANTIATE(T)                                                                   \
    template struct Params<T>;                                                                   \
    template Params<T> zero_params<T>(const Config&);                                           \
    template Params<T> init_params<T>(const Config&, uint64_t);                                 \
    template void forward_cached<T>(const Params<T>&, const Config&, const ModelInput&, bool,   \
                                    uint64_t, ForwardCache<T>&);                                \
    template EncoderOutput<T> forward_encoder<T>(const Params<T>&, const Config&,               \
                                                 const ModelInput&, bool, uint64_t);            \
    template Mat<T> mlm_logits<T>(const Params<T>&, const Config&, const Mat<T>&,               \
                                  const std::vector<int32_t>&);                                 \
    template std::array<T, 2> nsp_logits<T>(const Params<T>&, const std::vector<T>&);           \
    template std::vector<T> cls_logits<T>(const Params<T>&, const Config&, const std::vector<T>&, \
                                          bool, uint64_t);                                      \
    template T cross_entropy<T>(const T*, size_t, int32_t);                                     \
    template T cross_entropy<T>(const std::vector<T>&, int32_t);                                \
    template T cross_entropy_mean<T>(const Mat<T>&, const std::vector<int32_t>&);               \
    template std::vector<T> softmax<T>(const std::vector<T>&);                                  \
    template BatchStats<T> backward<T>(const Params<T>&, const Config&,                         \
                                       const std::vector<ModelInput>&, Heads, bool, uint64_t,   \
                                       Params<T>&, int);                                        \
    template AdamState<T> make_adam_state<T>(Params<T>&);                                       \
    template void adam_step<T>(Params<T>&, Params<T>&, AdamState<T>&, double, double, double,   \
                               double);

CMDRISK_INSTANTIATE(float)
CMDRISK_INSTANTIATE(double)

#undef CMDRISK_INSTANTIATE

}  // namespace cmdrisk::model
