#pragma once

// Independent reference implementations used only by tests. These
// deliberately avoid the production code paths: counts are redone from
// scratch, merges are applied rule by rule, and the toy transformer below is
// a straight-line double-precision evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmdrisk/bpe.hpp"
#include "cmdrisk/input.hpp"
#include "cmdrisk/model.hpp"
#include "cmdrisk/risk.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// BPE
// ---------------------------------------------------------------------------

struct NaiveMerge {
    std::string left_bytes;
    std::string right_bytes;
};

// From-scratch greedy BPE: recounts every pair at every step. Tie-break on
// smallest (left-bytes, right-bytes).
inline std::vector<NaiveMerge> naive_train_bpe(const std::vector<std::string>& corpus,
                                               size_t merge_budget) {
    std::vector<std::vector<std::string>> seqs;
    for (const std::string& s : corpus) {
        std::vector<std::string> toks;
        for (char c : s) toks.push_back(std::string(1, c));
        seqs.push_back(std::move(toks));
    }

    std::vector<NaiveMerge> merges;
    for (size_t step = 0; step < merge_budget; ++step) {
        std::map<std::pair<std::string, std::string>, int64_t> counts;
        for (const auto& t : seqs)
            for (size_t i = 0; i + 1 < t.size(); ++i) counts[{t[i], t[i + 1]}]++;

        std::pair<std::string, std::string> best;
        int64_t best_count = 1;
        for (const auto& [p, c] : counts) {
            if (c > best_count || (c == best_count && best_count >= 2 && p < best)) {
                best = p;
                best_count = c;
            }
        }
        if (best_count < 2) break;

        std::string merged = best.first + best.second;
        for (auto& t : seqs) {
            std::vector<std::string> nt;
            for (size_t i = 0; i < t.size();) {
                if (i + 1 < t.size() && t[i] == best.first && t[i + 1] == best.second) {
                    nt.push_back(merged);
                    i += 2;
                } else {
                    nt.push_back(t[i++]);
                }
            }
            t = std::move(nt);
        }
        merges.push_back(NaiveMerge{best.first, best.second});
    }
    return merges;
}

// Applies the learned merges one at a time over the whole byte sequence.
inline std::vector<int32_t> naive_encode(const cmdrisk::bpe::Vocabulary& vocab,
                                         const std::string& text) {
    std::vector<int32_t> toks;
    for (unsigned char c : text) toks.push_back(static_cast<int32_t>(c));
    for (const auto& m : vocab.merges()) {
        std::vector<int32_t> nt;
        for (size_t i = 0; i < toks.size();) {
            if (i + 1 < toks.size() && toks[i] == m.left && toks[i + 1] == m.right) {
                nt.push_back(m.result);
                i += 2;
            } else {
                nt.push_back(toks[i++]);
            }
        }
        toks = std::move(nt);
    }
    return toks;
}

// ---------------------------------------------------------------------------
// Metrics (brute-force tallies)
// ---------------------------------------------------------------------------

struct BruteMetrics {
    bool has_precision = false, has_recall = false, has_f1 = false;
    double precision = 0, recall = 0, f1 = 0;
};

inline BruteMetrics brute_class_metrics(const std::vector<cmdrisk::RiskClass>& gold,
                                        const std::vector<cmdrisk::RiskClass>& pred,
                                        cmdrisk::RiskClass cls) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
        if (pred[i] == cls && gold[i] == cls) tp++;
        if (pred[i] == cls && gold[i] != cls) fp++;
        if (pred[i] != cls && gold[i] == cls) fn++;
    }
    BruteMetrics m;
    if (tp + fp > 0) {
        m.has_precision = true;
        m.precision = double(tp) / double(tp + fp);
    }
    if (tp + fn > 0) {
        m.has_recall = true;
        m.recall = double(tp) / double(tp + fn);
    }
    if (m.has_precision && m.has_recall && tp > 0) {
        m.has_f1 = true;
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

inline BruteMetrics brute_micro_positive(const std::vector<cmdrisk::RiskClass>& gold,
                                         const std::vector<cmdrisk::RiskClass>& pred) {
    auto positive = [](cmdrisk::RiskClass c) {
        return c == cmdrisk::RiskClass::RISKY || c == cmdrisk::RiskClass::BLOCKED;
    };
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
        if (positive(gold[i]) && gold[i] == pred[i]) {
            tp++;
        } else {
            if (positive(gold[i])) fn++;
            if (positive(pred[i]) && pred[i] != gold[i]) fp++;
        }
    }
    BruteMetrics m;
    if (tp + fp > 0) {
        m.has_precision = true;
        m.precision = double(tp) / double(tp + fp);
    }
    if (tp + fn > 0) {
        m.has_recall = true;
        m.recall = double(tp) / double(tp + fn);
    }
    if (m.has_precision && m.has_recall && tp > 0) {
        m.has_f1 = true;
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Reference transformer forward (double, straight-line, eval mode)
// ---------------------------------------------------------------------------

using DVec = std::vector<double>;
using DMat = std::vector<std::vector<double>>;

inline DVec ref_layernorm(const DVec& x, const DVec& g, const DVec& b) {
    size_t n = x.size();
    double mean = 0;
    for (double v : x) mean += v;
    mean /= double(n);
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= double(n);
    double rstd = 1.0 / std::sqrt(var + 1e-12);
    DVec y(n);
    for (size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * rstd * g[i] + b[i];
    return y;
}

// Evaluates the encoder over the full padded length, masking padded keys.
// Organized completely differently from the production code: per-position
// vectors, no effective-length shortcut, everything in double.
template <typename T>
inline std::pair<DMat, DVec> ref_forward(const cmdrisk::model::Params<T>& p,
                                         const cmdrisk::model::Config& cfg,
                                         const cmdrisk::ModelInput& in) {
    const size_t L = in.ids.size();
    const size_t H = cfg.hidden_size;
    const size_t nh = cfg.attention_heads;
    const size_t D = H / nh;

    auto row_of = [&](const cmdrisk::Mat<T>& m, size_t r) {
        DVec v(m.cols);
        for (size_t c = 0; c < m.cols; ++c) v[c] = double(m.at(r, c));
        return v;
    };
    auto vec_of = [&](const std::vector<T>& src) {
        DVec v(src.size());
        for (size_t i = 0; i < src.size(); ++i) v[i] = double(src[i]);
        return v;
    };

    DVec emb_g = vec_of(p.emb_ln_g), emb_b = vec_of(p.emb_ln_b);
    DMat x(L);
    for (size_t t = 0; t < L; ++t) {
        DVec e(H, 0.0);
        DVec tok = row_of(p.tok_emb, in.ids[t]);
        DVec pos = row_of(p.pos_emb, t);
        DVec seg = row_of(p.seg_emb, in.segments[t]);
        for (size_t c = 0; c < H; ++c) e[c] = tok[c] + pos[c] + seg[c];
        x[t] = ref_layernorm(e, emb_g, emb_b);
    }

    for (int l = 0; l < cfg.hidden_layers; ++l) {
        const auto& ly = p.layers[l];
        // projections
        DMat q(L, DVec(H, 0)), k(L, DVec(H, 0)), v(L, DVec(H, 0));
        for (size_t t = 0; t < L; ++t) {
            for (size_t o = 0; o < H; ++o) {
                double sq = double(ly.bq[o]), sk = double(ly.bk[o]), sv = double(ly.bv[o]);
                for (size_t i = 0; i < H; ++i) {
                    sq += x[t][i] * double(ly.wq.at(i, o));
                    sk += x[t][i] * double(ly.wk.at(i, o));
                    sv += x[t][i] * double(ly.wv.at(i, o));
                }
                q[t][o] = sq;
                k[t][o] = sk;
                v[t][o] = sv;
            }
        }
        DMat ctx(L, DVec(H, 0));
        for (size_t a = 0; a < nh; ++a) {
            for (size_t t = 0; t < L; ++t) {
                DVec scores(L);
                for (size_t u = 0; u < L; ++u) {
                    double s = 0;
                    for (size_t c = 0; c < D; ++c) s += q[t][a * D + c] * k[u][a * D + c];
                    s /= std::sqrt(double(D));
                    if (in.attn_mask[u] == 0) s = -1e9;
                    scores[u] = s;
                }
                double mx = *std::max_element(scores.begin(), scores.end());
                double denom = 0;
                for (size_t u = 0; u < L; ++u) {
                    scores[u] = std::exp(scores[u] - mx);
                    denom += scores[u];
                }
                for (size_t u = 0; u < L; ++u)
                    for (size_t c = 0; c < D; ++c)
                        ctx[t][a * D + c] += scores[u] / denom * v[u][a * D + c];
            }
        }
        DVec g1 = vec_of(ly.ln1_g), b1 = vec_of(ly.ln1_b);
        DVec g2 = vec_of(ly.ln2_g), b2 = vec_of(ly.ln2_b);
        for (size_t t = 0; t < L; ++t) {
            DVec proj(H, 0);
            for (size_t o = 0; o < H; ++o) {
                double s = double(ly.bo[o]);
                for (size_t i = 0; i < H; ++i) s += ctx[t][i] * double(ly.wo.at(i, o));
                proj[o] = s + x[t][o];  // residual
            }
            DVec y = ref_layernorm(proj, g1, b1);
            DVec inter(cfg.intermediate_size, 0);
            for (int o = 0; o < cfg.intermediate_size; ++o) {
                double s = double(ly.ff1_b[o]);
                for (size_t i = 0; i < H; ++i) s += y[i] * double(ly.ff1.at(i, o));
                inter[o] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
            }
            DVec out(H, 0);
            for (size_t o = 0; o < H; ++o) {
                double s = double(ly.ff2_b[o]);
                for (int i = 0; i < cfg.intermediate_size; ++i)
                    s += inter[i] * double(ly.ff2.at(i, o));
                out[o] = s + y[o];  // residual
            }
            x[t] = ref_layernorm(out, g2, b2);
        }
    }

    DVec pooled(H, 0);
    for (size_t o = 0; o < H; ++o) {
        double s = double(p.pooler_b[o]);
        for (size_t i = 0; i < H; ++i) s += x[0][i] * double(p.pooler_w.at(i, o));
        pooled[o] = std::tanh(s);
    }
    return {x, pooled};
}

}  // namespace oracles
