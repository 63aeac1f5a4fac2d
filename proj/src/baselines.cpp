#include "cmdrisk/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

#include "cmdrisk/error.hpp"
#include "cmdrisk/rng.hpp"

namespace cmdrisk::baselines {

using nlohmann::json;

std::vector<std::string> whitespace_tokens(const std::string& command) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : command) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

// ---------------------------------------------------------------------------
// Feature vocabularies
// ---------------------------------------------------------------------------

namespace {

FeatureVocab top_features(std::map<std::string, int64_t>& counts, size_t cap) {
    std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (items.size() > cap) items.resize(cap);
    std::vector<std::string> feats;
    feats.reserve(items.size());
    for (auto& [f, _] : items) feats.push_back(f);
    return FeatureVocab::from_features(std::move(feats));
}

}  // namespace

FeatureVocab FeatureVocab::from_features(std::vector<std::string> features) {
    FeatureVocab v;
    v.features_ = std::move(features);
    for (uint32_t i = 0; i < v.features_.size(); ++i) v.index_[v.features_[i]] = i;
    return v;
}

std::optional<uint32_t> FeatureVocab::index_of(const std::string& feature) const {
    auto it = index_.find(feature);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

FeatureVocab FeatureVocab::build_char_ngrams(const std::vector<std::string>& commands, int n,
                                             size_t cap) {
    if (n < 1) throw ConfigError("ngram n must be >= 1");
    std::map<std::string, int64_t> counts;
    for (const std::string& c : commands) {
        if (c.size() < static_cast<size_t>(n)) continue;
        for (size_t i = 0; i + n <= c.size(); ++i) counts[c.substr(i, n)]++;
    }
    return top_features(counts, cap);
}

FeatureVocab FeatureVocab::build_bow(const std::vector<std::string>& commands, size_t cap) {
    std::map<std::string, int64_t> counts;
    for (const std::string& c : commands)
        for (const std::string& t : whitespace_tokens(c)) counts[t]++;
    return top_features(counts, cap);
}

namespace {

SparseVec counts_to_sparse(std::map<uint32_t, float>& counts) {
    SparseVec out(counts.begin(), counts.end());
    return out;  // std::map iterates sorted by index
}

}  // namespace

SparseVec featurize_char_ngrams(const std::string& command, int n, const FeatureVocab& vocab) {
    std::map<uint32_t, float> counts;
    if (command.size() >= static_cast<size_t>(n)) {
        for (size_t i = 0; i + n <= command.size(); ++i) {
            auto idx = vocab.index_of(command.substr(i, n));
            if (idx) counts[*idx] += 1.0f;
        }
    }
    return counts_to_sparse(counts);
}

SparseVec featurize_bow(const std::string& command, const FeatureVocab& vocab) {
    std::map<uint32_t, float> counts;
    for (const std::string& t : whitespace_tokens(command)) {
        auto idx = vocab.index_of(t);
        if (idx) counts[*idx] += 1.0f;
    }
    return counts_to_sparse(counts);
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

namespace {

// p = softmax(W x + b) for one sparse sample.
void logreg_scores(const LogReg& m, const SparseVec& x, std::vector<double>& scores) {
    scores.assign(m.n_classes, 0.0);
    for (int c = 0; c < m.n_classes; ++c) {
        double s = m.b[c];
        const double* w = m.w.data() + static_cast<size_t>(c) * m.dim;
        for (const auto& [j, v] : x) s += w[j] * v;
        scores[c] = s;
    }
}

void softmax_inplace(std::vector<double>& s) {
    double mx = s[0];
    for (double v : s) mx = std::max(mx, v);
    double denom = 0.0;
    for (double& v : s) {
        v = std::exp(v - mx);
        denom += v;
    }
    for (double& v : s) v /= denom;
}

struct Objective {
    double loss;
    std::vector<double> gw;
    std::vector<double> gb;
};

double logreg_loss(const LogReg& m, const std::vector<SparseVec>& x, const std::vector<int>& y,
                   double c_reg) {
    std::vector<double> scores;
    double loss = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        logreg_scores(m, x[i], scores);
        double mx = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - mx);
        loss += std::log(denom) - (scores[y[i]] - mx);
    }
    double reg = 0.0;
    for (double w : m.w) reg += w * w;
    return loss + reg / (2.0 * c_reg);
}

void logreg_gradient(const LogReg& m, const std::vector<SparseVec>& x, const std::vector<int>& y,
                     double c_reg, std::vector<double>& gw, std::vector<double>& gb) {
    gw.assign(m.w.size(), 0.0);
    gb.assign(m.b.size(), 0.0);
    std::vector<double> p;
    for (size_t i = 0; i < x.size(); ++i) {
        logreg_scores(m, x[i], p);
        softmax_inplace(p);
        for (int c = 0; c < m.n_classes; ++c) {
            double coef = p[c] - (c == y[i] ? 1.0 : 0.0);
            if (coef == 0.0) continue;
            double* g = gw.data() + static_cast<size_t>(c) * m.dim;
            for (const auto& [j, v] : x[i]) g[j] += coef * v;
            gb[c] += coef;
        }
    }
    for (size_t k = 0; k < m.w.size(); ++k) gw[k] += m.w[k] / c_reg;
}

double norm2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (double v : a) s += v * v;
    for (double v : b) s += v * v;
    return std::sqrt(s);
}

}  // namespace

LogReg train_logreg(const std::vector<SparseVec>& x, const std::vector<int>& y, int n_classes,
                    size_t dim, double c, int max_iter, double tol) {
    if (x.size() != y.size() || x.empty()) throw TrainingError("logreg: bad training data");
    {
        std::vector<bool> seen(n_classes, false);
        int distinct = 0;
        for (int label : y) {
            if (label < 0 || label >= n_classes) throw TrainingError("logreg: label out of range");
            if (!seen[label]) {
                seen[label] = true;
                distinct++;
            }
        }
        if (distinct < 2) throw TrainingError("logreg: needs at least two classes present");
    }

    LogReg m;
    m.n_classes = n_classes;
    m.dim = dim;
    m.w.assign(static_cast<size_t>(n_classes) * dim, 0.0);
    m.b.assign(n_classes, 0.0);

    std::vector<double> gw, gb;
    double loss = logreg_loss(m, x, y, c);
    logreg_gradient(m, x, y, c, gw, gb);
    double step = 1.0 / static_cast<double>(x.size());

    for (int iter = 0; iter < max_iter; ++iter) {
        m.iterations = iter + 1;
        double gnorm = norm2(gw, gb);
        m.final_grad_norm = gnorm;
        if (gnorm < tol) {
            m.converged = true;
            return m;
        }

        // Backtracking descent step with slow regrowth.
        LogReg trial = m;
        bool accepted = false;
        while (step > 1e-14) {
            for (size_t k = 0; k < m.w.size(); ++k) trial.w[k] = m.w[k] - step * gw[k];
            for (size_t k = 0; k < m.b.size(); ++k) trial.b[k] = m.b[k] - step * gb[k];
            double trial_loss = logreg_loss(trial, x, y, c);
            if (trial_loss <= loss - 1e-4 * step * gnorm * gnorm) {
                m.w.swap(trial.w);
                m.b.swap(trial.b);
                loss = trial_loss;
                step *= 1.25;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // stalled below machine resolution
        logreg_gradient(m, x, y, c, gw, gb);
    }
    m.final_grad_norm = norm2(gw, gb);
    m.converged = m.final_grad_norm < tol;
    return m;
}

int predict_logreg(const LogReg& model, const SparseVec& x, std::vector<double>* probs) {
    std::vector<double> p;
    logreg_scores(model, x, p);
    softmax_inplace(p);
    int best = 0;
    for (int c = 1; c < model.n_classes; ++c)
        if (p[c] >= p[best]) best = c;  // ties resolve to the higher class
    if (probs) *probs = p;
    return best;
}

// ---------------------------------------------------------------------------
// Word2Vec (skip-gram, negative sampling)
// ---------------------------------------------------------------------------

Word2Vec train_word2vec(const std::vector<std::vector<std::string>>& corpus,
                        const BaselineConfig& cfg, uint64_t seed) {
    Word2Vec w2v;
    w2v.dim = cfg.w2v_dim;

    std::vector<int64_t> counts;
    int64_t total_tokens = 0;
    for (const auto& sent : corpus) {
        for (const std::string& t : sent) {
            auto it = w2v.index.find(t);
            if (it == w2v.index.end()) {
                w2v.index.emplace(t, static_cast<uint32_t>(w2v.tokens.size()));
                w2v.tokens.push_back(t);
                counts.push_back(1);
            } else {
                counts[it->second]++;
            }
            total_tokens++;
        }
    }
    if (w2v.tokens.empty()) throw TrainingError("word2vec: empty corpus");

    const size_t vocab = w2v.tokens.size();
    const int dim = cfg.w2v_dim;
    Rng rng(mix_seed(seed, 0x3272));

    w2v.win = Mat<float>(vocab, dim);
    w2v.wout = Mat<float>(vocab, dim);
    for (float& v : w2v.win.v)
        v = static_cast<float>((rng.uniform() - 0.5) / static_cast<double>(dim));

    // Unigram^0.75 negative-sampling distribution.
    std::vector<double> cum(vocab);
    double acc = 0.0;
    for (size_t i = 0; i < vocab; ++i) {
        acc += std::pow(static_cast<double>(counts[i]), 0.75);
        cum[i] = acc;
    }
    auto sample_negative = [&]() -> uint32_t {
        double r = rng.uniform() * acc;
        return static_cast<uint32_t>(
            std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
    };

    const double total_budget =
        std::max<double>(1.0, static_cast<double>(total_tokens) * cfg.w2v_epochs);
    int64_t words_done = 0;
    std::vector<float> neu1e(dim);

    for (int epoch = 0; epoch < cfg.w2v_epochs; ++epoch) {
        for (const auto& sent : corpus) {
            std::vector<uint32_t> ids;
            ids.reserve(sent.size());
            for (const std::string& t : sent) ids.push_back(w2v.index.at(t));
            for (size_t t = 0; t < ids.size(); ++t) {
                double lr = cfg.w2v_alpha_start -
                            (cfg.w2v_alpha_start - cfg.w2v_alpha_min) *
                                (static_cast<double>(words_done) / total_budget);
                lr = std::max(lr, cfg.w2v_alpha_min);
                words_done++;

                size_t reduced = 1 + rng.below(static_cast<uint64_t>(cfg.w2v_window));
                size_t lo = t >= reduced ? t - reduced : 0;
                size_t hi = std::min(ids.size() - 1, t + reduced);
                float* center = w2v.win.row(ids[t]);
                for (size_t u = lo; u <= hi; ++u) {
                    if (u == t) continue;
                    std::fill(neu1e.begin(), neu1e.end(), 0.0f);
                    for (int d = 0; d <= cfg.w2v_negatives; ++d) {
                        uint32_t target;
                        float label;
                        if (d == 0) {
                            target = ids[u];
                            label = 1.0f;
                        } else {
                            target = sample_negative();
                            if (target == ids[u]) continue;
                            label = 0.0f;
                        }
                        float* out_vec = w2v.wout.row(target);
                        double f = 0.0;
                        for (int k = 0; k < dim; ++k) f += center[k] * out_vec[k];
                        double sigma = 1.0 / (1.0 + std::exp(-std::clamp(f, -8.0, 8.0)));
                        float g = static_cast<float>((label - sigma) * lr);
                        for (int k = 0; k < dim; ++k) {
                            neu1e[k] += g * out_vec[k];
                            out_vec[k] += g * center[k];
                        }
                    }
                    for (int k = 0; k < dim; ++k) center[k] += neu1e[k];
                }
            }
        }
    }
    return w2v;
}

std::vector<float> embed_command(const Word2Vec& table, const std::string& command) {
    std::vector<float> acc(table.dim, 0.0f);
    int known = 0;
    for (const std::string& t : whitespace_tokens(command)) {
        auto it = table.index.find(t);
        if (it == table.index.end()) continue;
        const float* v = table.win.row(it->second);
        for (int k = 0; k < table.dim; ++k) acc[k] += v[k];
        known++;
    }
    if (known > 0)
        for (float& v : acc) v /= static_cast<float>(known);
    return acc;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

namespace {

struct TreeBuilder {
    const std::vector<std::vector<float>>& x;
    const std::vector<int>& y;
    int n_classes;
    int max_depth;
    int mtry;
    Rng& rng;
    Tree tree;

    int leaf(const std::vector<int>& counts) {
        int best = 0;
        for (int c = 1; c < n_classes; ++c)
            if (counts[c] >= counts[best]) best = c;  // ties go dangerous
        TreeNode node;
        node.leaf_class = best;
        tree.nodes.push_back(node);
        return static_cast<int>(tree.nodes.size() - 1);
    }

    static double gini(const std::vector<int>& counts, int total) {
        if (total == 0) return 0.0;
        double g = 1.0;
        for (int c : counts) {
            double p = static_cast<double>(c) / total;
            g -= p * p;
        }
        return g;
    }

    int build(std::vector<size_t>& idx, int depth) {
        std::vector<int> counts(n_classes, 0);
        for (size_t i : idx) counts[y[i]]++;
        int present = 0;
        for (int c : counts)
            if (c > 0) present++;
        if (present <= 1 || idx.size() < 2 || (max_depth > 0 && depth >= max_depth))
            return leaf(counts);

        const size_t d = x[0].size();
        size_t want = mtry > 0 ? static_cast<size_t>(mtry)
                               : static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
        want = std::min(want, d);
        std::vector<size_t> feats(d);
        for (size_t f = 0; f < d; ++f) feats[f] = f;
        for (size_t i = 0; i < want; ++i) {
            size_t j = i + static_cast<size_t>(rng.below(d - i));
            std::swap(feats[i], feats[j]);
        }
        feats.resize(want);

        double parent_gini = gini(counts, static_cast<int>(idx.size()));
        double best_gain = 1e-12;
        int best_feature = -1;
        float best_threshold = 0.0f;

        std::vector<std::pair<float, int>> vals;
        for (size_t f : feats) {
            vals.clear();
            for (size_t i : idx) vals.emplace_back(x[i][f], y[i]);
            std::sort(vals.begin(), vals.end());
            std::vector<int> left(n_classes, 0);
            std::vector<int> right = counts;
            for (size_t k = 0; k + 1 < vals.size(); ++k) {
                left[vals[k].second]++;
                right[vals[k].second]--;
                if (vals[k].first == vals[k + 1].first) continue;
                int nl = static_cast<int>(k + 1);
                int nr = static_cast<int>(vals.size()) - nl;
                double g = parent_gini -
                           (nl * gini(left, nl) + nr * gini(right, nr)) /
                               static_cast<double>(vals.size());
                if (g > best_gain) {
                    best_gain = g;
                    best_feature = static_cast<int>(f);
                    best_threshold = (vals[k].first + vals[k + 1].first) / 2.0f;
                }
            }
        }
        if (best_feature < 0) return leaf(counts);

        std::vector<size_t> li, ri;
        for (size_t i : idx) {
            if (x[i][best_feature] <= best_threshold)
                li.push_back(i);
            else
                ri.push_back(i);
        }
        if (li.empty() || ri.empty()) return leaf(counts);

        TreeNode node;
        node.feature = best_feature;
        node.threshold = best_threshold;
        int self = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(node);
        int l = build(li, depth + 1);
        int r = build(ri, depth + 1);
        tree.nodes[self].left = l;
        tree.nodes[self].right = r;
        return self;
    }
};

}  // namespace

RandomForest train_random_forest(const std::vector<std::vector<float>>& x,
                                 const std::vector<int>& y, int n_classes,
                                 const BaselineConfig& cfg, uint64_t seed) {
    if (x.size() != y.size() || x.empty()) throw TrainingError("forest: bad training data");
    {
        std::vector<bool> seen(n_classes, false);
        int distinct = 0;
        for (int label : y)
            if (!seen[label]) {
                seen[label] = true;
                distinct++;
            }
        if (distinct < 2) throw TrainingError("forest: needs at least two classes present");
    }

    RandomForest forest;
    forest.n_classes = n_classes;
    forest.trees.reserve(cfg.forest_trees);
    for (int t = 0; t < cfg.forest_trees; ++t) {
        Rng rng(mix_seed(seed, 0xf0e57, static_cast<uint64_t>(t)));
        std::vector<size_t> idx;
        idx.reserve(x.size());
        if (cfg.forest_bootstrap) {
            for (size_t i = 0; i < x.size(); ++i) idx.push_back(rng.below(x.size()));
        } else {
            for (size_t i = 0; i < x.size(); ++i) idx.push_back(i);
        }
        TreeBuilder builder{x, y, n_classes, cfg.forest_max_depth, cfg.forest_mtry, rng, Tree{}};
        builder.build(idx, 0);
        forest.trees.push_back(std::move(builder.tree));
    }
    return forest;
}

int predict_tree(const Tree& tree, const std::vector<float>& x) {
    int node = 0;
    for (;;) {
        const TreeNode& n = tree.nodes[node];
        if (n.feature < 0) return n.leaf_class;
        node = x[n.feature] <= n.threshold ? n.left : n.right;
    }
}

int predict_forest(const RandomForest& forest, const std::vector<float>& x,
                   std::vector<double>* vote_fractions) {
    std::vector<int> votes(forest.n_classes, 0);
    for (const Tree& t : forest.trees) votes[predict_tree(t, x)]++;
    int best = 0;
    for (int c = 1; c < forest.n_classes; ++c)
        if (votes[c] >= votes[best]) best = c;  // ties go dangerous
    if (vote_fractions) {
        vote_fractions->assign(forest.n_classes, 0.0);
        for (int c = 0; c < forest.n_classes; ++c)
            (*vote_fractions)[c] =
                static_cast<double>(votes[c]) / static_cast<double>(forest.trees.size());
    }
    return best;
}

// ---------------------------------------------------------------------------
// Composed risk baselines
// ---------------------------------------------------------------------------

const char* to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::NgramLogReg: return "ngram-lr";
        case BaselineKind::BowLogReg: return "bow-lr";
        case BaselineKind::Word2VecForest: return "w2v-rf";
    }
    return "?";
}

BaselineKind baseline_kind_from_string(const std::string& s) {
    if (s == "ngram-lr" || s == "ngram" || s == "3gram") return BaselineKind::NgramLogReg;
    if (s == "bow-lr" || s == "bow") return BaselineKind::BowLogReg;
    if (s == "w2v-rf" || s == "word2vec") return BaselineKind::Word2VecForest;
    throw ConfigError("unknown baseline kind '" + s + "'");
}

BaselinePrediction BaselineModel::predict(const std::string& command) const {
    BaselinePrediction out;
    std::vector<double> probs;
    int cls = 0;
    switch (kind) {
        case BaselineKind::NgramLogReg: {
            SparseVec f = featurize_char_ngrams(command, config.ngram_n, features);
            cls = predict_logreg(logreg, f, &probs);
            break;
        }
        case BaselineKind::BowLogReg: {
            SparseVec f = featurize_bow(command, features);
            cls = predict_logreg(logreg, f, &probs);
            break;
        }
        case BaselineKind::Word2VecForest: {
            std::vector<float> emb = embed_command(w2v, command);
            cls = predict_forest(forest, emb, &probs);
            break;
        }
    }
    out.risk = static_cast<RiskClass>(cls);
    for (size_t c = 0; c < 3 && c < probs.size(); ++c) out.probs[c] = probs[c];
    return out;
}

BaselineModel train_baseline(BaselineKind kind, const std::vector<data::LabeledCommand>& train,
                             const BaselineConfig& cfg, uint64_t seed) {
    BaselineModel m;
    m.kind = kind;
    m.config = cfg;

    std::vector<std::string> commands;
    std::vector<int> labels;
    commands.reserve(train.size());
    for (const auto& lc : train) {
        commands.push_back(lc.command);
        labels.push_back(static_cast<int>(lc.label));
    }

    switch (kind) {
        case BaselineKind::NgramLogReg: {
            m.features = FeatureVocab::build_char_ngrams(commands, cfg.ngram_n, cfg.feature_cap);
            std::vector<SparseVec> xs;
            xs.reserve(commands.size());
            for (const auto& c : commands)
                xs.push_back(featurize_char_ngrams(c, cfg.ngram_n, m.features));
            m.logreg = train_logreg(xs, labels, kNumRiskClasses, m.features.size(), cfg.logreg_c,
                                    cfg.logreg_max_iter, cfg.logreg_tol);
            break;
        }
        case BaselineKind::BowLogReg: {
            m.features = FeatureVocab::build_bow(commands, cfg.feature_cap);
            std::vector<SparseVec> xs;
            xs.reserve(commands.size());
            for (const auto& c : commands) xs.push_back(featurize_bow(c, m.features));
            m.logreg = train_logreg(xs, labels, kNumRiskClasses, m.features.size(), cfg.logreg_c,
                                    cfg.logreg_max_iter, cfg.logreg_tol);
            break;
        }
        case BaselineKind::Word2VecForest: {
            std::vector<std::vector<std::string>> tokenized;
            tokenized.reserve(commands.size());
            for (const auto& c : commands) tokenized.push_back(whitespace_tokens(c));
            m.w2v = train_word2vec(tokenized, cfg, seed);
            std::vector<std::vector<float>> embs;
            embs.reserve(commands.size());
            for (const auto& c : commands) embs.push_back(embed_command(m.w2v, c));
            m.forest = train_random_forest(embs, labels, kNumRiskClasses, cfg, seed);
            break;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json config_to_json(const BaselineConfig& c) {
    return json{{"logreg_c", c.logreg_c},
                {"logreg_max_iter", c.logreg_max_iter},
                {"logreg_tol", c.logreg_tol},
                {"ngram_n", c.ngram_n},
                {"feature_cap", c.feature_cap},
                {"w2v_dim", c.w2v_dim},
                {"w2v_alpha_start", c.w2v_alpha_start},
                {"w2v_alpha_min", c.w2v_alpha_min},
                {"w2v_epochs", c.w2v_epochs},
                {"w2v_window", c.w2v_window},
                {"w2v_negatives", c.w2v_negatives},
                {"forest_trees", c.forest_trees},
                {"forest_max_depth", c.forest_max_depth},
                {"forest_mtry", c.forest_mtry},
                {"forest_bootstrap", c.forest_bootstrap}};
}

BaselineConfig config_from_json(const json& j) {
    BaselineConfig c;
    c.logreg_c = j.at("logreg_c").get<double>();
    c.logreg_max_iter = j.at("logreg_max_iter").get<int>();
    c.logreg_tol = j.at("logreg_tol").get<double>();
    c.ngram_n = j.at("ngram_n").get<int>();
    c.feature_cap = j.at("feature_cap").get<size_t>();
    c.w2v_dim = j.at("w2v_dim").get<int>();
    c.w2v_alpha_start = j.at("w2v_alpha_start").get<double>();
    c.w2v_alpha_min = j.at("w2v_alpha_min").get<double>();
    c.w2v_epochs = j.at("w2v_epochs").get<int>();
    c.w2v_window = j.at("w2v_window").get<int>();
    c.w2v_negatives = j.at("w2v_negatives").get<int>();
    c.forest_trees = j.at("forest_trees").get<int>();
    c.forest_max_depth = j.at("forest_max_depth").get<int>();
    c.forest_mtry = j.at("forest_mtry").get<int>();
    c.forest_bootstrap = j.at("forest_bootstrap").get<bool>();
    return c;
}

json mat_to_json(const Mat<float>& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.v}};
}

Mat<float> mat_from_json(const json& j) {
    Mat<float> m(j.at("rows").get<size_t>(), j.at("cols").get<size_t>());
    m.v = j.at("data").get<std::vector<float>>();
    if (m.v.size() != m.rows * m.cols) throw ParseError("baseline matrix size mismatch");
    return m;
}

}  // namespace

void save_baseline_file(const std::string& path, const BaselineModel& model) {
    json j{{"format", "baseline v1"},
           {"kind", to_string(model.kind)},
           {"config", config_to_json(model.config)}};
    switch (model.kind) {
        case BaselineKind::NgramLogReg:
        case BaselineKind::BowLogReg: {
            j["features"] = model.features.features();
            j["logreg"] = json{{"n_classes", model.logreg.n_classes},
                               {"dim", model.logreg.dim},
                               {"w", model.logreg.w},
                               {"b", model.logreg.b}};
            break;
        }
        case BaselineKind::Word2VecForest: {
            j["w2v"] = json{{"dim", model.w2v.dim},
                            {"tokens", model.w2v.tokens},
                            {"win", mat_to_json(model.w2v.win)}};
            json trees = json::array();
            for (const Tree& t : model.forest.trees) {
                json nodes = json::array();
                for (const TreeNode& n : t.nodes)
                    nodes.push_back(json{{"f", n.feature},
                                         {"t", n.threshold},
                                         {"l", n.left},
                                         {"r", n.right},
                                         {"c", n.leaf_class}});
                trees.push_back(std::move(nodes));
            }
            j["forest"] = json{{"n_classes", model.forest.n_classes}, {"trees", trees}};
            break;
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << j.dump() << "\n";
}

BaselineModel load_baseline_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open baseline file '" + path + "'");
    json j = json::parse(in, nullptr, true);
    if (j.value("format", "") != "baseline v1")
        throw ParseError("'" + path + "' is not a baseline v1 file");

    BaselineModel m;
    m.kind = baseline_kind_from_string(j.at("kind").get<std::string>());
    m.config = config_from_json(j.at("config"));
    switch (m.kind) {
        case BaselineKind::NgramLogReg:
        case BaselineKind::BowLogReg: {
            m.features = FeatureVocab::from_features(
                j.at("features").get<std::vector<std::string>>());
            const json& lj = j.at("logreg");
            m.logreg.n_classes = lj.at("n_classes").get<int>();
            m.logreg.dim = lj.at("dim").get<size_t>();
            m.logreg.w = lj.at("w").get<std::vector<double>>();
            m.logreg.b = lj.at("b").get<std::vector<double>>();
            break;
        }
        case BaselineKind::Word2VecForest: {
            const json& wj = j.at("w2v");
            m.w2v.dim = wj.at("dim").get<int>();
            m.w2v.tokens = wj.at("tokens").get<std::vector<std::string>>();
            for (uint32_t i = 0; i < m.w2v.tokens.size(); ++i)
                m.w2v.index[m.w2v.tokens[i]] = i;
            m.w2v.win = mat_from_json(wj.at("win"));
            const json& fj = j.at("forest");
            m.forest.n_classes = fj.at("n_classes").get<int>();
            for (const json& tj : fj.at("trees")) {
                Tree t;
                for (const json& nj : tj) {
                    TreeNode n;
                    n.feature = nj.at("f").get<int>();
                    n.threshold = nj.at("t").get<float>();
                    n.left = nj.at("l").get<int>();
                    n.right = nj.at("r").get<int>();
                    n.leaf_class = nj.at("c").get<int>();
                    t.nodes.push_back(n);
                }
                m.forest.trees.push_back(std::move(t));
            }
            break;
        }
    }
    return m;
}

}  // namespace cmdrisk::baselines
