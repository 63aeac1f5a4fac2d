#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmdrisk/dataset.hpp"
#include "cmdrisk/risk.hpp"
#include "cmdrisk/tensor.hpp"

namespace cmdrisk::baselines {

struct BaselineConfig {
    double logreg_c = 100.0;  // inverse regularization
    int logreg_max_iter = 2000;
    double logreg_tol = 1e-6;
    int ngram_n = 3;
    size_t feature_cap = 50000;
    int w2v_dim = 50;
    double w2v_alpha_start = 0.05;
    double w2v_alpha_min = 0.0007;
    int w2v_epochs = 100;
    int w2v_window = 5;
    int w2v_negatives = 5;
    int forest_trees = 100;
    int forest_max_depth = 0;  // 0 = unlimited
    int forest_mtry = 0;       // 0 = sqrt(d)
    bool forest_bootstrap = true;
};

// Sparse feature counts, sorted by feature index.
using SparseVec = std::vector<std::pair<uint32_t, float>>;

std::vector<std::string> whitespace_tokens(const std::string& command);

// Feature table built from the training split only; most frequent features
// win when the cap binds (count desc, then lexicographic).
class FeatureVocab {
public:
    static FeatureVocab build_char_ngrams(const std::vector<std::string>& commands, int n,
                                          size_t cap);
    static FeatureVocab build_bow(const std::vector<std::string>& commands, size_t cap);

    size_t size() const { return features_.size(); }
    const std::vector<std::string>& features() const { return features_; }
    std::optional<uint32_t> index_of(const std::string& feature) const;

    static FeatureVocab from_features(std::vector<std::string> features);

private:
    std::vector<std::string> features_;
    std::unordered_map<std::string, uint32_t> index_;
};

// Character n-gram counts restricted to the vocabulary; out-of-vocabulary
// n-grams are dropped. Commands shorter than n give a zero vector.
SparseVec featurize_char_ngrams(const std::string& command, int n, const FeatureVocab& vocab);

// Whitespace-token counts over the vocabulary.
SparseVec featurize_bow(const std::string& command, const FeatureVocab& vocab);

// Multinomial logistic regression, objective sum_i CE_i + ||W||^2 / (2c),
// minimized by gradient descent with a backtracking step.
struct LogReg {
    int n_classes = 0;
    size_t dim = 0;
    std::vector<double> w;  // class-major: w[c * dim + j]
    std::vector<double> b;
    bool converged = false;
    double final_grad_norm = 0.0;
    int iterations = 0;
};

LogReg train_logreg(const std::vector<SparseVec>& x, const std::vector<int>& y, int n_classes,
                    size_t dim, double c, int max_iter = 2000, double tol = 1e-6);

// Returns argmax class (ties resolve to the higher class index, i.e. the
// more dangerous risk class); fills probs when non-null.
int predict_logreg(const LogReg& model, const SparseVec& x, std::vector<double>* probs = nullptr);

// Skip-gram with negative sampling; deterministic under seed (single
// threaded). Learning rate anneals linearly start -> min over all epochs.
struct Word2Vec {
    int dim = 0;
    std::vector<std::string> tokens;
    std::unordered_map<std::string, uint32_t> index;
    Mat<float> win;   // input vectors, tokens x dim
    Mat<float> wout;  // output vectors
};

Word2Vec train_word2vec(const std::vector<std::vector<std::string>>& corpus,
                        const BaselineConfig& cfg, uint64_t seed);

// Mean of known-token input vectors; all-unknown commands embed to zero.
std::vector<float> embed_command(const Word2Vec& table, const std::string& command);

double cosine(const std::vector<float>& a, const std::vector<float>& b);

// Bagged CART forest (Gini impurity, sqrt(d) feature subsampling by
// default); majority vote with dangerous-class tie-breaking.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    float threshold = 0.0f;
    int left = -1;
    int right = -1;
    int leaf_class = -1;
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root
};

struct RandomForest {
    int n_classes = 0;
    std::vector<Tree> trees;
};

RandomForest train_random_forest(const std::vector<std::vector<float>>& x,
                                 const std::vector<int>& y, int n_classes,
                                 const BaselineConfig& cfg, uint64_t seed);

int predict_tree(const Tree& tree, const std::vector<float>& x);
int predict_forest(const RandomForest& forest, const std::vector<float>& x,
                   std::vector<double>* vote_fractions = nullptr);

// ---------------------------------------------------------------------------
// Composed risk baselines
// ---------------------------------------------------------------------------

enum class BaselineKind { NgramLogReg, BowLogReg, Word2VecForest };

const char* to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

struct BaselinePrediction {
    RiskClass risk = RiskClass::SAFE;
    std::array<double, 3> probs{0.0, 0.0, 0.0};
};

struct BaselineModel {
    BaselineKind kind = BaselineKind::BowLogReg;
    BaselineConfig config;
    FeatureVocab features;  // LR kinds
    LogReg logreg;
    Word2Vec w2v;  // forest kind
    RandomForest forest;

    BaselinePrediction predict(const std::string& command) const;
};

BaselineModel train_baseline(BaselineKind kind, const std::vector<data::LabeledCommand>& train,
                             const BaselineConfig& cfg, uint64_t seed);

void save_baseline_file(const std::string& path, const BaselineModel& model);
BaselineModel load_baseline_file(const std::string& path);

}  // namespace cmdrisk::baselines
