#ifndef GENOLM_BASELINES_HPP
#define GENOLM_BASELINES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "genolm/autograd.hpp"
#include "genolm/model.hpp"

namespace genolm {

// ---------------------------------------------------------------------------
// Random forest on k-mer frequency vectors
// ---------------------------------------------------------------------------

struct ForestConfig {
    int num_trees = 100;
    int max_depth = 0;  // 0 = unlimited
    int min_leaf = 1;
    int features_per_split = 0;  // 0 = floor(sqrt(feature dimension))
    bool bootstrap = true;
    std::uint64_t seed = 42;

    void validate(int feature_dim) const;
    int resolved_features_per_split(int feature_dim) const;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf_class = -1;
};

struct Forest {
    ForestConfig config;
    int feature_dim = 0;
    int num_classes = 0;
    std::vector<std::vector<TreeNode>> trees;  // node 0 is each tree's root

    int tree_predict(std::size_t tree, const std::vector<double>& x) const;
    /// Vote fractions per class, rows summing to 1.
    Matrix predict_proba(const std::vector<std::vector<double>>& features) const;
    /// Majority vote; ties resolve to the lowest class index.
    std::vector<int> predict(const std::vector<std::vector<double>>& features) const;

    std::string to_json() const;
    static Forest from_json(const std::string& text);
    void save(const std::string& path) const;
    static Forest load(const std::string& path);
};

Forest train_forest(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels, const ForestConfig& config);

// ---------------------------------------------------------------------------
// Neural baselines on one-hot inputs (A=0, C=1, G=2, T=3; N and padding are
// all-zero columns, encoded as index -1)
// ---------------------------------------------------------------------------

/// Fixed-length base-index encoding used by the CNN and LSTM.
std::vector<int> encode_base_indices(const std::string& sequence, int fixed_length);

struct CnnConfig {
    int filters = 64;
    int kernel_width = 8;
    int dense_hidden = 64;
    int fixed_length = 0;  // required
    int num_labels = 2;
    std::uint64_t seed = 42;

    void validate() const;
};

struct CnnModel {
    CnnConfig config;
    std::vector<Parameter> params;  // conv.w, conv.b, dense1.w, dense1.b, dense2.w, dense2.b

    static CnnModel init(const CnnConfig& config);
    Parameter& param(const std::string& name);
    std::vector<Parameter*> pointers();

    Matrix predict_proba(const std::vector<std::vector<int>>& inputs) const;
    void save(const std::string& path) const;
    static CnnModel load(const std::string& path);
};

struct BaselineTrainResult {
    std::vector<double> step_loss;
    std::vector<double> val_loss;
    double best_val_loss = 0.0;
    bool stopped_early = false;
};

BaselineTrainResult train_cnn(CnnModel& model, const std::vector<std::vector<int>>& train,
                              const std::vector<int>& train_labels,
                              const std::vector<std::vector<int>>& validation,
                              const std::vector<int>& validation_labels, const TrainingPlan& plan);

struct LstmConfig {
    int units = 50;
    int fixed_length = 0;  // required
    int num_labels = 2;
    std::uint64_t seed = 42;

    void validate() const;
};

struct LstmModel {
    LstmConfig config;
    std::vector<Parameter> params;  // lstm.w_input, lstm.w_recur, lstm.b, dense.w, dense.b

    static LstmModel init(const LstmConfig& config);
    Parameter& param(const std::string& name);
    std::vector<Parameter*> pointers();

    Matrix final_states(const std::vector<std::vector<int>>& inputs) const;
    Matrix predict_proba(const std::vector<std::vector<int>>& inputs) const;
    void save(const std::string& path) const;
    static LstmModel load(const std::string& path);
};

BaselineTrainResult train_lstm(LstmModel& model, const std::vector<std::vector<int>>& train,
                               const std::vector<int>& train_labels,
                               const std::vector<std::vector<int>>& validation,
                               const std::vector<int>& validation_labels,
                               const TrainingPlan& plan);

/// Argmax per row with ties resolved to the lowest index.
std::vector<int> argmax_labels(const Matrix& probs);

}  // namespace genolm

#endif
