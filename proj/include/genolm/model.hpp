#ifndef GENOLM_MODEL_HPP
#define GENOLM_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "genolm/autograd.hpp"
#include "genolm/metrics.hpp"
#include "genolm/tokenizer.hpp"

namespace genolm {

/// Encoder hyperparameters. The defaults are the toy scale every built-in
/// experiment uses; all fields are overridable from run configs.
struct ModelConfig {
    int vocab_size = Vocabulary::kSize;
    int embed_dim = 64;
    int num_layers = 2;
    int num_heads = 4;
    int ffn_hidden = 128;
    int context_tokens = Vocabulary::kDefaultContextTokens;
    int num_labels = 2;
    double rope_base = 10000.0;
    double dropout = 0.0;
    std::uint64_t seed = 42;
    bool cls_pooling = false;  // default: mean over non-pad positions

    int head_dim() const { return embed_dim / num_heads; }
    void validate() const;  // throws ConfigError on violations
};

/// Optimization schedule shared by the transformer and the neural baselines.
struct TrainingPlan {
    double learning_rate = 1e-4;
    double warmup_fraction = 0.1;  // linear warmup over this fraction of steps
    int max_epochs = 10;
    int batch_size = 8;
    int early_stop_patience = 5;  // evaluations without improvement
    int eval_every = 0;           // steps between validation passes; 0 = once per epoch
    double mask_rate = 0.15;      // pretraining only
    std::uint64_t seed = 42;

    void validate(bool pretraining) const;
};

/// Encoder with token embeddings, rotary attention, and a gated
/// feed-forward block per layer; carries both a per-position LM head and a
/// pooled-classification head.
class Model {
public:
    Model() = default;
    static Model init(const ModelConfig& cfg, const std::string& vocab_fingerprint);

    ModelConfig config;
    std::string vocab_fingerprint;
    std::vector<Parameter> params;

    Parameter& param(const std::string& name);
    const Parameter& param(const std::string& name) const;
    std::vector<Parameter*> trainable_pointers();

    std::int64_t parameter_count() const;
    /// FNV-1a over the float32 image of every tensor plus the config.
    std::string fingerprint() const;

    void set_backbone_trainable(bool trainable);  // classifier head always stays trainable

    struct ForwardResult {
        std::vector<Matrix> hidden;  // per sequence, T x d final hidden states
        Matrix pooled;               // n x d
        Matrix logits;               // n x num_labels
    };
    /// All sequences must share one length ≤ context_tokens; when
    /// capture_attention is given it receives one T x T probability matrix
    /// per (layer, head), batch-concatenated.
    ForwardResult forward(const std::vector<TokenSequence>& batch,
                          std::vector<Matrix>* capture_attention = nullptr) const;

    Matrix embed(const std::vector<TokenSequence>& sequences) const;

    /// LM-head logits at the requested positions of one sequence.
    Matrix lm_logits_at(const TokenSequence& seq, const std::vector<int>& positions) const;

private:
    std::map<std::string, std::size_t> index_;
    friend struct ModelGraphOps;
    void rebuild_index();
};

/// Closed-form parameter count for a config; kept in sync with Model::init
/// by a unit test.
std::int64_t parameter_count_formula(const ModelConfig& cfg);

struct PretrainResult {
    std::vector<double> step_loss;  // one entry per optimizer step
    double initial_loss = 0.0;      // evaluated before the first step
    double final_loss = 0.0;
};
PretrainResult pretrain_masked(Model& model, const std::vector<TokenSequence>& corpus,
                               const TrainingPlan& plan);

struct FinetuneResult {
    std::vector<double> step_loss;
    std::vector<double> val_loss;  // one entry per evaluation
    double best_val_loss = 0.0;
    int epochs_run = 0;
    bool stopped_early = false;
};
FinetuneResult finetune(Model& model, const std::vector<TokenSequence>& train,
                        const std::vector<int>& train_labels,
                        const std::vector<TokenSequence>& validation,
                        const std::vector<int>& validation_labels, const TrainingPlan& plan,
                        bool freeze_backbone = false);

/// Mean classifier cross-entropy over a labeled set.
double classification_loss(const Model& model, const std::vector<TokenSequence>& seqs,
                           const std::vector<int>& labels);

/// Class probabilities (n x num_labels) from the classifier head.
Matrix predict_proba(const Model& model, const std::vector<TokenSequence>& seqs);

struct ZeroShotResult {
    std::vector<int> cluster;           // raw k-means assignment per row
    std::vector<int> cluster_to_label;  // mapping chosen by best-F1 permutation
    std::vector<int> predicted;         // mapped labels
    Matrix scores;                      // n x k, softmax of negative squared distances
    double mapped_f1 = 0.0;
    bool degenerate = false;  // empty cluster or fewer distinct points than k
};
/// K-means (k-means++ seeding, ≤ 100 iterations) over l2-normalized rows;
/// the true labels are used only to choose the scoring permutation.
ZeroShotResult zero_shot_classify(const Matrix& embeddings, int num_classes,
                                  const std::vector<int>& true_labels, std::uint64_t seed);

struct ShotMetrics {
    int shots = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
    double auc_roc = 0.0;
    double balanced_accuracy = 0.0;
    ConfusionCounts confusion;
};
/// For each n in shots: stratified-sample n examples per class from the
/// pool (order-preserving, so n = pool size reproduces standard
/// fine-tuning), fine-tune a fresh copy of `base`, evaluate on `test`.
std::vector<ShotMetrics> few_shot_curve(const Model& base, const std::vector<TokenSequence>& pool,
                                        const std::vector<int>& pool_labels,
                                        const std::vector<TokenSequence>& test,
                                        const std::vector<int>& test_labels,
                                        const std::vector<int>& shots, const TrainingPlan& plan,
                                        bool freeze_backbone = false);

inline const std::vector<int>& default_few_shot_grid() {
    static const std::vector<int> grid = {1, 2, 5, 10, 25};
    return grid;
}

/// Checkpoint container: 8-byte magic "GLMCKPT1", little-endian u64 JSON
/// header length, JSON header (config, tensor directory, vocabulary
/// fingerprint, optional optimizer state), then raw little-endian float32
/// tensor payloads in directory order.
void save_checkpoint(const Model& model, const std::string& path, const Adam* optimizer = nullptr);

struct LoadedCheckpoint {
    Model model;
    bool has_optimizer = false;
    std::vector<Matrix> adam_m, adam_v;  // aligned with model.params
    std::int64_t adam_step = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace genolm

#endif
