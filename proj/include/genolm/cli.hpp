#ifndef GENOLM_CLI_HPP
#define GENOLM_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "genolm/dataset.hpp"
#include "genolm/model.hpp"
#include "genolm/seqio.hpp"
#include "json.hpp"

namespace genolm {

inline constexpr const char* kToolkitVersion = "1.0.0";

/// Environment variable naming the directory that relative output paths are
/// resolved against.
inline constexpr const char* kOutputRootEnv = "GENOLM_OUTPUT_ROOT";

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

/// Recipe for a labeled synthetic corpus: uniform random backgrounds with
/// class-specific motifs planted at random positions, then per-position
/// mutation noise. Classes are assigned round-robin so the corpus is
/// balanced.
struct SyntheticSpec {
    int num_sequences = 200;
    std::int64_t length_bp = 1000;
    int num_classes = 2;
    std::vector<std::vector<std::string>> motifs;  // per class; validated ACGT
    double mutation_rate = 0.0;                    // per-position substitution probability
    std::uint64_t seed = 42;

    void validate() const;  // throws ConfigError
    nlohmann::ordered_json to_json() const;
    static SyntheticSpec from_json(const nlohmann::json& j);
};

/// Class label strings: binary tasks use nonpathogenic/pathogenic (sorted
/// order puts the positive class at index 1); larger tasks use class_0..N.
std::vector<std::string> synthetic_class_labels(int num_classes);

Dataset synthesize_dataset(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Dataset directories
// ---------------------------------------------------------------------------

/// Writes sequences.fasta + labels.tsv + summary.json into dir (created if
/// missing). Unlabeled datasets skip labels.tsv.
void write_dataset_dir(const Dataset& dataset, const std::string& dir);

/// Reads a directory written by write_dataset_dir (labels.tsv optional).
Dataset read_dataset_dir(const std::string& dir);

/// Content fingerprint over (id, label, sequence) triples in record order.
std::string dataset_fingerprint(const Dataset& dataset);

/// Record count, label counts, task, and a decade length histogram.
nlohmann::ordered_json dataset_summary_json(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Declarative experiment description consumed by the train/evaluate
/// subcommand family. Loaded from JSON, overridable by flags; every default
/// is echoed back fully resolved in the emitted report.
struct RunConfig {
    std::string name;  // report/table label; defaults to model_kind
    std::string data_dir;
    std::string manifest_path;
    std::string output_dir = "out";
    std::string checkpoint_in;

    ClusterThresholds thresholds;  // used by reports to locate sweep axes
    double split_ratio = 0.8;
    std::uint64_t split_seed = 42;
    std::int64_t fragment_length = kWholeGenome;

    std::string model_kind = "transformer";  // transformer | forest | cnn | lstm
    ModelConfig model;
    struct ForestParams {
        int num_trees = 100;
        int max_depth = 0;
        int min_leaf = 1;
        int features_per_split = 0;
    } forest;
    struct ConvParams {
        int filters = 64;
        int kernel_width = 8;
        int dense_hidden = 64;
        int fixed_length = 0;  // 0 = shortest training sequence
    } cnn;
    struct RecurrentParams {
        int units = 50;
        int fixed_length = 0;
    } lstm;

    TrainingPlan training;
    bool freeze_backbone = false;
    double validation_fraction = 0.2;  // held out of train for early stopping

    std::string protocol = "standard";  // standard | zero-shot | few-shot
    std::vector<int> shots = {1, 2, 5, 10, 25};

    void validate() const;  // throws ConfigError; checks referenced paths exist
    nlohmann::ordered_json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
};

// ---------------------------------------------------------------------------
// Pipeline helpers shared by subcommands and tests
// ---------------------------------------------------------------------------

/// Encodes every record and pads to one shared length:
/// min(context_tokens, longest encoded sequence).
std::vector<TokenSequence> tokenize_dataset(const Vocabulary& vocab, const Dataset& dataset,
                                            int context_tokens);

/// Deterministic stratified holdout: within each class (record order), every
/// k-th example goes to validation, k = round(1/fraction); classes with at
/// least two examples always contribute one.
void stratified_holdout(const std::vector<int>& labels, double fraction,
                        std::vector<std::size_t>* train_idx, std::vector<std::size_t>* val_idx);

/// RFC 3339 UTC timestamp for report metadata.
std::string timestamp_now();

/// Entry point behind main(): parses args (excluding argv[0]), runs the
/// subcommand, maps errors to the exit-code contract (0 ok, 2 config/input,
/// 3 data constraint, 4 training/runtime).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace genolm

#endif
