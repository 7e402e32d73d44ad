#ifndef GENOLM_REPORT_HPP
#define GENOLM_REPORT_HPP

#include <string>
#include <vector>

#include "genolm/metrics.hpp"
#include "json.hpp"

namespace genolm {

/// One evaluated prediction set: the five headline metrics plus the raw
/// confusion matrix. `shots` is -1 except for few-shot rows.
struct MetricRow {
    std::string label;  // "standard", "zero-shot", "shots=5", ...
    int shots = -1;
    double accuracy = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
    double auc_roc = 0.0;
    double balanced_accuracy = 0.0;
    ConfusionCounts confusion;
};

/// Computes every metric for one prediction set. class_scores[i][c] is the
/// score of example i for class c; binary AUC uses the class-1 column,
/// multiclass AUC the one-vs-rest macro average.
MetricRow compute_metric_row(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<std::vector<double>>& class_scores, int num_classes,
                             const std::string& label, int shots = -1);

/// Evaluation artifact written by the experiment drivers. Everything except
/// `timestamp` is a pure function of the run configuration and input data, so
/// two runs with the same config produce identical JSON apart from that one
/// field.
struct EvaluationReport {
    std::string protocol;    // standard | zero-shot | few-shot | pretrain
    std::string model_kind;  // transformer | forest | cnn | lstm
    std::string name;        // display label for tables and chart legends
    std::string dataset_fingerprint;
    std::string model_fingerprint;
    nlohmann::ordered_json config;   // fully resolved run configuration
    nlohmann::ordered_json details;  // protocol extras (cluster mapping, losses, ...)
    std::vector<MetricRow> rows;
    std::string timestamp;  // RFC 3339; deliberately outside the deterministic core

    nlohmann::ordered_json to_json() const;
    static EvaluationReport from_json(const nlohmann::json& j);

    void save(const std::string& path) const;
    static EvaluationReport load(const std::string& path);
};

/// Column header matching report_csv_rows.
std::string report_csv_header();

/// One CSV line per metric row: name, protocol, model, row label, shots,
/// then the five metrics.
std::vector<std::string> report_csv_rows(const EvaluationReport& report);

}  // namespace genolm

#endif
