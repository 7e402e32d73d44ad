#ifndef GENOLM_METRICS_HPP
#define GENOLM_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace genolm {

/// Confusion counts for K classes. matrix[t][p] counts examples whose true
/// class is t and predicted class is p. Binary tasks use K = 2 with class 1
/// as the positive class, so TP = matrix[1][1], TN = matrix[0][0],
/// FP = matrix[0][1], FN = matrix[1][0].
struct ConfusionCounts {
    std::vector<std::vector<std::int64_t>> matrix;

    ConfusionCounts() = default;
    explicit ConfusionCounts(int k)
        : matrix(static_cast<std::size_t>(k),
                 std::vector<std::int64_t>(static_cast<std::size_t>(k), 0)) {}

    static ConfusionCounts binary(std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn);
    static ConfusionCounts from_predictions(const std::vector<int>& truth,
                                            const std::vector<int>& predicted, int num_classes);

    int num_classes() const { return static_cast<int>(matrix.size()); }
    std::int64_t total() const;
    std::int64_t correct() const;
    std::int64_t tp() const { return matrix[1][1]; }
    std::int64_t tn() const { return matrix[0][0]; }
    std::int64_t fp() const { return matrix[0][1]; }
    std::int64_t fn() const { return matrix[1][0]; }
};

/// (TP + TN) / (TP + TN + FP + FN); trace/total for K > 2.
/// Throws DataConstraintError when total() == 0.
double accuracy(const ConfusionCounts& c);

/// Binary F1 on the positive class; macro average of one-vs-rest F1 for
/// K > 2. Zero-division convention: F1 = 0 when precision + recall = 0 or a
/// class has no predicted/true examples.
double f1_score(const ConfusionCounts& c);

/// Matthews correlation coefficient; Gorodkin R_K generalization for K > 2.
/// Any zero factor in the denominator yields 0 by convention.
double mcc(const ConfusionCounts& c);

/// Mean of per-class recall; classes with no true examples are excluded
/// (count reported through *excluded_classes when non-null).
double balanced_accuracy(const ConfusionCounts& c, int* excluded_classes = nullptr);

/// Mann-Whitney AUC with midrank tie handling:
/// (R_pos - P(P+1)/2) / (P*N) where R_pos sums midranks of positives.
/// Throws DataConstraintError unless both classes are present.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

/// One-vs-rest macro-averaged AUC; class_scores[i][c] is the score of
/// example i for class c. Classes missing from truth are skipped.
double auc_roc_ovr_macro(const std::vector<std::vector<double>>& class_scores,
                         const std::vector<int>& truth);

}  // namespace genolm

#endif
