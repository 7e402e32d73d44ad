#include "genolm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "genolm/common.hpp"

namespace genolm {

ConfusionCounts ConfusionCounts::binary(std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn) {
    ConfusionCounts c(2);
    c.matrix[1][1] = tp;
    c.matrix[0][0] = tn;
    c.matrix[0][1] = fp;
    c.matrix[1][0] = fn;
    return c;
}

ConfusionCounts ConfusionCounts::from_predictions(const std::vector<int>& truth,
                                                  const std::vector<int>& predicted, int num_classes) {
    if (truth.size() != predicted.size())
        throw DataConstraintError("confusion: truth and prediction lengths differ");
    ConfusionCounts c(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes)
            throw DataConstraintError("confusion: class index out of range");
        c.matrix[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])]++;
    }
    return c;
}

std::int64_t ConfusionCounts::total() const {
    std::int64_t t = 0;
    for (const auto& row : matrix)
        for (std::int64_t v : row) t += v;
    return t;
}

std::int64_t ConfusionCounts::correct() const {
    std::int64_t t = 0;
    for (std::size_t i = 0; i < matrix.size(); ++i) t += matrix[i][i];
    return t;
}

static void require_nonempty(const ConfusionCounts& c) {
    if (c.total() == 0) throw DataConstraintError("metric undefined: empty confusion counts");
}

double accuracy(const ConfusionCounts& c) {
    require_nonempty(c);
    return static_cast<double>(c.correct()) / static_cast<double>(c.total());
}

static double f1_one_vs_rest(const ConfusionCounts& c, int k) {
    const int n = c.num_classes();
    std::int64_t tp = c.matrix[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    std::int64_t fp = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
        if (i == k) continue;
        fp += c.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        fn += c.matrix[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
    }
    if (tp + fp == 0 || tp + fn == 0) return 0.0;
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double f1_score(const ConfusionCounts& c) {
    require_nonempty(c);
    if (c.num_classes() == 2) return f1_one_vs_rest(c, 1);
    double sum = 0.0;
    for (int k = 0; k < c.num_classes(); ++k) sum += f1_one_vs_rest(c, k);
    return sum / c.num_classes();
}

static double mcc_binary(const ConfusionCounts& c) {
    const __int128 tp = c.tp(), tn = c.tn(), fp = c.fp(), fn = c.fn();
    const __int128 numer = tp * tn - fp * fn;
    const __int128 d1 = tp + fp, d2 = tp + fn, d3 = tn + fp, d4 = tn + fn;
    if (d1 == 0 || d2 == 0 || d3 == 0 || d4 == 0) return 0.0;
    const __int128 denom2 = d1 * d2 * d3 * d4;
    long double denom = std::sqrt(static_cast<long double>(denom2));
    return static_cast<double>(static_cast<long double>(numer) / denom);
}

// Gorodkin R_K from the K x K matrix.
static double mcc_multiclass(const ConfusionCounts& c) {
    const int n = c.num_classes();
    __int128 s = c.total();
    __int128 trace = c.correct();
    __int128 sum_pt = 0, sum_pp = 0, sum_tt = 0;
    for (int k = 0; k < n; ++k) {
        __int128 p = 0, t = 0;
        for (int i = 0; i < n; ++i) {
            p += c.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
            t += c.matrix[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        }
        sum_pt += p * t;
        sum_pp += p * p;
        sum_tt += t * t;
    }
    const __int128 numer = trace * s - sum_pt;
    const __int128 dp = s * s - sum_pp;
    const __int128 dt = s * s - sum_tt;
    if (dp == 0 || dt == 0) return 0.0;
    long double denom = std::sqrt(static_cast<long double>(dp)) * std::sqrt(static_cast<long double>(dt));
    return static_cast<double>(static_cast<long double>(numer) / denom);
}

double mcc(const ConfusionCounts& c) {
    require_nonempty(c);
    return c.num_classes() == 2 ? mcc_binary(c) : mcc_multiclass(c);
}

double balanced_accuracy(const ConfusionCounts& c, int* excluded_classes) {
    require_nonempty(c);
    double sum = 0.0;
    int present = 0, excluded = 0;
    for (int k = 0; k < c.num_classes(); ++k) {
        std::int64_t truth_count = 0;
        for (int i = 0; i < c.num_classes(); ++i)
            truth_count += c.matrix[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        if (truth_count == 0) {
            ++excluded;
            continue;
        }
        sum += static_cast<double>(c.matrix[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)]) /
               static_cast<double>(truth_count);
        ++present;
    }
    if (excluded_classes) *excluded_classes = excluded;
    if (present == 0) throw DataConstraintError("balanced accuracy undefined: no class has true examples");
    return sum / present;
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataConstraintError("auc_roc: scores and labels lengths differ");
    std::int64_t pos = 0, neg = 0;
    for (int l : labels) (l != 0 ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw DataConstraintError("auc_roc undefined: both classes must be present");

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midrank sum over positives; ranks are 1-based, ties share the mean rank
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t)
            if (labels[order[t]] != 0) rank_sum_pos += midrank;
        i = j + 1;
    }
    double p = static_cast<double>(pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auc_roc_ovr_macro(const std::vector<std::vector<double>>& class_scores,
                         const std::vector<int>& truth) {
    if (class_scores.size() != truth.size())
        throw DataConstraintError("auc_roc_ovr_macro: scores and truth lengths differ");
    if (class_scores.empty()) throw DataConstraintError("auc_roc_ovr_macro: empty input");
    const int k = static_cast<int>(class_scores.front().size());
    double sum = 0.0;
    int used = 0;
    for (int c = 0; c < k; ++c) {
        std::vector<double> s(truth.size());
        std::vector<int> l(truth.size());
        std::int64_t pos = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            s[i] = class_scores[i][static_cast<std::size_t>(c)];
            l[i] = truth[i] == c ? 1 : 0;
            pos += l[i];
        }
        if (pos == 0 || pos == static_cast<std::int64_t>(truth.size())) continue;
        sum += auc_roc(s, l);
        ++used;
    }
    if (used == 0) throw DataConstraintError("auc_roc_ovr_macro undefined: single-class truth");
    return sum / used;
}

}  // namespace genolm
