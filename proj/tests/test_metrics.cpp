#include <cmath>
#include <vector>

#include "doctest.h"
#include "genolm/common.hpp"
#include "genolm/metrics.hpp"
#include "genolm/rng.hpp"

using namespace genolm;

namespace {

// Independent AUC oracle: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half.
double oracle_auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double total = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) total += 1.0;
            else if (scores[i] == scores[j]) total += 0.5;
        }
    }
    return total / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("confusion counts from predictions and the binary helper agree") {
    const std::vector<int> truth = {1, 1, 0, 0, 1, 0};
    const std::vector<int> pred = {1, 0, 0, 1, 1, 0};
    const ConfusionCounts c = ConfusionCounts::from_predictions(truth, pred, 2);
    CHECK(c.tp() == 2);
    CHECK(c.fn() == 1);
    CHECK(c.tn() == 2);
    CHECK(c.fp() == 1);
    CHECK(c.total() == 6);
    CHECK(c.correct() == 4);
    const ConfusionCounts b = ConfusionCounts::binary(2, 2, 1, 1);
    CHECK(b.matrix == c.matrix);
}

TEST_CASE("binary metrics match exact-arithmetic values for TP=45 TN=35 FP=15 FN=5") {
    // accuracy = 80/100; F1 = 2*(45/60)*(45/50) / (45/60 + 45/50) = 9/11;
    // MCC = (45*35 - 15*5) / sqrt(60*50*50*40) = 1500/(1000*sqrt(6)) = 1.5/sqrt(6);
    // balanced accuracy = (45/50 + 35/50)/2 = 4/5
    const ConfusionCounts c = ConfusionCounts::binary(45, 35, 15, 5);
    CHECK(accuracy(c) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(f1_score(c) == doctest::Approx(9.0 / 11.0).epsilon(1e-15));
    CHECK(mcc(c) == doctest::Approx(1.5 / std::sqrt(6.0)).epsilon(1e-15));
    CHECK(mcc(c) == doctest::Approx(0.61237243569579458).epsilon(1e-15));
    CHECK(balanced_accuracy(c) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("3-class metrics match exact-arithmetic values") {
    // confusion rows (true x predicted):
    //   [5 2 0]
    //   [1 6 1]
    //   [0 3 7]
    // accuracy = 18/25; per-class one-vs-rest F1 = 10/13, 12/19, 7/9 ->
    // macro F1 = 4843/6669; balanced accuracy = (5/7 + 6/8 + 7/10)/3 = 101/140;
    // multiclass correlation = (18*25 - sum p_k t_k) / sqrt((625-221)(625-213))
    //                        = 240/sqrt(166448)
    ConfusionCounts c(3);
    c.matrix = {{5, 2, 0}, {1, 6, 1}, {0, 3, 7}};
    CHECK(accuracy(c) == doctest::Approx(18.0 / 25.0).epsilon(1e-15));
    CHECK(f1_score(c) == doctest::Approx(4843.0 / 6669.0).epsilon(1e-15));
    CHECK(f1_score(c) == doctest::Approx(0.72619583145898936).epsilon(1e-15));
    CHECK(mcc(c) == doctest::Approx(240.0 / std::sqrt(166448.0)).epsilon(1e-15));
    CHECK(mcc(c) == doctest::Approx(0.58826356582574102).epsilon(1e-15));
    CHECK(balanced_accuracy(c) == doctest::Approx(101.0 / 140.0).epsilon(1e-15));
}

TEST_CASE("multiclass correlation on a 2-class matrix reduces to binary MCC") {
    Rng rng(0x3cc);
    for (int trial = 0; trial < 50; ++trial) {
        const std::int64_t tp = 1 + static_cast<std::int64_t>(rng.uniform_below(40));
        const std::int64_t tn = 1 + static_cast<std::int64_t>(rng.uniform_below(40));
        const std::int64_t fp = static_cast<std::int64_t>(rng.uniform_below(40));
        const std::int64_t fn = static_cast<std::int64_t>(rng.uniform_below(40));
        const ConfusionCounts c = ConfusionCounts::binary(tp, tn, fp, fn);
        const double denom = std::sqrt(static_cast<double>(tp + fp)) *
                             std::sqrt(static_cast<double>(tp + fn)) *
                             std::sqrt(static_cast<double>(tn + fp)) *
                             std::sqrt(static_cast<double>(tn + fn));
        const double direct =
            denom == 0.0 ? 0.0 : static_cast<double>(tp * tn - fp * fn) / denom;
        CHECK(mcc(c) == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("degenerate confusion matrices follow the zero conventions") {
    // everything predicted positive: TN = FN = 0 -> MCC 0 by convention
    const ConfusionCounts all_pos = ConfusionCounts::binary(10, 0, 10, 0);
    CHECK(mcc(all_pos) == 0.0);
    CHECK(f1_score(all_pos) == doctest::Approx(2.0 / 3.0));  // P=1/2, R=1
    // no true positives anywhere
    const ConfusionCounts none = ConfusionCounts::binary(0, 10, 0, 10);
    CHECK(f1_score(none) == 0.0);
    // empty matrix
    ConfusionCounts empty(2);
    CHECK_THROWS_AS(accuracy(empty), DataConstraintError);
    // a class with no true examples is excluded from balanced accuracy
    ConfusionCounts c(3);
    c.matrix = {{4, 0, 0}, {1, 3, 0}, {0, 0, 0}};
    int excluded = 0;
    CHECK(balanced_accuracy(c, &excluded) == doctest::Approx((1.0 + 0.75) / 2.0));
    CHECK(excluded == 1);
}

TEST_CASE("perfect and inverted predictors bound the metrics") {
    const ConfusionCounts perfect = ConfusionCounts::binary(50, 50, 0, 0);
    CHECK(accuracy(perfect) == 1.0);
    CHECK(f1_score(perfect) == 1.0);
    CHECK(mcc(perfect) == doctest::Approx(1.0));
    const ConfusionCounts inverted = ConfusionCounts::binary(0, 0, 50, 50);
    CHECK(mcc(inverted) == doctest::Approx(-1.0));
}

TEST_CASE("AUC matches hand-computed small cases") {
    CHECK(auc_roc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75).epsilon(1e-15));
    // one tied positive/negative pair counts half
    CHECK(auc_roc({0.5, 0.5, 0.5, 0.7}, {0, 1, 0, 1}) == doctest::Approx(0.75).epsilon(1e-15));
    // constant scores: coin flip
    CHECK(auc_roc({0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}) == doctest::Approx(0.5).epsilon(1e-15));
    // perfect separation and perfect inversion
    CHECK(auc_roc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(auc_roc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
}

TEST_CASE("AUC equals the pairwise oracle on random score sets") {
    Rng rng(0xa0c);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_below(40));
        std::vector<double> scores;
        std::vector<int> labels;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores force plenty of ties
            scores.push_back(static_cast<double>(rng.uniform_below(8)) / 8.0);
            labels.push_back(static_cast<int>(rng.uniform_below(2)));
            has_pos = has_pos || labels.back() == 1;
            has_neg = has_neg || labels.back() == 0;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(auc_roc(scores, labels) ==
              doctest::Approx(oracle_auc_pairwise(scores, labels)).epsilon(1e-12));
    }
}

TEST_CASE("AUC requires both classes") {
    CHECK_THROWS_AS(auc_roc({0.5, 0.6}, {1, 1}), DataConstraintError);
    CHECK_THROWS_AS(auc_roc({0.5, 0.6}, {0, 0}), DataConstraintError);
}

TEST_CASE("one-vs-rest macro AUC averages the per-class binary AUCs") {
    // three classes, scores chosen so each one-vs-rest AUC is easy to verify
    const std::vector<std::vector<double>> scores = {
        {0.8, 0.1, 0.1},
        {0.6, 0.3, 0.1},
        {0.2, 0.7, 0.1},
        {0.1, 0.6, 0.3},
        {0.1, 0.2, 0.7},
        {0.3, 0.1, 0.6},
    };
    const std::vector<int> truth = {0, 0, 1, 1, 2, 2};
    double expect = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> col;
        std::vector<int> ovr;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            col.push_back(scores[i][static_cast<std::size_t>(c)]);
            ovr.push_back(truth[i] == c ? 1 : 0);
        }
        expect += oracle_auc_pairwise(col, ovr);
    }
    expect /= 3.0;
    CHECK(auc_roc_ovr_macro(scores, truth) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(auc_roc_ovr_macro(scores, truth) == doctest::Approx(1.0));  // fully separable here
}

TEST_CASE("one-vs-rest macro AUC skips absent classes") {
    const std::vector<std::vector<double>> scores = {
        {0.9, 0.05, 0.05},
        {0.2, 0.7, 0.1},
        {0.3, 0.6, 0.1},
        {0.8, 0.1, 0.1},
    };
    const std::vector<int> truth = {0, 1, 1, 0};  // class 2 never appears
    std::vector<double> col0, col1;
    std::vector<int> ovr0, ovr1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        col0.push_back(scores[i][0]);
        ovr0.push_back(truth[i] == 0 ? 1 : 0);
        col1.push_back(scores[i][1]);
        ovr1.push_back(truth[i] == 1 ? 1 : 0);
    }
    const double expect = (oracle_auc_pairwise(col0, ovr0) + oracle_auc_pairwise(col1, ovr1)) / 2.0;
    CHECK(auc_roc_ovr_macro(scores, truth) == doctest::Approx(expect).epsilon(1e-12));
}
