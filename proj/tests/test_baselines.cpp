#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "genolm/baselines.hpp"
#include "genolm/common.hpp"
#include "genolm/rng.hpp"
#include "test_util.hpp"

using namespace genolm;

namespace {

// Two well-separated 2-d blobs.
struct BlobData {
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
};

BlobData make_blobs(int per_class, std::uint64_t seed) {
    Rng rng(seed);
    BlobData out;
    for (int i = 0; i < per_class; ++i) {
        out.features.push_back({0.2 + 0.05 * rng.normal(), -0.3 + 0.05 * rng.normal()});
        out.labels.push_back(0);
        out.features.push_back({0.8 + 0.05 * rng.normal(), 0.4 + 0.05 * rng.normal()});
        out.labels.push_back(1);
    }
    return out;
}

int tree_depth(const std::vector<TreeNode>& nodes, int i = 0) {
    if (nodes[static_cast<std::size_t>(i)].feature < 0) return 0;
    return 1 + std::max(tree_depth(nodes, nodes[static_cast<std::size_t>(i)].left),
                        tree_depth(nodes, nodes[static_cast<std::size_t>(i)].right));
}

// Base-index sequences for the neural baselines: label 1 ends in T, label 0
// ends in A, the rest is random.
struct IndexTask {
    std::vector<std::vector<int>> inputs;
    std::vector<int> labels;
};

IndexTask make_last_base_task(int per_class, int length, std::uint64_t seed) {
    Rng rng(seed);
    IndexTask out;
    for (int i = 0; i < per_class; ++i) {
        for (int cls : {0, 1}) {
            std::vector<int> seq(static_cast<std::size_t>(length));
            for (int& b : seq) b = static_cast<int>(rng.uniform_below(4));
            seq.back() = cls == 1 ? 3 : 0;
            out.inputs.push_back(std::move(seq));
            out.labels.push_back(cls);
        }
    }
    return out;
}

// Motif task on base indices: label 1 carries GGGGG somewhere fixed.
IndexTask make_index_motif_task(int per_class, int length, int offset, std::uint64_t seed) {
    Rng rng(seed);
    IndexTask out;
    for (int i = 0; i < per_class; ++i) {
        for (int cls : {0, 1}) {
            std::vector<int> seq(static_cast<std::size_t>(length));
            for (int& b : seq) b = static_cast<int>(rng.uniform_below(4));
            if (cls == 1)
                for (int j = 0; j < 5; ++j) seq[static_cast<std::size_t>(offset + j)] = 2;
            out.inputs.push_back(std::move(seq));
            out.labels.push_back(cls);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("forest memorizes separable blobs and predicts deterministically") {
    const BlobData data = make_blobs(12, 0xf0);
    ForestConfig cfg;
    cfg.num_trees = 31;
    const Forest forest = train_forest(data.features, data.labels, cfg);
    CHECK(forest.feature_dim == 2);
    CHECK(forest.num_classes == 2);
    REQUIRE(forest.trees.size() == 31);
    CHECK(forest.predict(data.features) == data.labels);

    // vote fractions: rows sum to 1 in multiples of 1/num_trees
    const Matrix probs = forest.predict_proba(data.features);
    for (int i = 0; i < probs.rows; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < probs.cols; ++j) {
            const double votes = probs.at(i, j) * 31.0;
            CHECK(std::abs(votes - std::round(votes)) < 1e-9);
            row_sum += probs.at(i, j);
        }
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    // same config, same forest; different seed, different forest
    const Forest again = train_forest(data.features, data.labels, cfg);
    CHECK(again.to_json() == forest.to_json());
    ForestConfig other = cfg;
    other.seed = 43;
    CHECK(train_forest(data.features, data.labels, other).to_json() != forest.to_json());
}

TEST_CASE("forest majority vote breaks ties toward the lowest class") {
    Forest f;
    f.feature_dim = 1;
    f.num_classes = 3;
    // four single-leaf stumps voting 2, 1, 2, 1: tie between classes 1 and 2
    for (int cls : {2, 1, 2, 1}) {
        TreeNode leaf;
        leaf.leaf_class = cls;
        f.trees.push_back({leaf});
    }
    CHECK(f.predict({{0.0}}) == std::vector<int>{1});

    Matrix m(2, 3);
    m.at(0, 0) = 0.2;
    m.at(0, 1) = 0.5;
    m.at(0, 2) = 0.3;
    m.at(1, 0) = 0.4;
    m.at(1, 1) = 0.2;
    m.at(1, 2) = 0.4;  // tie with column 0
    CHECK(argmax_labels(m) == std::vector<int>{1, 0});
}

TEST_CASE("forest depth limit and leaf structure hold") {
    const BlobData data = make_blobs(20, 0xf1);
    ForestConfig cfg;
    cfg.num_trees = 9;
    cfg.max_depth = 1;
    const Forest forest = train_forest(data.features, data.labels, cfg);
    for (const auto& tree : forest.trees) {
        CHECK(tree_depth(tree) <= 1);
        for (const TreeNode& n : tree) {
            if (n.feature < 0) {
                CHECK(n.leaf_class >= 0);
                CHECK(n.leaf_class < forest.num_classes);
            } else {
                CHECK(n.feature < forest.feature_dim);
                CHECK(n.left >= 0);
                CHECK(n.right >= 0);
            }
        }
    }
}

TEST_CASE("forest JSON round-trips exactly") {
    const BlobData data = make_blobs(6, 0xf2);
    ForestConfig cfg;
    cfg.num_trees = 5;
    const Forest forest = train_forest(data.features, data.labels, cfg);
    const Forest back = Forest::from_json(forest.to_json());
    CHECK(back.to_json() == forest.to_json());
    CHECK(back.predict(data.features) == forest.predict(data.features));

    testutil::TempDir dir("forest");
    const std::string path = dir.file("model.forest.json");
    forest.save(path);
    CHECK(Forest::load(path).to_json() == forest.to_json());

    CHECK_THROWS_AS(Forest::from_json("not json at all"), ParseError);
}

TEST_CASE("forest training input validation") {
    ForestConfig cfg;
    cfg.num_trees = 3;
    CHECK_THROWS_AS(train_forest({}, {}, cfg), DataConstraintError);
    CHECK_THROWS_AS(train_forest({{1.0}, {2.0}}, {0, 0}, cfg), DataConstraintError);
    CHECK_THROWS_AS(train_forest({{1.0}, {2.0}}, {0, -1}, cfg), ConfigError);
    CHECK_THROWS_AS(train_forest({{1.0}, {2.0, 3.0}}, {0, 1}, cfg), ConfigError);
    CHECK_THROWS_AS(train_forest({{1.0}, {2.0}}, {0}, cfg), ConfigError);

    ForestConfig bad = cfg;
    bad.num_trees = 0;
    CHECK_THROWS_AS(train_forest({{1.0}, {2.0}}, {0, 1}, bad), ConfigError);
    bad = cfg;
    bad.features_per_split = 2;  // exceeds the 1-d feature space
    CHECK_THROWS_AS(train_forest({{1.0}, {2.0}}, {0, 1}, bad), ConfigError);

    CHECK(cfg.resolved_features_per_split(100) == 10);
    CHECK(cfg.resolved_features_per_split(21824) == 147);
    ForestConfig fixed = cfg;
    fixed.features_per_split = 7;
    CHECK(fixed.resolved_features_per_split(100) == 7);
}

TEST_CASE("base-index encoding maps ACGT and blanks the rest") {
    CHECK(encode_base_indices("ACGTN", 8) ==
          std::vector<int>{0, 1, 2, 3, -1, -1, -1, -1});
    CHECK(encode_base_indices("TTACGTAC", 4) == std::vector<int>{3, 3, 0, 1});
    CHECK(encode_base_indices("", 3) == std::vector<int>{-1, -1, -1});
    CHECK_THROWS_AS(encode_base_indices("ACGT", 0), ConfigError);
}

TEST_CASE("cnn starts uniform and validates its config") {
    CnnConfig cfg;
    cfg.filters = 4;
    cfg.kernel_width = 3;
    cfg.dense_hidden = 5;
    cfg.fixed_length = 10;
    CnnModel m = CnnModel::init(cfg);
    CHECK(m.param("conv.w").value.rows == 4);
    CHECK(m.param("conv.w").value.cols == 12);
    for (double v : m.param("dense2.w").value.data) CHECK(v == 0.0);

    const Matrix probs = m.predict_proba({std::vector<int>(10, 0)});
    CHECK(probs.at(0, 0) == 0.5);
    CHECK(probs.at(0, 1) == 0.5);
    CHECK_THROWS_AS(m.predict_proba({std::vector<int>(9, 0)}), ConfigError);

    CnnConfig bad = cfg;
    bad.fixed_length = 2;  // shorter than the kernel
    CHECK_THROWS_AS(CnnModel::init(bad), ConfigError);
    bad = cfg;
    bad.num_labels = 1;
    CHECK_THROWS_AS(CnnModel::init(bad), ConfigError);
    bad = cfg;
    bad.filters = 0;
    CHECK_THROWS_AS(CnnModel::init(bad), ConfigError);
}

TEST_CASE("cnn reference wiring matches predict_proba and passes a gradient check") {
    CnnConfig cfg;
    cfg.filters = 3;
    cfg.kernel_width = 3;
    cfg.dense_hidden = 4;
    cfg.fixed_length = 10;
    cfg.seed = 11;
    CnnModel m = CnnModel::init(cfg);
    // nonzero final dense so every layer receives gradient
    {
        Rng rng(0x21);
        for (double& v : m.param("dense2.w").value.data) v = 0.3 * rng.normal();
        round_to_float32(m.param("dense2.w").value);
    }
    const std::vector<int> in1 = {0, 2, 1, 3, -1, 0, 0, 2, 3, 1};
    const std::vector<int> in2 = {3, 3, 0, 1, 2, 2, 1, 0, 3, 0};

    auto build_logits = [&](Graph& g, const std::vector<int>& input, bool train) {
        auto node = [&](const std::string& name) {
            Parameter& p = m.param(name);
            return train ? g.leaf(p) : g.constant(p.value);
        };
        Graph::NodeId conv = g.conv1d_onehot(input, node("conv.w"), node("conv.b"), 3);
        Graph::NodeId pooled = g.max_over_rows(g.relu(conv));
        Graph::NodeId h =
            g.relu(g.add_rowvec(g.matmul_nt(pooled, node("dense1.w")), node("dense1.b")));
        return g.add_rowvec(g.matmul_nt(h, node("dense2.w")), node("dense2.b"));
    };

    {
        Graph g;
        const Matrix& logits = g.value(build_logits(g, in1, false));
        const Matrix probs = m.predict_proba({in1});
        double denom = 0.0;
        for (int j = 0; j < 2; ++j) denom += std::exp(logits.at(0, j) - logits.at(0, 0));
        for (int j = 0; j < 2; ++j)
            CHECK(probs.at(0, j) ==
                  doctest::Approx(std::exp(logits.at(0, j) - logits.at(0, 0)) / denom)
                      .epsilon(1e-12));
    }

    auto loss_fn = [&](bool back) {
        Graph g;
        const Graph::NodeId ce1 = g.cross_entropy_sum(build_logits(g, in1, true), {1});
        const Graph::NodeId ce2 = g.cross_entropy_sum(build_logits(g, in2, true), {0});
        const Graph::NodeId total = g.scale(g.add(ce1, ce2), 0.5);
        if (back) g.backward(total);
        return g.value(total).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error(m.pointers(), loss_fn) < 1e-5);
}

TEST_CASE("cnn global max pooling makes motif position irrelevant") {
    CnnConfig cfg;
    cfg.filters = 6;
    cfg.kernel_width = 3;
    cfg.dense_hidden = 5;
    cfg.fixed_length = 20;
    cfg.seed = 12;
    CnnModel m = CnnModel::init(cfg);
    Rng rng(0x22);
    for (double& v : m.param("dense2.w").value.data) v = 0.3 * rng.normal();
    round_to_float32(m.param("dense2.w").value);

    const std::vector<int> motif = {2, 0, 3, 1, 2};
    auto placed = [&](int offset) {
        std::vector<int> seq(20, -1);  // blank background contributes nothing
        for (std::size_t j = 0; j < motif.size(); ++j)
            seq[static_cast<std::size_t>(offset) + j] = motif[j];
        return seq;
    };
    const Matrix a = m.predict_proba({placed(4)});
    const Matrix b = m.predict_proba({placed(9)});
    CHECK(a.at(0, 0) == b.at(0, 0));
    CHECK(a.at(0, 1) == b.at(0, 1));
}

TEST_CASE("cnn trains to separate a motif task and restores its best weights") {
    const IndexTask train = make_index_motif_task(8, 24, 6, 0x31);
    const IndexTask val = make_index_motif_task(4, 24, 6, 0x32);
    CnnConfig cfg;
    cfg.filters = 8;
    cfg.kernel_width = 5;
    cfg.dense_hidden = 8;
    cfg.fixed_length = 24;
    cfg.seed = 13;
    CnnModel m = CnnModel::init(cfg);

    TrainingPlan plan;
    plan.learning_rate = 5e-3;
    plan.max_epochs = 25;
    plan.batch_size = 4;
    plan.early_stop_patience = 25;
    const BaselineTrainResult r = train_cnn(m, train.inputs, train.labels, val.inputs, val.labels, plan);
    CHECK(!r.step_loss.empty());
    REQUIRE(!r.val_loss.empty());
    CHECK(r.best_val_loss == *std::min_element(r.val_loss.begin(), r.val_loss.end()));

    const std::vector<int> predicted = argmax_labels(m.predict_proba(train.inputs));
    int correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == train.labels[i];
    CHECK(correct >= static_cast<int>(0.95 * static_cast<double>(predicted.size())));

    CHECK_THROWS_AS(train_cnn(m, {}, {}, val.inputs, val.labels, plan), DataConstraintError);
    CHECK_THROWS_AS(train_cnn(m, train.inputs, {0}, val.inputs, val.labels, plan), ConfigError);
}

TEST_CASE("cnn checkpoints round-trip bit-exactly and reject other kinds") {
    testutil::TempDir dir("cnn_ckpt");
    CnnConfig cfg;
    cfg.filters = 4;
    cfg.kernel_width = 3;
    cfg.dense_hidden = 4;
    cfg.fixed_length = 12;
    CnnModel m = CnnModel::init(cfg);
    const std::string path = dir.file("model.ckpt");
    m.save(path);
    CnnModel back = CnnModel::load(path);
    CHECK(back.config.filters == 4);
    CHECK(back.config.fixed_length == 12);
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i)
        CHECK(back.params[i].value.data == m.params[i].value.data);

    LstmConfig lc;
    lc.units = 3;
    lc.fixed_length = 12;
    const std::string lstm_path = dir.file("lstm.ckpt");
    LstmModel::init(lc).save(lstm_path);
    CHECK_THROWS_AS(CnnModel::load(lstm_path), ParseError);
    CHECK_THROWS_AS(LstmModel::load(path), ParseError);
}

TEST_CASE("lstm starts with open forget gates and uniform probabilities") {
    LstmConfig cfg;
    cfg.units = 4;
    cfg.fixed_length = 8;
    LstmModel m = LstmModel::init(cfg);
    const Matrix& b = m.param("lstm.b").value;
    REQUIRE(b.cols == 16);
    for (int j = 0; j < 16; ++j) {
        // gate blocks are input, forget, cell, output; only forget is 1
        CHECK(b.at(0, j) == (j >= 4 && j < 8 ? 1.0 : 0.0));
    }
    for (double v : m.param("dense.w").value.data) CHECK(v == 0.0);

    const Matrix probs = m.predict_proba({std::vector<int>(8, 1)});
    CHECK(probs.at(0, 0) == 0.5);
    CHECK(probs.at(0, 1) == 0.5);
    CHECK(m.final_states({std::vector<int>(8, 1)}).cols == 4);

    LstmConfig bad = cfg;
    bad.units = 0;
    CHECK_THROWS_AS(LstmModel::init(bad), ConfigError);
    bad = cfg;
    bad.fixed_length = 0;
    CHECK_THROWS_AS(LstmModel::init(bad), ConfigError);
}

TEST_CASE("lstm reference wiring matches predict_proba and passes a gradient check") {
    LstmConfig cfg;
    cfg.units = 3;
    cfg.fixed_length = 6;
    cfg.seed = 14;
    LstmModel m = LstmModel::init(cfg);
    {
        Rng rng(0x23);
        for (double& v : m.param("dense.w").value.data) v = 0.4 * rng.normal();
        round_to_float32(m.param("dense.w").value);
    }
    const std::vector<int> in1 = {0, 3, 1, -1, 2, 0};
    const std::vector<int> in2 = {3, 2, 2, 1, 0, 3};

    auto build_logits = [&](Graph& g, const std::vector<int>& input, bool train) {
        auto node = [&](const std::string& name) {
            Parameter& p = m.param(name);
            return train ? g.leaf(p) : g.constant(p.value);
        };
        Graph::NodeId h =
            g.lstm_final_state(input, node("lstm.w_input"), node("lstm.w_recur"), node("lstm.b"));
        return g.add_rowvec(g.matmul_nt(h, node("dense.w")), node("dense.b"));
    };

    {
        Graph g;
        const Matrix& logits = g.value(build_logits(g, in1, false));
        const Matrix probs = m.predict_proba({in1});
        const Matrix states = m.final_states({in1});
        CHECK(states.cols == 3);
        double denom = 0.0;
        for (int j = 0; j < 2; ++j) denom += std::exp(logits.at(0, j) - logits.at(0, 0));
        for (int j = 0; j < 2; ++j)
            CHECK(probs.at(0, j) ==
                  doctest::Approx(std::exp(logits.at(0, j) - logits.at(0, 0)) / denom)
                      .epsilon(1e-12));
    }

    auto loss_fn = [&](bool back) {
        Graph g;
        const Graph::NodeId ce1 = g.cross_entropy_sum(build_logits(g, in1, true), {1});
        const Graph::NodeId ce2 = g.cross_entropy_sum(build_logits(g, in2, true), {0});
        const Graph::NodeId total = g.scale(g.add(ce1, ce2), 0.5);
        if (back) g.backward(total);
        return g.value(total).at(0, 0);
    };
    CHECK(testutil::max_gradcheck_error(m.pointers(), loss_fn) < 1e-5);
}

TEST_CASE("lstm learns a last-base rule") {
    const IndexTask train = make_last_base_task(10, 12, 0x33);
    const IndexTask val = make_last_base_task(4, 12, 0x34);
    LstmConfig cfg;
    cfg.units = 8;
    cfg.fixed_length = 12;
    cfg.seed = 15;
    LstmModel m = LstmModel::init(cfg);

    TrainingPlan plan;
    plan.learning_rate = 1e-2;
    plan.max_epochs = 30;
    plan.batch_size = 4;
    plan.early_stop_patience = 30;
    const BaselineTrainResult r =
        train_lstm(m, train.inputs, train.labels, val.inputs, val.labels, plan);
    CHECK(r.best_val_loss == *std::min_element(r.val_loss.begin(), r.val_loss.end()));

    const std::vector<int> predicted = argmax_labels(m.predict_proba(train.inputs));
    int correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == train.labels[i];
    CHECK(correct >= static_cast<int>(0.9 * static_cast<double>(predicted.size())));
}

TEST_CASE("lstm checkpoints round-trip bit-exactly") {
    testutil::TempDir dir("lstm_ckpt");
    LstmConfig cfg;
    cfg.units = 5;
    cfg.fixed_length = 9;
    cfg.seed = 77;
    LstmModel m = LstmModel::init(cfg);
    const std::string path = dir.file("model.ckpt");
    m.save(path);
    const LstmModel back = LstmModel::load(path);
    CHECK(back.config.units == 5);
    CHECK(back.config.fixed_length == 9);
    CHECK(back.config.seed == 77);
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        CHECK(back.params[i].name == m.params[i].name);
        CHECK(back.params[i].value.data == m.params[i].value.data);
    }
}
