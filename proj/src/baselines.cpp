#include "genolm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "genolm/common.hpp"
#include "genolm/container.hpp"
#include "json.hpp"

namespace genolm {

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

void ForestConfig::validate(int feature_dim) const {
    if (num_trees <= 0) throw ConfigError("forest: num_trees must be positive");
    if (max_depth < 0) throw ConfigError("forest: max_depth must be non-negative");
    if (min_leaf <= 0) throw ConfigError("forest: min_leaf must be positive");
    if (features_per_split < 0) throw ConfigError("forest: features_per_split must be non-negative");
    if (features_per_split > feature_dim)
        throw ConfigError("forest: features_per_split exceeds feature dimension");
}

int ForestConfig::resolved_features_per_split(int feature_dim) const {
    if (features_per_split > 0) return features_per_split;
    const int m = static_cast<int>(std::sqrt(static_cast<double>(feature_dim)));
    return std::max(1, m);
}

namespace {

int majority_class(const std::vector<int>& counts) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(counts.size()); ++c)
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
    return best;  // ties resolve to the lowest class index
}

class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                int num_classes, const ForestConfig& cfg, int mtry, Rng& rng)
        : x_(x), y_(y), num_classes_(num_classes), cfg_(cfg), mtry_(mtry), rng_(rng) {}

    std::vector<TreeNode> build(std::vector<int> samples) {
        nodes_.clear();
        grow(std::move(samples), 0);
        return std::move(nodes_);
    }

private:
    int make_leaf(const std::vector<int>& counts) {
        TreeNode n;
        n.leaf_class = majority_class(counts);
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size()) - 1;
    }

    int grow(std::vector<int> samples, int depth) {
        std::vector<int> counts(static_cast<std::size_t>(num_classes_), 0);
        for (int s : samples) ++counts[static_cast<std::size_t>(y_[static_cast<std::size_t>(s)])];
        const int n = static_cast<int>(samples.size());
        const bool pure =
            *std::max_element(counts.begin(), counts.end()) == n;
        if (pure || n < 2 * cfg_.min_leaf || (cfg_.max_depth > 0 && depth >= cfg_.max_depth))
            return make_leaf(counts);

        // sample candidate features for this split
        const int dim = static_cast<int>(x_.front().size());
        const std::vector<int> candidates = rng_.sample_indices(dim, mtry_);

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_weighted = std::numeric_limits<double>::infinity();
        std::vector<int> order(samples.begin(), samples.end());
        std::vector<int> left_counts(static_cast<std::size_t>(num_classes_));
        for (int f : candidates) {
            std::sort(order.begin(), order.end(), [this, f](int a, int b) {
                const double va = x_[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
                const double vb = x_[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
                if (va != vb) return va < vb;
                return a < b;
            });
            std::fill(left_counts.begin(), left_counts.end(), 0);
            // incremental sums of squared counts for O(1) Gini updates
            double left_sq = 0.0, right_sq = 0.0;
            for (int c : counts) right_sq += static_cast<double>(c) * c;
            int n_left = 0;
            for (int i = 0; i + 1 < n; ++i) {
                const int s = order[static_cast<std::size_t>(i)];
                const int cls = y_[static_cast<std::size_t>(s)];
                const double lc = left_counts[static_cast<std::size_t>(cls)];
                const double rc = counts[static_cast<std::size_t>(cls)] - lc;
                left_sq += 2.0 * lc + 1.0;
                right_sq -= 2.0 * rc - 1.0;
                ++left_counts[static_cast<std::size_t>(cls)];
                ++n_left;
                const double v = x_[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
                const double vnext =
                    x_[static_cast<std::size_t>(order[static_cast<std::size_t>(i + 1)])]
                      [static_cast<std::size_t>(f)];
                if (v == vnext) continue;  // no boundary between equal values
                const int n_right = n - n_left;
                if (n_left < cfg_.min_leaf || n_right < cfg_.min_leaf) continue;
                // weighted Gini = Σ_side n_side · (1 − Σ_c p_c²); dropping the
                // constant n leaves −Σ_side (sum_sq_side / n_side) to minimize
                const double weighted = -(left_sq / n_left + right_sq / n_right);
                if (weighted < best_weighted) {
                    best_weighted = weighted;
                    best_feature = f;
                    best_threshold = (v + vnext) / 2.0;
                }
            }
        }
        if (best_feature < 0) return make_leaf(counts);

        std::vector<int> left, right;
        for (int s : samples) {
            if (x_[static_cast<std::size_t>(s)][static_cast<std::size_t>(best_feature)] <=
                best_threshold)
                left.push_back(s);
            else
                right.push_back(s);
        }
        if (left.empty() || right.empty()) return make_leaf(counts);

        TreeNode node;
        node.feature = best_feature;
        node.threshold = best_threshold;
        nodes_.push_back(node);
        const int self = static_cast<int>(nodes_.size()) - 1;
        const int li = grow(std::move(left), depth + 1);
        const int ri = grow(std::move(right), depth + 1);
        nodes_[static_cast<std::size_t>(self)].left = li;
        nodes_[static_cast<std::size_t>(self)].right = ri;
        return self;
    }

    const std::vector<std::vector<double>>& x_;
    const std::vector<int>& y_;
    int num_classes_;
    const ForestConfig& cfg_;
    int mtry_;
    Rng& rng_;
    std::vector<TreeNode> nodes_;
};

}  // namespace

Forest train_forest(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels, const ForestConfig& config) {
    if (features.empty()) throw DataConstraintError("forest: empty training set");
    if (features.size() != labels.size()) throw ConfigError("forest: label count mismatch");
    const int dim = static_cast<int>(features.front().size());
    for (const auto& row : features)
        if (static_cast<int>(row.size()) != dim)
            throw ConfigError("forest: inconsistent feature dimensions");
    config.validate(dim);

    int num_classes = 0;
    for (int y : labels) {
        if (y < 0) throw ConfigError("forest: negative label");
        num_classes = std::max(num_classes, y + 1);
    }
    bool multi = false;
    for (int y : labels)
        if (y != labels.front()) multi = true;
    if (!multi) throw DataConstraintError("forest: training set contains a single class");

    Forest forest;
    forest.config = config;
    forest.feature_dim = dim;
    forest.num_classes = num_classes;
    const int mtry = config.resolved_features_per_split(dim);
    const int n = static_cast<int>(features.size());
    for (int t = 0; t < config.num_trees; ++t) {
        Rng rng(derive_seed(config.seed, 0x7b0 + static_cast<std::uint64_t>(t)));
        std::vector<int> samples(static_cast<std::size_t>(n));
        if (config.bootstrap) {
            for (int i = 0; i < n; ++i)
                samples[static_cast<std::size_t>(i)] =
                    static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
        } else {
            std::iota(samples.begin(), samples.end(), 0);
        }
        TreeBuilder builder(features, labels, num_classes, config, mtry, rng);
        forest.trees.push_back(builder.build(std::move(samples)));
    }
    return forest;
}

int Forest::tree_predict(std::size_t tree, const std::vector<double>& x) const {
    const std::vector<TreeNode>& nodes = trees[tree];
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(i)].leaf_class;
}

Matrix Forest::predict_proba(const std::vector<std::vector<double>>& features) const {
    Matrix probs(static_cast<int>(features.size()), num_classes);
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (static_cast<int>(features[i].size()) != feature_dim)
            throw ConfigError("forest: feature dimension mismatch");
        for (std::size_t t = 0; t < trees.size(); ++t)
            probs.at(static_cast<int>(i), tree_predict(t, features[i])) += 1.0;
        for (int c = 0; c < num_classes; ++c)
            probs.at(static_cast<int>(i), c) /= static_cast<double>(trees.size());
    }
    return probs;
}

std::vector<int> Forest::predict(const std::vector<std::vector<double>>& features) const {
    return argmax_labels(predict_proba(features));
}

std::string Forest::to_json() const {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["kind"] = "forest";
    j["config"] = {{"num_trees", config.num_trees},
                   {"max_depth", config.max_depth},
                   {"min_leaf", config.min_leaf},
                   {"features_per_split", config.features_per_split},
                   {"bootstrap", config.bootstrap},
                   {"seed", config.seed}};
    j["feature_dim"] = feature_dim;
    j["num_classes"] = num_classes;
    nlohmann::ordered_json jt = nlohmann::ordered_json::array();
    for (const auto& tree : trees) {
        nlohmann::ordered_json jn = nlohmann::ordered_json::array();
        for (const TreeNode& n : tree)
            jn.push_back({n.feature, n.threshold, n.left, n.right, n.leaf_class});
        jt.push_back(std::move(jn));
    }
    j["trees"] = std::move(jt);
    return j.dump();
}

Forest Forest::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("forest JSON parse failure: ") + e.what());
    }
    Forest f;
    const auto& cj = j.at("config");
    f.config.num_trees = cj.at("num_trees").get<int>();
    f.config.max_depth = cj.at("max_depth").get<int>();
    f.config.min_leaf = cj.at("min_leaf").get<int>();
    f.config.features_per_split = cj.at("features_per_split").get<int>();
    f.config.bootstrap = cj.at("bootstrap").get<bool>();
    f.config.seed = cj.at("seed").get<std::uint64_t>();
    f.feature_dim = j.at("feature_dim").get<int>();
    f.num_classes = j.at("num_classes").get<int>();
    for (const auto& jn : j.at("trees")) {
        std::vector<TreeNode> tree;
        for (const auto& n : jn) {
            TreeNode node;
            node.feature = n.at(0).get<int>();
            node.threshold = n.at(1).get<double>();
            node.left = n.at(2).get<int>();
            node.right = n.at(3).get<int>();
            node.leaf_class = n.at(4).get<int>();
            tree.push_back(node);
        }
        f.trees.push_back(std::move(tree));
    }
    return f;
}

void Forest::save(const std::string& path) const { write_file(path, to_json()); }

Forest Forest::load(const std::string& path) { return from_json(read_file(path)); }

// ---------------------------------------------------------------------------
// Shared neural-baseline machinery
// ---------------------------------------------------------------------------

std::vector<int> encode_base_indices(const std::string& sequence, int fixed_length) {
    if (fixed_length <= 0) throw ConfigError("encode_base_indices: fixed_length must be positive");
    std::vector<int> out(static_cast<std::size_t>(fixed_length), -1);
    const std::size_t n = std::min(sequence.size(), static_cast<std::size_t>(fixed_length));
    for (std::size_t i = 0; i < n; ++i) {
        switch (sequence[i]) {
            case 'A': out[i] = 0; break;
            case 'C': out[i] = 1; break;
            case 'G': out[i] = 2; break;
            case 'T': out[i] = 3; break;
            default: break;  // N stays -1 (all-zero one-hot column)
        }
    }
    return out;
}

std::vector<int> argmax_labels(const Matrix& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows));
    for (int i = 0; i < probs.rows; ++i) {
        int best = 0;
        for (int j = 1; j < probs.cols; ++j)
            if (probs.at(i, j) > probs.at(i, best)) best = j;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

namespace {

Parameter& find_param(std::vector<Parameter>& params, const std::string& name) {
    for (Parameter& p : params)
        if (p.name == name) return p;
    throw ConfigError("unknown parameter: " + name);
}

void fill_glorot(Matrix& m, Rng& rng) {
    const double std_dev = std::sqrt(2.0 / (m.rows + m.cols));
    for (double& x : m.data) x = rng.normal() * std_dev;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix probs(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        const double* lrow = logits.row(i);
        double mx = lrow[0];
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, lrow[j]);
        double sum = 0.0;
        double* prow = probs.row(i);
        for (int j = 0; j < logits.cols; ++j) {
            prow[j] = std::exp(lrow[j] - mx);
            sum += prow[j];
        }
        for (int j = 0; j < logits.cols; ++j) prow[j] /= sum;
    }
    return probs;
}

// Generic minibatch Adam loop with warmup, periodic validation, patience,
// and best-checkpoint restoration. `train_one` builds the graph for one
// sample (loss pre-scaled by inv_batch), runs backward, and returns the raw
// cross-entropy value.
BaselineTrainResult train_loop(std::vector<Parameter>& params, std::size_t n_train,
                               const TrainingPlan& plan,
                               const std::function<double(std::size_t, double)>& train_one,
                               const std::function<double()>& validation_loss) {
    plan.validate(/*pretraining=*/false);
    BaselineTrainResult result;
    Rng rng(derive_seed(plan.seed, 0xba5e));
    std::vector<Parameter*> ptrs;
    for (Parameter& p : params) ptrs.push_back(&p);
    Adam adam(ptrs, plan.learning_rate);

    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(n_train) + plan.batch_size - 1) / plan.batch_size;
    const std::int64_t total_steps = steps_per_epoch * plan.max_epochs;
    const std::int64_t warmup_steps =
        std::llround(plan.warmup_fraction * static_cast<double>(total_steps));
    const std::int64_t eval_every = plan.eval_every > 0 ? plan.eval_every : steps_per_epoch;

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Matrix> best_params;
    int evals_without_improvement = 0;
    bool stop = false;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::int64_t step = 0;
    for (int epoch = 0; epoch < plan.max_epochs && !stop; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size() && !stop; start += plan.batch_size) {
            const std::size_t end = std::min(order.size(), start + plan.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            double batch_ce = 0.0;
            for (std::size_t i = start; i < end; ++i) batch_ce += train_one(order[i], inv_batch);
            ++step;
            double lr = plan.learning_rate;
            if (warmup_steps > 0 && step < warmup_steps)
                lr = plan.learning_rate * static_cast<double>(step) / static_cast<double>(warmup_steps);
            adam.set_learning_rate(lr);
            adam.step();
            result.step_loss.push_back(batch_ce * inv_batch);

            if (step % eval_every == 0) {
                const double vl = validation_loss();
                result.val_loss.push_back(vl);
                if (vl < best_val) {
                    best_val = vl;
                    best_params.clear();
                    for (const Parameter& p : params) best_params.push_back(p.value);
                    evals_without_improvement = 0;
                } else if (++evals_without_improvement >= plan.early_stop_patience) {
                    result.stopped_early = true;
                    stop = true;
                }
            }
        }
    }
    if (result.val_loss.empty()) {
        best_val = validation_loss();
        result.val_loss.push_back(best_val);
    }
    if (!best_params.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best_params[i];
    result.best_val_loss = best_val;
    return result;
}

void check_labeled_inputs(const std::vector<std::vector<int>>& inputs,
                          const std::vector<int>& labels, int fixed_length, int num_labels,
                          const char* who) {
    if (inputs.empty()) throw DataConstraintError(std::string(who) + ": empty input set");
    if (inputs.size() != labels.size())
        throw ConfigError(std::string(who) + ": label count mismatch");
    for (const auto& in : inputs)
        if (static_cast<int>(in.size()) != fixed_length)
            throw ConfigError(std::string(who) + ": input length differs from fixed_length");
    for (int y : labels)
        if (y < 0 || y >= num_labels) throw ConfigError(std::string(who) + ": label out of range");
}

}  // namespace

// ---------------------------------------------------------------------------
// CNN
// ---------------------------------------------------------------------------

void CnnConfig::validate() const {
    if (filters <= 0 || kernel_width <= 0 || dense_hidden <= 0)
        throw ConfigError("cnn: filters, kernel_width, and dense_hidden must be positive");
    if (fixed_length <= 0) throw ConfigError("cnn: fixed_length must be positive");
    if (fixed_length < kernel_width)
        throw ConfigError("cnn: fixed_length is shorter than kernel_width");
    if (num_labels < 2) throw ConfigError("cnn: num_labels must be at least 2");
}

CnnModel CnnModel::init(const CnnConfig& config) {
    config.validate();
    CnnModel m;
    m.config = config;
    m.params.emplace_back("conv.w", config.filters, config.kernel_width * 4);
    m.params.emplace_back("conv.b", 1, config.filters);
    m.params.emplace_back("dense1.w", config.dense_hidden, config.filters);
    m.params.emplace_back("dense1.b", 1, config.dense_hidden);
    m.params.emplace_back("dense2.w", config.num_labels, config.dense_hidden);
    m.params.emplace_back("dense2.b", 1, config.num_labels);
    Rng rng(derive_seed(config.seed, 0xc22));
    fill_glorot(m.params[0].value, rng);
    fill_glorot(m.params[2].value, rng);
    // final dense stays zero: uniform class probabilities at initialization
    for (Parameter& p : m.params) round_to_float32(p.value);
    return m;
}

Parameter& CnnModel::param(const std::string& name) { return find_param(params, name); }

std::vector<Parameter*> CnnModel::pointers() {
    std::vector<Parameter*> out;
    for (Parameter& p : params) out.push_back(&p);
    return out;
}

namespace {

Graph::NodeId cnn_logits(Graph& g, const CnnModel& m, const std::vector<int>& input,
                         bool train, std::vector<Parameter>& params) {
    auto node = [&g, train, &params](const std::string& name) {
        Parameter& p = find_param(params, name);
        return train ? g.leaf(p) : g.constant(p.value);
    };
    Graph::NodeId conv =
        g.conv1d_onehot(input, node("conv.w"), node("conv.b"), m.config.kernel_width);
    Graph::NodeId pooled = g.max_over_rows(g.relu(conv));
    Graph::NodeId h = g.relu(g.add_rowvec(g.matmul_nt(pooled, node("dense1.w")), node("dense1.b")));
    return g.add_rowvec(g.matmul_nt(h, node("dense2.w")), node("dense2.b"));
}

}  // namespace

Matrix CnnModel::predict_proba(const std::vector<std::vector<int>>& inputs) const {
    Matrix logits(static_cast<int>(inputs.size()), config.num_labels);
    auto& params_mut = const_cast<std::vector<Parameter>&>(params);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (static_cast<int>(inputs[i].size()) != config.fixed_length)
            throw ConfigError("cnn: input length differs from fixed_length");
        Graph g;
        const Matrix& lv = g.value(cnn_logits(g, *this, inputs[i], /*train=*/false, params_mut));
        for (int j = 0; j < config.num_labels; ++j) logits.at(static_cast<int>(i), j) = lv.at(0, j);
    }
    return softmax_rows(logits);
}

BaselineTrainResult train_cnn(CnnModel& model, const std::vector<std::vector<int>>& train,
                              const std::vector<int>& train_labels,
                              const std::vector<std::vector<int>>& validation,
                              const std::vector<int>& validation_labels, const TrainingPlan& plan) {
    check_labeled_inputs(train, train_labels, model.config.fixed_length, model.config.num_labels,
                         "cnn train");
    check_labeled_inputs(validation, validation_labels, model.config.fixed_length,
                         model.config.num_labels, "cnn validation");

    auto train_one = [&](std::size_t idx, double inv_batch) {
        Graph g;
        Graph::NodeId logits = cnn_logits(g, model, train[idx], /*train=*/true, model.params);
        Graph::NodeId ce = g.cross_entropy_sum(logits, {train_labels[idx]});
        g.backward(g.scale(ce, inv_batch));
        return g.value(ce).data[0];
    };
    auto val_loss = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            Graph g;
            Graph::NodeId logits = cnn_logits(g, model, validation[i], /*train=*/false, model.params);
            total += g.value(g.cross_entropy_sum(logits, {validation_labels[i]})).data[0];
        }
        return total / static_cast<double>(validation.size());
    };
    return train_loop(model.params, train.size(), plan, train_one, val_loss);
}

void CnnModel::save(const std::string& path) const {
    nlohmann::ordered_json meta;
    meta["format_version"] = 1;
    meta["kind"] = "cnn";
    meta["config"] = {{"filters", config.filters},
                      {"kernel_width", config.kernel_width},
                      {"dense_hidden", config.dense_hidden},
                      {"fixed_length", config.fixed_length},
                      {"num_labels", config.num_labels},
                      {"seed", config.seed}};
    std::vector<TensorEntry> tensors;
    for (const Parameter& p : params) tensors.push_back({p.name, p.value});
    write_tensor_container(path, std::move(meta), tensors);
}

CnnModel CnnModel::load(const std::string& path) {
    const TensorContainer tc = read_tensor_container(path);
    if (tc.meta.value("kind", "") != "cnn")
        throw ParseError("checkpoint is not a cnn model: " + path);
    const auto& cj = tc.meta.at("config");
    CnnConfig cfg;
    cfg.filters = cj.at("filters").get<int>();
    cfg.kernel_width = cj.at("kernel_width").get<int>();
    cfg.dense_hidden = cj.at("dense_hidden").get<int>();
    cfg.fixed_length = cj.at("fixed_length").get<int>();
    cfg.num_labels = cj.at("num_labels").get<int>();
    cfg.seed = cj.at("seed").get<std::uint64_t>();
    CnnModel m = CnnModel::init(cfg);
    for (Parameter& p : m.params) p.value = tc.require(p.name, p.value.rows, p.value.cols);
    return m;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

void LstmConfig::validate() const {
    if (units <= 0) throw ConfigError("lstm: units must be positive");
    if (fixed_length <= 0) throw ConfigError("lstm: fixed_length must be positive");
    if (num_labels < 2) throw ConfigError("lstm: num_labels must be at least 2");
}

LstmModel LstmModel::init(const LstmConfig& config) {
    config.validate();
    LstmModel m;
    m.config = config;
    const int H = config.units;
    m.params.emplace_back("lstm.w_input", 4 * H, 4);
    m.params.emplace_back("lstm.w_recur", 4 * H, H);
    m.params.emplace_back("lstm.b", 1, 4 * H);
    m.params.emplace_back("dense.w", config.num_labels, H);
    m.params.emplace_back("dense.b", 1, config.num_labels);
    Rng rng(derive_seed(config.seed, 0x15f3));
    fill_glorot(m.params[0].value, rng);
    fill_glorot(m.params[1].value, rng);
    // forget-gate bias starts at 1 so early gradients pass through time
    for (int j = 0; j < H; ++j) m.params[2].value.data[static_cast<std::size_t>(H + j)] = 1.0;
    // final dense stays zero: uniform class probabilities at initialization
    for (Parameter& p : m.params) round_to_float32(p.value);
    return m;
}

Parameter& LstmModel::param(const std::string& name) { return find_param(params, name); }

std::vector<Parameter*> LstmModel::pointers() {
    std::vector<Parameter*> out;
    for (Parameter& p : params) out.push_back(&p);
    return out;
}

namespace {

Graph::NodeId lstm_logits(Graph& g, const std::vector<int>& input, bool train,
                          std::vector<Parameter>& params) {
    auto node = [&g, train, &params](const std::string& name) {
        Parameter& p = find_param(params, name);
        return train ? g.leaf(p) : g.constant(p.value);
    };
    Graph::NodeId h =
        g.lstm_final_state(input, node("lstm.w_input"), node("lstm.w_recur"), node("lstm.b"));
    return g.add_rowvec(g.matmul_nt(h, node("dense.w")), node("dense.b"));
}

}  // namespace

Matrix LstmModel::final_states(const std::vector<std::vector<int>>& inputs) const {
    Matrix out(static_cast<int>(inputs.size()), config.units);
    auto& params_mut = const_cast<std::vector<Parameter>&>(params);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Graph g;
        auto node = [&g, &params_mut](const std::string& name) {
            return g.constant(find_param(params_mut, name).value);
        };
        const Matrix& hv = g.value(g.lstm_final_state(inputs[i], node("lstm.w_input"),
                                                      node("lstm.w_recur"), node("lstm.b")));
        for (int j = 0; j < config.units; ++j) out.at(static_cast<int>(i), j) = hv.at(0, j);
    }
    return out;
}

Matrix LstmModel::predict_proba(const std::vector<std::vector<int>>& inputs) const {
    Matrix logits(static_cast<int>(inputs.size()), config.num_labels);
    auto& params_mut = const_cast<std::vector<Parameter>&>(params);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (static_cast<int>(inputs[i].size()) != config.fixed_length)
            throw ConfigError("lstm: input length differs from fixed_length");
        Graph g;
        const Matrix& lv = g.value(lstm_logits(g, inputs[i], /*train=*/false, params_mut));
        for (int j = 0; j < config.num_labels; ++j) logits.at(static_cast<int>(i), j) = lv.at(0, j);
    }
    return softmax_rows(logits);
}

BaselineTrainResult train_lstm(LstmModel& model, const std::vector<std::vector<int>>& train,
                               const std::vector<int>& train_labels,
                               const std::vector<std::vector<int>>& validation,
                               const std::vector<int>& validation_labels,
                               const TrainingPlan& plan) {
    check_labeled_inputs(train, train_labels, model.config.fixed_length, model.config.num_labels,
                         "lstm train");
    check_labeled_inputs(validation, validation_labels, model.config.fixed_length,
                         model.config.num_labels, "lstm validation");

    auto train_one = [&](std::size_t idx, double inv_batch) {
        Graph g;
        Graph::NodeId logits = lstm_logits(g, train[idx], /*train=*/true, model.params);
        Graph::NodeId ce = g.cross_entropy_sum(logits, {train_labels[idx]});
        g.backward(g.scale(ce, inv_batch));
        return g.value(ce).data[0];
    };
    auto val_loss = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            Graph g;
            Graph::NodeId logits = lstm_logits(g, validation[i], /*train=*/false, model.params);
            total += g.value(g.cross_entropy_sum(logits, {validation_labels[i]})).data[0];
        }
        return total / static_cast<double>(validation.size());
    };
    return train_loop(model.params, train.size(), plan, train_one, val_loss);
}

void LstmModel::save(const std::string& path) const {
    nlohmann::ordered_json meta;
    meta["format_version"] = 1;
    meta["kind"] = "lstm";
    meta["config"] = {{"units", config.units},
                      {"fixed_length", config.fixed_length},
                      {"num_labels", config.num_labels},
                      {"seed", config.seed}};
    std::vector<TensorEntry> tensors;
    for (const Parameter& p : params) tensors.push_back({p.name, p.value});
    write_tensor_container(path, std::move(meta), tensors);
}

LstmModel LstmModel::load(const std::string& path) {
    const TensorContainer tc = read_tensor_container(path);
    if (tc.meta.value("kind", "") != "lstm")
        throw ParseError("checkpoint is not an lstm model: " + path);
    const auto& cj = tc.meta.at("config");
    LstmConfig cfg;
    cfg.units = cj.at("units").get<int>();
    cfg.fixed_length = cj.at("fixed_length").get<int>();
    cfg.num_labels = cj.at("num_labels").get<int>();
    cfg.seed = cj.at("seed").get<std::uint64_t>();
    LstmModel m = LstmModel::init(cfg);
    for (Parameter& p : m.params) p.value = tc.require(p.name, p.value.rows, p.value.cols);
    return m;
}

}  // namespace genolm
