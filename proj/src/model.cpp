#include "genolm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "genolm/common.hpp"
#include "genolm/container.hpp"
#include "json.hpp"

namespace genolm {

namespace {

void append_tensor_bytes(std::string& out, const Matrix& m) {
    for (double x : m.data) {
        const float f = static_cast<float>(x);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
}

int argmax_row(const Matrix& m, int row) {
    int best = 0;
    for (int j = 1; j < m.cols; ++j)
        if (m.at(row, j) > m.at(row, best)) best = j;
    return best;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size <= 0) throw ConfigError("model config: vocab_size must be positive");
    if (embed_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ffn_hidden <= 0)
        throw ConfigError("model config: dimensions must be positive");
    if (embed_dim % num_heads != 0)
        throw ConfigError("model config: embed_dim must be divisible by num_heads");
    if (head_dim() % 2 != 0)
        throw ConfigError("model config: head_dim must be even for rotary pairing");
    if (context_tokens < 2) throw ConfigError("model config: context_tokens must be >= 2");
    if (num_labels != 2 && num_labels != 7)
        throw ConfigError("model config: num_labels must be 2 or 7");
    if (rope_base <= 1.0) throw ConfigError("model config: rope_base must exceed 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0,1)");
}

void TrainingPlan::validate(bool pretraining) const {
    if (learning_rate <= 0.0) throw ConfigError("training plan: learning_rate must be positive");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
        throw ConfigError("training plan: warmup_fraction must be in [0,1)");
    if (max_epochs <= 0 || batch_size <= 0 || early_stop_patience <= 0)
        throw ConfigError("training plan: epochs, batch size, and patience must be positive");
    if (eval_every < 0) throw ConfigError("training plan: eval_every must be non-negative");
    if (pretraining && (mask_rate <= 0.0 || mask_rate > 0.5))
        throw ConfigError("training plan: mask_rate must be in (0, 0.5]");
}

Model Model::init(const ModelConfig& cfg, const std::string& vocab_fingerprint) {
    cfg.validate();
    Model m;
    m.config = cfg;
    m.vocab_fingerprint = vocab_fingerprint;

    const int d = cfg.embed_dim;
    const int f = cfg.ffn_hidden;
    auto add = [&m](const std::string& name, int rows, int cols) {
        m.params.emplace_back(name, rows, cols);
    };
    add("embedding", cfg.vocab_size, d);
    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        add(p + "ln1.gamma", 1, d);
        add(p + "ln1.beta", 1, d);
        add(p + "attn.wq", d, d);
        add(p + "attn.bq", 1, d);
        add(p + "attn.wk", d, d);
        add(p + "attn.bk", 1, d);
        add(p + "attn.wv", d, d);
        add(p + "attn.bv", 1, d);
        add(p + "attn.wo", d, d);
        add(p + "attn.bo", 1, d);
        add(p + "ln2.gamma", 1, d);
        add(p + "ln2.beta", 1, d);
        add(p + "ffn.wg", f, d);
        add(p + "ffn.wv", f, d);
        add(p + "ffn.wout", d, f);
    }
    add("lm_head.w", cfg.vocab_size, d);
    add("lm_head.b", 1, cfg.vocab_size);
    add("classifier.w", cfg.num_labels, d);
    add("classifier.b", 1, cfg.num_labels);
    m.rebuild_index();

    Rng rng(derive_seed(cfg.seed, 0x90de1));
    auto fill_normal = [&rng](Matrix& t, double std_dev) {
        for (double& x : t.data) x = rng.normal() * std_dev;
    };
    for (Parameter& p : m.params) {
        const std::string& n = p.name;
        if (n == "embedding") {
            fill_normal(p.value, 1.0 / std::sqrt(static_cast<double>(d)));
        } else if (n.ends_with(".gamma")) {
            std::fill(p.value.data.begin(), p.value.data.end(), 1.0);
        } else if (n.ends_with(".beta") || n.ends_with(".bq") || n.ends_with(".bk") ||
                   n.ends_with(".bv") || n.ends_with(".bo") || n == "lm_head.b") {
            // biases start at zero
        } else if (n.rfind("classifier.", 0) == 0) {
            // zero classifier head: uniform class probabilities at init
        } else {
            // Glorot-style normal for all projection matrices
            const double std_dev = std::sqrt(2.0 / (p.value.rows + p.value.cols));
            fill_normal(p.value, std_dev);
        }
        round_to_float32(p.value);
    }
    return m;
}

void Model::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < params.size(); ++i) index_[params[i].name] = i;
}

Parameter& Model::param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params[it->second];
}

const Parameter& Model::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params[it->second];
}

std::vector<Parameter*> Model::trainable_pointers() {
    std::vector<Parameter*> out;
    for (Parameter& p : params)
        if (p.trainable) out.push_back(&p);
    return out;
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for (const Parameter& p : params) n += static_cast<std::int64_t>(p.value.size());
    return n;
}

std::int64_t parameter_count_formula(const ModelConfig& cfg) {
    const std::int64_t V = cfg.vocab_size;
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t L = cfg.num_layers;
    const std::int64_t f = cfg.ffn_hidden;
    const std::int64_t k = cfg.num_labels;
    // embedding + L·(two norms + q/k/v/o with biases + gated FFN) + LM head + classifier
    return V * d + L * (4 * d * d + 8 * d + 3 * f * d) + (V * d + V) + (k * d + k);
}

std::string Model::fingerprint() const {
    std::uint64_t h = fnv1a64(vocab_fingerprint);
    nlohmann::ordered_json cj;
    cj["vocab_size"] = config.vocab_size;
    cj["embed_dim"] = config.embed_dim;
    cj["num_layers"] = config.num_layers;
    cj["num_heads"] = config.num_heads;
    cj["ffn_hidden"] = config.ffn_hidden;
    cj["context_tokens"] = config.context_tokens;
    cj["num_labels"] = config.num_labels;
    cj["rope_base"] = config.rope_base;
    cj["dropout"] = config.dropout;
    cj["cls_pooling"] = config.cls_pooling;
    h = fnv1a64(cj.dump(), h);
    for (const Parameter& p : params) {
        h = fnv1a64(p.name, h);
        std::string bytes;
        append_tensor_bytes(bytes, p.value);
        h = fnv1a64(bytes, h);
    }
    return hash_to_hex(h);
}

void Model::set_backbone_trainable(bool trainable) {
    for (Parameter& p : params)
        p.trainable = trainable || p.name.rfind("classifier.", 0) == 0;
}

namespace {

using NodeOf = std::function<Graph::NodeId(const std::string&)>;

// Lazily materializes each named parameter once per graph: trainable leaves
// during training, plain constants during inference.
NodeOf cached_node_of(Graph& g, Model& m, bool train) {
    auto cache = std::make_shared<std::map<std::string, Graph::NodeId>>();
    return [&g, &m, train, cache](const std::string& name) {
        auto it = cache->find(name);
        if (it != cache->end()) return it->second;
        Parameter& p = m.param(name);
        const Graph::NodeId id = train ? g.leaf(p) : g.constant(p.value);
        cache->emplace(name, id);
        return id;
    };
}

// Encoder trunk over one tokenized sequence; returns the T×d final hidden
// states node.
Graph::NodeId encode_tokens(Graph& g, const ModelConfig& cfg, const NodeOf& node_of,
                            const TokenSequence& seq, Rng* dropout_rng,
                            std::vector<Matrix>* capture_attention) {
    const int T = static_cast<int>(seq.ids.size());
    if (T == 0) throw ConfigError("forward: empty token sequence");
    if (T > cfg.context_tokens) throw ConfigError("forward: sequence exceeds context_tokens");
    if (static_cast<int>(seq.attention_mask.size()) != T)
        throw ConfigError("forward: attention mask length mismatch");
    std::vector<int> rows(seq.ids.size());
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        if (seq.ids[i] >= cfg.vocab_size)
            throw ConfigError("forward: token id out of range: " + std::to_string(seq.ids[i]));
        rows[i] = seq.ids[i];
    }
    const std::vector<bool>& key_valid = seq.attention_mask;
    const int dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Graph::NodeId x = g.gather_rows(node_of("embedding"), rows);
    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        // attention block, pre-norm residual
        Graph::NodeId ln1 = g.layer_norm(x, node_of(p + "ln1.gamma"), node_of(p + "ln1.beta"));
        Graph::NodeId q = g.add_rowvec(g.matmul_nt(ln1, node_of(p + "attn.wq")), node_of(p + "attn.bq"));
        Graph::NodeId k = g.add_rowvec(g.matmul_nt(ln1, node_of(p + "attn.wk")), node_of(p + "attn.bk"));
        Graph::NodeId v = g.add_rowvec(g.matmul_nt(ln1, node_of(p + "attn.wv")), node_of(p + "attn.bv"));
        std::vector<Graph::NodeId> head_ctx;
        for (int hd = 0; hd < cfg.num_heads; ++hd) {
            Graph::NodeId qh = g.rope(g.slice_cols(q, hd * dh, dh), cfg.rope_base);
            Graph::NodeId kh = g.rope(g.slice_cols(k, hd * dh, dh), cfg.rope_base);
            Graph::NodeId vh = g.slice_cols(v, hd * dh, dh);
            Graph::NodeId scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt_dh);
            Graph::NodeId probs = g.softmax_rows_masked(scores, key_valid);
            if (capture_attention) capture_attention->push_back(g.value(probs));
            head_ctx.push_back(g.matmul(probs, vh));
        }
        Graph::NodeId ctx = g.concat_cols(head_ctx);
        Graph::NodeId attn =
            g.add_rowvec(g.matmul_nt(ctx, node_of(p + "attn.wo")), node_of(p + "attn.bo"));
        if (dropout_rng && cfg.dropout > 0.0) attn = g.dropout(attn, cfg.dropout, *dropout_rng);
        x = g.add(x, attn);
        // gated feed-forward block, pre-norm residual
        Graph::NodeId ln2 = g.layer_norm(x, node_of(p + "ln2.gamma"), node_of(p + "ln2.beta"));
        Graph::NodeId gate = g.swish(g.matmul_nt(ln2, node_of(p + "ffn.wg")));
        Graph::NodeId val = g.matmul_nt(ln2, node_of(p + "ffn.wv"));
        Graph::NodeId ffn = g.matmul_nt(g.mul(gate, val), node_of(p + "ffn.wout"));
        if (dropout_rng && cfg.dropout > 0.0) ffn = g.dropout(ffn, cfg.dropout, *dropout_rng);
        x = g.add(x, ffn);
    }
    return x;
}

Graph::NodeId pooled_node(Graph& g, const ModelConfig& cfg, Graph::NodeId hidden,
                          const TokenSequence& seq) {
    if (cfg.cls_pooling) return g.gather_rows(hidden, {0});
    return g.mean_rows_masked(hidden, seq.attention_mask);
}

Graph::NodeId classifier_logits(Graph& g, const NodeOf& node_of, Graph::NodeId pooled) {
    return g.add_rowvec(g.matmul_nt(pooled, node_of("classifier.w")), node_of("classifier.b"));
}

}  // namespace

Model::ForwardResult Model::forward(const std::vector<TokenSequence>& batch,
                                    std::vector<Matrix>* capture_attention) const {
    if (batch.empty()) throw ConfigError("forward: empty batch");
    const std::size_t len = batch.front().ids.size();
    for (const TokenSequence& s : batch)
        if (s.ids.size() != len) throw ConfigError("forward: batch mixes sequence lengths");

    ForwardResult out;
    out.pooled = Matrix(static_cast<int>(batch.size()), config.embed_dim);
    out.logits = Matrix(static_cast<int>(batch.size()), config.num_labels);
    Model& self = const_cast<Model&>(*this);  // constants only; parameters are not mutated
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Graph g;
        NodeOf node_of = cached_node_of(g, self, /*train=*/false);
        Graph::NodeId h = encode_tokens(g, config, node_of, batch[i], nullptr, capture_attention);
        Graph::NodeId pooled = pooled_node(g, config, h, batch[i]);
        Graph::NodeId logits = classifier_logits(g, node_of, pooled);
        out.hidden.push_back(g.value(h));
        const Matrix& pv = g.value(pooled);
        const Matrix& lv = g.value(logits);
        for (int j = 0; j < out.pooled.cols; ++j) out.pooled.at(static_cast<int>(i), j) = pv.at(0, j);
        for (int j = 0; j < out.logits.cols; ++j) out.logits.at(static_cast<int>(i), j) = lv.at(0, j);
    }
    return out;
}

Matrix Model::embed(const std::vector<TokenSequence>& sequences) const {
    Matrix out(static_cast<int>(sequences.size()), config.embed_dim);
    Model& self = const_cast<Model&>(*this);
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        Graph g;
        NodeOf node_of = cached_node_of(g, self, /*train=*/false);
        Graph::NodeId h = encode_tokens(g, config, node_of, sequences[i], nullptr, nullptr);
        Graph::NodeId pooled = pooled_node(g, config, h, sequences[i]);
        const Matrix& pv = g.value(pooled);
        for (int j = 0; j < out.cols; ++j) out.at(static_cast<int>(i), j) = pv.at(0, j);
    }
    return out;
}

Matrix Model::lm_logits_at(const TokenSequence& seq, const std::vector<int>& positions) const {
    Model& self = const_cast<Model&>(*this);
    Graph g;
    NodeOf node_of = cached_node_of(g, self, /*train=*/false);
    Graph::NodeId h = encode_tokens(g, config, node_of, seq, nullptr, nullptr);
    Graph::NodeId sel = g.gather_rows(h, positions);
    Graph::NodeId logits = g.add_rowvec(g.matmul_nt(sel, node_of("lm_head.w")), node_of("lm_head.b"));
    return g.value(logits);
}

namespace {

struct MaskedSequence {
    TokenSequence tokens;       // with masking applied
    std::vector<int> positions; // selected positions
    std::vector<int> targets;   // original ids at those positions
};

// BERT-style corruption: round(mask_rate · eligible) positions, 80% [MASK],
// 10% random non-special token, 10% unchanged. CLS and pads are never
// eligible.
MaskedSequence mask_sequence(const TokenSequence& seq, double mask_rate, Rng& rng) {
    MaskedSequence out;
    out.tokens = seq;
    std::vector<int> eligible;
    for (std::size_t i = 0; i < seq.ids.size(); ++i)
        if (seq.ids[i] >= Vocabulary::kFirstNucleotideId) eligible.push_back(static_cast<int>(i));
    const long count = std::lround(mask_rate * static_cast<double>(eligible.size()));
    if (count <= 0) return out;
    const std::vector<int> chosen =
        rng.sample_indices(static_cast<int>(eligible.size()), static_cast<int>(count));
    for (int c : chosen) {
        const int pos = eligible[static_cast<std::size_t>(c)];
        out.positions.push_back(pos);
        out.targets.push_back(out.tokens.ids[static_cast<std::size_t>(pos)]);
        const double u = rng.uniform();
        if (u < 0.8) {
            out.tokens.ids[static_cast<std::size_t>(pos)] = Vocabulary::kMaskId;
        } else if (u < 0.9) {
            const std::uint16_t random_id = static_cast<std::uint16_t>(
                Vocabulary::kFirstNucleotideId +
                rng.uniform_below(Vocabulary::kSize - Vocabulary::kFirstNucleotideId));
            out.tokens.ids[static_cast<std::size_t>(pos)] = random_id;
        }  // else: keep the original token
    }
    return out;
}

double warmup_learning_rate(double base, std::int64_t step, std::int64_t warmup_steps) {
    if (warmup_steps <= 0 || step >= warmup_steps) return base;
    return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace

PretrainResult pretrain_masked(Model& model, const std::vector<TokenSequence>& corpus,
                               const TrainingPlan& plan) {
    plan.validate(/*pretraining=*/true);
    if (corpus.empty()) throw DataConstraintError("pretraining corpus is empty");

    PretrainResult result;
    Rng rng(derive_seed(plan.seed, 0x3a7));
    Adam adam(model.trainable_pointers(), plan.learning_rate);

    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(corpus.size()) + plan.batch_size - 1) / plan.batch_size;
    const std::int64_t total_steps = steps_per_epoch * plan.max_epochs;
    const std::int64_t warmup_steps =
        std::llround(plan.warmup_fraction * static_cast<double>(total_steps));

    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::int64_t step = 0;
    for (int epoch = 0; epoch < plan.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
            const std::size_t end = std::min(order.size(), start + plan.batch_size);
            std::vector<MaskedSequence> batch;
            std::size_t total_selected = 0;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(mask_sequence(corpus[order[i]], plan.mask_rate, rng));
                total_selected += batch.back().positions.size();
            }
            if (total_selected == 0) continue;
            double batch_ce = 0.0;
            for (const MaskedSequence& ms : batch) {
                if (ms.positions.empty()) continue;
                Graph g;
                NodeOf node_of = cached_node_of(g, model, /*train=*/true);
                Rng drop_rng(derive_seed(plan.seed, 0xd0 + static_cast<std::uint64_t>(step)));
                Graph::NodeId h = encode_tokens(g, model.config, node_of, ms.tokens,
                                                model.config.dropout > 0.0 ? &drop_rng : nullptr,
                                                nullptr);
                Graph::NodeId sel = g.gather_rows(h, ms.positions);
                Graph::NodeId logits =
                    g.add_rowvec(g.matmul_nt(sel, node_of("lm_head.w")), node_of("lm_head.b"));
                Graph::NodeId ce = g.cross_entropy_sum(logits, ms.targets);
                Graph::NodeId loss = g.scale(ce, 1.0 / static_cast<double>(total_selected));
                batch_ce += g.value(ce).data[0];
                g.backward(loss);
            }
            ++step;
            adam.set_learning_rate(warmup_learning_rate(plan.learning_rate, step, warmup_steps));
            adam.step();
            result.step_loss.push_back(batch_ce / static_cast<double>(total_selected));
        }
    }
    if (result.step_loss.empty())
        throw TrainingError("pretraining selected no maskable positions in any batch");
    result.initial_loss = result.step_loss.front();
    result.final_loss = result.step_loss.back();
    return result;
}

double classification_loss(const Model& model, const std::vector<TokenSequence>& seqs,
                           const std::vector<int>& labels) {
    if (seqs.empty()) throw DataConstraintError("classification_loss: empty set");
    if (seqs.size() != labels.size()) throw ConfigError("classification_loss: label count mismatch");
    double total = 0.0;
    Model& mm = const_cast<Model&>(model);  // constants only; parameters are not mutated
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= model.config.num_labels)
            throw ConfigError("classification_loss: label out of range");
        Graph g;
        NodeOf node_of = cached_node_of(g, mm, /*train=*/false);
        Graph::NodeId h = encode_tokens(g, model.config, node_of, seqs[i], nullptr, nullptr);
        Graph::NodeId pooled = pooled_node(g, model.config, h, seqs[i]);
        Graph::NodeId logits = classifier_logits(g, node_of, pooled);
        Graph::NodeId ce = g.cross_entropy_sum(logits, {labels[i]});
        total += g.value(ce).data[0];
    }
    return total / static_cast<double>(seqs.size());
}

Matrix predict_proba(const Model& model, const std::vector<TokenSequence>& seqs) {
    Matrix probs(static_cast<int>(seqs.size()), model.config.num_labels);
    Model& mm = const_cast<Model&>(model);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        Graph g;
        NodeOf node_of = cached_node_of(g, mm, /*train=*/false);
        Graph::NodeId h = encode_tokens(g, model.config, node_of, seqs[i], nullptr, nullptr);
        Graph::NodeId pooled = pooled_node(g, model.config, h, seqs[i]);
        const Matrix& lv = g.value(classifier_logits(g, node_of, pooled));
        double mx = lv.data[0];
        for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, lv.data[static_cast<std::size_t>(j)]);
        double sum = 0.0;
        for (int j = 0; j < lv.cols; ++j) {
            probs.at(static_cast<int>(i), j) = std::exp(lv.data[static_cast<std::size_t>(j)] - mx);
            sum += probs.at(static_cast<int>(i), j);
        }
        for (int j = 0; j < lv.cols; ++j) probs.at(static_cast<int>(i), j) /= sum;
    }
    return probs;
}

FinetuneResult finetune(Model& model, const std::vector<TokenSequence>& train,
                        const std::vector<int>& train_labels,
                        const std::vector<TokenSequence>& validation,
                        const std::vector<int>& validation_labels, const TrainingPlan& plan,
                        bool freeze_backbone) {
    plan.validate(/*pretraining=*/false);
    if (train.empty()) throw DataConstraintError("finetune: empty training set");
    if (validation.empty()) throw DataConstraintError("finetune: empty validation set");
    if (train.size() != train_labels.size() || validation.size() != validation_labels.size())
        throw ConfigError("finetune: label count mismatch");
    for (int y : train_labels)
        if (y < 0 || y >= model.config.num_labels) throw ConfigError("finetune: label out of range");
    for (int y : validation_labels)
        if (y < 0 || y >= model.config.num_labels) throw ConfigError("finetune: label out of range");

    model.set_backbone_trainable(!freeze_backbone);
    FinetuneResult result;
    Rng rng(derive_seed(plan.seed, 0xf17e));
    Adam adam(model.trainable_pointers(), plan.learning_rate);

    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(train.size()) + plan.batch_size - 1) / plan.batch_size;
    const std::int64_t total_steps = steps_per_epoch * plan.max_epochs;
    const std::int64_t warmup_steps =
        std::llround(plan.warmup_fraction * static_cast<double>(total_steps));
    const std::int64_t eval_every = plan.eval_every > 0 ? plan.eval_every : steps_per_epoch;

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Matrix> best_params;
    int evals_without_improvement = 0;
    bool stop = false;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::int64_t step = 0;
    for (int epoch = 0; epoch < plan.max_epochs && !stop; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size() && !stop; start += plan.batch_size) {
            const std::size_t end = std::min(order.size(), start + plan.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            double batch_ce = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                Graph g;
                NodeOf node_of = cached_node_of(g, model, /*train=*/true);
                Rng drop_rng(derive_seed(plan.seed, 0xd1 + static_cast<std::uint64_t>(step)));
                Graph::NodeId h = encode_tokens(g, model.config, node_of, train[idx],
                                                model.config.dropout > 0.0 ? &drop_rng : nullptr,
                                                nullptr);
                Graph::NodeId pooled = pooled_node(g, model.config, h, train[idx]);
                Graph::NodeId logits = classifier_logits(g, node_of, pooled);
                Graph::NodeId ce = g.cross_entropy_sum(logits, {train_labels[idx]});
                Graph::NodeId loss = g.scale(ce, inv_batch);
                batch_ce += g.value(ce).data[0];
                g.backward(loss);
            }
            ++step;
            adam.set_learning_rate(warmup_learning_rate(plan.learning_rate, step, warmup_steps));
            adam.step();
            result.step_loss.push_back(batch_ce * inv_batch);

            if (step % eval_every == 0) {
                const double vl = classification_loss(model, validation, validation_labels);
                result.val_loss.push_back(vl);
                if (vl < best_val) {
                    best_val = vl;
                    best_params.clear();
                    for (const Parameter& p : model.params) best_params.push_back(p.value);
                    evals_without_improvement = 0;
                } else if (++evals_without_improvement >= plan.early_stop_patience) {
                    result.stopped_early = true;
                    stop = true;
                }
            }
        }
        result.epochs_run = epoch + 1;
    }
    if (result.val_loss.empty()) {
        const double vl = classification_loss(model, validation, validation_labels);
        result.val_loss.push_back(vl);
        best_val = vl;
    }
    if (!best_params.empty())
        for (std::size_t i = 0; i < model.params.size(); ++i) model.params[i].value = best_params[i];
    result.best_val_loss = best_val;
    model.set_backbone_trainable(true);
    return result;
}

ZeroShotResult zero_shot_classify(const Matrix& embeddings, int num_classes,
                                  const std::vector<int>& true_labels, std::uint64_t seed) {
    const int n = embeddings.rows;
    const int d = embeddings.cols;
    const int k = num_classes;
    if (k < 2) throw ConfigError("zero_shot: need at least two classes");
    if (n < k) throw DataConstraintError("zero_shot: fewer points than classes");
    if (static_cast<int>(true_labels.size()) != n)
        throw ConfigError("zero_shot: label count mismatch");

    // l2-normalize rows; all-zero rows stay zero
    Matrix x = embeddings;
    for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        double* row = x.row(i);
        for (int j = 0; j < d; ++j) norm += row[j] * row[j];
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (int j = 0; j < d; ++j) row[j] /= norm;
    }

    ZeroShotResult result;
    Rng rng(derive_seed(seed, 0x2e5));

    auto sq_dist = [&](int row, const std::vector<double>& c) {
        const double* r = x.row(row);
        double acc = 0.0;
        for (int j = 0; j < d; ++j) {
            const double diff = r[j] - c[static_cast<std::size_t>(j)];
            acc += diff * diff;
        }
        return acc;
    };

    // k-means++ seeding
    std::vector<std::vector<double>> centroids;
    {
        const int first = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
        centroids.emplace_back(x.row(first), x.row(first) + d);
        std::vector<double> d2(static_cast<std::size_t>(n));
        while (static_cast<int>(centroids.size()) < k) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                double best = sq_dist(i, centroids[0]);
                for (std::size_t c = 1; c < centroids.size(); ++c)
                    best = std::min(best, sq_dist(i, centroids[c]));
                d2[static_cast<std::size_t>(i)] = best;
                total += best;
            }
            int pick;
            if (total <= 0.0) {
                pick = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
            } else {
                const double r = rng.uniform() * total;
                double acc = 0.0;
                pick = n - 1;
                for (int i = 0; i < n; ++i) {
                    acc += d2[static_cast<std::size_t>(i)];
                    if (acc >= r) {
                        pick = i;
                        break;
                    }
                }
            }
            centroids.emplace_back(x.row(pick), x.row(pick) + d);
        }
    }

    // Lloyd iterations, at most 100
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best_c = 0;
            double best_d = sq_dist(i, centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double dd = sq_dist(i, centroids[static_cast<std::size_t>(c)]);
                if (dd < best_d) {
                    best_d = dd;
                    best_c = c;
                }
            }
            if (assign[static_cast<std::size_t>(i)] != best_c) {
                assign[static_cast<std::size_t>(i)] = best_c;
                changed = true;
            }
        }
        if (!changed) break;
        for (int c = 0; c < k; ++c) {
            std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
            int count = 0;
            for (int i = 0; i < n; ++i) {
                if (assign[static_cast<std::size_t>(i)] != c) continue;
                const double* r = x.row(i);
                for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += r[j];
                ++count;
            }
            if (count > 0) {
                for (double& mv : mean) mv /= count;
                centroids[static_cast<std::size_t>(c)] = std::move(mean);
            }
            // empty cluster: keep the previous centroid
        }
    }
    result.cluster = assign;
    std::vector<int> cluster_sizes(static_cast<std::size_t>(k), 0);
    for (int c : assign) ++cluster_sizes[static_cast<std::size_t>(c)];
    if (std::find(cluster_sizes.begin(), cluster_sizes.end(), 0) != cluster_sizes.end())
        result.degenerate = true;

    // best-F1 permutation mapping (scoring only)
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best_perm = perm;
    double best_f1 = -1.0;
    std::vector<int> mapped(static_cast<std::size_t>(n));
    do {
        for (int i = 0; i < n; ++i)
            mapped[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        const double f = f1_score(ConfusionCounts::from_predictions(true_labels, mapped, k));
        if (f > best_f1) {
            best_f1 = f;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    result.cluster_to_label = best_perm;
    result.mapped_f1 = best_f1;
    result.predicted.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        result.predicted[static_cast<std::size_t>(i)] =
            best_perm[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];

    // label scores: softmax over negative squared centroid distances
    result.scores = Matrix(n, k);
    for (int i = 0; i < n; ++i) {
        std::vector<double> neg(static_cast<std::size_t>(k));
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            neg[static_cast<std::size_t>(c)] = -sq_dist(i, centroids[static_cast<std::size_t>(c)]);
            mx = std::max(mx, neg[static_cast<std::size_t>(c)]);
        }
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            neg[static_cast<std::size_t>(c)] = std::exp(neg[static_cast<std::size_t>(c)] - mx);
            sum += neg[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c)
            result.scores.at(i, best_perm[static_cast<std::size_t>(c)]) =
                neg[static_cast<std::size_t>(c)] / sum;
    }
    return result;
}

std::vector<ShotMetrics> few_shot_curve(const Model& base, const std::vector<TokenSequence>& pool,
                                        const std::vector<int>& pool_labels,
                                        const std::vector<TokenSequence>& test,
                                        const std::vector<int>& test_labels,
                                        const std::vector<int>& shots, const TrainingPlan& plan,
                                        bool freeze_backbone) {
    if (pool.size() != pool_labels.size() || test.size() != test_labels.size())
        throw ConfigError("few_shot: label count mismatch");
    if (shots.empty()) throw ConfigError("few_shot: empty shot list");
    if (!std::is_sorted(shots.begin(), shots.end()))
        throw ConfigError("few_shot: shot list must be ascending");
    if (shots.front() < 1) throw ConfigError("few_shot: shots must be at least 1");

    const int k = base.config.num_labels;
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < pool_labels.size(); ++i) {
        if (pool_labels[i] < 0 || pool_labels[i] >= k)
            throw ConfigError("few_shot: pool label out of range");
        by_class[static_cast<std::size_t>(pool_labels[i])].push_back(i);
    }
    for (int c = 0; c < k; ++c) {
        if (static_cast<int>(by_class[static_cast<std::size_t>(c)].size()) < shots.back())
            throw DataConstraintError("few_shot: class " + std::to_string(c) + " has only " +
                                      std::to_string(by_class[static_cast<std::size_t>(c)].size()) +
                                      " pool examples, need " + std::to_string(shots.back()));
    }

    std::vector<ShotMetrics> curve;
    for (int n : shots) {
        // Order-preserving stratified sample: choose indices per class, then
        // emit them in pool order so that n = pool size reproduces the pool
        // exactly.
        Rng srng(derive_seed(plan.seed, 0x515 + static_cast<std::uint64_t>(n)));
        std::vector<bool> chosen(pool.size(), false);
        for (int c = 0; c < k; ++c) {
            const auto& members = by_class[static_cast<std::size_t>(c)];
            for (int j : srng.sample_indices(static_cast<int>(members.size()), n))
                chosen[members[static_cast<std::size_t>(j)]] = true;
        }
        std::vector<TokenSequence> train_seqs;
        std::vector<int> train_labels;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!chosen[i]) continue;
            train_seqs.push_back(pool[i]);
            train_labels.push_back(pool_labels[i]);
        }

        Model trial = base;
        finetune(trial, train_seqs, train_labels, train_seqs, train_labels, plan, freeze_backbone);

        const Matrix probs = predict_proba(trial, test);
        std::vector<int> predicted(test.size());
        for (std::size_t i = 0; i < test.size(); ++i)
            predicted[i] = argmax_row(probs, static_cast<int>(i));

        ShotMetrics sm;
        sm.shots = n;
        sm.confusion = ConfusionCounts::from_predictions(test_labels, predicted, k);
        sm.accuracy = accuracy(sm.confusion);
        sm.f1 = f1_score(sm.confusion);
        sm.mcc = mcc(sm.confusion);
        int excluded = 0;
        sm.balanced_accuracy = balanced_accuracy(sm.confusion, &excluded);
        if (k == 2) {
            std::vector<double> pos_scores(test.size());
            for (std::size_t i = 0; i < test.size(); ++i) pos_scores[i] = probs.at(static_cast<int>(i), 1);
            sm.auc_roc = auc_roc(pos_scores, test_labels);
        } else {
            std::vector<std::vector<double>> score_rows(test.size());
            for (std::size_t i = 0; i < test.size(); ++i)
                score_rows[i].assign(probs.row(static_cast<int>(i)), probs.row(static_cast<int>(i)) + k);
            sm.auc_roc = auc_roc_ovr_macro(score_rows, test_labels);
        }
        curve.push_back(sm);
    }
    return curve;
}

void save_checkpoint(const Model& model, const std::string& path, const Adam* optimizer) {
    nlohmann::ordered_json meta;
    meta["format_version"] = 1;
    meta["kind"] = "transformer";
    nlohmann::ordered_json cj;
    cj["vocab_size"] = model.config.vocab_size;
    cj["embed_dim"] = model.config.embed_dim;
    cj["num_layers"] = model.config.num_layers;
    cj["num_heads"] = model.config.num_heads;
    cj["ffn_hidden"] = model.config.ffn_hidden;
    cj["context_tokens"] = model.config.context_tokens;
    cj["num_labels"] = model.config.num_labels;
    cj["rope_base"] = model.config.rope_base;
    cj["dropout"] = model.config.dropout;
    cj["seed"] = model.config.seed;
    cj["cls_pooling"] = model.config.cls_pooling;
    meta["config"] = cj;
    meta["vocab_fingerprint"] = model.vocab_fingerprint;
    if (optimizer) meta["optimizer"] = {{"step_count", optimizer->step_count()}};

    std::vector<TensorEntry> tensors;
    for (const Parameter& p : model.params) tensors.push_back({p.name, p.value});
    if (optimizer) {
        const auto& ps = optimizer->params();
        auto& m1 = const_cast<Adam*>(optimizer)->first_moments();
        auto& m2 = const_cast<Adam*>(optimizer)->second_moments();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            tensors.push_back({"adam.m." + ps[i]->name, m1[i]});
            tensors.push_back({"adam.v." + ps[i]->name, m2[i]});
        }
    }
    write_tensor_container(path, std::move(meta), tensors);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const TensorContainer tc = read_tensor_container(path);

    ModelConfig cfg;
    const auto& cj = tc.meta.at("config");
    cfg.vocab_size = cj.at("vocab_size").get<int>();
    cfg.embed_dim = cj.at("embed_dim").get<int>();
    cfg.num_layers = cj.at("num_layers").get<int>();
    cfg.num_heads = cj.at("num_heads").get<int>();
    cfg.ffn_hidden = cj.at("ffn_hidden").get<int>();
    cfg.context_tokens = cj.at("context_tokens").get<int>();
    cfg.num_labels = cj.at("num_labels").get<int>();
    cfg.rope_base = cj.at("rope_base").get<double>();
    cfg.dropout = cj.at("dropout").get<double>();
    cfg.seed = cj.at("seed").get<std::uint64_t>();
    cfg.cls_pooling = cj.at("cls_pooling").get<bool>();
    cfg.validate();

    LoadedCheckpoint out;
    out.model = Model::init(cfg, tc.meta.at("vocab_fingerprint").get<std::string>());
    for (Parameter& p : out.model.params)
        p.value = tc.require(p.name, p.value.rows, p.value.cols);
    if (tc.meta.contains("optimizer")) {
        out.has_optimizer = true;
        out.adam_step = tc.meta["optimizer"].at("step_count").get<std::int64_t>();
        for (const Parameter& p : out.model.params) {
            out.adam_m.push_back(tc.require("adam.m." + p.name, p.value.rows, p.value.cols));
            out.adam_v.push_back(tc.require("adam.v." + p.name, p.value.rows, p.value.cols));
        }
    }
    return out;
}

}  // namespace genolm
