#include "genolm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "genolm/baselines.hpp"
#include "genolm/charts.hpp"
#include "genolm/common.hpp"
#include "genolm/container.hpp"
#include "genolm/features.hpp"
#include "genolm/report.hpp"
#include "genolm/rng.hpp"

namespace fs = std::filesystem;

namespace genolm {

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (num_sequences <= 0) throw ConfigError("synth: num_sequences must be positive");
    if (length_bp <= 0) throw ConfigError("synth: length_bp must be positive");
    if (num_classes < 2) throw ConfigError("synth: at least two classes are required");
    if (mutation_rate < 0.0 || mutation_rate > 1.0)
        throw ConfigError("synth: mutation_rate must be in [0,1]");
    if (!motifs.empty() && static_cast<int>(motifs.size()) != num_classes)
        throw ConfigError("synth: motif list count must equal num_classes");
    for (const auto& class_motifs : motifs)
        for (const std::string& m : class_motifs) {
            if (m.empty()) throw ConfigError("synth: empty motif");
            if (static_cast<std::int64_t>(m.size()) > length_bp)
                throw ConfigError("synth: motif '" + m + "' is longer than length_bp");
            for (char c : m)
                if (c != 'A' && c != 'C' && c != 'G' && c != 'T')
                    throw ConfigError("synth: motif '" + m + "' contains non-ACGT character");
        }
}

nlohmann::ordered_json SyntheticSpec::to_json() const {
    nlohmann::ordered_json j;
    j["num_sequences"] = num_sequences;
    j["length_bp"] = length_bp;
    j["num_classes"] = num_classes;
    j["motifs"] = motifs;
    j["mutation_rate"] = mutation_rate;
    j["seed"] = seed;
    return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    s.num_sequences = j.value("num_sequences", s.num_sequences);
    s.length_bp = j.value("length_bp", s.length_bp);
    s.num_classes = j.value("num_classes", s.num_classes);
    if (j.contains("motifs")) s.motifs = j.at("motifs").get<std::vector<std::vector<std::string>>>();
    s.mutation_rate = j.value("mutation_rate", s.mutation_rate);
    s.seed = j.value("seed", s.seed);
    return s;
}

std::vector<std::string> synthetic_class_labels(int num_classes) {
    if (num_classes == 2) return {"nonpathogenic", "pathogenic"};
    std::vector<std::string> labels;
    for (int c = 0; c < num_classes; ++c) labels.push_back("class_" + std::to_string(c));
    return labels;
}

Dataset synthesize_dataset(const SyntheticSpec& spec) {
    spec.validate();
    const std::vector<std::string> labels = synthetic_class_labels(spec.num_classes);
    static constexpr char kBases[4] = {'A', 'C', 'G', 'T'};
    Rng rng(derive_seed(spec.seed, 0x5f27));
    std::vector<SequenceRecord> records;
    records.reserve(static_cast<std::size_t>(spec.num_sequences));
    for (int i = 0; i < spec.num_sequences; ++i) {
        const int cls = i % spec.num_classes;
        std::string s(static_cast<std::size_t>(spec.length_bp), 'A');
        for (char& c : s) c = kBases[rng.uniform_below(4)];
        if (!spec.motifs.empty())
            for (const std::string& motif : spec.motifs[static_cast<std::size_t>(cls)]) {
                const std::uint64_t span =
                    static_cast<std::uint64_t>(spec.length_bp) - motif.size() + 1;
                const std::size_t offset = static_cast<std::size_t>(rng.uniform_below(span));
                std::copy(motif.begin(), motif.end(), s.begin() + static_cast<std::ptrdiff_t>(offset));
            }
        if (spec.mutation_rate > 0.0)
            for (char& c : s)
                if (rng.uniform() < spec.mutation_rate) {
                    // substitute with one of the three other bases
                    const int code = c == 'A' ? 0 : c == 'C' ? 1 : c == 'G' ? 2 : 3;
                    c = kBases[(code + 1 + static_cast<int>(rng.uniform_below(3))) % 4];
                }
        SequenceRecord rec;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "synth_%06d", i);
        rec.id = idbuf;
        rec.sequence = std::move(s);
        rec.label = labels[static_cast<std::size_t>(cls)];
        rec.record_index = i;
        records.push_back(std::move(rec));
    }
    return make_dataset(std::move(records));
}

// ---------------------------------------------------------------------------
// Dataset directories
// ---------------------------------------------------------------------------

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create directory " + dir + ": " + ec.message());
}

void ensure_parent_dir(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec)
            throw ConfigError("cannot create directory " + p.parent_path().string() + ": " +
                              ec.message());
    }
}

std::string resolve_output(const std::string& path) {
    if (path.empty()) return path;
    if (fs::path(path).is_absolute()) return path;
    const char* root = std::getenv(kOutputRootEnv);
    if (root == nullptr || *root == '\0') return path;
    return (fs::path(root) / path).string();
}

}  // namespace

nlohmann::ordered_json dataset_summary_json(const Dataset& dataset) {
    nlohmann::ordered_json j;
    j["records"] = dataset.records.size();
    j["task"] = task_name(dataset.task);
    nlohmann::ordered_json label_counts;
    for (const std::string& l : dataset.label_set) label_counts[l] = 0;
    std::int64_t min_len = 0, max_len = 0;
    double sum_len = 0.0;
    for (const SequenceRecord& r : dataset.records) {
        if (!r.label.empty()) label_counts[r.label] = label_counts[r.label].get<std::int64_t>() + 1;
        const std::int64_t n = r.length_bp();
        if (min_len == 0 || n < min_len) min_len = n;
        max_len = std::max(max_len, n);
        sum_len += static_cast<double>(n);
    }
    j["label_counts"] = std::move(label_counts);
    nlohmann::ordered_json lengths;
    lengths["min_bp"] = min_len;
    lengths["max_bp"] = max_len;
    lengths["mean_bp"] =
        dataset.records.empty() ? 0.0 : sum_len / static_cast<double>(dataset.records.size());
    j["length_bp"] = std::move(lengths);
    // one histogram bucket per decade: [1,10), [10,100), ...
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (std::int64_t lo = 1; lo <= max_len; lo *= 10) {
        const std::int64_t hi = lo * 10;
        std::int64_t count = 0;
        for (const SequenceRecord& r : dataset.records)
            if (r.length_bp() >= lo && r.length_bp() < hi) ++count;
        hist.push_back({{"min_bp", lo}, {"max_bp", hi - 1}, {"count", count}});
    }
    j["length_histogram"] = std::move(hist);
    return j;
}

void write_dataset_dir(const Dataset& dataset, const std::string& dir) {
    ensure_dir(dir);
    write_fasta(dataset, (fs::path(dir) / "sequences.fasta").string());
    if (dataset.task != Task::kUnlabeled)
        write_label_manifest(dataset, (fs::path(dir) / "labels.tsv").string());
    write_file((fs::path(dir) / "summary.json").string(), dataset_summary_json(dataset).dump(2) + "\n");
}

Dataset read_dataset_dir(const std::string& dir) {
    const std::string fasta = (fs::path(dir) / "sequences.fasta").string();
    std::vector<SequenceRecord> records = parse_fasta(fasta);
    const std::string labels = (fs::path(dir) / "labels.tsv").string();
    if (fs::exists(labels)) {
        const LabelManifest manifest = read_label_manifest(labels);
        return attach_labels(records, manifest).dataset;
    }
    return make_dataset(std::move(records));
}

std::string dataset_fingerprint(const Dataset& dataset) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const SequenceRecord& r : dataset.records) {
        h = fnv1a64(r.id, h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(r.label, h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(r.sequence, h);
        h = fnv1a64("\n", h);
    }
    return hash_to_hex(h);
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
    if (!data_dir.empty() && !fs::exists(data_dir))
        throw ConfigError("data_dir does not exist: " + data_dir);
    if (!manifest_path.empty() && !fs::exists(manifest_path))
        throw ConfigError("manifest does not exist: " + manifest_path);
    if (!checkpoint_in.empty() && !fs::exists(checkpoint_in))
        throw ConfigError("checkpoint does not exist: " + checkpoint_in);
    if (model_kind != "transformer" && model_kind != "forest" && model_kind != "cnn" &&
        model_kind != "lstm")
        throw ConfigError("unknown model kind: " + model_kind);
    if (protocol != "standard" && protocol != "zero-shot" && protocol != "few-shot")
        throw ConfigError("unknown protocol: " + protocol);
    if (split_ratio <= 0.0 || split_ratio >= 1.0)
        throw ConfigError("split ratio must be in (0,1)");
    if (validation_fraction < 0.0 || validation_fraction > 0.5)
        throw ConfigError("validation_fraction must be in [0, 0.5]");
    if (fragment_length != kWholeGenome && fragment_length <= 0)
        throw ConfigError("fragment_length must be positive or the whole-genome sentinel");
    if (shots.empty()) throw ConfigError("shots list must not be empty");
    for (std::size_t i = 0; i < shots.size(); ++i) {
        if (shots[i] < 1) throw ConfigError("shots must be >= 1");
        if (i > 0 && shots[i] <= shots[i - 1]) throw ConfigError("shots must be strictly ascending");
    }
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["data_dir"] = data_dir;
    j["manifest"] = manifest_path;
    j["output_dir"] = output_dir;
    j["checkpoint_in"] = checkpoint_in;
    j["thresholds"] = {{"tau_identity", thresholds.tau_identity},
                       {"tau_coverage", thresholds.tau_coverage},
                       {"k", thresholds.k}};
    j["split"] = {{"ratio", split_ratio}, {"seed", split_seed}};
    j["fragment_length"] = fragment_length;
    nlohmann::ordered_json jm;
    jm["kind"] = model_kind;
    jm["transformer"] = {{"vocab_size", model.vocab_size},
                         {"embed_dim", model.embed_dim},
                         {"num_layers", model.num_layers},
                         {"num_heads", model.num_heads},
                         {"ffn_hidden", model.ffn_hidden},
                         {"context_tokens", model.context_tokens},
                         {"num_labels", model.num_labels},
                         {"rope_base", model.rope_base},
                         {"dropout", model.dropout},
                         {"seed", model.seed},
                         {"cls_pooling", model.cls_pooling}};
    jm["forest"] = {{"num_trees", forest.num_trees},
                    {"max_depth", forest.max_depth},
                    {"min_leaf", forest.min_leaf},
                    {"features_per_split", forest.features_per_split}};
    jm["cnn"] = {{"filters", cnn.filters},
                 {"kernel_width", cnn.kernel_width},
                 {"dense_hidden", cnn.dense_hidden},
                 {"fixed_length", cnn.fixed_length}};
    jm["lstm"] = {{"units", lstm.units}, {"fixed_length", lstm.fixed_length}};
    j["model"] = std::move(jm);
    j["training"] = {{"learning_rate", training.learning_rate},
                     {"warmup_fraction", training.warmup_fraction},
                     {"max_epochs", training.max_epochs},
                     {"batch_size", training.batch_size},
                     {"early_stop_patience", training.early_stop_patience},
                     {"eval_every", training.eval_every},
                     {"mask_rate", training.mask_rate},
                     {"seed", training.seed}};
    j["freeze_backbone"] = freeze_backbone;
    j["validation_fraction"] = validation_fraction;
    j["protocol"] = {{"name", protocol}, {"shots", shots}};
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.name = j.value("name", c.name);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.manifest_path = j.value("manifest", c.manifest_path);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.checkpoint_in = j.value("checkpoint_in", c.checkpoint_in);
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        c.thresholds.tau_identity = t.value("tau_identity", c.thresholds.tau_identity);
        c.thresholds.tau_coverage = t.value("tau_coverage", c.thresholds.tau_coverage);
        c.thresholds.k = t.value("k", c.thresholds.k);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        c.split_ratio = s.value("ratio", c.split_ratio);
        c.split_seed = s.value("seed", c.split_seed);
    }
    c.fragment_length = j.value("fragment_length", c.fragment_length);
    if (j.contains("model")) {
        const auto& m = j.at("model");
        c.model_kind = m.value("kind", c.model_kind);
        if (m.contains("transformer")) {
            const auto& t = m.at("transformer");
            c.model.vocab_size = t.value("vocab_size", c.model.vocab_size);
            c.model.embed_dim = t.value("embed_dim", c.model.embed_dim);
            c.model.num_layers = t.value("num_layers", c.model.num_layers);
            c.model.num_heads = t.value("num_heads", c.model.num_heads);
            c.model.ffn_hidden = t.value("ffn_hidden", c.model.ffn_hidden);
            c.model.context_tokens = t.value("context_tokens", c.model.context_tokens);
            c.model.num_labels = t.value("num_labels", c.model.num_labels);
            c.model.rope_base = t.value("rope_base", c.model.rope_base);
            c.model.dropout = t.value("dropout", c.model.dropout);
            c.model.seed = t.value("seed", c.model.seed);
            c.model.cls_pooling = t.value("cls_pooling", c.model.cls_pooling);
        }
        if (m.contains("forest")) {
            const auto& f = m.at("forest");
            c.forest.num_trees = f.value("num_trees", c.forest.num_trees);
            c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
            c.forest.min_leaf = f.value("min_leaf", c.forest.min_leaf);
            c.forest.features_per_split = f.value("features_per_split", c.forest.features_per_split);
        }
        if (m.contains("cnn")) {
            const auto& n = m.at("cnn");
            c.cnn.filters = n.value("filters", c.cnn.filters);
            c.cnn.kernel_width = n.value("kernel_width", c.cnn.kernel_width);
            c.cnn.dense_hidden = n.value("dense_hidden", c.cnn.dense_hidden);
            c.cnn.fixed_length = n.value("fixed_length", c.cnn.fixed_length);
        }
        if (m.contains("lstm")) {
            const auto& l = m.at("lstm");
            c.lstm.units = l.value("units", c.lstm.units);
            c.lstm.fixed_length = l.value("fixed_length", c.lstm.fixed_length);
        }
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
        c.training.warmup_fraction = t.value("warmup_fraction", c.training.warmup_fraction);
        c.training.max_epochs = t.value("max_epochs", c.training.max_epochs);
        c.training.batch_size = t.value("batch_size", c.training.batch_size);
        c.training.early_stop_patience = t.value("early_stop_patience", c.training.early_stop_patience);
        c.training.eval_every = t.value("eval_every", c.training.eval_every);
        c.training.mask_rate = t.value("mask_rate", c.training.mask_rate);
        c.training.seed = t.value("seed", c.training.seed);
    }
    c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    if (j.contains("protocol")) {
        const auto& p = j.at("protocol");
        c.protocol = p.value("name", c.protocol);
        if (p.contains("shots")) c.shots = p.at("shots").get<std::vector<int>>();
    }
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("run config " + path + ": " + e.what());
    }
    try {
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("run config " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Pipeline helpers
// ---------------------------------------------------------------------------

std::vector<TokenSequence> tokenize_dataset(const Vocabulary& vocab, const Dataset& dataset,
                                            int context_tokens) {
    std::vector<TokenSequence> tokens;
    tokens.reserve(dataset.records.size());
    std::size_t longest = 0;
    for (const SequenceRecord& r : dataset.records) {
        tokens.push_back(vocab.encode(r.sequence, context_tokens, r.id));
        longest = std::max(longest, tokens.back().ids.size());
    }
    for (TokenSequence& t : tokens)
        t = Vocabulary::pad_or_truncate(std::move(t), static_cast<int>(longest));
    return tokens;
}

void stratified_holdout(const std::vector<int>& labels, double fraction,
                        std::vector<std::size_t>* train_idx, std::vector<std::size_t>* val_idx) {
    train_idx->clear();
    val_idx->clear();
    if (fraction <= 0.0) {
        for (std::size_t i = 0; i < labels.size(); ++i) train_idx->push_back(i);
        return;
    }
    const int k = std::max(2, static_cast<int>(std::llround(1.0 / fraction)));
    std::map<int, int> seen, in_val, count;
    std::map<int, std::size_t> last_of_class;
    for (int l : labels) ++count[l];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        const int p = seen[c]++;
        last_of_class[c] = i;
        if (p % k == k - 1) {
            val_idx->push_back(i);
            ++in_val[c];
        } else {
            train_idx->push_back(i);
        }
    }
    // classes with >= 2 members always contribute one validation example
    for (const auto& [c, n] : count) {
        if (n < 2 || in_val[c] > 0) continue;
        const std::size_t mv = last_of_class[c];
        train_idx->erase(std::find(train_idx->begin(), train_idx->end(), mv));
        val_idx->push_back(mv);
    }
    std::sort(val_idx->begin(), val_idx->end());
}

std::string timestamp_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

namespace {

std::string version_string() {
    return std::string("genolm ") + kToolkitVersion +
           "\nfile formats: checkpoint GLMCKPT1 v1; token stream GLMTOK01; "
           "report JSON v1; partition manifest TSV v1\n";
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    for (const std::string& part : split_on(text, ',')) {
        try {
            out.push_back(std::stoi(part));
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": '" + part + "' is not an integer");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    for (const std::string& part : split_on(text, ',')) {
        try {
            out.push_back(std::stod(part));
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": '" + part + "' is not a number");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
    return out;
}

/// "dir/name.tsv" + "mmseq80" -> "dir/name.mmseq80.tsv"
std::string suffixed_path(const std::string& path, const std::string& suffix) {
    const fs::path p(path);
    fs::path out = p.parent_path();
    const std::string stem = p.stem().string();
    const std::string ext = p.extension().string();
    out /= stem + "." + suffix + ext;
    return out.string();
}

struct LoadedData {
    Dataset full, train, test;
    std::vector<int> train_labels, test_labels;
    int num_classes = 0;
    std::string fingerprint;
    bool has_manifest = false;
};

std::vector<int> labels_of(const Dataset& subset, const Dataset& full, const char* which) {
    std::vector<int> labels;
    labels.reserve(subset.records.size());
    for (const SequenceRecord& r : subset.records) {
        const int idx = full.label_index(r.label);
        if (idx < 0)
            throw DataConstraintError(std::string("record '") + r.id + "' in the " + which +
                                      " split has no label");
        labels.push_back(idx);
    }
    return labels;
}

LoadedData load_experiment_data(RunConfig& cfg, bool require_manifest, bool require_labels) {
    if (cfg.data_dir.empty())
        throw ConfigError("no dataset directory given (set --data or the config's data_dir)");
    LoadedData d;
    d.full = read_dataset_dir(cfg.data_dir);
    d.fingerprint = dataset_fingerprint(d.full);
    d.num_classes = static_cast<int>(d.full.label_set.size());
    if (!cfg.manifest_path.empty()) {
        PartitionManifest manifest = read_manifest(cfg.manifest_path);
        manifest.check_leakage_invariant();
        // echo the manifest's actual parameters into the resolved config
        cfg.thresholds = manifest.thresholds;
        cfg.split_ratio = manifest.split_ratio;
        cfg.split_seed = manifest.seed;
        d.train = dataset_for_split(d.full, manifest, Split::kTrain);
        d.test = dataset_for_split(d.full, manifest, Split::kTest);
        d.has_manifest = true;
    } else {
        if (require_manifest)
            throw ConfigError("this command needs a partition manifest (--manifest)");
        d.train = d.full;
        d.test = d.full;
    }
    if (require_labels) {
        if (d.num_classes < 2)
            throw DataConstraintError("dataset has fewer than two label classes");
        d.train_labels = labels_of(d.train, d.full, "train");
        d.test_labels = labels_of(d.test, d.full, "test");
        if (d.test.records.empty()) throw DataConstraintError("test split is empty");
    }
    return d;
}

std::vector<std::vector<double>> matrix_rows(const Matrix& m) {
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(m.rows));
    for (int i = 0; i < m.rows; ++i)
        rows.emplace_back(m.row(i), m.row(i) + m.cols);
    return rows;
}

EvaluationReport base_report(const RunConfig& cfg, const LoadedData& d,
                             const std::string& protocol, const std::string& model_fp) {
    EvaluationReport rep;
    rep.name = cfg.name.empty() ? cfg.model_kind : cfg.name;
    rep.protocol = protocol;
    rep.model_kind = cfg.model_kind;
    rep.dataset_fingerprint = d.fingerprint;
    rep.model_fingerprint = model_fp;
    rep.config = cfg.to_json();
    rep.timestamp = timestamp_now();
    return rep;
}

void emit_report(const EvaluationReport& rep, const RunConfig& cfg, std::ostream& out) {
    ensure_dir(cfg.output_dir);
    const std::string path = (fs::path(cfg.output_dir) / "report.json").string();
    rep.save(path);
    for (const MetricRow& r : rep.rows) {
        char line[256];
        std::snprintf(line, sizeof(line),
                      "%s: accuracy=%.4f f1=%.4f mcc=%.4f auc_roc=%.4f balanced_accuracy=%.4f",
                      r.label.c_str(), r.accuracy, r.f1, r.mcc, r.auc_roc, r.balanced_accuracy);
        out << line << '\n';
    }
    out << "report: " << path << '\n';
}

// per-record inputs for the fixed-length neural baselines
std::vector<std::vector<int>> base_index_inputs(const Dataset& ds, int fixed_length) {
    std::vector<std::vector<int>> out;
    out.reserve(ds.records.size());
    for (const SequenceRecord& r : ds.records)
        out.push_back(encode_base_indices(r.sequence, fixed_length));
    return out;
}

int resolve_fixed_length(int configured, const Dataset& train) {
    if (configured > 0) return configured;
    std::int64_t shortest = 0;
    for (const SequenceRecord& r : train.records)
        if (shortest == 0 || r.length_bp() < shortest) shortest = r.length_bp();
    if (shortest <= 0) throw DataConstraintError("cannot derive fixed_length from empty train split");
    return static_cast<int>(shortest);
}

template <typename T>
void select_subset(const std::vector<T>& items, const std::vector<std::size_t>& idx,
                   std::vector<T>* out) {
    out->clear();
    out->reserve(idx.size());
    for (std::size_t i : idx) out->push_back(items[i]);
}

void cmd_train(RunConfig cfg, std::ostream& out) {
    cfg.output_dir = resolve_output(cfg.output_dir);
    cfg.validate();
    cfg.training.validate(/*pretraining=*/false);
    LoadedData d = load_experiment_data(cfg, /*require_manifest=*/true, /*require_labels=*/true);
    ensure_dir(cfg.output_dir);

    std::vector<int> predicted;
    std::vector<std::vector<double>> scores;
    std::string model_fp;
    nlohmann::ordered_json details;

    if (cfg.model_kind == "transformer") {
        if (d.num_classes != 2 && d.num_classes != 7)
            throw ConfigError("the transformer supports the binary and 7-class tasks only");
        const Vocabulary vocab;
        cfg.model.num_labels = d.num_classes;
        cfg.model.vocab_size = vocab.size();
        Model model;
        if (!cfg.checkpoint_in.empty()) {
            model = load_checkpoint(cfg.checkpoint_in).model;
            if (model.vocab_fingerprint != vocab.fingerprint())
                throw ConfigError("checkpoint was built against a different vocabulary");
            if (model.config.num_labels != d.num_classes)
                throw ConfigError("checkpoint label count differs from the dataset");
            cfg.model = model.config;  // echo the architecture actually used
        } else {
            model = Model::init(cfg.model, vocab.fingerprint());
        }
        const auto train_tokens = tokenize_dataset(vocab, d.train, model.config.context_tokens);
        const auto test_tokens = tokenize_dataset(vocab, d.test, model.config.context_tokens);
        std::vector<std::size_t> tr, va;
        stratified_holdout(d.train_labels, cfg.validation_fraction, &tr, &va);
        std::vector<TokenSequence> tr_tokens, va_tokens;
        std::vector<int> tr_labels, va_labels;
        select_subset(train_tokens, tr, &tr_tokens);
        select_subset(d.train_labels, tr, &tr_labels);
        select_subset(train_tokens, va, &va_tokens);
        select_subset(d.train_labels, va, &va_labels);
        if (va_tokens.empty()) {  // tiny datasets: validate on the train set
            va_tokens = tr_tokens;
            va_labels = tr_labels;
        }
        const FinetuneResult fr = finetune(model, tr_tokens, tr_labels, va_tokens, va_labels,
                                           cfg.training, cfg.freeze_backbone);
        save_checkpoint(model, (fs::path(cfg.output_dir) / "model.ckpt").string());
        const Matrix probs = predict_proba(model, test_tokens);
        predicted = argmax_labels(probs);
        scores = matrix_rows(probs);
        model_fp = model.fingerprint();
        details["best_val_loss"] = fr.best_val_loss;
        details["epochs_run"] = fr.epochs_run;
        details["stopped_early"] = fr.stopped_early;
        details["optimizer_steps"] = fr.step_loss.size();
    } else if (cfg.model_kind == "forest") {
        std::vector<std::vector<double>> train_x, test_x;
        for (const SequenceRecord& r : d.train.records) train_x.push_back(kmer_frequencies(r.sequence));
        for (const SequenceRecord& r : d.test.records) test_x.push_back(kmer_frequencies(r.sequence));
        ForestConfig fc;
        fc.num_trees = cfg.forest.num_trees;
        fc.max_depth = cfg.forest.max_depth;
        fc.min_leaf = cfg.forest.min_leaf;
        fc.features_per_split = cfg.forest.features_per_split;
        fc.seed = cfg.training.seed;
        const Forest f = train_forest(train_x, d.train_labels, fc);
        const std::string path = (fs::path(cfg.output_dir) / "model.forest.json").string();
        f.save(path);
        const Matrix probs = f.predict_proba(test_x);
        predicted = argmax_labels(probs);
        scores = matrix_rows(probs);
        model_fp = fingerprint_file(path);
        details["trees"] = f.trees.size();
    } else {  // cnn / lstm
        const bool is_cnn = cfg.model_kind == "cnn";
        const int fixed = resolve_fixed_length(
            is_cnn ? cfg.cnn.fixed_length : cfg.lstm.fixed_length, d.train);
        if (is_cnn)
            cfg.cnn.fixed_length = fixed;
        else
            cfg.lstm.fixed_length = fixed;
        const auto train_in = base_index_inputs(d.train, fixed);
        const auto test_in = base_index_inputs(d.test, fixed);
        std::vector<std::size_t> tr, va;
        stratified_holdout(d.train_labels, cfg.validation_fraction, &tr, &va);
        std::vector<std::vector<int>> tr_in, va_in;
        std::vector<int> tr_labels, va_labels;
        select_subset(train_in, tr, &tr_in);
        select_subset(d.train_labels, tr, &tr_labels);
        select_subset(train_in, va, &va_in);
        select_subset(d.train_labels, va, &va_labels);
        if (va_in.empty()) {
            va_in = tr_in;
            va_labels = tr_labels;
        }
        const std::string path = (fs::path(cfg.output_dir) / "model.ckpt").string();
        BaselineTrainResult br;
        Matrix probs;
        if (is_cnn) {
            CnnConfig cc;
            cc.filters = cfg.cnn.filters;
            cc.kernel_width = cfg.cnn.kernel_width;
            cc.dense_hidden = cfg.cnn.dense_hidden;
            cc.fixed_length = fixed;
            cc.num_labels = d.num_classes;
            cc.seed = cfg.training.seed;
            CnnModel m = CnnModel::init(cc);
            br = train_cnn(m, tr_in, tr_labels, va_in, va_labels, cfg.training);
            m.save(path);
            probs = m.predict_proba(test_in);
        } else {
            LstmConfig lc;
            lc.units = cfg.lstm.units;
            lc.fixed_length = fixed;
            lc.num_labels = d.num_classes;
            lc.seed = cfg.training.seed;
            LstmModel m = LstmModel::init(lc);
            br = train_lstm(m, tr_in, tr_labels, va_in, va_labels, cfg.training);
            m.save(path);
            probs = m.predict_proba(test_in);
        }
        predicted = argmax_labels(probs);
        scores = matrix_rows(probs);
        model_fp = fingerprint_file(path);
        details["best_val_loss"] = br.best_val_loss;
        details["stopped_early"] = br.stopped_early;
        details["optimizer_steps"] = br.step_loss.size();
    }

    EvaluationReport rep = base_report(cfg, d, "standard", model_fp);
    rep.details = std::move(details);
    rep.rows.push_back(
        compute_metric_row(d.test_labels, predicted, scores, d.num_classes, "standard"));
    emit_report(rep, cfg, out);
}

void cmd_pretrain(RunConfig cfg, std::ostream& out) {
    cfg.output_dir = resolve_output(cfg.output_dir);
    cfg.validate();
    cfg.training.validate(/*pretraining=*/true);
    if (cfg.model_kind != "transformer")
        throw ConfigError("pretraining applies to the transformer only");
    LoadedData d = load_experiment_data(cfg, /*require_manifest=*/false, /*require_labels=*/false);
    const Vocabulary vocab;
    cfg.model.vocab_size = vocab.size();
    Model model;
    if (!cfg.checkpoint_in.empty()) {
        model = load_checkpoint(cfg.checkpoint_in).model;
        cfg.model = model.config;
    } else {
        model = Model::init(cfg.model, vocab.fingerprint());
    }
    const auto tokens = tokenize_dataset(vocab, d.train, model.config.context_tokens);
    if (tokens.empty()) throw DataConstraintError("pretraining corpus is empty");
    const PretrainResult pr = pretrain_masked(model, tokens, cfg.training);
    ensure_dir(cfg.output_dir);
    save_checkpoint(model, (fs::path(cfg.output_dir) / "model.ckpt").string());

    EvaluationReport rep = base_report(cfg, d, "pretrain", model.fingerprint());
    rep.details["initial_loss"] = pr.initial_loss;
    rep.details["final_loss"] = pr.final_loss;
    rep.details["optimizer_steps"] = pr.step_loss.size();
    ensure_dir(cfg.output_dir);
    rep.save((fs::path(cfg.output_dir) / "report.json").string());
    char line[160];
    std::snprintf(line, sizeof(line), "masked-LM loss: initial=%.4f final=%.4f (%zu steps)",
                  pr.initial_loss, pr.final_loss, pr.step_loss.size());
    out << line << '\n';
    out << "checkpoint: " << (fs::path(cfg.output_dir) / "model.ckpt").string() << '\n';
}

/// Reads enough of the checkpoint to tell which model family wrote it.
std::string sniff_model_kind(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.rfind(kContainerMagic, 0) == 0) {
        const TensorContainer tc = read_tensor_container(path);
        return tc.meta.value("kind", "");
    }
    try {
        const nlohmann::json j = nlohmann::json::parse(bytes);
        if (j.value("kind", "") == "forest") return "forest";
    } catch (const nlohmann::json::exception&) {
        // fall through to the error below
    }
    throw ParseError("unrecognized model file: " + path);
}

void cmd_evaluate(RunConfig cfg, std::ostream& out) {
    cfg.output_dir = resolve_output(cfg.output_dir);
    if (cfg.checkpoint_in.empty()) throw ConfigError("evaluate needs --checkpoint");
    cfg.validate();
    cfg.model_kind = sniff_model_kind(cfg.checkpoint_in);
    LoadedData d = load_experiment_data(cfg, /*require_manifest=*/false, /*require_labels=*/true);

    std::vector<int> predicted;
    std::vector<std::vector<double>> scores;
    std::string model_fp;
    Matrix probs;
    if (cfg.model_kind == "transformer") {
        const Vocabulary vocab;
        Model model = load_checkpoint(cfg.checkpoint_in).model;
        if (model.vocab_fingerprint != vocab.fingerprint())
            throw ConfigError("checkpoint was built against a different vocabulary");
        if (model.config.num_labels != d.num_classes)
            throw ConfigError("checkpoint label count differs from the dataset");
        cfg.model = model.config;
        probs = predict_proba(model, tokenize_dataset(vocab, d.test, model.config.context_tokens));
        model_fp = model.fingerprint();
    } else if (cfg.model_kind == "forest") {
        const Forest f = Forest::load(cfg.checkpoint_in);
        if (f.num_classes != d.num_classes)
            throw ConfigError("forest class count differs from the dataset");
        std::vector<std::vector<double>> test_x;
        for (const SequenceRecord& r : d.test.records) test_x.push_back(kmer_frequencies(r.sequence));
        probs = f.predict_proba(test_x);
        model_fp = fingerprint_file(cfg.checkpoint_in);
    } else if (cfg.model_kind == "cnn") {
        const CnnModel m = CnnModel::load(cfg.checkpoint_in);
        if (m.config.num_labels != d.num_classes)
            throw ConfigError("cnn class count differs from the dataset");
        cfg.cnn.fixed_length = m.config.fixed_length;
        probs = m.predict_proba(base_index_inputs(d.test, m.config.fixed_length));
        model_fp = fingerprint_file(cfg.checkpoint_in);
    } else {
        const LstmModel m = LstmModel::load(cfg.checkpoint_in);
        if (m.config.num_labels != d.num_classes)
            throw ConfigError("lstm class count differs from the dataset");
        cfg.lstm.fixed_length = m.config.fixed_length;
        probs = m.predict_proba(base_index_inputs(d.test, m.config.fixed_length));
        model_fp = fingerprint_file(cfg.checkpoint_in);
    }
    predicted = argmax_labels(probs);
    scores = matrix_rows(probs);

    EvaluationReport rep = base_report(cfg, d, "standard", model_fp);
    rep.details["evaluated_records"] = d.test.records.size();
    rep.details["checkpoint"] = cfg.checkpoint_in;
    rep.rows.push_back(
        compute_metric_row(d.test_labels, predicted, scores, d.num_classes, "standard"));
    emit_report(rep, cfg, out);
}

void cmd_zeroshot(RunConfig cfg, std::ostream& out) {
    cfg.output_dir = resolve_output(cfg.output_dir);
    cfg.validate();
    if (cfg.model_kind != "transformer")
        throw ConfigError("zero-shot classification applies to the transformer only");
    cfg.protocol = "zero-shot";
    LoadedData d = load_experiment_data(cfg, /*require_manifest=*/false, /*require_labels=*/true);

    const Vocabulary vocab;
    Model model;
    if (!cfg.checkpoint_in.empty()) {
        model = load_checkpoint(cfg.checkpoint_in).model;
        if (model.vocab_fingerprint != vocab.fingerprint())
            throw ConfigError("checkpoint was built against a different vocabulary");
        cfg.model = model.config;
    } else {
        if (d.num_classes != 2 && d.num_classes != 7)
            throw ConfigError("the transformer supports the binary and 7-class tasks only");
        cfg.model.num_labels = d.num_classes;
        cfg.model.vocab_size = vocab.size();
        model = Model::init(cfg.model, vocab.fingerprint());
    }
    const auto tokens = tokenize_dataset(vocab, d.test, model.config.context_tokens);
    const Matrix embeddings = model.embed(tokens);
    const ZeroShotResult z =
        zero_shot_classify(embeddings, d.num_classes, d.test_labels, cfg.training.seed);

    EvaluationReport rep = base_report(cfg, d, "zero-shot", model.fingerprint());
    rep.details["cluster_to_label"] = z.cluster_to_label;
    rep.details["mapped_f1"] = z.mapped_f1;
    rep.details["degenerate"] = z.degenerate;
    rep.rows.push_back(compute_metric_row(d.test_labels, z.predicted, matrix_rows(z.scores),
                                          d.num_classes, "zero-shot"));
    emit_report(rep, cfg, out);
}

void cmd_fewshot(RunConfig cfg, std::ostream& out) {
    cfg.output_dir = resolve_output(cfg.output_dir);
    cfg.validate();
    if (cfg.model_kind != "transformer")
        throw ConfigError("the few-shot protocol applies to the transformer only");
    cfg.protocol = "few-shot";
    cfg.training.validate(/*pretraining=*/false);
    LoadedData d = load_experiment_data(cfg, /*require_manifest=*/true, /*require_labels=*/true);
    if (d.num_classes != 2 && d.num_classes != 7)
        throw ConfigError("the transformer supports the binary and 7-class tasks only");

    const Vocabulary vocab;
    Model base;
    if (!cfg.checkpoint_in.empty()) {
        base = load_checkpoint(cfg.checkpoint_in).model;
        if (base.vocab_fingerprint != vocab.fingerprint())
            throw ConfigError("checkpoint was built against a different vocabulary");
        if (base.config.num_labels != d.num_classes)
            throw ConfigError("checkpoint label count differs from the dataset");
        cfg.model = base.config;
    } else {
        cfg.model.num_labels = d.num_classes;
        cfg.model.vocab_size = vocab.size();
        base = Model::init(cfg.model, vocab.fingerprint());
    }
    const auto pool_tokens = tokenize_dataset(vocab, d.train, base.config.context_tokens);
    const auto test_tokens = tokenize_dataset(vocab, d.test, base.config.context_tokens);
    const std::vector<ShotMetrics> curve =
        few_shot_curve(base, pool_tokens, d.train_labels, test_tokens, d.test_labels, cfg.shots,
                       cfg.training, cfg.freeze_backbone);

    EvaluationReport rep = base_report(cfg, d, "few-shot", base.fingerprint());
    rep.details["shots"] = cfg.shots;
    for (const ShotMetrics& s : curve) {
        MetricRow row;
        row.label = "shots=" + std::to_string(s.shots);
        row.shots = s.shots;
        row.accuracy = s.accuracy;
        row.f1 = s.f1;
        row.mcc = s.mcc;
        row.auc_roc = s.auc_roc;
        row.balanced_accuracy = s.balanced_accuracy;
        row.confusion = s.confusion;
        rep.rows.push_back(std::move(row));
    }
    emit_report(rep, cfg, out);
}

void cmd_ingest(const std::vector<std::string>& fasta_paths, const std::string& labels_path,
                const std::string& out_dir, std::ostream& out) {
    const LabelManifest manifest = read_label_manifest(labels_path);
    std::vector<SequenceRecord> records;
    std::map<std::string, std::string> first_file_of;
    for (const std::string& path : fasta_paths) {
        for (SequenceRecord& r : parse_fasta(path)) {
            const auto [it, fresh] = first_file_of.emplace(r.id, path);
            if (!fresh)
                throw ParseError("duplicate record id '" + r.id + "' (seen in " + it->second +
                                 " and " + path + ")");
            records.push_back(std::move(r));
        }
    }
    const AttachResult attached = attach_labels(records, manifest);
    write_dataset_dir(attached.dataset, out_dir);
    const nlohmann::ordered_json summary = dataset_summary_json(attached.dataset);
    out << "ingested " << attached.dataset.records.size() << " records ("
        << attached.dropped_records << " without labels dropped) into " << out_dir << '\n';
    out << summary.dump(2) << '\n';
}

void cmd_synth(SyntheticSpec spec, int auto_motif_length, const std::string& out_dir,
               std::ostream& out) {
    if (spec.motifs.empty()) {
        if (auto_motif_length <= 0 || static_cast<std::int64_t>(auto_motif_length) > spec.length_bp)
            throw ConfigError("synth: motif length must be in [1, length_bp]");
        static constexpr char kBases[4] = {'A', 'C', 'G', 'T'};
        for (int c = 0; c < spec.num_classes; ++c) {
            Rng rng(derive_seed(spec.seed, 0xa0 + static_cast<std::uint64_t>(c)));
            std::string motif(static_cast<std::size_t>(auto_motif_length), 'A');
            for (char& b : motif) b = kBases[rng.uniform_below(4)];
            spec.motifs.push_back({std::move(motif)});
        }
    }
    const Dataset ds = synthesize_dataset(spec);
    write_dataset_dir(ds, out_dir);
    write_file((fs::path(out_dir) / "truth.json").string(), spec.to_json().dump(2) + "\n");
    out << "synthesized " << ds.records.size() << " sequences (" << spec.num_classes
        << " classes, " << spec.length_bp << " bp) into " << out_dir << '\n';
}

void cmd_split(const std::string& data_dir, ClusterThresholds thresholds, double ratio,
               std::uint64_t seed, const std::string& out_path, const std::string& sweep,
               std::ostream& out) {
    const Dataset ds = read_dataset_dir(data_dir);
    std::vector<double> taus;
    if (sweep.empty())
        taus.push_back(thresholds.tau_identity);
    else
        taus = parse_double_list(sweep, "--sweep");
    for (double tau : taus) {
        ClusterThresholds th = thresholds;
        th.tau_identity = tau;
        PartitionManifest manifest = greedy_cluster(ds, th);
        manifest = split_clusters(std::move(manifest), ds, ratio, seed);
        std::string path = out_path;
        if (!sweep.empty()) {
            const std::string suffix =
                "mmseq" + std::to_string(static_cast<int>(std::llround(tau * 100)));
            path = suffixed_path(out_path, suffix);
        }
        ensure_parent_dir(path);
        write_manifest(manifest, path);
        out << "tau_id=" << tau << ": " << manifest.num_clusters() << " clusters, train "
            << manifest.members_of_split(Split::kTrain).size() << " / test "
            << manifest.members_of_split(Split::kTest).size() << " -> " << path << '\n';
    }
}

void cmd_fragment(const std::string& data_dir, std::int64_t length, bool all_lengths, bool dedup,
                  const ClusterThresholds& thresholds, const std::string& out_dir,
                  std::ostream& out) {
    const Dataset ds = read_dataset_dir(data_dir);
    std::vector<std::int64_t> lengths;
    if (all_lengths) {
        lengths = supported_fragment_lengths();
        lengths.push_back(kWholeGenome);
    } else {
        lengths.push_back(length);
    }
    for (std::int64_t L : lengths) {
        Dataset frag = fragment(ds, L);
        if (dedup) frag = dedup_fragments(frag, thresholds);
        std::string dir = out_dir;
        if (all_lengths) {
            const std::string leaf = L == kWholeGenome ? "whole" : "len" + std::to_string(L);
            dir = (fs::path(out_dir) / leaf).string();
        }
        write_dataset_dir(frag, dir);
        out << (L == kWholeGenome ? std::string("whole") : std::to_string(L) + " bp") << ": "
            << frag.records.size() << " fragments -> " << dir << '\n';
    }
}

// ---------------------------------------------------------------------------
// Report aggregation
// ---------------------------------------------------------------------------

double metric_of(const MetricRow& row, const std::string& metric) {
    if (metric == "accuracy") return row.accuracy;
    if (metric == "f1") return row.f1;
    if (metric == "mcc") return row.mcc;
    if (metric == "auc_roc") return row.auc_roc;
    if (metric == "balanced_accuracy") return row.balanced_accuracy;
    throw ConfigError("unknown metric: " + metric);
}

std::string format_cell(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void cmd_report(const std::vector<std::string>& report_paths, const std::string& out_dir,
                const std::string& metric_list, std::ostream& out) {
    std::vector<std::string> metrics = split_on(metric_list, ',');
    for (const std::string& m : metrics) metric_of(MetricRow{}, m);  // validate names

    std::vector<EvaluationReport> reports;
    std::vector<std::string> bad;
    for (const std::string& path : report_paths) {
        try {
            reports.push_back(EvaluationReport::load(path));
        } catch (const ParseError& e) {
            bad.push_back(std::string(e.what()));
        } catch (const ConfigError& e) {
            bad.push_back(std::string(e.what()));
        }
    }
    if (!bad.empty()) {
        std::string msg = "incompatible report files:";
        for (const std::string& b : bad) msg += "\n  " + b;
        throw ParseError(msg);
    }

    ensure_dir(out_dir);

    // raw per-row export
    std::string rows_csv = report_csv_header() + "\n";
    for (const EvaluationReport& r : reports)
        for (const std::string& line : report_csv_rows(r)) rows_csv += line + "\n";
    write_file((fs::path(out_dir) / "rows.csv").string(), rows_csv);

    // metric-by-run table; multi-row reports contribute one line per row
    struct TableRow {
        std::string display;
        const MetricRow* row;
    };
    std::vector<TableRow> table;
    std::set<std::string> names;
    for (const EvaluationReport& r : reports) {
        names.insert(r.name);
        for (const MetricRow& row : r.rows) {
            std::string display = r.name;
            if (r.rows.size() > 1) display += ":" + row.label;
            table.push_back({std::move(display), &row});
        }
    }
    std::string table_csv = "name";
    for (const std::string& m : metrics) table_csv += "," + m;
    table_csv += "\n";
    for (const TableRow& tr : table) {
        table_csv += tr.display;
        for (const std::string& m : metrics) table_csv += "," + format_cell(metric_of(*tr.row, m));
        table_csv += "\n";
    }
    write_file((fs::path(out_dir) / "table.csv").string(), table_csv);
    out << "table: " << (fs::path(out_dir) / "table.csv").string() << " (" << table.size()
        << " rows x " << metrics.size() << " metrics)\n";

    // grouped bar chart across all table rows
    if (!table.empty()) {
        std::vector<std::string> series_names;
        std::vector<std::vector<double>> values;
        for (const TableRow& tr : table) {
            series_names.push_back(tr.display);
            std::vector<double> row_vals;
            for (const std::string& m : metrics) row_vals.push_back(metric_of(*tr.row, m));
            values.push_back(std::move(row_vals));
        }
        const std::string path = (fs::path(out_dir) / "metrics.svg").string();
        write_file(path, bar_chart_svg("Metric comparison", "score", metrics, series_names, values));
        out << "chart: " << path << '\n';
    }

    const bool multi_name = names.size() > 1;
    auto series_label = [&](const std::string& name, const std::string& metric) {
        return multi_name ? name + " " + metric : metric;
    };

    // line chart helper over (x, first-row metrics) points grouped by name
    auto sweep_chart = [&](const std::string& file, const std::string& title,
                           const std::string& x_label, bool log_x,
                           const std::map<std::string, std::map<double, const MetricRow*>>& pts) {
        std::set<double> xs;
        for (const auto& [name, m] : pts)
            for (const auto& kv : m) xs.insert(kv.first);
        if (xs.size() < 2) return;
        std::vector<ChartSeries> series;
        for (const auto& [name, m] : pts)
            for (const std::string& metric : metrics) {
                ChartSeries s;
                s.name = series_label(name, metric);
                for (const auto& [x, row] : m) {
                    s.x.push_back(x);
                    s.y.push_back(metric_of(*row, metric));
                }
                series.push_back(std::move(s));
            }
        ChartOptions opt;
        opt.log_x = log_x;
        const std::string path = (fs::path(out_dir) / file).string();
        write_file(path, line_chart_svg(title, x_label, "score", series, opt));
        out << "chart: " << path << '\n';
    };

    std::map<std::string, std::map<double, const MetricRow*>> by_length, by_tau, by_shots;
    for (const EvaluationReport& r : reports) {
        if (r.rows.empty()) continue;
        const double len = r.config.value("fragment_length", static_cast<double>(kWholeGenome));
        if (len > 0) by_length[r.name][len] = &r.rows.front();
        if (r.config.contains("thresholds")) {
            const double tau = r.config.at("thresholds").value("tau_identity", -1.0);
            if (tau > 0) by_tau[r.name][tau * 100.0] = &r.rows.front();
        }
        if (r.protocol == "few-shot")
            for (const MetricRow& row : r.rows)
                if (row.shots >= 0) by_shots[r.name][row.shots] = &row;
    }
    sweep_chart("metric_vs_length.svg", "Metrics vs fragment length", "fragment length (bp)",
                /*log_x=*/true, by_length);
    sweep_chart("metric_vs_threshold.svg", "Metrics vs identity threshold",
                "identity threshold (%)", /*log_x=*/false, by_tau);
    sweep_chart("metric_vs_shots.svg", "Metrics vs labeled examples per class",
                "examples per class", /*log_x=*/false, by_shots);
}

// ---------------------------------------------------------------------------
// Argument plumbing
// ---------------------------------------------------------------------------

/// Flag values layered on top of a --config file; sentinel defaults mark
/// "not set" and the presence checks below consult CLI11's counts.
struct RunFlags {
    std::string config_path, data, manifest, out, name, model_kind, checkpoint, shots;
    double lr = 0, warmup = 0, mask_rate = 0, dropout = 0, validation_fraction = 0;
    int epochs = 0, batch = 0, patience = 0, eval_every = 0;
    int embed_dim = 0, layers = 0, heads = 0, ffn = 0, context = 0;
    int trees = 0, max_depth = 0, min_leaf = 0, feats_split = 0;
    int filters = 0, kernel = 0, dense_hidden = 0, fixed_length = 0, units = 0;
    std::uint64_t seed = 0;
    bool freeze = false, cls_pooling = false;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
    sub->add_option("--config", f.config_path, "run configuration JSON file");
    sub->add_option("--data", f.data, "dataset directory");
    sub->add_option("--manifest", f.manifest, "partition manifest TSV");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--name", f.name, "report label");
    sub->add_option("--model", f.model_kind, "transformer | forest | cnn | lstm");
    sub->add_option("--checkpoint", f.checkpoint, "input checkpoint to resume / evaluate");
    sub->add_option("--shots", f.shots, "comma-separated few-shot sizes");
    sub->add_option("--lr", f.lr, "learning rate");
    sub->add_option("--warmup", f.warmup, "warmup fraction");
    sub->add_option("--mask-rate", f.mask_rate, "masked-LM masking rate");
    sub->add_option("--dropout", f.dropout, "dropout rate");
    sub->add_option("--validation-fraction", f.validation_fraction,
                    "fraction of train held out for early stopping");
    sub->add_option("--epochs", f.epochs, "maximum training epochs");
    sub->add_option("--batch-size", f.batch, "minibatch size");
    sub->add_option("--patience", f.patience, "early-stop patience (evaluations)");
    sub->add_option("--eval-every", f.eval_every, "steps between validations (0 = per epoch)");
    sub->add_option("--embed-dim", f.embed_dim, "transformer embedding dim");
    sub->add_option("--layers", f.layers, "transformer layers");
    sub->add_option("--heads", f.heads, "attention heads");
    sub->add_option("--ffn-hidden", f.ffn, "feed-forward hidden dim");
    sub->add_option("--context-tokens", f.context, "token context window");
    sub->add_option("--trees", f.trees, "forest size");
    sub->add_option("--max-depth", f.max_depth, "tree depth limit (0 = unlimited)");
    sub->add_option("--min-leaf", f.min_leaf, "minimum samples per leaf");
    sub->add_option("--features-per-split", f.feats_split, "candidate features per split (0 = sqrt)");
    sub->add_option("--filters", f.filters, "cnn filters");
    sub->add_option("--kernel-width", f.kernel, "cnn kernel width");
    sub->add_option("--dense-hidden", f.dense_hidden, "cnn dense hidden units");
    sub->add_option("--fixed-length", f.fixed_length, "cnn/lstm input length (0 = shortest train)");
    sub->add_option("--units", f.units, "lstm hidden units");
    sub->add_option("--seed", f.seed, "training seed");
    sub->add_flag("--freeze-backbone", f.freeze, "train the classifier head only");
    sub->add_flag("--cls-pooling", f.cls_pooling, "pool the CLS position instead of the mean");
}

RunConfig build_config(const CLI::App* sub, const RunFlags& f) {
    RunConfig cfg;
    if (!f.config_path.empty()) cfg = RunConfig::from_file(f.config_path);
    const auto set = [sub](const char* flag) { return sub->count(flag) > 0; };
    if (set("--data")) cfg.data_dir = f.data;
    if (set("--manifest")) cfg.manifest_path = f.manifest;
    if (set("--out")) cfg.output_dir = f.out;
    if (set("--name")) cfg.name = f.name;
    if (set("--model")) cfg.model_kind = f.model_kind;
    if (set("--checkpoint")) cfg.checkpoint_in = f.checkpoint;
    if (set("--shots")) cfg.shots = parse_int_list(f.shots, "--shots");
    if (set("--lr")) cfg.training.learning_rate = f.lr;
    if (set("--warmup")) cfg.training.warmup_fraction = f.warmup;
    if (set("--mask-rate")) cfg.training.mask_rate = f.mask_rate;
    if (set("--dropout")) cfg.model.dropout = f.dropout;
    if (set("--validation-fraction")) cfg.validation_fraction = f.validation_fraction;
    if (set("--epochs")) cfg.training.max_epochs = f.epochs;
    if (set("--batch-size")) cfg.training.batch_size = f.batch;
    if (set("--patience")) cfg.training.early_stop_patience = f.patience;
    if (set("--eval-every")) cfg.training.eval_every = f.eval_every;
    if (set("--embed-dim")) cfg.model.embed_dim = f.embed_dim;
    if (set("--layers")) cfg.model.num_layers = f.layers;
    if (set("--heads")) cfg.model.num_heads = f.heads;
    if (set("--ffn-hidden")) cfg.model.ffn_hidden = f.ffn;
    if (set("--context-tokens")) cfg.model.context_tokens = f.context;
    if (set("--trees")) cfg.forest.num_trees = f.trees;
    if (set("--max-depth")) cfg.forest.max_depth = f.max_depth;
    if (set("--min-leaf")) cfg.forest.min_leaf = f.min_leaf;
    if (set("--features-per-split")) cfg.forest.features_per_split = f.feats_split;
    if (set("--filters")) cfg.cnn.filters = f.filters;
    if (set("--kernel-width")) cfg.cnn.kernel_width = f.kernel;
    if (set("--dense-hidden")) cfg.cnn.dense_hidden = f.dense_hidden;
    if (set("--fixed-length")) {
        cfg.cnn.fixed_length = f.fixed_length;
        cfg.lstm.fixed_length = f.fixed_length;
    }
    if (set("--units")) cfg.lstm.units = f.units;
    if (set("--seed")) {
        cfg.training.seed = f.seed;
        cfg.model.seed = f.seed;
    }
    if (set("--freeze-backbone")) cfg.freeze_backbone = true;
    if (set("--cls-pooling")) cfg.model.cls_pooling = true;
    return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"genolm: genomic language-model pathogenicity toolkit"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "canonicalize FASTA inputs into a dataset directory");
    std::vector<std::string> in_fastas;
    std::string in_labels, in_out = "dataset";
    ingest->add_option("fasta", in_fastas, "input FASTA files (.gz accepted)")->required();
    ingest->add_option("--labels", in_labels, "two-column id/label TSV")->required();
    ingest->add_option("--out", in_out, "output dataset directory");
    ingest->callback([&] { cmd_ingest(in_fastas, in_labels, resolve_output(in_out), out); });

    // synth
    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
    SyntheticSpec sy_spec;
    std::vector<std::string> sy_motifs;
    int sy_motif_len = 12;
    std::string sy_out = "dataset";
    synth->add_option("--sequences", sy_spec.num_sequences, "number of sequences");
    synth->add_option("--length", sy_spec.length_bp, "sequence length (bp)");
    synth->add_option("--classes", sy_spec.num_classes, "number of classes");
    synth->add_option("--motif", sy_motifs, "planted motif as CLASS:SEQUENCE (repeatable)");
    synth->add_option("--motif-length", sy_motif_len, "length of auto-generated motifs");
    synth->add_option("--mutation-rate", sy_spec.mutation_rate, "per-position substitution rate");
    synth->add_option("--seed", sy_spec.seed, "generator seed");
    synth->add_option("--out", sy_out, "output dataset directory");
    synth->callback([&] {
        if (!sy_motifs.empty()) {
            sy_spec.motifs.assign(static_cast<std::size_t>(std::max(sy_spec.num_classes, 2)), {});
            for (const std::string& m : sy_motifs) {
                const auto colon = m.find(':');
                if (colon == std::string::npos)
                    throw ConfigError("--motif expects CLASS:SEQUENCE, got '" + m + "'");
                int cls = 0;
                try {
                    cls = std::stoi(m.substr(0, colon));
                } catch (const std::exception&) {
                    throw ConfigError("--motif class index is not an integer: '" + m + "'");
                }
                if (cls < 0 || cls >= sy_spec.num_classes)
                    throw ConfigError("--motif class index out of range: '" + m + "'");
                sy_spec.motifs[static_cast<std::size_t>(cls)].push_back(m.substr(colon + 1));
            }
        }
        cmd_synth(sy_spec, sy_motif_len, resolve_output(sy_out), out);
    });

    // split
    auto* split = app.add_subcommand("split", "cluster a dataset and write a leakage-free split");
    std::string sp_data, sp_out = "manifest.tsv", sp_sweep;
    ClusterThresholds sp_th;
    double sp_ratio = 0.8;
    std::uint64_t sp_seed = 42;
    split->add_option("data", sp_data, "dataset directory")->required();
    split->add_option("--tau-id", sp_th.tau_identity, "identity threshold");
    split->add_option("--tau-cov", sp_th.tau_coverage, "coverage threshold");
    split->add_option("--k", sp_th.k, "k-mer size for similarity");
    split->add_option("--ratio", sp_ratio, "train fraction");
    split->add_option("--seed", sp_seed, "shuffle seed");
    split->add_option("--out", sp_out, "manifest output path");
    split->add_option("--sweep", sp_sweep, "comma-separated identity thresholds (suffixes mmseqNN)");
    split->callback(
        [&] { cmd_split(sp_data, sp_th, sp_ratio, sp_seed, resolve_output(sp_out), sp_sweep, out); });

    // fragment
    auto* frag = app.add_subcommand("fragment", "tile sequences into fixed-length fragments");
    std::string fr_data, fr_out = "fragments";
    std::int64_t fr_len = 0;
    bool fr_all = false, fr_dedup = false;
    ClusterThresholds fr_th;
    frag->add_option("data", fr_data, "dataset directory")->required();
    frag->add_option("--length", fr_len, "fragment length (bp)");
    frag->add_flag("--all-lengths", fr_all, "emit every supported length plus whole sequences");
    frag->add_flag("--dedup", fr_dedup, "keep one representative per fragment cluster");
    frag->add_option("--tau-id", fr_th.tau_identity, "dedup identity threshold");
    frag->add_option("--tau-cov", fr_th.tau_coverage, "dedup coverage threshold");
    frag->add_option("--k", fr_th.k, "dedup k-mer size");
    frag->add_option("--out", fr_out, "output directory");
    frag->callback([&] {
        if (!fr_all && fr_len == 0)
            throw ConfigError("fragment needs --length or --all-lengths");
        cmd_fragment(fr_data, fr_len, fr_all, fr_dedup, fr_th, resolve_output(fr_out), out);
    });

    // run-config subcommands
    auto* pretrain = app.add_subcommand("pretrain", "masked-LM pretraining");
    RunFlags pf;
    add_run_flags(pretrain, pf);
    pretrain->callback([&] { cmd_pretrain(build_config(pretrain, pf), out); });

    auto* train = app.add_subcommand("train", "supervised training plus test-split evaluation");
    RunFlags tf;
    add_run_flags(train, tf);
    train->callback([&] { cmd_train(build_config(train, tf), out); });

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a saved model on the test split");
    RunFlags ef;
    add_run_flags(evaluate, ef);
    evaluate->callback([&] { cmd_evaluate(build_config(evaluate, ef), out); });

    auto* zeroshot = app.add_subcommand("zeroshot", "embedding clustering with label mapping");
    RunFlags zf;
    add_run_flags(zeroshot, zf);
    zeroshot->callback([&] { cmd_zeroshot(build_config(zeroshot, zf), out); });

    auto* fewshot = app.add_subcommand("fewshot", "few-shot fine-tuning curve");
    RunFlags ff;
    add_run_flags(fewshot, ff);
    fewshot->callback([&] { cmd_fewshot(build_config(fewshot, ff), out); });

    // report
    auto* report = app.add_subcommand("report", "aggregate reports into tables and charts");
    std::vector<std::string> rp_paths;
    std::string rp_out = "report_out";
    std::string rp_metrics = "accuracy,f1,mcc,auc_roc,balanced_accuracy";
    report->add_option("reports", rp_paths, "evaluation report JSON files")->required();
    report->add_option("--out", rp_out, "output directory");
    report->add_option("--metrics", rp_metrics, "comma-separated metric columns");
    report->callback([&] { cmd_report(rp_paths, resolve_output(rp_out), rp_metrics, out); });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 2;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const DataConstraintError& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}

}  // namespace genolm
