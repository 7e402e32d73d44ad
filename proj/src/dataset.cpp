#include "genolm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "genolm/common.hpp"
#include "genolm/rng.hpp"

namespace genolm {

namespace {

int base2bits(char c) {
    switch (c) {
        case 'A': return 0;
        case 'C': return 1;
        case 'G': return 2;
        case 'T': return 3;
        default: return -1;  // N
    }
}

// Rolling 2-bit encoding of every k-window; windows containing N are skipped.
// visit(pos, code) is called for each valid window start.
template <typename F>
void for_each_kmer(const std::string& seq, int k, F&& visit) {
    const std::uint64_t mask = k == 32 ? ~std::uint64_t{0} : ((std::uint64_t{1} << (2 * k)) - 1);
    std::uint64_t code = 0;
    int run = 0;  // consecutive non-N bases ending here
    for (std::size_t i = 0; i < seq.size(); ++i) {
        int b = base2bits(seq[i]);
        if (b < 0) {
            run = 0;
            code = 0;
            continue;
        }
        code = ((code << 2) | static_cast<std::uint64_t>(b)) & mask;
        if (++run >= k) visit(i + 1 - static_cast<std::size_t>(k), code);
    }
}

}  // namespace

std::vector<std::uint64_t> kmer_set(const std::string& sequence, int k) {
    if (k < 1 || k > 32) throw ConfigError("kmer_set: k must be in [1, 32]");
    std::vector<std::uint64_t> kmers;
    kmers.reserve(sequence.size());
    for_each_kmer(sequence, k, [&](std::size_t, std::uint64_t code) { kmers.push_back(code); });
    std::sort(kmers.begin(), kmers.end());
    kmers.erase(std::unique(kmers.begin(), kmers.end()), kmers.end());
    return kmers;
}

namespace {

SimilarityEstimate similarity_with_sets(const std::string& a, const std::vector<std::uint64_t>& ka,
                                        const std::string& b, const std::vector<std::uint64_t>& kb,
                                        int k) {
    SimilarityEstimate est;
    if (static_cast<int>(a.size()) < k || static_cast<int>(b.size()) < k) return est;
    if (ka.empty() || kb.empty()) return est;

    std::vector<std::uint64_t> shared;
    shared.reserve(std::min(ka.size(), kb.size()));
    std::set_intersection(ka.begin(), ka.end(), kb.begin(), kb.end(), std::back_inserter(shared));
    const std::size_t inter = shared.size();
    const std::size_t uni = ka.size() + kb.size() - inter;
    est.identity = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);

    if (inter == 0) return est;
    const std::string& shorter = a.size() <= b.size() ? a : b;
    std::vector<char> covered(shorter.size(), 0);
    for_each_kmer(shorter, k, [&](std::size_t pos, std::uint64_t code) {
        if (std::binary_search(shared.begin(), shared.end(), code))
            for (std::size_t i = pos; i < pos + static_cast<std::size_t>(k); ++i) covered[i] = 1;
    });
    std::size_t covered_count = 0;
    for (char c : covered) covered_count += static_cast<std::size_t>(c);
    est.coverage = static_cast<double>(covered_count) / static_cast<double>(shorter.size());
    return est;
}

}  // namespace

SimilarityEstimate estimate_similarity(const std::string& a, const std::string& b, int k) {
    if (k < 4) throw ConfigError("estimate_similarity: k must be >= 4");
    if (static_cast<int>(a.size()) < k || static_cast<int>(b.size()) < k) return {};
    return similarity_with_sets(a, kmer_set(a, k), b, kmer_set(b, k), k);
}

int PartitionManifest::num_clusters() const {
    std::set<int> ids;
    for (const auto& [_, c] : cluster_of) ids.insert(c);
    return static_cast<int>(ids.size());
}

std::vector<std::string> PartitionManifest::members_of_split(Split s) const {
    std::vector<std::string> out;
    for (const auto& [id, cluster] : cluster_of) {
        auto it = split_of.find(cluster);
        if (it != split_of.end() && it->second == s) out.push_back(id);
    }
    return out;
}

void PartitionManifest::check_leakage_invariant() const {
    for (const auto& [id, cluster] : cluster_of) {
        if (split_of.find(cluster) == split_of.end())
            throw DataConstraintError("cluster " + std::to_string(cluster) + " (record '" + id +
                                      "') has no split assignment");
    }
}

PartitionManifest greedy_cluster(const Dataset& dataset, const ClusterThresholds& thresholds) {
    if (dataset.records.empty()) throw DataConstraintError("greedy_cluster: empty dataset");
    if (thresholds.tau_identity <= 0.0 || thresholds.tau_identity > 1.0 ||
        thresholds.tau_coverage <= 0.0 || thresholds.tau_coverage > 1.0)
        throw ConfigError("greedy_cluster: thresholds must be in (0, 1]");

    std::vector<const SequenceRecord*> order;
    order.reserve(dataset.records.size());
    for (const auto& r : dataset.records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const SequenceRecord* x, const SequenceRecord* y) {
        if (x->length_bp() != y->length_bp()) return x->length_bp() > y->length_bp();
        return x->id < y->id;
    });

    PartitionManifest manifest;
    manifest.thresholds = thresholds;

    struct ClusterInfo {
        const SequenceRecord* representative;
        std::vector<std::uint64_t> rep_kmers;
    };
    std::vector<ClusterInfo> clusters;

    for (const SequenceRecord* rec : order) {
        const std::vector<std::uint64_t> rec_kmers = kmer_set(rec->sequence, thresholds.k);
        int assigned = -1;
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            SimilarityEstimate est =
                similarity_with_sets(rec->sequence, rec_kmers, clusters[c].representative->sequence,
                                     clusters[c].rep_kmers, thresholds.k);
            if (est.identity >= thresholds.tau_identity && est.coverage >= thresholds.tau_coverage) {
                assigned = static_cast<int>(c);
                break;
            }
        }
        if (assigned < 0) {
            assigned = static_cast<int>(clusters.size());
            clusters.push_back({rec, rec_kmers});
        }
        manifest.cluster_of[rec->id] = assigned;
    }
    return manifest;
}

PartitionManifest split_clusters(PartitionManifest manifest, const Dataset& dataset, double ratio,
                                 std::uint64_t seed) {
    if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("split_clusters: ratio must be in (0, 1)");
    if (manifest.cluster_of.empty()) throw DataConstraintError("split_clusters: manifest has no clusters");

    std::map<int, std::int64_t> cluster_sizes;
    std::int64_t total = 0;
    for (const auto& rec : dataset.records) {
        auto it = manifest.cluster_of.find(rec.id);
        if (it == manifest.cluster_of.end())
            throw DataConstraintError("split_clusters: record '" + rec.id + "' missing from manifest");
        cluster_sizes[it->second]++;
        ++total;
    }
    if (cluster_sizes.size() < 2)
        throw DataConstraintError("cannot split without leakage; lower thresholds");

    std::vector<int> cluster_ids;
    cluster_ids.reserve(cluster_sizes.size());
    for (const auto& [id, _] : cluster_sizes) cluster_ids.push_back(id);
    Rng rng(derive_seed(seed, 0x5e17));
    rng.shuffle(cluster_ids);

    const double target = ratio * static_cast<double>(total);
    manifest.split_of.clear();
    std::int64_t train_count = 0;
    std::size_t i = 0;
    for (; i < cluster_ids.size(); ++i) {
        manifest.split_of[cluster_ids[i]] = Split::kTrain;
        train_count += cluster_sizes[cluster_ids[i]];
        if (static_cast<double>(train_count) >= target) {
            ++i;
            break;
        }
    }
    for (; i < cluster_ids.size(); ++i) manifest.split_of[cluster_ids[i]] = Split::kTest;

    bool have_test = false;
    for (const auto& [_, s] : manifest.split_of) have_test = have_test || s == Split::kTest;
    if (!have_test) {
        // move the smallest train cluster over so both splits are populated
        int smallest = -1;
        std::int64_t smallest_size = 0;
        for (const auto& [id, size] : cluster_sizes) {
            if (smallest < 0 || size < smallest_size || (size == smallest_size && id < smallest)) {
                smallest = id;
                smallest_size = size;
            }
        }
        manifest.split_of[smallest] = Split::kTest;
    }

    manifest.split_ratio = ratio;
    manifest.seed = seed;
    return manifest;
}

Dataset dataset_for_split(const Dataset& dataset, const PartitionManifest& manifest, Split split) {
    std::vector<SequenceRecord> kept;
    for (const auto& rec : dataset.records) {
        auto it = manifest.cluster_of.find(rec.id);
        if (it == manifest.cluster_of.end()) continue;
        auto sit = manifest.split_of.find(it->second);
        if (sit != manifest.split_of.end() && sit->second == split) kept.push_back(rec);
    }
    return make_dataset(std::move(kept));
}

std::string manifest_to_tsv(const PartitionManifest& manifest) {
    std::ostringstream out;
    out << "# genolm partition manifest\n";
    out << "# tau_identity=" << manifest.thresholds.tau_identity
        << " tau_coverage=" << manifest.thresholds.tau_coverage << " k=" << manifest.thresholds.k
        << "\n";
    out << "# ratio=" << manifest.split_ratio << " seed=" << manifest.seed << "\n";
    out << "record_id\tcluster_id\tsplit\n";
    for (const auto& [id, cluster] : manifest.cluster_of) {
        auto it = manifest.split_of.find(cluster);
        const char* split = it == manifest.split_of.end() ? "unassigned"
                            : it->second == Split::kTrain ? "train"
                                                          : "test";
        out << id << '\t' << cluster << '\t' << split << '\n';
    }
    return out.str();
}

void write_manifest(const PartitionManifest& manifest, const std::string& path) {
    write_file(path, manifest_to_tsv(manifest));
}

PartitionManifest read_manifest(const std::string& path) {
    const std::string contents = read_file(path);
    PartitionManifest manifest;
    std::istringstream in(contents);
    std::string line;
    std::int64_t row = 0;
    bool saw_column_header = false;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string kv;
            while (meta >> kv) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = kv.substr(0, eq);
                const std::string value = kv.substr(eq + 1);
                if (key == "tau_identity") manifest.thresholds.tau_identity = std::stod(value);
                else if (key == "tau_coverage") manifest.thresholds.tau_coverage = std::stod(value);
                else if (key == "k") manifest.thresholds.k = std::stoi(value);
                else if (key == "ratio") manifest.split_ratio = std::stod(value);
                else if (key == "seed") manifest.seed = std::stoull(value);
            }
            continue;
        }
        auto cols = split_on(line, '\t');
        if (cols.size() != 3)
            throw ParseError(path + ": expected 3 columns at row " + std::to_string(row));
        if (!saw_column_header) {
            if (cols[0] != "record_id")
                throw ParseError(path + ": missing column header row");
            saw_column_header = true;
            continue;
        }
        int cluster = std::stoi(cols[1]);
        manifest.cluster_of[cols[0]] = cluster;
        if (cols[2] == "train") manifest.split_of[cluster] = Split::kTrain;
        else if (cols[2] == "test") manifest.split_of[cluster] = Split::kTest;
        else if (cols[2] != "unassigned")
            throw ParseError(path + ": unknown split '" + cols[2] + "' at row " + std::to_string(row));
    }
    return manifest;
}

const std::vector<std::int64_t>& supported_fragment_lengths() {
    static const std::vector<std::int64_t> lengths = {150, 500, 2000, 5000, 10000, 50000};
    return lengths;
}

Dataset fragment(const Dataset& dataset, std::int64_t length_bp) {
    if (length_bp == kWholeGenome) return dataset;
    if (length_bp <= 0) throw ConfigError("fragment: length_bp must be positive");
    std::vector<SequenceRecord> fragments;
    for (const auto& rec : dataset.records) {
        const std::int64_t n = rec.length_bp();
        for (std::int64_t off = 0; off + length_bp <= n; off += length_bp) {
            SequenceRecord frag;
            frag.id = rec.id + ":" + std::to_string(off);
            frag.sequence = rec.sequence.substr(static_cast<std::size_t>(off),
                                                static_cast<std::size_t>(length_bp));
            frag.label = rec.label;
            frag.source_path = rec.source_path;
            frag.record_index = rec.record_index;
            fragments.push_back(std::move(frag));
        }
    }
    return make_dataset(std::move(fragments));
}

Dataset dedup_fragments(const Dataset& fragments, const ClusterThresholds& thresholds) {
    if (fragments.records.empty()) return fragments;
    PartitionManifest manifest = greedy_cluster(fragments, thresholds);

    // representative = founding member = first processed member of the
    // cluster; reconstruct by replaying the clustering order
    std::vector<const SequenceRecord*> order;
    for (const auto& r : fragments.records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const SequenceRecord* x, const SequenceRecord* y) {
        if (x->length_bp() != y->length_bp()) return x->length_bp() > y->length_bp();
        return x->id < y->id;
    });
    std::unordered_set<int> seen_clusters;
    std::unordered_set<std::string> keep_ids;
    for (const SequenceRecord* rec : order) {
        int cluster = manifest.cluster_of.at(rec->id);
        if (seen_clusters.insert(cluster).second) keep_ids.insert(rec->id);
    }

    std::vector<SequenceRecord> kept;
    for (const auto& rec : fragments.records)
        if (keep_ids.count(rec.id)) kept.push_back(rec);
    return make_dataset(std::move(kept));
}

}  // namespace genolm
