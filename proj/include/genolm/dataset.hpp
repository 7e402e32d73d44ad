#ifndef GENOLM_DATASET_HPP
#define GENOLM_DATASET_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "genolm/seqio.hpp"

namespace genolm {

struct SimilarityEstimate {
    double identity = 0.0;  // Jaccard over distinct k-mer sets
    double coverage = 0.0;  // fraction of the shorter sequence covered by shared k-mers
};

/// Distinct k-mers of a sequence packed 2 bits per base; windows containing N
/// are skipped. Sorted ascending for merge-style set operations.
std::vector<std::uint64_t> kmer_set(const std::string& sequence, int k);

/// Alignment-free similarity: identity is the Jaccard index of the two
/// distinct k-mer sets, coverage the fraction of positions of the shorter
/// sequence covered by at least one k-mer occurrence present in both sets.
/// Sequences shorter than k yield zeros.
SimilarityEstimate estimate_similarity(const std::string& a, const std::string& b, int k);

enum class Split { kTrain, kTest };

struct ClusterThresholds {
    double tau_identity = 0.8;
    double tau_coverage = 0.8;
    int k = 8;
};

/// Cluster assignments plus train/test membership per record; the
/// leakage-control artifact. cluster_of covers every record exactly once and
/// no cluster contributes records to both splits.
struct PartitionManifest {
    std::map<std::string, int> cluster_of;
    std::map<int, Split> split_of;  // empty until split_clusters runs
    ClusterThresholds thresholds;
    double split_ratio = 0.8;
    std::uint64_t seed = 0;

    int num_clusters() const;
    std::vector<std::string> members_of_split(Split s) const;
    /// Throws DataConstraintError if any cluster spans both splits.
    void check_leakage_invariant() const;
};

/// Greedy longest-first centroid clustering: records sorted by descending
/// length (ties by ascending id), each assigned to the first cluster whose
/// founding representative satisfies identity >= tau_id and coverage >=
/// tau_cov, else it founds a new cluster.
PartitionManifest greedy_cluster(const Dataset& dataset, const ClusterThresholds& thresholds);

/// Deterministic cluster-level split: clusters are shuffled by seed, then
/// assigned to train until the train record count first reaches
/// ratio * total; the rest go to test. If that would leave test empty, the
/// smallest train cluster (ties: lowest cluster id) moves to test. Throws
/// DataConstraintError when a single cluster covers all records.
PartitionManifest split_clusters(PartitionManifest manifest, const Dataset& dataset, double ratio,
                                 std::uint64_t seed);

/// Subset of the dataset belonging to one split, in dataset record order.
Dataset dataset_for_split(const Dataset& dataset, const PartitionManifest& manifest, Split split);

/// TSV persistence: `record_id<TAB>cluster_id<TAB>split` rows preceded by
/// `#`-comment header lines recording thresholds, k, seed and ratio.
std::string manifest_to_tsv(const PartitionManifest& manifest);
void write_manifest(const PartitionManifest& manifest, const std::string& path);
PartitionManifest read_manifest(const std::string& path);

/// Whole-genome sentinel for fragment().
constexpr std::int64_t kWholeGenome = -1;

/// The fragment lengths used by the length-sensitivity experiments.
const std::vector<std::int64_t>& supported_fragment_lengths();

/// Non-overlapping tiling [0,L), [L,2L), ... per record; the trailing partial
/// window is discarded; fragments inherit the parent label. Fragment ids are
/// `<parent_id>:<offset>`. length_bp = kWholeGenome returns records
/// unchanged. Throws ConfigError when length_bp <= 0.
Dataset fragment(const Dataset& dataset, std::int64_t length_bp);

/// Clusters fragments with greedy_cluster and keeps only each cluster's
/// representative (the founding member).
Dataset dedup_fragments(const Dataset& fragments, const ClusterThresholds& thresholds);

}  // namespace genolm

#endif
