#ifndef GENOLM_FEATURES_HPP
#define GENOLM_FEATURES_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace genolm {

/// fixed_length x 4 one-hot encoding (channels A, C, G, T). N positions and
/// padding rows are all-zero. Row-major storage.
struct OneHotMatrix {
    int rows = 0;
    std::vector<float> values;  // rows * 4

    float at(int row, int channel) const { return values[static_cast<std::size_t>(row) * 4 + channel]; }
};

OneHotMatrix one_hot(const std::string& sequence, int fixed_length);

inline constexpr int kKmerFreqMinK = 3;
inline constexpr int kKmerFreqMaxK = 7;
inline constexpr int kKmerFreqDim = 64 + 256 + 1024 + 4096 + 16384;  // 21,824

/// Block layout of the k-mer frequency vector: for each k the dimension and
/// starting offset within the concatenated vector.
struct KmerBlock {
    int k;
    int offset;
    int dim;
};
const std::vector<KmerBlock>& kmer_frequency_blocks();

/// Concatenated k-mer frequency blocks for k = 3..7, lexicographic within
/// each block (A<C<G<T), windows containing N skipped, each block
/// l1-normalized over its valid windows (all-zero when the sequence has
/// fewer than k non-N window positions).
std::vector<double> kmer_frequencies(const std::string& sequence);

/// Dense little-endian float32 matrix with a JSON sidecar describing the
/// shape and, for k-mer frequency matrices, the block layout.
void write_feature_matrix(const std::string& path, const std::vector<std::vector<double>>& rows,
                          bool kmer_blocks);
std::vector<std::vector<double>> read_feature_matrix(const std::string& path);

/// CSV export for small matrices.
std::string feature_matrix_to_csv(const std::vector<std::vector<double>>& rows);

}  // namespace genolm

#endif
