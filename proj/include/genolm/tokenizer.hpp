#ifndef GENOLM_TOKENIZER_HPP
#define GENOLM_TOKENIZER_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace genolm {

/// Encoded sequence. attention_mask is true for real tokens and false exactly
/// at the pad positions appended by pad_or_truncate.
struct TokenSequence {
    std::vector<std::uint16_t> ids;
    std::vector<bool> attention_mask;
    std::string source_id;
    std::int64_t original_length_bp = 0;
};

/// Fixed nucleic-acid vocabulary: [PAD]=0, [MASK]=1, [CLS]=2, A=3, C=4, G=5,
/// T=6, N=7, then all 4,096 6-mers over {A,C,G,T} in lexicographic order
/// (A < C < G < T) at ids 8..4103. 4,104 entries total.
class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kMaskId = 1;
    static constexpr int kClsId = 2;
    static constexpr int kFirstNucleotideId = 3;  // A C G T N occupy 3..7
    static constexpr int kFirstKmerId = 8;
    static constexpr int kKmerLength = 6;
    static constexpr int kSize = 4104;

    /// Default token budget: 1 CLS + 2,000 6-mers covers a 12,000 nt window.
    static constexpr int kDefaultContextTokens = 2001;

    Vocabulary();

    int size() const { return kSize; }
    const std::string& token_string(int id) const;
    int id_of(const std::string& token) const;  // -1 when absent
    bool is_special(int id) const { return id == kPadId || id == kMaskId || id == kClsId; }

    /// Greedy left-to-right encoding with a leading [CLS]: a 6-mer token when
    /// the next six characters exist and contain no N, a single-nucleotide
    /// token otherwise. No padding. Throws ParseError on non-canonical input,
    /// naming the offending position.
    TokenSequence encode(const std::string& sequence, int max_tokens = 0,
                         const std::string& source_id = "") const;

    /// Truncates to context_tokens or pads with [PAD]; attention_mask false
    /// exactly on the appended pads.
    static TokenSequence pad_or_truncate(TokenSequence tokens, int context_tokens);

    /// Concatenation of non-special token strings. Throws DataConstraintError
    /// on an id outside [0, 4103].
    std::string decode(const TokenSequence& tokens) const;

    /// Two-column TSV (token, id) in id order; byte-stable across runs.
    std::string to_tsv() const;
    std::string fingerprint() const;

private:
    std::vector<std::string> token_strings_;
    std::unordered_map<std::string, int> ids_;
};

/// Binary token-stream container: 16-byte header (8-byte magic "GLMTOK01" +
/// little-endian u64 record count), then per record a little-endian u32 token
/// count followed by that many little-endian u16 ids.
void write_token_stream(const std::string& path, const std::vector<TokenSequence>& records);
std::vector<TokenSequence> read_token_stream(const std::string& path);

}  // namespace genolm

#endif
