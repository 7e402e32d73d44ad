#include "genolm/tokenizer.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "genolm/common.hpp"

namespace genolm {

namespace {

constexpr std::array<char, 4> kBases = {'A', 'C', 'G', 'T'};

constexpr bool is_canonical(char c) {
    return c == 'A' || c == 'C' || c == 'G' || c == 'T' || c == 'N';
}

int nucleotide_id(char c) {
    switch (c) {
        case 'A': return 3;
        case 'C': return 4;
        case 'G': return 5;
        case 'T': return 6;
        case 'N': return 7;
        default: return -1;
    }
}

int base_digit(char c) {
    switch (c) {
        case 'A': return 0;
        case 'C': return 1;
        case 'G': return 2;
        case 'T': return 3;
        default: return -1;
    }
}

}  // namespace

Vocabulary::Vocabulary() {
    token_strings_.reserve(kSize);
    token_strings_.emplace_back("[PAD]");
    token_strings_.emplace_back("[MASK]");
    token_strings_.emplace_back("[CLS]");
    token_strings_.emplace_back("A");
    token_strings_.emplace_back("C");
    token_strings_.emplace_back("G");
    token_strings_.emplace_back("T");
    token_strings_.emplace_back("N");
    for (int index = 0; index < 4096; ++index) {
        std::string kmer(kKmerLength, 'A');
        int rem = index;
        for (int pos = kKmerLength - 1; pos >= 0; --pos) {
            kmer[static_cast<std::size_t>(pos)] = kBases[static_cast<std::size_t>(rem & 3)];
            rem >>= 2;
        }
        token_strings_.push_back(kmer);
    }
    ids_.reserve(kSize * 2);
    for (int id = 0; id < kSize; ++id) ids_.emplace(token_strings_[static_cast<std::size_t>(id)], id);
}

const std::string& Vocabulary::token_string(int id) const {
    if (id < 0 || id >= kSize) throw DataConstraintError("token id out of range: " + std::to_string(id));
    return token_strings_[static_cast<std::size_t>(id)];
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? -1 : it->second;
}

TokenSequence Vocabulary::encode(const std::string& sequence, int max_tokens,
                                 const std::string& source_id) const {
    if (max_tokens < 0) throw ConfigError("encode: max_tokens must be >= 1 when given");
    TokenSequence out;
    out.source_id = source_id;
    out.original_length_bp = static_cast<std::int64_t>(sequence.size());
    out.ids.reserve(sequence.size() / kKmerLength + 2);
    out.ids.push_back(kClsId);

    const std::size_t n = sequence.size();
    std::size_t pos = 0;
    while (pos < n) {
        if (max_tokens > 0 && static_cast<int>(out.ids.size()) >= max_tokens) break;
        char c = sequence[pos];
        if (!is_canonical(c))
            throw ParseError("non-canonical character '" + std::string(1, c) + "' at position " +
                             std::to_string(pos));
        bool kmer_ok = pos + kKmerLength <= n;
        int code = 0;
        if (kmer_ok) {
            for (std::size_t j = pos; j < pos + kKmerLength; ++j) {
                int d = base_digit(sequence[j]);
                if (d < 0) {
                    if (!is_canonical(sequence[j]))
                        throw ParseError("non-canonical character '" + std::string(1, sequence[j]) +
                                         "' at position " + std::to_string(j));
                    kmer_ok = false;  // window contains N
                    break;
                }
                code = (code << 2) | d;
            }
        }
        if (kmer_ok) {
            out.ids.push_back(static_cast<std::uint16_t>(kFirstKmerId + code));
            pos += kKmerLength;
        } else {
            out.ids.push_back(static_cast<std::uint16_t>(nucleotide_id(c)));
            pos += 1;
        }
    }
    if (max_tokens > 0 && static_cast<int>(out.ids.size()) > max_tokens)
        out.ids.resize(static_cast<std::size_t>(max_tokens));
    out.attention_mask.assign(out.ids.size(), true);
    return out;
}

TokenSequence Vocabulary::pad_or_truncate(TokenSequence tokens, int context_tokens) {
    if (context_tokens < 1) throw ConfigError("pad_or_truncate: context_tokens must be >= 1");
    const std::size_t target = static_cast<std::size_t>(context_tokens);
    if (tokens.ids.size() > target) {
        tokens.ids.resize(target);
        tokens.attention_mask.assign(target, true);
    } else {
        std::size_t real = tokens.ids.size();
        tokens.ids.resize(target, kPadId);
        tokens.attention_mask.assign(target, false);
        for (std::size_t i = 0; i < real; ++i) tokens.attention_mask[i] = true;
    }
    return tokens;
}

std::string Vocabulary::decode(const TokenSequence& tokens) const {
    std::string out;
    out.reserve(tokens.ids.size() * kKmerLength);
    for (std::uint16_t id : tokens.ids) {
        if (id >= kSize) throw DataConstraintError("token id out of range: " + std::to_string(id));
        if (is_special(id)) continue;
        out += token_strings_[id];
    }
    return out;
}

std::string Vocabulary::to_tsv() const {
    std::string out;
    out.reserve(kSize * 10);
    for (int id = 0; id < kSize; ++id) {
        out += token_strings_[static_cast<std::size_t>(id)];
        out += '\t';
        out += std::to_string(id);
        out += '\n';
    }
    return out;
}

std::string Vocabulary::fingerprint() const { return fingerprint_hex(to_tsv()); }

namespace {

constexpr char kTokenMagic[8] = {'G', 'L', 'M', 'T', 'O', 'K', '0', '1'};

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw ParseError("token stream truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    off += sizeof(T);
    return static_cast<T>(v);
}

}  // namespace

void write_token_stream(const std::string& path, const std::vector<TokenSequence>& records) {
    std::string out;
    out.append(kTokenMagic, sizeof(kTokenMagic));
    put_le<std::uint64_t>(out, records.size());
    for (const auto& rec : records) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.ids.size()));
        for (std::uint16_t id : rec.ids) put_le<std::uint16_t>(out, id);
    }
    write_file(path, out);
}

std::vector<TokenSequence> read_token_stream(const std::string& path) {
    const std::string in = read_file(path);
    if (in.size() < 16 || std::memcmp(in.data(), kTokenMagic, sizeof(kTokenMagic)) != 0)
        throw ParseError("not a GLMTOK01 token stream: " + path);
    std::size_t off = sizeof(kTokenMagic);
    const auto count = get_le<std::uint64_t>(in, off);
    std::vector<TokenSequence> records;
    records.reserve(count);
    for (std::uint64_t r = 0; r < count; ++r) {
        const auto len = get_le<std::uint32_t>(in, off);
        TokenSequence seq;
        seq.ids.reserve(len);
        for (std::uint32_t i = 0; i < len; ++i) seq.ids.push_back(get_le<std::uint16_t>(in, off));
        seq.attention_mask.assign(seq.ids.size(), true);
        for (std::size_t i = seq.ids.size(); i > 0; --i) {
            if (seq.ids[i - 1] != Vocabulary::kPadId) break;
            seq.attention_mask[i - 1] = false;
        }
        records.push_back(std::move(seq));
    }
    return records;
}

}  // namespace genolm
