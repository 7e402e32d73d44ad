#include "genolm/features.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "genolm/common.hpp"
#include "json.hpp"

namespace genolm {

namespace {

// A=0, C=1, G=2, T=3, anything else (N) = -1.
int base_index(char c) {
    switch (c) {
        case 'A': return 0;
        case 'C': return 1;
        case 'G': return 2;
        case 'T': return 3;
        default: return -1;
    }
}

}  // namespace

OneHotMatrix one_hot(const std::string& sequence, int fixed_length) {
    if (fixed_length <= 0) throw ConfigError("one_hot: fixed_length must be positive");
    OneHotMatrix m;
    m.rows = fixed_length;
    m.values.assign(static_cast<std::size_t>(fixed_length) * 4, 0.0f);
    const int n = std::min<int>(fixed_length, static_cast<int>(sequence.size()));
    for (int i = 0; i < n; ++i) {
        const int b = base_index(sequence[static_cast<std::size_t>(i)]);
        if (b >= 0) m.values[static_cast<std::size_t>(i) * 4 + b] = 1.0f;
    }
    return m;
}

const std::vector<KmerBlock>& kmer_frequency_blocks() {
    static const std::vector<KmerBlock> blocks = [] {
        std::vector<KmerBlock> out;
        int offset = 0;
        for (int k = kKmerFreqMinK; k <= kKmerFreqMaxK; ++k) {
            const int dim = 1 << (2 * k);
            out.push_back({k, offset, dim});
            offset += dim;
        }
        return out;
    }();
    return blocks;
}

std::vector<double> kmer_frequencies(const std::string& sequence) {
    std::vector<double> out(kKmerFreqDim, 0.0);
    for (const KmerBlock& block : kmer_frequency_blocks()) {
        const int k = block.k;
        const std::uint64_t mask = (1ull << (2 * k)) - 1;
        std::uint64_t code = 0;
        int run = 0;  // length of the current run of non-N bases
        std::int64_t valid_windows = 0;
        for (char c : sequence) {
            const int b = base_index(c);
            if (b < 0) {
                run = 0;
                code = 0;
                continue;
            }
            code = ((code << 2) | static_cast<std::uint64_t>(b)) & mask;
            if (++run >= k) {
                out[static_cast<std::size_t>(block.offset) + code] += 1.0;
                ++valid_windows;
            }
        }
        if (valid_windows > 0) {
            for (int i = 0; i < block.dim; ++i)
                out[static_cast<std::size_t>(block.offset + i)] /= static_cast<double>(valid_windows);
        }
    }
    return out;
}

void write_feature_matrix(const std::string& path, const std::vector<std::vector<double>>& rows,
                          bool kmer_blocks) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    for (const auto& r : rows)
        if (r.size() != cols) throw ConfigError("write_feature_matrix: ragged rows");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    std::vector<float> buf(cols);
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < cols; ++j) buf[j] = static_cast<float>(r[j]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(cols * sizeof(float)));
    }
    if (!out) throw ConfigError("failed writing: " + path);
    out.close();

    nlohmann::json meta;
    meta["rows"] = rows.size();
    meta["cols"] = cols;
    meta["dtype"] = "float32";
    meta["byte_order"] = "little";
    if (kmer_blocks) {
        nlohmann::json blocks = nlohmann::json::array();
        for (const KmerBlock& b : kmer_frequency_blocks())
            blocks.push_back({{"k", b.k}, {"offset", b.offset}, {"dim", b.dim}});
        meta["blocks"] = blocks;
    }
    write_file(path + ".json", meta.dump(2) + "\n");
}

std::vector<std::vector<double>> read_feature_matrix(const std::string& path) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(path + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad feature sidecar " + path + ".json: " + e.what());
    }
    const std::size_t rows = meta.at("rows").get<std::size_t>();
    const std::size_t cols = meta.at("cols").get<std::size_t>();

    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open: " + path);
    std::vector<std::vector<double>> out(rows);
    std::vector<float> buf(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(cols * sizeof(float)));
        if (!in) throw ParseError("feature matrix truncated: " + path);
        out[i].assign(buf.begin(), buf.end());
    }
    return out;
}

std::string feature_matrix_to_csv(const std::vector<std::vector<double>>& rows) {
    std::ostringstream out;
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out << ',';
            char tmp[40];
            std::snprintf(tmp, sizeof(tmp), "%.9g", r[j]);
            out << tmp;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace genolm
