#include "genolm/container.hpp"

#include <cstring>

#include "genolm/common.hpp"

namespace genolm {

namespace {

void put_le64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le64(const std::string& s, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
    return v;
}

}  // namespace

void write_tensor_container(const std::string& path, nlohmann::ordered_json meta,
                            const std::vector<TensorEntry>& tensors) {
    std::string payload;
    nlohmann::ordered_json dir = nlohmann::ordered_json::array();
    for (const TensorEntry& t : tensors) {
        dir.push_back({{"name", t.name},
                       {"rows", t.data.rows},
                       {"cols", t.data.cols},
                       {"offset", payload.size()}});
        for (double x : t.data.data) {
            const float f = static_cast<float>(x);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i) payload.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    }
    meta["tensors"] = dir;
    const std::string header = meta.dump();
    std::string out;
    out.reserve(16 + header.size() + payload.size());
    out.append(kContainerMagic, 8);
    put_le64(out, header.size());
    out += header;
    out += payload;
    write_file(path, out);
}

TensorContainer read_tensor_container(const std::string& path) {
    const std::string raw = read_file(path);
    if (raw.size() < 16 || raw.compare(0, 8, kContainerMagic, 8) != 0)
        throw ParseError("not a checkpoint file (bad magic): " + path);
    const std::uint64_t header_len = get_le64(raw, 8);
    if (16 + header_len > raw.size()) throw ParseError("checkpoint header truncated: " + path);
    TensorContainer out;
    try {
        out.meta = nlohmann::json::parse(raw.substr(16, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    const std::size_t data_start = 16 + header_len;
    if (!out.meta.contains("tensors")) throw ParseError("checkpoint lacks tensor directory: " + path);
    for (const auto& tj : out.meta.at("tensors")) {
        TensorEntry t;
        t.name = tj.at("name").get<std::string>();
        const int rows = tj.at("rows").get<int>();
        const int cols = tj.at("cols").get<int>();
        if (rows < 0 || cols < 0) throw ParseError("checkpoint tensor has negative shape: " + path);
        t.data = Matrix(rows, cols);
        const std::size_t offset = data_start + tj.at("offset").get<std::size_t>();
        const std::size_t bytes = t.data.size() * 4;
        if (offset + bytes > raw.size()) throw ParseError("checkpoint payload truncated: " + path);
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(
                            static_cast<unsigned char>(raw[offset + 4 * i + b]))
                        << (8 * b);
            float f;
            std::memcpy(&f, &bits, 4);
            t.data.data[i] = static_cast<double>(f);
        }
        out.tensors.push_back(std::move(t));
    }
    return out;
}

const TensorEntry* TensorContainer::find(const std::string& name) const {
    for (const TensorEntry& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const Matrix& TensorContainer::require(const std::string& name, int rows, int cols) const {
    const TensorEntry* t = find(name);
    if (!t) throw ParseError("checkpoint missing tensor: " + name);
    if (t->data.rows != rows || t->data.cols != cols)
        throw ParseError("checkpoint tensor " + name + " has unexpected shape");
    return t->data;
}

}  // namespace genolm
