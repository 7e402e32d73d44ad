#ifndef GENOLM_CONTAINER_HPP
#define GENOLM_CONTAINER_HPP

#include <string>
#include <vector>

#include "genolm/autograd.hpp"
#include "json.hpp"

namespace genolm {

/// On-disk tensor container shared by every checkpoint: 8-byte magic
/// "GLMCKPT1", little-endian u64 header length, JSON header (caller metadata
/// plus a "tensors" directory of names/shapes/byte offsets), then raw
/// little-endian float32 payloads in directory order.
inline constexpr char kContainerMagic[9] = "GLMCKPT1";

struct TensorEntry {
    std::string name;
    Matrix data;
};

void write_tensor_container(const std::string& path, nlohmann::ordered_json meta,
                            const std::vector<TensorEntry>& tensors);

struct TensorContainer {
    nlohmann::json meta;
    std::vector<TensorEntry> tensors;

    const TensorEntry* find(const std::string& name) const;
    /// Same, but throws ParseError when the tensor is missing or its shape
    /// differs from the expectation.
    const Matrix& require(const std::string& name, int rows, int cols) const;
};

TensorContainer read_tensor_container(const std::string& path);

}  // namespace genolm

#endif
