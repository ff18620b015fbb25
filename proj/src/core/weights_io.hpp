#pragma once

#include <map>
#include <string>

#include "errors.hpp"
#include "tensor.hpp"

namespace ltew {

// Named float tensors, sorted by name so serialization is reproducible.
using WeightMap = std::map<std::string, Tensor<float>>;

struct BadMagicError : FormatError {
    explicit BadMagicError(const std::string& what) : FormatError(what) {}
};
struct TruncatedError : FormatError {
    explicit TruncatedError(const std::string& what) : FormatError(what) {}
};
struct DuplicateNameError : FormatError {
    explicit DuplicateNameError(const std::string& what) : FormatError(what) {}
};

// Weight file: 8-byte magic "LTEW0001", then tensor records until EOF:
//   u32 name length, name bytes,
//   u32 dim count, u32 dims[],
//   float32 payload (product of dims values).
// All integers and floats little-endian. An empty model is a bare magic.
void save_weights(const WeightMap& weights, const std::string& path);
WeightMap load_weights(const std::string& path);

}  // namespace ltew
