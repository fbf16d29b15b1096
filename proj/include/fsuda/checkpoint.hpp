#ifndef FSUDA_CHECKPOINT_HPP
#define FSUDA_CHECKPOINT_HPP

#include "fsuda/autodiff.hpp"
#include "fsuda/embedding.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fsuda {

// Layout: "FSUD", u32 version, then per parameter until end of file:
// u32 name length, name bytes, u32 rank, u32 extents, float32 values.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

template <typename S>
std::string encode_checkpoint(const std::vector<const ParameterSet<S>*>& sets);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

/// Writes through a temporary file and renames it into place.
template <typename S>
void save_checkpoint(const std::string& path, const std::vector<const ParameterSet<S>*>& sets);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

/// Copies every entry whose name exists in `params`; shapes must agree.
/// Returns the number of parameters assigned.
template <typename S>
std::size_t assign_parameters(ParameterSet<S>& params, const std::vector<NamedTensor>& entries);

/// Recovers block count and channel widths from "embed.*" entries.
EmbeddingConfig infer_embedding_config(const std::vector<NamedTensor>& entries, Index in_height, Index in_width);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace fsuda

#endif  // FSUDA_CHECKPOINT_HPP
