#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "monoforward/matrix.hpp"

namespace mono {

// Container layout (all integers little-endian):
//   "MFCK"  u32 version  u64 tensor_count
//   per tensor: u32 name_len, name bytes, u32 rank, u64 dims[rank], u8 tag,
//               raw row-major payload (product(dims) * element size bytes)
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ElementTag : std::uint8_t { F32 = 0, F64 = 1, U32 = 2, U8 = 3 };

std::size_t element_size(ElementTag tag);

struct TensorRecord {
    std::string name;
    std::vector<std::uint64_t> dims;
    ElementTag tag = ElementTag::F32;
    std::vector<std::uint8_t> payload;

    std::uint64_t count() const;

    template <class T>
    static TensorRecord from_matrix(std::string name, const DenseMatrix<T>& m);
    static TensorRecord from_u32(std::string name, const std::vector<std::uint32_t>& v);
    static TensorRecord from_text(std::string name, const std::string& text);

    /// Rank-2 (or rank-1 as a single row) float/double tensor converted to T.
    template <class T>
    DenseMatrix<T> to_matrix() const;
    std::vector<std::uint32_t> to_u32() const;
    std::string to_text() const;
};

void write_container(const std::filesystem::path& path, const std::vector<TensorRecord>& tensors);
/// Throws CheckpointError on bad magic, unsupported version or truncation.
std::vector<TensorRecord> read_container(const std::filesystem::path& path);

const TensorRecord& find_tensor(const std::vector<TensorRecord>& tensors, const std::string& name);
const TensorRecord* find_tensor_opt(const std::vector<TensorRecord>& tensors, const std::string& name);

}  // namespace mono
