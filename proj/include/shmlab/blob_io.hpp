#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace shmlab {

static_assert(std::endian::native == std::endian::little,
              "blob files are little-endian; big-endian hosts are unsupported");

/// Raw little-endian float blobs backing datasets and checkpoints.
void write_f32_blob(const std::filesystem::path& path, const float* data, std::size_t count);
void write_f64_blob(const std::filesystem::path& path, const double* data, std::size_t count);
std::vector<float> read_f32_blob(const std::filesystem::path& path);
std::vector<double> read_f64_blob(const std::filesystem::path& path);

/// Byte count of a file; throws IoError if missing.
std::uint64_t file_size_bytes(const std::filesystem::path& path);

/// True if both files exist and carry identical bytes.
bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b);

/// FNV-1a 64-bit hash, used for content-addressed run directories.
std::uint64_t fnv1a64(const std::string& text);

/// Fixed-width lowercase hex rendering of a hash.
std::string hex64(std::uint64_t value);

} // namespace shmlab
