#include "shmlab/blob_io.hpp"

#include "shmlab/errors.hpp"

#include <cstdio>
#include <fstream>

namespace shmlab {

namespace {

template <typename T>
void write_blob(const std::filesystem::path& path, const T* data, std::size_t count) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(T)));
    if (!out) {
        throw IoError("short write: " + path.string());
    }
}

template <typename T>
std::vector<T> read_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(T) != 0) {
        throw IoError("blob size " + std::to_string(bytes) + " is not a multiple of " +
                      std::to_string(sizeof(T)) + ": " + path.string());
    }
    std::vector<T> data(bytes / sizeof(T));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) {
        throw IoError("short read: " + path.string());
    }
    return data;
}

} // namespace

void write_f32_blob(const std::filesystem::path& path, const float* data, std::size_t count) {
    write_blob(path, data, count);
}

void write_f64_blob(const std::filesystem::path& path, const double* data, std::size_t count) {
    write_blob(path, data, count);
}

std::vector<float> read_f32_blob(const std::filesystem::path& path) {
    return read_blob<float>(path);
}

std::vector<double> read_f64_blob(const std::filesystem::path& path) {
    return read_blob<double>(path);
}

std::uint64_t file_size_bytes(const std::filesystem::path& path) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) {
        throw IoError("cannot stat: " + path.string() + " (" + ec.message() + ")");
    }
    return size;
}

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) {
        return false;
    }
    constexpr std::size_t kChunk = 1 << 20;
    std::vector<char> ba(kChunk), bb(kChunk);
    while (true) {
        fa.read(ba.data(), kChunk);
        fb.read(bb.data(), kChunk);
        const auto na = fa.gcount(), nb = fb.gcount();
        if (na != nb || !std::equal(ba.begin(), ba.begin() + na, bb.begin())) {
            return false;
        }
        if (na == 0) {
            return fa.eof() && fb.eof();
        }
    }
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

} // namespace shmlab
