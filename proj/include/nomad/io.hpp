#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "nomad/errors.hpp"
#include "nomad/key_code_cache.hpp"
#include "nomad/quantizer.hpp"

namespace nomad {

// On-disk artifacts. All three formats are little-endian with a fixed-layout
// header: a 4-byte magic, a u32 version, then format-specific fields.
//
//   TensorFile   "NMTF": n_vectors u64, dim u32; payload n * dim f32
//   CodebookFile "NMCB": d u32, d_sub u32, n_centroids u32 (= 16),
//                        layer u32, head u32; payload S * 16 * d_sub f32
//   CacheFile    "NMKC": S u32, num_keys u64; payload raw blocks
inline constexpr std::uint32_t kFormatVersion = 1;

struct Tensor {
    std::vector<float> data; // row-major
    std::uint64_t n = 0;
    std::uint32_t dim = 0;
};

namespace detail {

class ByteReader {
  public:
    ByteReader(const std::string& path, std::vector<std::uint8_t> bytes)
            : path_(path), bytes_(std::move(bytes)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void expect_magic(const char (&magic)[5]) {
        if (remaining() < 4 || std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
            throw FormatError(path_ + ": bad magic at offset 0 (expected \"" +
                              magic + "\")");
        }
        pos_ += 4;
    }

    void expect_version() {
        const std::size_t at = pos_;
        const std::uint32_t version = read_u32();
        if (version != kFormatVersion) {
            throw FormatError(path_ + ": unsupported version " +
                              std::to_string(version) + " at offset " +
                              std::to_string(at) + " (expected " +
                              std::to_string(kFormatVersion) + ")");
        }
    }

    std::uint32_t read_u32() {
        need(4, "header field");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t read_u64() {
        need(8, "header field");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    // Consumes the rest of the file as payload; size must match exactly.
    std::span<const std::uint8_t> payload(std::uint64_t expected_bytes) {
        if (remaining() < expected_bytes) {
            throw FormatError(
                    path_ + ": truncated payload at offset " +
                    std::to_string(pos_) + ": expected " +
                    std::to_string(expected_bytes) + " bytes, found " +
                    std::to_string(remaining()));
        }
        if (remaining() > expected_bytes) {
            throw FormatError(
                    path_ + ": oversized payload at offset " +
                    std::to_string(pos_) + ": expected " +
                    std::to_string(expected_bytes) + " bytes, found " +
                    std::to_string(remaining()));
        }
        std::span<const std::uint8_t> out(bytes_.data() + pos_, expected_bytes);
        pos_ += expected_bytes;
        return out;
    }

  private:
    void need(std::size_t count, const char* what) {
        if (remaining() < count) {
            throw FormatError(path_ + ": truncated " + what + " at offset " +
                              std::to_string(pos_));
        }
    }

    std::string path_;
    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline ByteReader open_reader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(path + ": cannot open for reading");
    }
    std::vector<std::uint8_t> bytes(
            (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(path, std::move(bytes));
}

class ByteWriter {
  public:
    void magic(const char (&m)[5]) { append(m, 4); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buf_.push_back(std::uint8_t(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buf_.push_back(std::uint8_t(v >> (8 * i)));
        }
    }
    void floats(std::span<const float> values) {
        static_assert(sizeof(float) == 4);
        if constexpr (std::endian::native == std::endian::little) {
            append(values.data(), values.size() * 4);
        } else {
            for (float f : values) {
                u32(std::bit_cast<std::uint32_t>(f));
            }
        }
    }
    void bytes(std::span<const std::uint8_t> data) {
        append(data.data(), data.size());
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(path + ": cannot open for writing");
        }
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  std::streamsize(buf_.size()));
        if (!out) {
            throw Error(path + ": write failed");
        }
    }

  private:
    void append(const void* data, std::size_t count) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + count);
    }

    std::vector<std::uint8_t> buf_;
};

inline std::vector<float> payload_floats(std::span<const std::uint8_t> payload) {
    std::vector<float> out(payload.size() / 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), payload.data(), payload.size());
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b) {
                v |= std::uint32_t(payload[i * 4 + b]) << (8 * b);
            }
            out[i] = std::bit_cast<float>(v);
        }
    }
    return out;
}

} // namespace detail

inline void write_tensor_file(
        const std::string& path,
        std::span<const float> data,
        std::uint64_t n,
        std::uint32_t dim) {
    if (data.size() != n * dim) {
        throw InvalidInputError(path + ": tensor data size mismatch");
    }
    detail::ByteWriter w;
    w.magic("NMTF");
    w.u32(kFormatVersion);
    w.u64(n);
    w.u32(dim);
    w.floats(data);
    w.save(path);
}

inline Tensor read_tensor_file(const std::string& path) {
    detail::ByteReader r = detail::open_reader(path);
    r.expect_magic("NMTF");
    r.expect_version();
    Tensor t;
    t.n = r.read_u64();
    t.dim = r.read_u32();
    t.data = detail::payload_floats(r.payload(t.n * std::uint64_t(t.dim) * 4));
    return t;
}

inline void write_codebook_file(const std::string& path, const Codebook& cb) {
    detail::ByteWriter w;
    w.magic("NMCB");
    w.u32(kFormatVersion);
    w.u32(std::uint32_t(cb.config.head_dim));
    w.u32(std::uint32_t(cb.config.sub_dim));
    w.u32(std::uint32_t(PqConfig::kNumCentroids));
    w.u32(cb.layer_id);
    w.u32(cb.head_id);
    w.floats(cb.centroids);
    w.save(path);
}

inline Codebook read_codebook_file(const std::string& path) {
    detail::ByteReader r = detail::open_reader(path);
    r.expect_magic("NMCB");
    r.expect_version();
    const std::uint32_t d = r.read_u32();
    const std::uint32_t d_sub = r.read_u32();
    const std::uint32_t n_centroids = r.read_u32();
    if (n_centroids != PqConfig::kNumCentroids) {
        throw FormatError(path + ": codebook has " + std::to_string(n_centroids) +
                          " centroids per sub-quantizer, expected 16");
    }
    if (d == 0 || d_sub == 0 || d % d_sub != 0) {
        throw FormatError(path + ": sub_dim " + std::to_string(d_sub) +
                          " does not divide dim " + std::to_string(d));
    }
    Codebook cb;
    cb.layer_id = r.read_u32();
    cb.head_id = r.read_u32();
    try {
        cb.config = PqConfig(d, d_sub);
    } catch (const ConfigError& e) {
        throw FormatError(path + ": " + e.what());
    }
    const std::uint64_t count = std::uint64_t(cb.config.num_sub) *
            PqConfig::kNumCentroids * cb.config.sub_dim;
    cb.centroids = detail::payload_floats(r.payload(count * 4));
    if (!detail::all_finite(cb.centroids)) {
        throw FormatError(path + ": non-finite centroid value");
    }
    return cb;
}

inline void write_cache_file(const std::string& path, const KeyCodeCache& cache) {
    detail::ByteWriter w;
    w.magic("NMKC");
    w.u32(kFormatVersion);
    w.u32(std::uint32_t(cache.num_sub()));
    w.u64(cache.num_keys());
    w.bytes(cache.raw());
    w.save(path);
}

inline KeyCodeCache read_cache_file(const std::string& path) {
    detail::ByteReader r = detail::open_reader(path);
    r.expect_magic("NMKC");
    r.expect_version();
    const std::uint32_t num_sub = r.read_u32();
    const std::uint64_t num_keys = r.read_u64();
    if (num_sub == 0) {
        throw FormatError(path + ": cache has zero sub-quantizers");
    }
    const std::uint64_t blocks = (num_keys + kBlockKeys - 1) / kBlockKeys;
    const std::span<const std::uint8_t> payload =
            r.payload(blocks * num_sub * kRowBytes);
    return KeyCodeCache::from_raw(
            num_sub, num_keys,
            std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

} // namespace nomad
