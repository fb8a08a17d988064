#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nomad/errors.hpp"

namespace nomad {

inline constexpr std::size_t kBlockKeys = 32; // keys per block
inline constexpr std::size_t kRowBytes = 16;  // bytes per sub-quantizer row

// Read-only view of one 32-key block: num_sub rows of 16 bytes each.
struct BlockView {
    const std::uint8_t* data = nullptr;
    std::size_t num_sub = 0;

    std::span<const std::uint8_t, kRowBytes> row(std::size_t s) const {
        if (s >= num_sub) {
            throw IndexError("BlockView: sub-quantizer " + std::to_string(s) +
                             " out of range");
        }
        return std::span<const std::uint8_t, kRowBytes>(
                data + s * kRowBytes, kRowBytes);
    }
};

// Splits a 16-byte row into the 32 codes it packs, in block-local key order:
// high nibbles first (keys 0..15), then low nibbles (keys 16..31).
inline std::array<std::uint8_t, kBlockKeys> unpack_row(
        std::span<const std::uint8_t, kRowBytes> row) {
    std::array<std::uint8_t, kBlockKeys> codes;
    for (std::size_t j = 0; j < kRowBytes; ++j) {
        codes[j] = static_cast<std::uint8_t>(row[j] >> 4);
        codes[kRowBytes + j] = static_cast<std::uint8_t>(row[j] & 0x0F);
    }
    return codes;
}

// Transposed blocked store of 4-bit key codes.
//
// Keys are grouped in blocks of 32. Within a block, codes of one
// sub-quantizer live in a contiguous 16-byte row so the whole row can be fed
// to a 128-bit byte shuffle. The 32 keys of a block alternate between the
// two nibbles of the row: byte j holds key j in its high nibble and key
// j + 16 in its low nibble.
//
//   row s:  [k0|k16] [k1|k17] ... [k15|k31]     (one byte per cell)
//
// Unoccupied slots in the tail block stay zero; the score kernel masks
// positions past the current key count.
class KeyCodeCache {
  public:
    explicit KeyCodeCache(std::size_t num_sub) : num_sub_(num_sub) {
        if (num_sub == 0) {
            throw ConfigError("KeyCodeCache: num_sub must be positive");
        }
    }

    // Adopts raw block-ordered bytes, e.g. from a cache file.
    static KeyCodeCache from_raw(
            std::size_t num_sub,
            std::size_t num_keys,
            std::vector<std::uint8_t> bytes) {
        KeyCodeCache cache(num_sub);
        std::size_t blocks = (num_keys + kBlockKeys - 1) / kBlockKeys;
        if (bytes.size() != blocks * num_sub * kRowBytes) {
            throw InvalidInputError(
                    "KeyCodeCache::from_raw: got " + std::to_string(bytes.size()) +
                    " bytes, layout requires " +
                    std::to_string(blocks * num_sub * kRowBytes));
        }
        cache.bytes_ = std::move(bytes);
        cache.num_keys_ = num_keys;
        return cache;
    }

    // Writes one key's codes into the tail block; touches exactly num_sub
    // bytes. Allocates a fresh zeroed block every 32 keys.
    void append(std::span<const std::uint8_t> codes) {
        if (codes.size() != num_sub_) {
            throw InvalidInputError(
                    "KeyCodeCache::append: got " + std::to_string(codes.size()) +
                    " codes, cache has " + std::to_string(num_sub_) +
                    " sub-quantizers");
        }
        const std::size_t local = num_keys_ % kBlockKeys;
        if (local == 0) {
            bytes_.resize(bytes_.size() + num_sub_ * kRowBytes, 0);
        }
        std::uint8_t* block = bytes_.data() + (num_keys_ / kBlockKeys) * num_sub_ * kRowBytes;
        if (local < kRowBytes) {
            std::uint8_t* byte = block + local;
            for (std::size_t s = 0; s < num_sub_; ++s, byte += kRowBytes) {
                *byte = static_cast<std::uint8_t>(
                        (*byte & 0x0F) | ((codes[s] & 0x0F) << 4));
            }
        } else {
            std::uint8_t* byte = block + (local - kRowBytes);
            for (std::size_t s = 0; s < num_sub_; ++s, byte += kRowBytes) {
                *byte = static_cast<std::uint8_t>(
                        (*byte & 0xF0) | (codes[s] & 0x0F));
            }
        }
        ++num_keys_;
    }

    // Code written by the key_index-th append for sub-quantizer s.
    std::uint8_t read_code(std::size_t key_index, std::size_t s) const {
        if (key_index >= num_keys_) {
            throw IndexError(
                    "KeyCodeCache::read_code: key " + std::to_string(key_index) +
                    " out of range (have " + std::to_string(num_keys_) + ")");
        }
        if (s >= num_sub_) {
            throw IndexError(
                    "KeyCodeCache::read_code: sub-quantizer " + std::to_string(s) +
                    " out of range");
        }
        const std::size_t local = key_index % kBlockKeys;
        const std::uint8_t* row = bytes_.data() +
                (key_index / kBlockKeys) * num_sub_ * kRowBytes + s * kRowBytes;
        if (local < kRowBytes) {
            return static_cast<std::uint8_t>(row[local] >> 4);
        }
        return static_cast<std::uint8_t>(row[local - kRowBytes] & 0x0F);
    }

    BlockView block(std::size_t i) const {
        if (i >= num_blocks()) {
            throw IndexError("KeyCodeCache: block " + std::to_string(i) +
                             " out of range");
        }
        return BlockView{bytes_.data() + i * num_sub_ * kRowBytes, num_sub_};
    }

    std::size_t num_keys() const { return num_keys_; }
    std::size_t num_sub() const { return num_sub_; }
    std::size_t num_blocks() const {
        return (num_keys_ + kBlockKeys - 1) / kBlockKeys;
    }
    // 4 bits per key per sub-quantizer, rounded up to whole blocks.
    std::size_t byte_size() const { return bytes_.size(); }
    std::span<const std::uint8_t> raw() const { return bytes_; }

  private:
    std::size_t num_sub_;
    std::size_t num_keys_ = 0;
    std::vector<std::uint8_t> bytes_;
};

} // namespace nomad
