#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace motra {

// Error taxonomy shared across the library. The CLI maps these onto its
// documented exit codes (config -> 2, data/format -> 3, numeric -> 4).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-format violation carrying the byte offset where parsing failed.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, std::uint64_t offset)
        : std::runtime_error(msg + " (at byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::uint64_t byte_offset;
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

using Rng = std::mt19937_64;

// Derive an independent stream from a master seed; used so that e.g. each
// training stage or puppet video draws from its own deterministic sequence.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream ^ 0x7f4a7c15u),
                      static_cast<std::uint32_t>((stream >> 32) ^ 0x9e3779b9u)};
    return Rng(seq);
}

}  // namespace motra
