#ifndef GENOLM_COMMON_HPP
#define GENOLM_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace genolm {

// Error categories map onto CLI exit codes: config/input -> 2,
// data constraints -> 3, training/runtime -> 4.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataConstraintError : public std::runtime_error {
public:
    explicit DataConstraintError(const std::string& msg) : std::runtime_error(msg) {}
};

class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// FNV-1a 64-bit over raw bytes; used as a cheap content fingerprint.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hash_to_hex(std::uint64_t h);
std::string fingerprint_hex(std::string_view bytes);

/// Fingerprint of a file's contents. Throws ConfigError if unreadable.
std::string fingerprint_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::vector<std::string> split_on(std::string_view s, char delim);
std::string to_upper(std::string s);

}  // namespace genolm

#endif
