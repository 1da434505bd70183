#pragma once

#include <stdexcept>
#include <string>

namespace kvbridge {

enum class CacheKind { KV, E };

inline const char* to_string(CacheKind kind) { return kind == CacheKind::KV ? "KV" : "E"; }

// A required sender cache entry was not available.
class CacheMiss : public std::runtime_error {
public:
    CacheMiss(int layer, CacheKind kind)
        : std::runtime_error("cache miss: layer " + std::to_string(layer) + " kind " + to_string(kind)),
          layer_(layer), kind_(kind) {}

    int layer() const { return layer_; }
    CacheKind kind() const { return kind_; }

private:
    int layer_;
    CacheKind kind_;
};

class DegenerateInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EvictionRefused : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. `where` is a line number or a field path.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& where, const std::string& what)
        : std::runtime_error(where + ": " + what), where_(where) {}

    const std::string& where() const { return where_; }

private:
    std::string where_;
};

class NoData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kvbridge
