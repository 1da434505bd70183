#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "kvbridge/errors.hpp"

namespace kvbridge {
struct CostModel;
struct ModelConfig;
}  // namespace kvbridge

namespace kvbridge::detail {

using nlohmann::json;

// `model` supplies byte-mode sizes when the object has no "model" field.
CostModel parse_cost(const json& c, const std::string& path, const ModelConfig* model);

// Parses JSON text, reporting syntax errors by line.
inline json parse_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const auto offset = std::min(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
        throw ParseError("line " + std::to_string(line), e.what());
    }
}

template <typename T>
T field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(path + "." + key, "missing field");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(path + "." + key, std::string("wrong type: ") + e.what());
    }
}

template <typename T>
T field_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    return field<T>(obj, key, path);
}

inline const json& object_field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_object()) {
        throw ParseError(path + "." + key, "expected an object");
    }
    return obj.at(key);
}

inline void check_header(const json& j, const std::string& format, int version, const std::string& path) {
    if (field<std::string>(j, "format", path) != format) throw ParseError(path + ".format", "expected '" + format + "'");
    if (const int v = field<int>(j, "version", path); v != version) {
        throw ParseError(path + ".version", "unsupported version " + std::to_string(v));
    }
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace kvbridge::detail
