#pragma once

// Internal helpers shared by the JSON-backed file formats.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>

#include "myo/error.hpp"

namespace myo::detail {

using json = nlohmann::json;

inline std::size_t line_of_offset(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

// Parses one JSON document; errors become ParseError(source, line + line_offset).
inline json parse_json(const std::string& text, const std::string& source, std::size_t first_line = 1) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        throw ParseError(source, first_line - 1 + line_of_offset(text, byte), e.what());
    }
}

inline std::string read_text(std::istream& in) {
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return read_text(in);
}

}  // namespace myo::detail
