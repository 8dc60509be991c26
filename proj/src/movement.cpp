#include "myo/movement.hpp"

#include <algorithm>
#include <cctype>

namespace myo {

namespace {

constexpr std::array<std::string_view, kMovementCount> kNames = {
    "Rest",          "Hand Open",    "Power Grasp", "Wrist Pronate",   "Wrist Supinate",
    "Tripod Grasp",  "Key Grasp",    "Index Point", "Precision Pinch",
};

std::string normalize(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == ' ' || c == '-' || c == '_') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

}  // namespace

std::string_view movement_name(Movement m) {
    return kNames[static_cast<std::size_t>(m)];
}

std::optional<Movement> parse_movement(std::string_view name) {
    const std::string key = normalize(name);
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (normalize(kNames[i]) == key) return kAllMovements[i];
    }
    return std::nullopt;
}

std::optional<Movement> movement_from_id(int id) {
    if (id < 0 || id >= static_cast<int>(kMovementCount)) return std::nullopt;
    return kAllMovements[static_cast<std::size_t>(id)];
}

}  // namespace myo
