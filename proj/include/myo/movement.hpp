#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace myo {

// Movement ids are stable across sessions; Rest is always 0.
enum class Movement : std::uint8_t {
    Rest = 0,
    HandOpen = 1,
    PowerGrasp = 2,
    WristPronate = 3,
    WristSupinate = 4,
    TripodGrasp = 5,
    KeyGrasp = 6,
    IndexPoint = 7,
    PrecisionPinch = 8,
};

inline constexpr std::size_t kMovementCount = 9;

inline constexpr std::array<Movement, kMovementCount> kAllMovements = {
    Movement::Rest,        Movement::HandOpen,     Movement::PowerGrasp,
    Movement::WristPronate, Movement::WristSupinate, Movement::TripodGrasp,
    Movement::KeyGrasp,    Movement::IndexPoint,   Movement::PrecisionPinch,
};

constexpr int movement_id(Movement m) { return static_cast<int>(m); }

std::string_view movement_name(Movement m);

// Case-insensitive; spaces, dashes and underscores are ignored ("Power Grasp",
// "power_grasp", "PowerGrasp").
std::optional<Movement> parse_movement(std::string_view name);

std::optional<Movement> movement_from_id(int id);

// Closing gestures are the ones the FLT may prompt.
constexpr bool is_closing_gesture(Movement m) {
    switch (m) {
        case Movement::PowerGrasp:
        case Movement::TripodGrasp:
        case Movement::KeyGrasp:
        case Movement::IndexPoint:
        case Movement::PrecisionPinch:
            return true;
        default:
            return false;
    }
}

constexpr bool is_wrist(Movement m) {
    return m == Movement::WristPronate || m == Movement::WristSupinate;
}

enum class Handedness : std::uint8_t { Right, Left };

}  // namespace myo
