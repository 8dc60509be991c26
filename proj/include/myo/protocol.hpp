#pragma once

// Longitudinal protocol table: which movements each session trains, the
// exploration budget and the size of the assessment block.

#include <cstdint>
#include <vector>

#include "myo/movement.hpp"

namespace myo::session {

inline constexpr int kFirstSession = 1;
inline constexpr int kLastSession = 11;
inline constexpr std::int64_t kExplorationMsPerMovement = 2 * 60 * 1000;

enum class Stage : char { A = 'A', B = 'B', C = 'C' };

struct ProtocolStage {
    int session_index = 1;
    Stage stage = Stage::A;
    std::vector<Movement> movements;  // includes Rest, movement-id order
    std::vector<int> positions;       // board locations visited while calibrating
    std::int64_t t_max_ms = 0;        // 2 min per non-Rest movement
    std::size_t flt_trials = 0;

    std::size_t active_count() const { return movements.size() - 1; }
    bool contains(Movement m) const;
    // Calibrated closing gestures; the FLT prompts only these.
    std::vector<Movement> flt_gestures() const;

    // Same content regardless of session index.
    bool same_activities(const ProtocolStage& other) const {
        return stage == other.stage && movements == other.movements && positions == other.positions &&
               t_max_ms == other.t_max_ms && flt_trials == other.flt_trials;
    }
};

// Throws std::out_of_range outside 1..11. Session 11 repeats session 10.
ProtocolStage plan_session(int index);

// Default checkerboard locations used during calibration; they include the three
// assessment locations of either handedness.
std::vector<int> default_calibration_positions();

// Assessment locations: right-handed {5, 6, 1}, left-handed {5, 4, 3}
// (neutral, periphery, across the midline).
std::vector<int> assessment_locations(Handedness h);

}  // namespace myo::session
