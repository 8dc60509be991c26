#include "myo/protocol.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace myo::session {

bool ProtocolStage::contains(Movement m) const {
    return std::find(movements.begin(), movements.end(), m) != movements.end();
}

std::vector<Movement> ProtocolStage::flt_gestures() const {
    std::vector<Movement> out;
    for (Movement m : movements) {
        if (is_closing_gesture(m)) out.push_back(m);
    }
    return out;
}

std::vector<int> default_calibration_positions() { return {1, 3, 4, 5, 6}; }

std::vector<int> assessment_locations(Handedness h) {
    return h == Handedness::Right ? std::vector<int>{5, 6, 1} : std::vector<int>{5, 4, 3};
}

ProtocolStage plan_session(int index) {
    if (index < kFirstSession || index > kLastSession) {
        throw std::out_of_range("session index " + std::to_string(index) + " outside 1..11");
    }
    ProtocolStage s;
    s.session_index = index;
    s.movements = {Movement::Rest, Movement::HandOpen, Movement::PowerGrasp, Movement::WristPronate,
                   Movement::WristSupinate};
    s.stage = Stage::A;
    s.flt_trials = 18;
    if (index >= 5) {
        s.stage = Stage::B;
        s.movements.push_back(Movement::TripodGrasp);
        s.movements.push_back(Movement::KeyGrasp);
        s.flt_trials = 36;
    }
    if (index >= 8) {
        s.stage = Stage::C;
        s.movements.push_back(Movement::IndexPoint);
        s.movements.push_back(Movement::PrecisionPinch);
        s.flt_trials = 54;
    }
    s.positions = default_calibration_positions();
    s.t_max_ms = kExplorationMsPerMovement * static_cast<std::int64_t>(s.active_count());
    return s;
}

}  // namespace myo::session
