#pragma once

// Declarative run configuration shared by the CLI subcommands: the synthetic
// population and sweep, the decoder, the simulated user and the FLT rates.
//
//   {
//     "session": 1,
//     "levels": [1, 2.25, 3.5, 4.75, 6], "sigma": 0.1, "drift_per_min": 0,
//     "seeds": [1, 2, 3],            or "seed_count": 10
//     "feature_level": false,
//     "decode": {"t_rest": 0.15, "smoothing": 1},
//     "agent": {"epsilon": 0, "tolerance": 0.024, "reaction_delay": 0},
//     "flt": {"width": 0.05, "aperture_rate": 0.4, "orientation_rate": 0.4,
//             "dwell_s": 1, "time_limit_s": 15, "target_seed": 1},
//     "collection": {"ms_per_position": 2000}
//   }
//
// Every key is optional. Unknown keys and wrong types are ParseErrors naming
// the file and line.

#include <string>

#include "myo/session.hpp"
#include "myo/synth.hpp"

namespace myo {

struct RunConfig {
    synth::StudyConfig study;
    session::CollectionPlan collection;
    std::uint64_t target_seed = 1;

    session::SessionOptions session_options() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& source_name = "<config>");
RunConfig read_run_config(const std::string& path);

}  // namespace myo
