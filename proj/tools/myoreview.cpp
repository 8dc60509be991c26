// myoreview: offline and live front end for the training loop.
//
// Exit status: 0 ok, 1 report inconsistent, 2 bad input (file:line diagnostics),
// 3 protocol violation (a scripted command was rejected).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "myo/config.hpp"
#include "myo/engine.hpp"
#include "myo/error.hpp"
#include "myo/server.hpp"
#include "myo/wire.hpp"

using namespace myo;
using gateway::Engine;
using gateway::EngineOptions;
using gateway::ScriptCommand;
using json = nlohmann::json;

namespace {

constexpr int kExitInconsistent = 1;
constexpr int kExitInput = 2;
constexpr int kExitProtocol = 3;

struct Common {
    std::string config_path;
    int session = 0;  // 0: from the config
    std::string log_path;
    std::string transcript_path;
    std::string models_dir;
};

struct Outputs {
    std::ofstream log;
    std::ofstream transcript;
    std::optional<gateway::TranscriptWriter> writer;
};

RunConfig load_config(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : read_run_config(c.config_path);
    if (c.session != 0) cfg.study.sweep.session_index = c.session;
    return cfg;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    return out;
}

EngineOptions engine_options(const RunConfig& cfg, const Common& c, Outputs& out) {
    EngineOptions o;
    o.session = cfg.session_options();
    o.features = cfg.study.run.features;
    o.auto_trials = true;
    o.rest_steps_between_trials = cfg.study.run.rest_steps_between_trials;
    if (!c.log_path.empty()) {
        out.log = open_out(c.log_path);
        o.session.log = &out.log;
        // Snapshots sit next to the log unless placed elsewhere.
        o.session.snapshot_dir = c.models_dir.empty() ? c.log_path + ".models" : c.models_dir;
    } else if (!c.models_dir.empty()) {
        o.session.snapshot_dir = c.models_dir;
    }
    return o;
}

std::vector<ScriptCommand> default_script(const Engine& engine, const std::vector<std::string>& recal,
                                          std::optional<std::int64_t> explore_ms) {
    gateway::StandardScriptOptions s;
    for (const auto& name : recal) {
        const auto m = parse_movement(name);
        if (!m) throw std::invalid_argument("unknown movement '" + name + "'");
        s.recalibrations.push_back(*m);
    }
    s.exploration_ms = explore_ms.value_or(engine.session().stage().t_max_ms / 5);
    return gateway::standard_script(engine, s);
}

// Runs the engine to the end of the script or source. Returns the number of
// rejected commands.
std::size_t drive(Engine& engine, std::vector<ScriptCommand> script, Outputs& out, const Common& c) {
    std::size_t errors = 0;
    if (!c.transcript_path.empty()) {
        out.transcript = open_out(c.transcript_path);
        out.writer.emplace(out.transcript);
        for (auto& [type, payload] : engine.snapshot()) out.writer->write(type, payload);
    }
    engine.set_sink([&](const std::string& type, const json& payload) {
        if (type == "error") {
            ++errors;
            std::cerr << "error: " << payload.value("command", std::string()) << ": "
                      << payload.value("message", std::string()) << "\n";
        }
        if (out.writer) out.writer->write(type, payload);
    });
    gateway::Driver(engine, std::move(script)).run();
    engine.set_sink({});
    return errors;
}

std::string fmt(std::optional<double> v, int precision) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
    return buf;
}

void print_metrics(const session::SessionReport& r) {
    std::printf("%-8s %-6s %-7s %-6s %-6s %-7s %-6s\n", "session", "stage", "trials", "CR", "OT", "PE", "TP");
    std::printf("%-8d %-6c %-7zu %-6s %-6s %-7s %-6s\n", r.session_index, r.stage, r.metrics.trials,
                fmt(r.metrics.cr, 3).c_str(), fmt(r.metrics.ot, 3).c_str(), fmt(r.metrics.pe, 2).c_str(),
                fmt(r.metrics.tp, 3).c_str());
}

session::SessionReport report_of(const Engine& engine) { return session::build_report(engine.session().events()); }

int finish_run(const Engine& engine, std::size_t errors) {
    const auto rep = report_of(engine);
    std::printf("phase %s, t %.2f s, NR %zu, NTT %.3f\n", std::string(session::phase_name(engine.session().phase())).c_str(),
                static_cast<double>(engine.t_ms()) / 1000.0, rep.nr, rep.ntt);
    if (!rep.trials.empty()) print_metrics(rep);
    if (errors) {
        std::cerr << errors << " command(s) rejected\n";
        return kExitProtocol;
    }
    return 0;
}

std::unique_ptr<gateway::EmgSource> replay_source(const std::string& path) {
    return std::make_unique<gateway::ReplaySource>(signal::read_emg_file(path));
}

std::unique_ptr<gateway::SyntheticSource> synthetic_source(const RunConfig& cfg, const session::ProtocolStage& stage,
                                                           double level, std::uint64_t seed, bool record) {
    return std::make_unique<gateway::SyntheticSource>(
        synth::Generator(synth::profiles_for_level(stage, level, cfg.study.sweep), seed, cfg.study.sweep.generator),
        record);
}

void add_common(CLI::App* cmd, Common& c, bool outputs) {
    cmd->add_option("--config", c.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--session", c.session, "Session index 1..11")->check(CLI::Range(1, 11));
    if (outputs) {
        cmd->add_option("--log", c.log_path, "Session log to write (NDJSON)");
        cmd->add_option("--transcript", c.transcript_path, "Wire transcript to write");
        cmd->add_option("--models", c.models_dir, "Directory for model files (default: <log>.models)");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decoder training, exploration and assessment tool"};
    app.require_subcommand(1);
    Common c;

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Fit a model from a recorded calibration");
    std::string cal_input, cal_out, cal_script;
    add_common(calibrate, c, false);
    calibrate->add_option("--input", cal_input, "Recording (emg/v1)")->required()->check(CLI::ExistingFile);
    calibrate->add_option("--script", cal_script, "Command script (default: standard collection)");
    calibrate->add_option("--out", cal_out, "Model file to write")->required();

    // explore / replay
    std::string input, script_path;
    auto* explore = app.add_subcommand("explore", "Replay an exploration phase and print NR/NTT");
    add_common(explore, c, true);
    explore->add_option("--input", input, "Recording (emg/v1)")->required()->check(CLI::ExistingFile);
    explore->add_option("--script", script_path, "Command script (NDJSON)")->required()->check(CLI::ExistingFile);

    auto* replay = app.add_subcommand("replay", "Replay a recording through the full pipeline");
    add_common(replay, c, true);
    replay->add_option("--input", input, "Recording (emg/v1)")->required()->check(CLI::ExistingFile);
    replay->add_option("--script", script_path, "Command script (NDJSON)")->required()->check(CLI::ExistingFile);

    // assess
    auto* assess = app.add_subcommand("assess", "Run a session's FLT block and print CR/OT/PE/TP");
    add_common(assess, c, true);
    assess->add_option("--input", input, "Recording (emg/v1)")->required()->check(CLI::ExistingFile);
    assess->add_option("--script", script_path, "Command script (default: standard session)")->check(CLI::ExistingFile);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Synthetic sweeps and sessions");
    add_common(simulate, c, true);
    std::string sweep_path, csv_out, record_path, script_out;
    double level = 6.0;
    std::uint64_t seed = 1;
    std::vector<std::string> recal;
    std::optional<std::int64_t> explore_ms;
    simulate->add_option("--sweep", sweep_path, "Separability sweep config; prints per-level CSV")->check(CLI::ExistingFile);
    simulate->add_option("--csv", csv_out, "Write the sweep CSV here instead of stdout");
    simulate->add_option("--level", level, "Class spacing in units of sigma");
    simulate->add_option("--seed", seed, "Generator seed");
    simulate->add_option("--record", record_path, "Write the synthesized EMG (emg/v1)");
    simulate->add_option("--script-out", script_out, "Write the command script used");
    simulate->add_option("--recalibrate", recal, "Movement to recalibrate during exploration (repeatable)");
    simulate->add_option("--explore-ms", explore_ms, "Exploration length (default: 20% of the budget)");

    // report
    auto* report = app.add_subcommand("report", "Recompute NR/NTT and metrics from a session log");
    std::string report_log;
    bool csv = false;
    report->add_option("--log", report_log, "Session log (NDJSON)")->required()->check(CLI::ExistingFile);
    report->add_flag("--csv", csv, "Comma-separated output");

    // serve
    auto* serve = app.add_subcommand("serve", "Serve a live or replayed session over WebSocket ($MYO_BIND)");
    add_common(serve, c, false);
    int tick_ms = 50;
    bool hold = false;
    serve->add_option("--input", input, "Recording to replay (default: synthetic user)")->check(CLI::ExistingFile);
    serve->add_option("--script", script_path, "Command script (NDJSON)")->check(CLI::ExistingFile);
    serve->add_option("--level", level, "Synthetic class spacing in units of sigma");
    serve->add_option("--seed", seed, "Synthetic generator seed");
    serve->add_option("--tick-ms", tick_ms, "Wall-clock tick period")->check(CLI::PositiveNumber);
    serve->add_flag("--hold", hold, "Wait for the first subscriber before starting the clock");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*report) {
            const auto rep = session::build_report(session::read_log_file(report_log));
            if (csv) {
                std::printf("session,stage,nr,ntt,logged_nr,logged_ntt,trials,cr,ot,pe,tp\n");
                std::printf("%d,%c,%zu,%.6f,%s,%s,%zu,%s,%s,%s,%s\n", rep.session_index, rep.stage, rep.nr, rep.ntt,
                            rep.logged_nr ? std::to_string(*rep.logged_nr).c_str() : "",
                            fmt(rep.logged_ntt, 6).c_str(), rep.metrics.trials, fmt(rep.metrics.cr, 6).c_str(),
                            fmt(rep.metrics.ot, 6).c_str(), fmt(rep.metrics.pe, 6).c_str(),
                            fmt(rep.metrics.tp, 6).c_str());
            } else {
                std::printf("session %d (stage %c)\n", rep.session_index, rep.stage);
                std::printf("  snapshots %zu, final model %s\n", rep.snapshots, rep.final_model.c_str());
                std::printf("  T_d %.3f s of T_max %.3f s\n", rep.t_d_ms / 1000.0, rep.t_max_ms / 1000.0);
                std::printf("  NR  %zu (logged %s)\n", rep.nr,
                            rep.logged_nr ? std::to_string(*rep.logged_nr).c_str() : "-");
                std::printf("  NTT %.3f (logged %s)\n", rep.ntt, fmt(rep.logged_ntt, 3).c_str());
                if (!rep.trials.empty()) print_metrics(rep);
            }
            if (!rep.consistent()) {
                std::cerr << report_log << ": recomputed NR/NTT disagree with the logged values\n";
                return kExitInconsistent;
            }
            return 0;
        }

        const RunConfig cfg = load_config(c);
        const auto stage = session::plan_session(cfg.study.sweep.session_index);

        if (*simulate && !sweep_path.empty()) {
            auto study_cfg = read_run_config(sweep_path);
            if (c.session != 0) study_cfg.study.sweep.session_index = c.session;
            const auto points = synth::separability_study(study_cfg.study);
            std::ofstream file;
            if (!csv_out.empty()) file = open_out(csv_out);
            std::ostream& os = csv_out.empty() ? std::cout : file;
            os << "level,mean_cr,min_cr,max_cr,mean_accuracy,seeds\n";
            for (const auto& p : points) {
                double lo = 1.0, hi = 0.0, acc = 0.0;
                for (double v : p.cr) lo = std::min(lo, v), hi = std::max(hi, v);
                for (double v : p.accuracy) acc += v;
                acc /= static_cast<double>(std::max<std::size_t>(1, p.accuracy.size()));
                char line[160];
                std::snprintf(line, sizeof line, "%g,%.4f,%.4f,%.4f,%.4f,%zu\n", p.level, p.mean_cr, lo, hi, acc,
                              p.cr.size());
                os << line;
            }
            return 0;
        }

        Outputs out;
        EngineOptions opts = engine_options(cfg, c, out);

        if (*simulate) {
            opts.autopilot = cfg.study.policy;
            opts.autopilot_seed = seed;
            Engine engine(stage, opts, synthetic_source(cfg, stage, level, seed, !record_path.empty()));
            auto script = default_script(engine, recal, explore_ms);
            if (!script_out.empty()) {
                auto f = open_out(script_out);
                gateway::write_script(f, script);
            }
            const auto errors = drive(engine, script, out, c);
            if (!record_path.empty()) {
                signal::write_emg_file(record_path, dynamic_cast<gateway::SyntheticSource&>(engine.source()).recording());
            }
            return finish_run(engine, errors);
        }

        if (*calibrate) {
            opts.session.log = nullptr;
            Engine engine(stage, opts, replay_source(cal_input));
            std::vector<ScriptCommand> script;
            if (cal_script.empty()) {
                script = default_script(engine, {}, 0);
            } else {
                script = gateway::read_script_file(cal_script);
            }
            std::size_t errors = 0;
            engine.set_sink([&](const std::string& type, const json& p) {
                if (type != "error") return;
                ++errors;
                std::cerr << "error: " << p.value("message", std::string()) << "\n";
            });
            gateway::Driver driver(engine, std::move(script));
            while (!engine.session().has_model() && driver.step()) {
            }
            if (!engine.session().has_model()) {
                std::cerr << cal_input << ": recording ended before every movement was collected\n";
                return kExitProtocol;
            }
            subspace::write_model_file(cal_out, engine.session().snapshots().back().model);
            std::printf("model %s: %zu classes, p = %zu, %zu samples\n",
                        subspace::hash_hex(engine.session().snapshots().back().model.provenance).c_str(),
                        stage.movements.size(), engine.session().snapshots().back().model.p,
                        engine.session().calibration().total_samples());
            return errors ? kExitProtocol : 0;
        }

        if (*serve) {
            std::unique_ptr<gateway::EmgSource> source;
            if (!input.empty()) {
                source = replay_source(input);
            } else {
                opts.autopilot = cfg.study.policy;
                opts.autopilot_seed = seed;
                source = synthetic_source(cfg, stage, level, seed, false);
            }
            Engine engine(stage, opts, std::move(source));
            gateway::ServerOptions so;
            so.bind = gateway::bind_from_env();
            so.tick_ms = tick_ms;
            so.hold_until_subscribed = hold;
            if (!script_path.empty()) so.script = gateway::read_script_file(script_path);
            gateway::Server server(engine, so);
            std::printf("serving session %d on %s:%u\n", stage.session_index, so.bind.host.c_str(), server.port());
            std::fflush(stdout);
            server.run();
            return 0;
        }

        // explore, replay, assess
        Engine engine(stage, opts, replay_source(input));
        std::vector<ScriptCommand> script =
            script_path.empty() ? default_script(engine, {}, std::nullopt) : gateway::read_script_file(script_path);
        if (*explore) {
            // Exploration only: stop at the assessment.
            std::size_t errors = 0;
            engine.set_sink([&](const std::string& type, const json& p) {
                if (type == "error") {
                    ++errors;
                    std::cerr << "error: " << p.value("command", std::string()) << ": "
                              << p.value("message", std::string()) << "\n";
                }
            });
            gateway::Driver driver(engine, std::move(script));
            while (engine.session().phase() != session::Phase::Assessment && driver.step()) {
            }
            const auto& ex = engine.session().exploration();
            std::printf("T_d %.3f s, T_max %.3f s, NR %zu, NTT %.3f\n", ex.t_d_ms / 1000.0, ex.t_max_ms / 1000.0,
                        ex.nr(), engine.session().ntt());
            for (const auto& r : ex.recalibrations) {
                std::printf("  recalibrated %s at %.2f s (exploration %.2f s)\n",
                            std::string(movement_name(r.movement)).c_str(), r.t_ms / 1000.0, r.t_d_ms / 1000.0);
            }
            return errors ? kExitProtocol : 0;
        }
        return finish_run(engine, drive(engine, std::move(script), out, c));
    } catch (const myo::Error& e) {
        // Input errors already read "<file>:<line>: ...".
        std::cerr << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "myoreview: " << e.what() << "\n";
        return kExitInput;
    }
}
