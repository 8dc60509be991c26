#pragma once

// WebSocket front end for an Engine. One I/O thread owns the engine, ticks it on
// the decision clock and fans every event out to the subscribed connections,
// each with its own gap-free sequence numbers. A subscriber first receives the
// full state (session_state, clusters) and then the live deltas.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "myo/engine.hpp"

namespace myo::gateway {

inline constexpr std::string_view kBindEnvVar = "MYO_BIND";
inline constexpr std::string_view kDefaultBind = "127.0.0.1:8765";

struct BindAddress {
    std::string host;
    unsigned short port = 0;
};

// "host:port"; throws std::invalid_argument otherwise.
BindAddress parse_bind(std::string_view text);
// $MYO_BIND when set, else the default.
BindAddress bind_from_env();

struct ServerOptions {
    BindAddress bind{"127.0.0.1", 0};
    int tick_ms = 50;
    // Do not start the clock until the first subscriber arrives, so that it sees
    // the run from tick 0.
    bool hold_until_subscribed = false;
    std::vector<ScriptCommand> script;
    std::uint64_t max_ticks = UINT64_MAX;
};

class Server {
public:
    Server(Engine& engine, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;

    // Serves until the run is over (then closes every connection) or stop().
    void run();
    // Safe from any thread.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace myo::gateway
