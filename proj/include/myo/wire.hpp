#pragma once

// reviewer/v1 wire messages and the length-delimited transcript framing.
//
// A message is one JSON object {"payload":{...},"seq":N,"type":"...","v":"reviewer/v1"}
// (keys sorted, doubles in shortest round-trip form). Over a WebSocket every text
// frame carries exactly one message; in transcripts each message is framed as
// "<byte length>:<json>\n".

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace myo::gateway {

using json = nlohmann::json;

inline constexpr std::string_view kWireVersion = "reviewer/v1";

struct WireMessage {
    std::uint64_t seq = 0;
    std::string type;
    json payload = json::object();

    bool operator==(const WireMessage&) const = default;
};

bool is_server_type(std::string_view type);
bool is_client_type(std::string_view type);

std::string encode_message(const WireMessage& m);

// Throws std::invalid_argument on bad JSON, a wrong version, a missing field or
// an unknown type.
WireMessage decode_message(std::string_view text);

std::string frame(std::string_view body);

// Stamps consecutive sequence numbers onto one connection's outgoing messages.
class Sequencer {
public:
    WireMessage next(std::string type, json payload);
    std::uint64_t issued() const { return next_; }

private:
    std::uint64_t next_ = 0;
};

class TranscriptWriter {
public:
    explicit TranscriptWriter(std::ostream& out) : out_(out) {}
    void write(const WireMessage& m);
    void write(std::string type, json payload) { write(seq_.next(std::move(type), std::move(payload))); }
    std::uint64_t count() const { return seq_.issued(); }

private:
    std::ostream& out_;
    Sequencer seq_;
};

// Reads a framed transcript; ParseError names the source and line. Sequence
// numbers must run 0, 1, 2, ... without gaps.
std::vector<WireMessage> read_transcript(std::istream& in, const std::string& source_name = "<stream>");
std::vector<WireMessage> read_transcript_file(const std::string& path);

}  // namespace myo::gateway
