#include "myo/wire.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json_util.hpp"
#include "myo/error.hpp"

namespace myo::gateway {

namespace {

constexpr std::array<std::string_view, 6> kServerTypes = {"clusters", "cursor3d", "decision",
                                                          "flt_state", "session_state", "error"};
constexpr std::array<std::string_view, 6> kClientTypes = {"start_calibration", "collect",   "recalibrate",
                                                          "end_exploration",   "start_trial", "subscribe"};

}  // namespace

bool is_server_type(std::string_view type) {
    return std::find(kServerTypes.begin(), kServerTypes.end(), type) != kServerTypes.end();
}

bool is_client_type(std::string_view type) {
    return std::find(kClientTypes.begin(), kClientTypes.end(), type) != kClientTypes.end();
}

std::string encode_message(const WireMessage& m) {
    json j = {{"v", kWireVersion}, {"seq", m.seq}, {"type", m.type}, {"payload", m.payload}};
    return j.dump();
}

WireMessage decode_message(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed message: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("message is not a JSON object");
    if (!j.contains("v") || j["v"] != kWireVersion) {
        throw std::invalid_argument("unsupported protocol version, expected " + std::string(kWireVersion));
    }
    if (!j.contains("seq") || !j["seq"].is_number_unsigned()) throw std::invalid_argument("missing or negative seq");
    if (!j.contains("type") || !j["type"].is_string()) throw std::invalid_argument("missing type");
    WireMessage m;
    m.seq = j["seq"].get<std::uint64_t>();
    m.type = j["type"].get<std::string>();
    if (!is_server_type(m.type) && !is_client_type(m.type)) throw std::invalid_argument("unknown message type '" + m.type + "'");
    if (j.contains("payload")) {
        if (!j["payload"].is_object()) throw std::invalid_argument("payload must be an object");
        m.payload = j["payload"];
    }
    return m;
}

std::string frame(std::string_view body) {
    std::string out = std::to_string(body.size());
    out.push_back(':');
    out.append(body);
    out.push_back('\n');
    return out;
}

WireMessage Sequencer::next(std::string type, json payload) {
    return WireMessage{next_++, std::move(type), std::move(payload)};
}

void TranscriptWriter::write(const WireMessage& m) {
    out_ << frame(encode_message(m));
}

std::vector<WireMessage> read_transcript(std::istream& in, const std::string& source_name) {
    const std::string text = detail::read_text(in);
    std::vector<WireMessage> out;
    std::size_t pos = 0;
    std::size_t line = 1;
    while (pos < text.size()) {
        const auto colon = text.find(':', pos);
        if (colon == std::string::npos) throw ParseError(source_name, line, "missing length prefix");
        std::size_t len = 0;
        const auto* first = text.data() + pos;
        const auto* last = text.data() + colon;
        const auto [ptr, ec] = std::from_chars(first, last, len);
        if (ec != std::errc() || ptr != last || first == last) throw ParseError(source_name, line, "bad length prefix");
        const std::size_t body = colon + 1;
        if (body + len + 1 > text.size() || text[body + len] != '\n') {
            throw ParseError(source_name, line, "frame length does not match its body");
        }
        try {
            auto m = decode_message(std::string_view(text).substr(body, len));
            if (m.seq != out.size()) throw std::invalid_argument("sequence gap: expected " + std::to_string(out.size()));
            out.push_back(std::move(m));
        } catch (const std::invalid_argument& e) {
            throw ParseError(source_name, line, e.what());
        }
        pos = body + len + 1;
        ++line;
    }
    return out;
}

std::vector<WireMessage> read_transcript_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return read_transcript(in, path);
}

}  // namespace myo::gateway
