#include "myo/config.hpp"

#include <functional>
#include <map>

#include "json_util.hpp"

namespace myo {

namespace {

using detail::json;

// Walks one JSON object, checking keys against a table of handlers. Lines are
// found by searching the source text for the quoted key after the parent's key.
class ObjectReader {
public:
    ObjectReader(const std::string& text, const std::string& source, std::size_t from)
        : text_(text), source_(source), from_(from) {}

    using Handler = std::function<void(const json&, std::size_t)>;

    void read(const json& obj, const std::map<std::string, Handler>& handlers) const {
        if (!obj.is_object()) fail(from_, "expected an object");
        for (const auto& [key, value] : obj.items()) {
            const std::size_t at = locate(key);
            const auto it = handlers.find(key);
            if (it == handlers.end()) fail(at, "unknown key '" + key + "'");
            it->second(value, at);
        }
    }

    [[noreturn]] void fail(std::size_t byte, const std::string& message) const {
        throw ParseError(source_, detail::line_of_offset(text_, byte), message);
    }

    double number(const json& v, std::size_t at, const std::string& key) const {
        if (!v.is_number()) fail(at, "'" + key + "' must be a number");
        return v.get<double>();
    }

    std::uint64_t count(const json& v, std::size_t at, const std::string& key) const {
        if (!v.is_number_unsigned()) fail(at, "'" + key + "' must be a non-negative integer");
        return v.get<std::uint64_t>();
    }

    ObjectReader child(std::size_t at) const { return {text_, source_, at}; }

private:
    std::size_t locate(const std::string& key) const {
        const auto pos = text_.find("\"" + key + "\"", from_);
        return pos == std::string::npos ? from_ : pos;
    }

    const std::string& text_;
    const std::string& source_;
    std::size_t from_;
};

}  // namespace

session::SessionOptions RunConfig::session_options() const {
    session::SessionOptions o;
    o.collection = collection;
    o.flt = study.flt;
    o.decode = study.run.decode;
    o.seed = target_seed;
    return o;
}

RunConfig parse_run_config(const std::string& text, const std::string& source_name) {
    const json root = detail::parse_json(text, source_name);
    RunConfig cfg;
    auto& study = cfg.study;
    const ObjectReader top(text, source_name, 0);

    auto numbers = [&](const json& v, std::size_t at, const std::string& key) {
        if (!v.is_array() || v.empty()) top.fail(at, "'" + key + "' must be a non-empty array");
        std::vector<double> out;
        for (const auto& x : v) out.push_back(top.number(x, at, key));
        return out;
    };

    top.read(root, {
        {"session", [&](const json& v, std::size_t at) {
             const auto s = top.count(v, at, "session");
             if (s < session::kFirstSession || s > session::kLastSession) top.fail(at, "session must be in 1..11");
             study.sweep.session_index = static_cast<int>(s);
         }},
        {"levels", [&](const json& v, std::size_t at) {
             study.sweep.levels = numbers(v, at, "levels");
             if (study.sweep.levels.size() < 2) top.fail(at, "a sweep needs at least 2 levels");
         }},
        {"sigma", [&](const json& v, std::size_t at) { study.sweep.sigma = top.number(v, at, "sigma"); }},
        {"drift_per_min", [&](const json& v, std::size_t at) { study.sweep.drift_per_min = top.number(v, at, "drift_per_min"); }},
        {"seeds", [&](const json& v, std::size_t at) {
             if (!v.is_array() || v.empty()) top.fail(at, "'seeds' must be a non-empty array");
             study.seeds.clear();
             for (const auto& s : v) study.seeds.push_back(top.count(s, at, "seeds"));
         }},
        {"seed_count", [&](const json& v, std::size_t at) {
             const auto n = top.count(v, at, "seed_count");
             if (n == 0) top.fail(at, "seed_count must be positive");
             study.seeds.clear();
             for (std::uint64_t s = 1; s <= n; ++s) study.seeds.push_back(s);
         }},
        {"feature_level", [&](const json& v, std::size_t at) {
             if (!v.is_boolean()) top.fail(at, "'feature_level' must be true or false");
             study.run.feature_level = v.get<bool>();
         }},
        {"decode", [&](const json& v, std::size_t at) {
             const auto r = top.child(at);
             r.read(v, {
                 {"t_rest", [&](const json& x, std::size_t a) { study.run.decode.t_rest = r.number(x, a, "t_rest"); }},
                 {"smoothing", [&](const json& x, std::size_t a) {
                      study.run.decode.smoothing = r.count(x, a, "smoothing");
                      if (study.run.decode.smoothing == 0) r.fail(a, "smoothing must be at least 1");
                  }},
             });
         }},
        {"agent", [&](const json& v, std::size_t at) {
             const auto r = top.child(at);
             r.read(v, {
                 {"epsilon", [&](const json& x, std::size_t a) { study.policy.epsilon = r.number(x, a, "epsilon"); }},
                 {"tolerance", [&](const json& x, std::size_t a) { study.policy.tolerance = r.number(x, a, "tolerance"); }},
                 {"reaction_delay", [&](const json& x, std::size_t a) { study.policy.reaction_delay = r.count(x, a, "reaction_delay"); }},
             });
             try {
                 study.policy.validate();
             } catch (const std::invalid_argument& e) {
                 top.fail(at, e.what());
             }
         }},
        {"flt", [&](const json& v, std::size_t at) {
             const auto r = top.child(at);
             auto& f = study.flt;
             r.read(v, {
                 {"width", [&](const json& x, std::size_t a) { f.width = r.number(x, a, "width"); }},
                 {"aperture_rate", [&](const json& x, std::size_t a) { f.aperture_rate = r.number(x, a, "aperture_rate"); }},
                 {"orientation_rate", [&](const json& x, std::size_t a) { f.orientation_rate = r.number(x, a, "orientation_rate"); }},
                 {"dwell_s", [&](const json& x, std::size_t a) { f.dwell_s = r.number(x, a, "dwell_s"); }},
                 {"time_limit_s", [&](const json& x, std::size_t a) { f.time_limit_s = r.number(x, a, "time_limit_s"); }},
                 {"target_seed", [&](const json& x, std::size_t a) { cfg.target_seed = r.count(x, a, "target_seed"); }},
             });
             if (f.width <= 0.0 || f.aperture_rate <= 0.0 || f.orientation_rate <= 0.0 || f.dwell_s <= 0.0 ||
                 f.time_limit_s <= 0.0) {
                 top.fail(at, "flt widths, rates and times must be positive");
             }
         }},
        {"collection", [&](const json& v, std::size_t at) {
             const auto r = top.child(at);
             r.read(v, {
                 {"ms_per_position", [&](const json& x, std::size_t a) {
                      const auto ms = r.count(x, a, "ms_per_position");
                      if (ms < 50) r.fail(a, "ms_per_position must be at least one 50 ms step");
                      cfg.collection.ms_per_position = static_cast<int>(ms);
                  }},
             });
         }},
    });
    return cfg;
}

RunConfig read_run_config(const std::string& path) { return parse_run_config(detail::read_text_file(path), path); }

}  // namespace myo
