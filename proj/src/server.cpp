#include "myo/server.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <stdexcept>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "myo/wire.hpp"

namespace myo::gateway {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

BindAddress parse_bind(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
        throw std::invalid_argument("bind address must look like host:port, got '" + std::string(text) + "'");
    }
    unsigned port = 0;
    const auto digits = text.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty() || port > 65535) {
        throw std::invalid_argument("bad port in bind address '" + std::string(text) + "'");
    }
    return {std::string(text.substr(0, colon)), static_cast<unsigned short>(port)};
}

BindAddress bind_from_env() {
    const char* v = std::getenv(std::string(kBindEnvVar).c_str());
    return parse_bind(v && *v ? std::string_view(v) : kDefaultBind);
}

namespace {

enum class Role { None, Observer, Controller };

}  // namespace

struct Server::Impl {
    struct Conn : std::enable_shared_from_this<Conn> {
        Conn(tcp::socket socket, Impl& server) : ws(std::move(socket)), server(server) {}

        websocket::stream<tcp::socket> ws;
        Impl& server;
        beast::flat_buffer buffer;
        std::deque<std::string> queue;
        bool writing = false;
        bool closing = false;
        bool open = false;
        Role role = Role::None;
        Sequencer seq;
        std::uint64_t expected = 0;  // next client sequence number

        void start() {
            ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
            ws.async_accept([self = shared_from_this()](beast::error_code ec) {
                if (ec) return;
                self->open = true;
                self->server.conns.push_back(self);
                self->read();
            });
        }

        void read() {
            ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->drop();
                    return;
                }
                std::string text = beast::buffers_to_string(self->buffer.data());
                self->buffer.consume(self->buffer.size());
                self->server.on_message(*self, text);
                if (self->open) self->read();
            });
        }

        void send(std::string type, json payload) {
            if (!open || closing) return;
            queue.push_back(encode_message(seq.next(std::move(type), std::move(payload))));
            pump();
        }

        void pump() {
            if (writing) return;
            if (queue.empty()) {
                if (closing && open) {
                    ws.async_close(websocket::close_code::normal,
                                   [self = shared_from_this()](beast::error_code) { self->drop(); });
                }
                return;
            }
            writing = true;
            ws.text(true);
            ws.async_write(asio::buffer(queue.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
                self->writing = false;
                if (ec) {
                    self->drop();
                    return;
                }
                self->queue.pop_front();
                self->pump();
            });
        }

        void close() {
            if (closing || !open) return;
            closing = true;
            pump();
        }

        void drop() {
            if (!open) return;
            open = false;
            server.forget(*this);
        }
    };

    Impl(Engine& e, ServerOptions o)
        : engine(e), options(std::move(o)), acceptor(ioc), timer(ioc), driver(e, options.script) {
        const tcp::endpoint ep(asio::ip::make_address(options.bind.host), options.bind.port);
        acceptor.open(ep.protocol());
        acceptor.set_option(asio::socket_base::reuse_address(true));
        acceptor.bind(ep);
        acceptor.listen();
        port = acceptor.local_endpoint().port();
        engine.set_sink([this](const std::string& type, const json& payload) { broadcast(type, payload); });
    }

    Engine& engine;
    ServerOptions options;
    asio::io_context ioc;
    tcp::acceptor acceptor;
    asio::steady_timer timer;
    Driver driver;
    std::vector<std::shared_ptr<Conn>> conns;
    Conn* controller = nullptr;
    unsigned short port = 0;
    bool clock_running = false;
    bool over = false;
    std::uint64_t ticked = 0;

    void accept() {
        acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Conn>(std::move(socket), *this)->start();
            accept();
        });
    }

    void forget(Conn& c) {
        if (controller == &c) controller = nullptr;
        std::erase_if(conns, [&](const auto& p) { return p.get() == &c; });
    }

    void broadcast(const std::string& type, const json& payload) {
        for (const auto& c : conns) {
            if (c->role != Role::None) c->send(type, payload);
        }
    }

    void error_to(Conn& c, const std::string& command, const CommandError& e) { c.send("error", e.payload(command)); }

    void on_message(Conn& c, const std::string& text) {
        WireMessage m;
        try {
            m = decode_message(text);
        } catch (const std::invalid_argument& e) {
            error_to(c, "", {"bad_request", e.what()});
            return;
        }
        if (m.seq != c.expected) {
            error_to(c, m.type, {"sequence", "expected seq " + std::to_string(c.expected) + ", got " + std::to_string(m.seq)});
            return;
        }
        ++c.expected;
        if (!is_client_type(m.type)) {
            error_to(c, m.type, {"bad_request", "'" + m.type + "' is not a client message"});
            return;
        }
        if (m.type == "subscribe") {
            subscribe(c, m.payload);
            return;
        }
        if (c.role != Role::Controller) {
            error_to(c, m.type, {"not_controller", "only the controller connection may send commands"});
            return;
        }
        if (over) {
            error_to(c, m.type, {"finished", "the session has ended"});
            return;
        }
        if (auto err = engine.command(m.type, m.payload)) error_to(c, m.type, *err);
    }

    void subscribe(Conn& c, const json& payload) {
        if (c.role != Role::None) {
            error_to(c, "subscribe", {"already_subscribed", "this connection is already subscribed"});
            return;
        }
        std::string role = "observer";
        if (payload.contains("role")) {
            if (!payload["role"].is_string()) {
                error_to(c, "subscribe", {"bad_request", "role must be a string"});
                return;
            }
            role = payload["role"].get<std::string>();
        }
        if (role == "controller") {
            if (controller) {
                error_to(c, "subscribe", {"controller_taken", "another connection already holds the controller role"});
                return;
            }
            controller = &c;
            c.role = Role::Controller;
        } else if (role == "observer") {
            c.role = Role::Observer;
        } else {
            error_to(c, "subscribe", {"bad_request", "unknown role '" + role + "'"});
            return;
        }
        for (auto& [type, p] : engine.snapshot()) c.send(type, std::move(p));
        if (!clock_running) start_clock();
    }

    void start_clock() {
        if (clock_running || over) return;
        clock_running = true;
        timer.expires_after(std::chrono::milliseconds(options.tick_ms));
        schedule();
    }

    void schedule() {
        timer.async_wait([this](beast::error_code ec) {
            if (ec || over) return;
            const bool more = ticked < options.max_ticks && driver.step();
            ++ticked;
            if (!more) {
                finish();
                return;
            }
            timer.expires_at(timer.expiry() + std::chrono::milliseconds(options.tick_ms));
            schedule();
        });
    }

    void finish() {
        if (over) return;
        over = true;
        beast::error_code ec;
        acceptor.close(ec);
        timer.cancel();
        const auto snapshot = conns;
        for (const auto& c : snapshot) c->close();
    }
};

Server::Server(Engine& engine, ServerOptions options) : impl_(std::make_unique<Impl>(engine, std::move(options))) {}

Server::~Server() { impl_->engine.set_sink({}); }

unsigned short Server::port() const { return impl_->port; }

void Server::run() {
    impl_->accept();
    if (!impl_->options.hold_until_subscribed) impl_->start_clock();
    impl_->ioc.run();
}

void Server::stop() {
    asio::post(impl_->ioc, [impl = impl_.get()] { impl->finish(); });
}

}  // namespace myo::gateway
