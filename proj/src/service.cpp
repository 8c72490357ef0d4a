// SPDX-License-Identifier: Apache-2.0
#include <openloop/service.hpp>
#include <openloop/text.hpp>

#include <httplib.h>

#include <charconv>

namespace fs = std::filesystem;

namespace openloop
{

namespace
{

void send_json(httplib::Response& res, int status, const Json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message)
{
    send_json(res, status, Json { { "error", message } });
}

std::optional<std::uint64_t> parse_seq(const std::string& s)
{
    auto const t = text::trim(s);
    if (t.empty())
        return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size())
        return std::nullopt;
    return v;
}

Json parse_body(const httplib::Request& req)
{
    auto j = Json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw std::invalid_argument("request body must be a JSON object");
    return j;
}

} // namespace

std::string format_sse(const LoopEvent& event)
{
    std::string out;
    out += "id: " + std::to_string(event.seq) + "\n";
    out += "event: " + std::string(to_string(event.kind)) + "\n";
    out += "data: " + to_json(event).dump() + "\n\n";
    return out;
}

std::uint64_t resume_point(const std::string& header_value, const std::string& query_value)
{
    if (auto v = parse_seq(header_value))
        return *v;
    return parse_seq(query_value).value_or(0);
}

ApiService::ApiService(Orchestrator& orchestrator, EventBus& events, FeedbackMailbox& mailbox, LoopControl& control,
                       ServiceOptions options):
    _orchestrator(orchestrator),
    _events(events),
    _mailbox(mailbox),
    _control(control),
    _options(std::move(options)),
    _server(std::make_unique<httplib::Server>())
{
    // httplib defaults to SO_REUSEPORT, which lets a second service share the port silently.
    _server->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    install_routes();
}

ApiService::~ApiService()
{
    stop();
}

void ApiService::install_routes()
{
    auto& svr = *_server;

    svr.Get("/api/runs", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, run_summaries(_orchestrator));
    });

    svr.Get(R"(/api/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto const id = req.matches[1].str();
        if (!RunIdGenerator::is_well_formed(id))
            return send_error(res, 400, "malformed run id");
        std::vector<Message> messages;
        if (auto live = _orchestrator.live_messages(id))
            messages = std::move(*live);
        else
        {
            auto const path = _orchestrator.config().runs_dir() / (id + ".jsonl");
            std::error_code ec;
            if (!fs::is_regular_file(path, ec))
                return send_error(res, 404, "no such run: " + id);
            try
            {
                messages = read_run_log(path);
            }
            catch (std::exception const& e)
            {
                return send_error(res, 500, e.what());
            }
        }
        Json out = Json::array();
        for (auto const& m: messages)
            out.push_back(to_json(m));
        send_json(res, 200, out);
    });

    svr.Get("/api/memory", [this](const httplib::Request&, httplib::Response& res) {
        Json out = Json::array();
        for (auto const& r: load_records(_orchestrator.config().memory_path()).records)
            out.push_back(to_json(r));
        send_json(res, 200, out);
    });

    svr.Post("/api/feedback", [this](const httplib::Request& req, httplib::Response& res) {
        try
        {
            auto const body = parse_body(req);
            auto it = body.find("text");
            if (it == body.end() || !it->is_string())
                return send_error(res, 400, "\"text\" must be a string");
            auto item = _mailbox.submit(it->get<std::string>());
            send_json(res, 202, to_json(item));
        }
        catch (std::invalid_argument const& e)
        {
            send_error(res, 400, e.what());
        }
    });

    svr.Post("/api/control", [this](const httplib::Request& req, httplib::Response& res) {
        try
        {
            auto const body = parse_body(req);
            auto it = body.find("command");
            auto const command = it != body.end() && it->is_string() ? parse_control_command(it->get<std::string>())
                                                                     : std::nullopt;
            if (!command)
                return send_error(res, 400, "\"command\" must be pause, resume, stop or step");
            _control.apply(*command);
            send_json(res, 200,
                      Json { { "command", to_string(*command) },
                             { "paused", _control.paused() },
                             { "stopping", _control.stop_requested() } });
        }
        catch (std::invalid_argument const& e)
        {
            send_error(res, 400, e.what());
        }
    });

    svr.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
        auto cursor = std::make_shared<std::uint64_t>(
            resume_point(req.get_header_value("Last-Event-ID"), req.get_param_value("last_event_id")));
        auto idle = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Accel-Buffering", "no");
        res.set_chunked_content_provider("text/event-stream", [this, cursor, idle](size_t, httplib::DataSink& sink) {
            if (_stopping.load())
            {
                sink.done();
                return true;
            }
            auto const batch = _events.wait_since(*cursor, _options.poll_interval);
            if (batch.empty())
            {
                if (_events.closed())
                {
                    sink.done();
                    return true;
                }
                if (std::chrono::steady_clock::now() - *idle >= _options.keepalive)
                {
                    *idle = std::chrono::steady_clock::now();
                    static constexpr std::string_view kPing = ": keepalive\n\n";
                    return sink.write(kPing.data(), kPing.size());
                }
                return true;
            }
            std::string frames;
            for (auto const& e: batch)
                frames += format_sse(e);
            *cursor = batch.back().seq;
            *idle = std::chrono::steady_clock::now();
            return sink.write(frames.data(), frames.size());
        });
    });

    if (_options.static_dir)
        svr.set_mount_point("/", _options.static_dir->string());
}

void ApiService::start()
{
    if (_listener.joinable())
        return;
    if (_options.port == 0)
    {
        int const p = _server->bind_to_any_port(_options.bind);
        if (p <= 0)
            throw BindError("cannot bind " + _options.bind);
        _port = static_cast<std::uint16_t>(p);
    }
    else
    {
        if (!_server->bind_to_port(_options.bind, _options.port))
            throw BindError("cannot bind " + _options.bind + ":" + std::to_string(_options.port));
        _port = _options.port;
    }
    _listener = std::thread([this] { _server->listen_after_bind(); });
    _server->wait_until_ready();
}

void ApiService::stop()
{
    _stopping.store(true);
    if (_server)
        _server->stop();
    if (_listener.joinable())
        _listener.join();
}

} // namespace openloop
