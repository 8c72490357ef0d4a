// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/error.hpp>
#include <openloop/events.hpp>
#include <openloop/orchestrator.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

namespace httplib
{
class Server;
}

namespace openloop
{

class BindError: public Error
{
  public:
    explicit BindError(std::string detail): Error("BindError", std::move(detail)) {}
};

struct ServiceOptions
{
    std::string bind = "127.0.0.1";
    std::uint16_t port = 8765; // 0: pick a free port
    std::optional<std::filesystem::path> static_dir;
    std::chrono::milliseconds poll_interval { 250 };  // event stream wake-up
    std::chrono::seconds keepalive { 15 };
};

/// HTTP API over a running loop:
///   GET  /api/runs           run summaries, newest first
///   GET  /api/runs/{id}      transcript as a Message array
///   GET  /api/memory         long-term memory records, file order
///   POST /api/feedback       {"text": ...}
///   POST /api/control        {"command": "pause"|"resume"|"stop"|"step"}
///   GET  /api/events         server-sent events, resumable by seq
class ApiService
{
  public:
    ApiService(Orchestrator& orchestrator, EventBus& events, FeedbackMailbox& mailbox, LoopControl& control,
               ServiceOptions options);
    ~ApiService();

    ApiService(const ApiService&) = delete;
    ApiService& operator=(const ApiService&) = delete;

    /// Binds and starts serving on a background thread. Throws BindError.
    void start();

    /// Ends open event streams and joins the listener.
    void stop();

    std::uint16_t port() const noexcept { return _port; }

  private:
    void install_routes();

    Orchestrator& _orchestrator;
    EventBus& _events;
    FeedbackMailbox& _mailbox;
    LoopControl& _control;
    ServiceOptions _options;

    std::unique_ptr<httplib::Server> _server;
    std::thread _listener;
    std::atomic<bool> _stopping { false };
    std::uint16_t _port = 0;
};

/// One server-sent event frame.
std::string format_sse(const LoopEvent& event);

/// Seq to resume after: Last-Event-ID wins over the last_event_id query
/// parameter; garbage counts as absent.
std::uint64_t resume_point(const std::string& header_value, const std::string& query_value);

} // namespace openloop
