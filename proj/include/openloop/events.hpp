// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/message.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace openloop
{

enum class EventKind
{
    RunStarted,
    TaskGenerated,
    MessageAppended,
    Observation,
    RunCompleted,
    AwaitingInput,
    Error,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view name);

struct LoopEvent
{
    std::uint64_t seq = 0;
    EventKind kind = EventKind::RunStarted;
    std::string run_id; // empty outside a run
    std::string payload;

    bool operator==(const LoopEvent&) const = default;
};

Json to_json(const LoopEvent& event);
LoopEvent event_from_json(const Json& j);

/// Single-producer broadcast with replay. Sequence numbers start at 1 and
/// never repeat within the process. Old events are evicted past `capacity`.
class EventBus
{
  public:
    static constexpr std::size_t kDefaultCapacity = 100000;

    explicit EventBus(std::size_t capacity = kDefaultCapacity);

    std::uint64_t publish(EventKind kind, std::string run_id, std::string payload);

    /// Retained events with seq > after, oldest first.
    std::vector<LoopEvent> since(std::uint64_t after) const;

    /// Like since(), but blocks up to `timeout` while there is nothing newer
    /// and the bus is open.
    std::vector<LoopEvent> wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const;

    std::uint64_t last_seq() const;

    /// Wakes every waiter; later publishes are still recorded.
    void close();
    bool closed() const;

  private:
    std::vector<LoopEvent> collect(std::uint64_t after) const;

    mutable std::mutex _mutex;
    mutable std::condition_variable _changed;
    std::deque<LoopEvent> _history;
    std::size_t _capacity;
    std::uint64_t _lastSeq = 0;
    bool _closed = false;
};

} // namespace openloop
