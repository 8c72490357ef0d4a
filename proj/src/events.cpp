// SPDX-License-Identifier: Apache-2.0
#include <openloop/events.hpp>

#include <algorithm>
#include <array>
#include <stdexcept>

namespace openloop
{

namespace
{

constexpr std::array<std::pair<EventKind, std::string_view>, 7> kEventNames { {
    { EventKind::RunStarted, "run_started" },
    { EventKind::TaskGenerated, "task_generated" },
    { EventKind::MessageAppended, "message_appended" },
    { EventKind::Observation, "observation" },
    { EventKind::RunCompleted, "run_completed" },
    { EventKind::AwaitingInput, "awaiting_input" },
    { EventKind::Error, "error" },
} };

} // namespace

std::string_view to_string(EventKind kind)
{
    for (auto const& [k, name]: kEventNames)
        if (k == kind)
            return name;
    return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view name)
{
    for (auto const& [k, n]: kEventNames)
        if (n == name)
            return k;
    return std::nullopt;
}

Json to_json(const LoopEvent& event)
{
    return Json { { "seq", event.seq },
                  { "kind", to_string(event.kind) },
                  { "run_id", event.run_id },
                  { "payload", event.payload } };
}

LoopEvent event_from_json(const Json& j)
{
    if (!j.is_object() || !j.contains("seq") || !j.contains("kind") || !j["seq"].is_number_unsigned()
        || !j["kind"].is_string())
        throw std::invalid_argument("event needs seq and kind");
    auto kind = parse_event_kind(j["kind"].get<std::string>());
    if (!kind)
        throw std::invalid_argument("unknown event kind " + j["kind"].get<std::string>());
    LoopEvent e;
    e.seq = j["seq"].get<std::uint64_t>();
    e.kind = *kind;
    e.run_id = j.value("run_id", std::string());
    e.payload = j.value("payload", std::string());
    return e;
}

EventBus::EventBus(std::size_t capacity): _capacity(std::max<std::size_t>(capacity, 1))
{
}

std::uint64_t EventBus::publish(EventKind kind, std::string run_id, std::string payload)
{
    std::uint64_t seq = 0;
    {
        std::lock_guard lock(_mutex);
        seq = ++_lastSeq;
        _history.push_back(LoopEvent { seq, kind, std::move(run_id), std::move(payload) });
        while (_history.size() > _capacity)
            _history.pop_front();
    }
    _changed.notify_all();
    return seq;
}

std::vector<LoopEvent> EventBus::collect(std::uint64_t after) const
{
    // seq is contiguous inside the deque, so the start index is arithmetic.
    std::vector<LoopEvent> out;
    if (_history.empty() || after >= _lastSeq)
        return out;
    auto first = _history.front().seq;
    std::size_t start = after < first ? 0 : static_cast<std::size_t>(after - first + 1);
    out.assign(_history.begin() + static_cast<std::ptrdiff_t>(start), _history.end());
    return out;
}

std::vector<LoopEvent> EventBus::since(std::uint64_t after) const
{
    std::lock_guard lock(_mutex);
    return collect(after);
}

std::vector<LoopEvent> EventBus::wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(_mutex);
    _changed.wait_for(lock, timeout, [&] { return _closed || _lastSeq > after; });
    return collect(after);
}

std::uint64_t EventBus::last_seq() const
{
    std::lock_guard lock(_mutex);
    return _lastSeq;
}

void EventBus::close()
{
    {
        std::lock_guard lock(_mutex);
        _closed = true;
    }
    _changed.notify_all();
}

bool EventBus::closed() const
{
    std::lock_guard lock(_mutex);
    return _closed;
}

} // namespace openloop
