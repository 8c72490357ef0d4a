// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/config.hpp>
#include <openloop/events.hpp>
#include <openloop/goal_engine.hpp>
#include <openloop/memory.hpp>
#include <openloop/react_engine.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace openloop
{

// {{{ feedback mailbox
struct FeedbackItem
{
    std::uint64_t id = 0;
    std::string text;
    Clock::time_point submitted_at;
    std::optional<std::string> consumed_in_run;
};

Json to_json(const FeedbackItem& item);

/// FIFO of operator feedback. Items are handed out once, at a run boundary.
class FeedbackMailbox
{
  public:
    using Listener = std::function<void()>;

    /// Throws std::invalid_argument on blank text.
    FeedbackItem submit(std::string text, Clock::time_point now = Clock::now());

    /// Removes every pending item, marking it consumed by run_id.
    std::vector<FeedbackItem> take_pending(const std::string& run_id);

    /// Items not yet handed to persist_pending(), consumed or not, in order.
    std::vector<FeedbackItem> take_unpersisted();

    std::size_t pending() const;
    std::vector<FeedbackItem> history() const;

    void set_listener(Listener listener);

  private:
    mutable std::mutex _mutex;
    std::vector<FeedbackItem> _items; // everything ever submitted
    std::size_t _nextPending = 0;     // index of the oldest unconsumed item
    std::size_t _nextUnpersisted = 0;
    std::uint64_t _lastId = 0;
    Listener _listener;
};
// }}}

// {{{ loop control
enum class ControlCommand
{
    Pause,
    Resume,
    Stop,
    Step,
};

std::optional<ControlCommand> parse_control_command(std::string_view name);
std::string_view to_string(ControlCommand command);

/// Pause/resume/stop/step, honoured only between runs. Step lets exactly one
/// more run start and leaves the loop paused.
class LoopControl
{
  public:
    void apply(ControlCommand command);

    /// Safe to call from a signal handler.
    void interrupt() noexcept { _interrupted.store(true); }
    bool interrupted() const noexcept { return _interrupted.load(); }

    bool stop_requested() const;
    bool paused() const;

    /// Blocks while paused. Returns false once stopped or interrupted. Calls
    /// on_wait once when it has to block.
    bool wait_at_boundary(const std::function<void()>& on_wait = {});

    /// Sleeps up to `timeout`, returning early on stop or interrupt.
    void sleep_for(std::chrono::milliseconds timeout);

    /// Blocks until stopped or interrupted.
    void wait_for_stop();

  private:
    static_assert(std::atomic<bool>::is_always_lock_free);

    mutable std::mutex _mutex;
    std::condition_variable _changed;
    bool _paused = false;
    bool _stopped = false;
    int _stepTokens = 0;
    std::atomic<bool> _interrupted { false };
};
// }}}

// {{{ input sources
struct RunInput
{
    bool end = false;                // no further runs
    std::optional<std::string> text; // nullopt: the agent picks its own task
};

class InputSource
{
  public:
    virtual ~InputSource() = default;
    virtual RunInput next() = 0;
    virtual bool needs_operator() const { return false; }
};

/// Predefined queries in order; an empty list means self-directed runs
/// without end.
class BatchInput final: public InputSource
{
  public:
    explicit BatchInput(std::vector<std::optional<std::string>> queries);
    RunInput next() override;

  private:
    std::vector<std::optional<std::string>> _queries;
    std::size_t _cursor = 0;
};

/// One line per run from a stream; an empty line means no input, EOF ends.
class InteractiveInput final: public InputSource
{
  public:
    InteractiveInput(std::istream& in, std::ostream& prompt_out);
    RunInput next() override;
    bool needs_operator() const override { return true; }

  private:
    std::istream& _in;
    std::ostream& _out;
};
// }}}

// {{{ orchestrator
enum class StopReason
{
    InputExhausted,
    MaxRuns,
    StopCommand,
    Interrupted,
    ModelExhausted,
};

std::string_view to_string(StopReason reason);

struct RunReport
{
    std::string run_id;
    std::optional<TaskSpec> task;
    std::optional<EpisodeStatus> status;
    int steps_used = 0;
    bool error = false;
    std::string error_text;
    bool recorded = false;
};

struct ExitSummary
{
    int runs_attempted = 0;
    int runs_completed = 0;
    int errors = 0;
    StopReason stop_reason = StopReason::InputExhausted;
    std::vector<RunReport> runs;
};

Json to_json(const RunReport& report);
Json to_json(const ExitSummary& summary);

/// Drives runs (steps 1-7) one after another until the input ends, max_runs
/// is reached or the operator stops it. Per-run failures are counted and the
/// loop carries on.
class Orchestrator
{
  public:
    using ClockFn = std::function<Clock::time_point()>;

    Orchestrator(AgentConfig config, ChatModel& model, EventBus& events, FeedbackMailbox& mailbox,
                 LoopControl& control, ClockFn clock = [] { return Clock::now(); });

    /// Creates the workspace and runs directories. Throws ConfigError.
    void prepare();

    ExitSummary run_loop(InputSource& input);

    /// The system prompt the next run would start with.
    std::string render_system_prompt_now();

    const AgentConfig& config() const noexcept { return _config; }
    MemoryStore& memory() noexcept { return _memory; }

    /// Messages of the run in progress, if run_id names it.
    std::optional<std::vector<Message>> live_messages(std::string_view run_id) const;
    std::optional<std::string> live_run_id() const;

    std::vector<RunReport> reports() const;

  private:
    RunReport execute_run(const std::string& run_id, const std::optional<std::string>& input, bool& model_exhausted);
    std::string build_system_prompt(std::span<const RunRecord> records);
    void persist_feedback(const std::string& run_id);
    void seed_run_ids();

    AgentConfig _config;
    ChatModel& _model;
    EventBus& _events;
    FeedbackMailbox& _mailbox;
    LoopControl& _control;
    ClockFn _clock;

    PromptTemplate _systemTemplate;
    NudgeSet _nudges;
    MemoryStore _memory;
    RunIdGenerator _ids;
    std::string _lastRunId;

    mutable std::mutex _liveMutex;
    std::optional<std::string> _liveRunId;
    std::vector<Message> _liveMessages;
    std::vector<RunReport> _reports;
};

/// Summaries of all runs known on disk plus the one in progress, newest
/// first.
Json run_summaries(const Orchestrator& orchestrator);
// }}}

} // namespace openloop
