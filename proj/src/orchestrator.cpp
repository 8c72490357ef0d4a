// SPDX-License-Identifier: Apache-2.0
#include <openloop/error.hpp>
#include <openloop/orchestrator.hpp>
#include <openloop/text.hpp>

#include <algorithm>
#include <iostream>
#include <map>

namespace fs = std::filesystem;

namespace openloop
{

// {{{ FeedbackMailbox
Json to_json(const FeedbackItem& item)
{
    Json j { { "id", item.id }, { "text", item.text }, { "submitted_at", text::format_timestamp(item.submitted_at) } };
    j["consumed_in_run"] = item.consumed_in_run ? Json(*item.consumed_in_run) : Json(nullptr);
    return j;
}

FeedbackItem FeedbackMailbox::submit(std::string text, Clock::time_point now)
{
    if (text::trim(text).empty())
        throw std::invalid_argument("feedback text must not be empty");
    FeedbackItem item;
    Listener listener;
    {
        std::lock_guard lock(_mutex);
        item = FeedbackItem { ++_lastId, std::move(text), now, std::nullopt };
        _items.push_back(item);
        listener = _listener;
    }
    if (listener)
        listener();
    return item;
}

std::vector<FeedbackItem> FeedbackMailbox::take_pending(const std::string& run_id)
{
    std::lock_guard lock(_mutex);
    std::vector<FeedbackItem> out;
    for (; _nextPending < _items.size(); ++_nextPending)
    {
        _items[_nextPending].consumed_in_run = run_id;
        out.push_back(_items[_nextPending]);
    }
    return out;
}

std::vector<FeedbackItem> FeedbackMailbox::take_unpersisted()
{
    std::lock_guard lock(_mutex);
    std::vector<FeedbackItem> out(_items.begin() + static_cast<std::ptrdiff_t>(_nextUnpersisted), _items.end());
    _nextUnpersisted = _items.size();
    return out;
}

std::size_t FeedbackMailbox::pending() const
{
    std::lock_guard lock(_mutex);
    return _items.size() - _nextPending;
}

std::vector<FeedbackItem> FeedbackMailbox::history() const
{
    std::lock_guard lock(_mutex);
    return _items;
}

void FeedbackMailbox::set_listener(Listener listener)
{
    std::lock_guard lock(_mutex);
    _listener = std::move(listener);
}
// }}}

// {{{ LoopControl
std::optional<ControlCommand> parse_control_command(std::string_view name)
{
    if (name == "pause")
        return ControlCommand::Pause;
    if (name == "resume")
        return ControlCommand::Resume;
    if (name == "stop")
        return ControlCommand::Stop;
    if (name == "step")
        return ControlCommand::Step;
    return std::nullopt;
}

std::string_view to_string(ControlCommand command)
{
    switch (command)
    {
        case ControlCommand::Pause: return "pause";
        case ControlCommand::Resume: return "resume";
        case ControlCommand::Stop: return "stop";
        case ControlCommand::Step: return "step";
    }
    return "unknown";
}

void LoopControl::apply(ControlCommand command)
{
    {
        std::lock_guard lock(_mutex);
        switch (command)
        {
            case ControlCommand::Pause: _paused = true; break;
            case ControlCommand::Resume:
                _paused = false;
                _stepTokens = 0;
                break;
            case ControlCommand::Stop: _stopped = true; break;
            case ControlCommand::Step:
                _paused = true;
                ++_stepTokens;
                break;
        }
    }
    _changed.notify_all();
}

bool LoopControl::stop_requested() const
{
    std::lock_guard lock(_mutex);
    return _stopped || _interrupted.load();
}

bool LoopControl::paused() const
{
    std::lock_guard lock(_mutex);
    return _paused;
}

bool LoopControl::wait_at_boundary(const std::function<void()>& on_wait)
{
    std::unique_lock lock(_mutex);
    bool announced = false;
    for (;;)
    {
        if (_stopped || _interrupted.load())
            return false;
        if (!_paused)
            return true;
        if (_stepTokens > 0)
        {
            --_stepTokens;
            return true;
        }
        if (!announced && on_wait)
        {
            announced = true;
            lock.unlock();
            on_wait();
            lock.lock();
            continue;
        }
        // Interrupts arrive from a signal handler that cannot notify.
        _changed.wait_for(lock, std::chrono::milliseconds(100));
    }
}

void LoopControl::sleep_for(std::chrono::milliseconds timeout)
{
    auto const deadline = std::chrono::steady_clock::now() + timeout;
    std::unique_lock lock(_mutex);
    while (!_stopped && !_interrupted.load() && std::chrono::steady_clock::now() < deadline)
        _changed.wait_until(lock, std::min(deadline, std::chrono::steady_clock::now() + std::chrono::milliseconds(100)));
}

void LoopControl::wait_for_stop()
{
    std::unique_lock lock(_mutex);
    while (!_stopped && !_interrupted.load())
        _changed.wait_for(lock, std::chrono::milliseconds(100));
}
// }}}

// {{{ input sources
BatchInput::BatchInput(std::vector<std::optional<std::string>> queries): _queries(std::move(queries))
{
}

RunInput BatchInput::next()
{
    if (_queries.empty())
        return RunInput { false, std::nullopt };
    if (_cursor >= _queries.size())
        return RunInput { true, std::nullopt };
    return RunInput { false, _queries[_cursor++] };
}

InteractiveInput::InteractiveInput(std::istream& in, std::ostream& prompt_out): _in(in), _out(prompt_out)
{
}

RunInput InteractiveInput::next()
{
    _out << "input (empty line: let the agent choose)> " << std::flush;
    std::string line;
    if (!std::getline(_in, line))
        return RunInput { true, std::nullopt };
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (text::trim(line).empty())
        return RunInput { false, std::nullopt };
    return RunInput { false, line };
}
// }}}

// {{{ summaries
std::string_view to_string(StopReason reason)
{
    switch (reason)
    {
        case StopReason::InputExhausted: return "input_exhausted";
        case StopReason::MaxRuns: return "max_runs";
        case StopReason::StopCommand: return "stop_command";
        case StopReason::Interrupted: return "interrupted";
        case StopReason::ModelExhausted: return "model_exhausted";
    }
    return "unknown";
}

Json to_json(const RunReport& report)
{
    Json j { { "run_id", report.run_id } };
    j["task"] = report.task ? to_json(*report.task) : Json(nullptr);
    j["status"] = report.status ? Json(to_string(*report.status)) : Json(nullptr);
    j["steps_used"] = report.steps_used;
    j["error"] = report.error ? Json(report.error_text) : Json(nullptr);
    j["recorded"] = report.recorded;
    return j;
}

Json to_json(const ExitSummary& summary)
{
    Json runs = Json::array();
    for (auto const& r: summary.runs)
        runs.push_back(to_json(r));
    return Json { { "runs_attempted", summary.runs_attempted },
                  { "runs_completed", summary.runs_completed },
                  { "errors", summary.errors },
                  { "stop_reason", to_string(summary.stop_reason) },
                  { "runs", std::move(runs) } };
}
// }}}

// {{{ Orchestrator
namespace
{

constexpr std::size_t kListingBudget = 2000;

ReactSettings react_settings(const AgentConfig& cfg, const NudgeSet& nudges,
                             const std::function<Clock::time_point()>& clock)
{
    ReactSettings s;
    s.params = cfg.model.params;
    s.nudges = nudges;
    s.char_budget = cfg.loop.char_budget;
    s.max_steps = cfg.loop.max_steps;
    s.observation_cap = cfg.loop.observation_cap;
    s.loop_window = cfg.loop.loop_window;
    if (cfg.executor.mode == ExecutorMode::Subprocess)
    {
        s.syntax = ActionSyntax::Source;
        s.subprocess = SubprocessOptions { true, cfg.executor.command_template, cfg.executor.timeout };
    }
    s.clock = clock;
    return s;
}

bool is_model_exhausted(const std::exception_ptr& e)
{
    if (!e)
        return false;
    try
    {
        std::rethrow_exception(e);
    }
    catch (ScriptExhausted const&)
    {
        return true;
    }
    catch (...)
    {
        return false;
    }
}

} // namespace

Orchestrator::Orchestrator(AgentConfig config, ChatModel& model, EventBus& events, FeedbackMailbox& mailbox,
                           LoopControl& control, ClockFn clock):
    _config(std::move(config)),
    _model(model),
    _events(events),
    _mailbox(mailbox),
    _control(control),
    _clock(std::move(clock)),
    _systemTemplate(_config.system_template()),
    _nudges(_config.nudge_set()),
    _memory(_config.memory_path()),
    _ids(_config.loop.seed)
{
}

void Orchestrator::prepare()
{
    std::error_code ec;
    fs::create_directories(_config.workspace_root, ec);
    if (!fs::is_directory(_config.workspace_root))
        throw ConfigError("cannot create workspace " + _config.workspace_root.string());
    fs::create_directories(_config.runs_dir(), ec);
    if (!fs::is_directory(_config.runs_dir()))
        throw ConfigError("cannot create runs directory " + _config.runs_dir().string());
    _memory.reload();
    seed_run_ids();
}

void Orchestrator::seed_run_ids()
{
    for (auto const& r: _memory.snapshot())
        _ids.observe(r.run_id);
    std::error_code ec;
    for (auto it = fs::directory_iterator(_config.runs_dir(), ec); !ec && it != fs::directory_iterator(); ++it)
        if (it->path().extension() == ".jsonl")
            _ids.observe(it->path().stem().string());
}

std::string Orchestrator::build_system_prompt(std::span<const RunRecord> records)
{
    std::string listing;
    try
    {
        listing = render_listing(list_files(resolve_jailed(_config.workspace_root, ".")));
    }
    catch (std::exception const& e)
    {
        listing = std::string("(unavailable: ") + e.what() + ")";
    }
    Bindings b;
    b["curiosity_clause"] = _config.prompts.curiosity_clause;
    b["tools"] = _config.executor.mode == ExecutorMode::Subprocess ? "(programs run by: " + _config.executor.command_template + ")"
                                                                  : tool_signatures();
    b["memory_digest"] = digest(records, _config.memory.digest);
    b["workspace_listing"] = text::clip(listing, kListingBudget);
    return render_system_prompt(_systemTemplate, b);
}

std::string Orchestrator::render_system_prompt_now()
{
    _memory.reload();
    auto records = _memory.snapshot();
    return build_system_prompt(records);
}

void Orchestrator::persist_feedback(const std::string& run_id)
{
    auto items = _mailbox.take_unpersisted();
    if (!_config.memory.store_feedback)
        return;
    for (auto const& item: items)
    {
        RunRecord r;
        r.run_id = run_id;
        r.kind = RecordKind::Feedback;
        r.task = item.text;
        r.outcome = "user feedback";
        r.ts = text::format_timestamp(item.submitted_at);
        _memory.append(r);
    }
}

RunReport Orchestrator::execute_run(const std::string& run_id, const std::optional<std::string>& input,
                                    bool& model_exhausted)
{
    RunReport report;
    report.run_id = run_id;

    Transcript transcript(run_id, _clock());
    transcript.set_observer([this](const Transcript& t, const Message& m) {
        {
            std::lock_guard lock(_liveMutex);
            _liveMessages.push_back(m);
        }
        _events.publish(EventKind::MessageAppended, t.run_id(), to_json(m).dump());
    });

    Json started { { "input", input ? Json(*input) : Json(nullptr) } };
    _events.publish(EventKind::RunStarted, run_id, started.dump());

    try
    {
        _memory.reload();
        auto const records = _memory.snapshot();
        auto const memoryDigest = digest(records, _config.memory.digest);

        transcript.append(Role::System, build_system_prompt(records), StepTag::UserInput);
        for (auto const& item: _mailbox.take_pending(run_id))
            transcript.append(Role::User, "User feedback: " + item.text, StepTag::Feedback);

        GoalEngine goals(_model, GoalSettings { _config.model.params, _nudges, _config.loop.char_budget });
        auto task = goals.generate_task(transcript, input, memoryDigest);
        auto const duplicate = dedup_check(task.text, records, _config.loop.dedup_threshold);
        task = goals.apply_duplicate_policy(std::move(task), duplicate, _config.loop.duplicate_policy, transcript,
                                            records, _config.loop.dedup_threshold);
        report.task = task;
        _events.publish(EventKind::TaskGenerated, run_id, to_json(task).dump());

        ReactEngine react(_model, _config.workspace_root, react_settings(_config, _nudges, _clock));
        react.set_observation_hook([this](const Transcript& t, const Observation& obs) {
            _events.publish(EventKind::Observation, t.run_id(), obs.render());
        });
        auto result = react.run_episode(task, transcript);
        report.status = result.status;
        report.steps_used = result.steps_used;

        if (result.status == EpisodeStatus::Aborted)
        {
            report.error = true;
            report.error_text = result.abort_reason.value_or("aborted");
            model_exhausted = is_model_exhausted(result.abort_cause);
        }
        else
        {
            _memory.append(result.record);
            report.recorded = true;
        }
    }
    catch (ScriptExhausted const& e)
    {
        report.error = true;
        report.error_text = e.what();
        model_exhausted = true;
    }
    catch (std::exception const& e)
    {
        report.error = true;
        report.error_text = e.what();
    }

    try
    {
        write_run_log(_config.runs_dir(), transcript);
    }
    catch (std::exception const& e)
    {
        if (!report.error)
        {
            report.error = true;
            report.error_text = e.what();
        }
    }
    return report;
}

ExitSummary Orchestrator::run_loop(InputSource& input)
{
    prepare();
    ExitSummary summary;
    auto const awaiting = [this](std::string_view why) {
        _events.publish(EventKind::AwaitingInput, _lastRunId, Json { { "reason", why } }.dump());
    };

    for (;;)
    {
        if (_config.loop.max_runs && summary.runs_attempted >= *_config.loop.max_runs)
        {
            summary.stop_reason = StopReason::MaxRuns;
            break;
        }
        if (!_control.wait_at_boundary([&] { awaiting("paused"); }))
        {
            summary.stop_reason = _control.interrupted() ? StopReason::Interrupted : StopReason::StopCommand;
            break;
        }
        if (input.needs_operator())
            awaiting("operator");
        auto const next = input.next();
        if (next.end)
        {
            summary.stop_reason = StopReason::InputExhausted;
            break;
        }
        if (_control.stop_requested())
        {
            summary.stop_reason = _control.interrupted() ? StopReason::Interrupted : StopReason::StopCommand;
            break;
        }

        auto const runId = _ids.next();
        {
            std::lock_guard lock(_liveMutex);
            _liveRunId = runId;
            _liveMessages.clear();
        }
        ++summary.runs_attempted;
        bool exhausted = false;
        auto report = execute_run(runId, next.text, exhausted);
        _lastRunId = runId;

        try
        {
            persist_feedback(runId);
        }
        catch (std::exception const& e)
        {
            std::cerr << "openloop: cannot store feedback: " << e.what() << '\n';
        }

        if (report.error)
        {
            ++summary.errors;
            _events.publish(EventKind::Error, runId, report.error_text);
        }
        else
            ++summary.runs_completed;
        _events.publish(EventKind::RunCompleted, runId, to_json(report).dump());
        summary.runs.push_back(report);
        {
            std::lock_guard lock(_liveMutex);
            _liveRunId.reset();
            _liveMessages.clear();
            _reports.push_back(std::move(report));
        }

        if (exhausted)
        {
            summary.stop_reason = StopReason::ModelExhausted;
            break;
        }
    }

    try
    {
        persist_feedback(_lastRunId);
    }
    catch (std::exception const& e)
    {
        std::cerr << "openloop: cannot store feedback: " << e.what() << '\n';
    }
    awaiting("finished");
    return summary;
}

std::optional<std::vector<Message>> Orchestrator::live_messages(std::string_view run_id) const
{
    std::lock_guard lock(_liveMutex);
    if (!_liveRunId || *_liveRunId != run_id)
        return std::nullopt;
    return _liveMessages;
}

std::optional<std::string> Orchestrator::live_run_id() const
{
    std::lock_guard lock(_liveMutex);
    return _liveRunId;
}

std::vector<RunReport> Orchestrator::reports() const
{
    std::lock_guard lock(_liveMutex);
    return _reports;
}

Json run_summaries(const Orchestrator& orchestrator)
{
    std::map<std::string, Json> rows;

    auto ensure = [&](const std::string& id) -> Json& {
        auto [it, inserted] = rows.try_emplace(id);
        if (inserted)
            it->second = Json { { "run_id", id },        { "task", nullptr }, { "status", nullptr },
                                { "outcome", nullptr },  { "error", nullptr }, { "messages", 0 },
                                { "live", false } };
        return it->second;
    };

    auto const& cfg = orchestrator.config();
    std::error_code ec;
    for (auto it = fs::directory_iterator(cfg.runs_dir(), ec); !ec && it != fs::directory_iterator(); ++it)
    {
        auto const id = it->path().stem().string();
        if (it->path().extension() != ".jsonl" || !RunIdGenerator::is_well_formed(id))
            continue;
        auto& row = ensure(id);
        try
        {
            row["messages"] = read_run_log(it->path()).size();
        }
        catch (std::exception const&)
        {
        }
    }
    for (auto const& r: load_records(orchestrator.config().memory_path()).records)
    {
        if (r.kind != RecordKind::Run || !RunIdGenerator::is_well_formed(r.run_id))
            continue;
        auto& row = ensure(r.run_id);
        row["task"] = r.task;
        row["outcome"] = r.outcome;
    }
    for (auto const& rep: orchestrator.reports())
    {
        auto& row = ensure(rep.run_id);
        if (rep.task)
            row["task"] = rep.task->text;
        if (rep.status)
            row["status"] = to_string(*rep.status);
        if (rep.error)
            row["error"] = rep.error_text;
    }
    if (auto live = orchestrator.live_run_id())
    {
        auto& row = ensure(*live);
        row["live"] = true;
        row["status"] = "running";
        if (auto msgs = orchestrator.live_messages(*live))
            row["messages"] = msgs->size();
    }

    std::vector<std::string> ids;
    for (auto const& [id, _]: rows)
        ids.push_back(id);
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
        auto na = RunIdGenerator::number_of(a).value_or(0);
        auto nb = RunIdGenerator::number_of(b).value_or(0);
        return na != nb ? na > nb : a > b;
    });
    Json out = Json::array();
    for (auto const& id: ids)
        out.push_back(rows[id]);
    return out;
}
// }}}

} // namespace openloop
