// SPDX-License-Identifier: Apache-2.0
#include <openloop/react_engine.hpp>
#include <openloop/text.hpp>

#include <set>
#include <variant>

namespace openloop
{

std::string_view to_string(EpisodeStatus status)
{
    switch (status)
    {
        case EpisodeStatus::FinalAnswer: return "final_answer";
        case EpisodeStatus::StepLimit: return "step_limit";
        case EpisodeStatus::Aborted: return "aborted";
    }
    return "aborted";
}

namespace
{

std::set<std::string> bound_names(const ExecutionTrace& trace)
{
    std::set<std::string> names;
    for (auto const& [name, value]: trace.variables)
        names.insert(name);
    return names;
}

std::string join(const std::vector<std::string>& items, std::string_view separator)
{
    std::string out;
    for (auto const& item: items)
    {
        if (!out.empty())
            out += separator;
        out += item;
    }
    return out;
}

} // namespace

std::optional<std::string> loop_detector(const Transcript& transcript, std::size_t window, ActionSyntax syntax)
{
    if (window == 0)
        return std::nullopt;

    // Walk forward so that binds of earlier programs are known to later ones.
    std::set<std::string> bound;
    std::vector<std::string> signatures;
    for (auto const& m: transcript.messages())
    {
        if (m.role != Role::Assistant || m.step_tag != StepTag::Act)
            continue;
        try
        {
            auto const parsed = extract_action(m.content, syntax, bound);
            if (auto const* program = std::get_if<ActionProgram>(&parsed))
            {
                auto calls = Json::array();
                for (auto const& call: program->calls)
                {
                    calls.push_back(Json { { "tool", to_string(call.tool) }, { "args", call.args } });
                    if (call.bind)
                        bound.insert(*call.bind);
                }
                signatures.push_back(calls.dump());
            }
            else if (auto const* source = std::get_if<SourceAction>(&parsed))
                signatures.push_back(source->source);
        }
        catch (const PromptError&)
        {
        }
    }

    if (signatures.size() < window)
        return std::nullopt;
    for (auto it = signatures.end() - static_cast<std::ptrdiff_t>(window); it != signatures.end(); ++it)
        if (*it != signatures.back())
            return std::nullopt;
    return std::string(kLoopWarning);
}

RunRecord fallback_record(const std::string& run_id, const TaskSpec& task, const EpisodeResult& result,
                          Clock::time_point now)
{
    std::string outcome;
    if (result.status == EpisodeStatus::FinalAnswer && result.final_text)
        outcome = *result.final_text;
    else
    {
        outcome = std::string(to_string(result.status));
        if (result.last_observation)
            outcome += ": " + text::single_line(*result.last_observation);
    }

    return RunRecord {
        .run_id = run_id,
        .kind = RecordKind::Run,
        .task = task.text,
        .action_summary = text::clip(join(result.trace.tools, ", "), 200),
        .outcome = text::clip(outcome, 280),
        .artifacts = result.trace.written,
        .ts = text::format_timestamp(now),
    };
}

ReactEngine::ReactEngine(ChatModel& model, std::filesystem::path jail_root, ReactSettings settings):
    _model(model), _jailRoot(std::move(jail_root)), _settings(std::move(settings))
{
}

EpisodeResult ReactEngine::run_episode(const TaskSpec& task, Transcript& transcript)
{
    EpisodeResult result;
    bool warned = false;

    for (int step = 1; step <= _settings.max_steps; ++step)
    {
        insert_nudge(transcript, StepTag::Act, _settings.nudges);

        ModelReply reply;
        try
        {
            reply = _model.complete(render_prompt(transcript, _settings.char_budget), _settings.params);
        }
        catch (const Error& e)
        {
            // gateway failures and an unusable prompt budget both end the run
            result.status = EpisodeStatus::Aborted;
            result.abort_reason = e.what();
            result.abort_cause = std::current_exception();
            break;
        }
        result.steps_used = step;

        std::optional<ParsedAction> parsed;
        std::string parseError;
        try
        {
            parsed = extract_action(reply.content, _settings.syntax, bound_names(result.trace));
        }
        catch (const PromptError& e)
        {
            parseError = e.what();
        }

        if (!parsed)
        {
            transcript.append(Role::Assistant, reply.content, StepTag::Plan);
            transcript.append(Role::Tool, parseError, StepTag::Observe);
            result.last_observation = parseError;
            continue;
        }

        transcript.append(Role::Assistant, reply.content, StepTag::Act);
        if (auto const* answer = std::get_if<FinalAnswer>(&*parsed))
        {
            result.status = EpisodeStatus::FinalAnswer;
            result.final_text = answer->text;
            break;
        }

        Observation observation;
        if (auto const* program = std::get_if<ActionProgram>(&*parsed))
            observation = execute(*program, _jailRoot, _settings.observation_cap, &result.trace);
        else
        {
            result.trace.tools.emplace_back("subprocess");
            observation = execute_subprocess(std::get<SourceAction>(*parsed).source, _jailRoot,
                                             _settings.observation_cap, _settings.subprocess);
        }

        auto rendered = observation.render();
        transcript.append(Role::Tool, rendered, StepTag::Observe);
        result.last_observation = std::move(rendered);
        if (_onObservation)
            _onObservation(transcript, observation);

        if (!warned)
        {
            if (auto warning = loop_detector(transcript, _settings.loop_window, _settings.syntax))
            {
                transcript.append(Role::System, std::move(*warning), StepTag::Nudge);
                warned = true;
            }
        }
    }

    result.record = summarize_run(transcript, task, result);
    return result;
}

RunRecord ReactEngine::summarize_run(Transcript& transcript, const TaskSpec& task, const EpisodeResult& result)
{
    if (result.status == EpisodeStatus::Aborted)
        return fallback_record(transcript.run_id(), task, result, _settings.clock());

    try
    {
        insert_nudge(transcript, StepTag::Summary, _settings.nudges);
        auto const reply = _model.complete(render_prompt(transcript, _settings.char_budget), _settings.params);
        transcript.append(Role::Assistant, reply.content, StepTag::Summary);
        auto const fields = extract_record(reply.content);

        return RunRecord {
            .run_id = transcript.run_id(),
            .kind = RecordKind::Run,
            .task = task.text,
            .action_summary = fields.action,
            .outcome = fields.outcome,
            .artifacts = result.trace.written,
            .ts = text::format_timestamp(_settings.clock()),
        };
    }
    catch (const Error&)
    {
        return fallback_record(transcript.run_id(), task, result, _settings.clock());
    }
}

} // namespace openloop
