// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/goal_engine.hpp>
#include <openloop/memory.hpp>
#include <openloop/model_gateway.hpp>
#include <openloop/prompt_kit.hpp>
#include <openloop/toolbelt.hpp>

#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace openloop
{

enum class EpisodeStatus
{
    FinalAnswer,
    StepLimit,
    Aborted,
};

std::string_view to_string(EpisodeStatus status);

struct EpisodeResult
{
    EpisodeStatus status = EpisodeStatus::StepLimit;
    std::optional<std::string> final_text;
    int steps_used = 0;
    RunRecord record;

    std::optional<std::string> abort_reason;
    std::exception_ptr abort_cause; // the gateway error that ended the episode
    ExecutionTrace trace;
    std::optional<std::string> last_observation;
};

inline constexpr std::string_view kLoopWarning =
    "You are repeating the same action without making progress. Try something different, or give your final "
    "answer.";

struct ReactSettings
{
    ChatParams params;
    NudgeSet nudges = NudgeSet::defaults();
    std::size_t char_budget = 24000;
    int max_steps = 8;
    std::size_t observation_cap = kDefaultObservationCap;
    std::size_t loop_window = 3;
    ActionSyntax syntax = ActionSyntax::ToolCalls;
    SubprocessOptions subprocess;
    std::function<Clock::time_point()> clock = [] { return Clock::now(); };
};

/// Warning text when the last window actions in the transcript are identical.
std::optional<std::string> loop_detector(const Transcript& transcript, std::size_t window,
                                         ActionSyntax syntax = ActionSyntax::ToolCalls);

/// Record built without the model: the tools that ran, the final answer or
/// the status plus the last observation, and the files written.
RunRecord fallback_record(const std::string& run_id, const TaskSpec& task, const EpisodeResult& result,
                          Clock::time_point now);

/// The Plan-Act-Observe loop of one run (steps 4-7).
class ReactEngine
{
  public:
    using ObservationHook = std::function<void(const Transcript&, const Observation&)>;

    ReactEngine(ChatModel& model, std::filesystem::path jail_root, ReactSettings settings);

    void set_observation_hook(ObservationHook hook) { _onObservation = std::move(hook); }

    /// Runs up to max_steps model calls, then summarize_run() fills
    /// EpisodeResult::record. Gateway errors end the episode as Aborted.
    EpisodeResult run_episode(const TaskSpec& task, Transcript& transcript);

    /// Asks the model for a ```record block; falls back to fallback_record()
    /// when the reply cannot be parsed, the model fails, or the episode was
    /// aborted (no model call then).
    RunRecord summarize_run(Transcript& transcript, const TaskSpec& task, const EpisodeResult& result);

    const ReactSettings& settings() const noexcept { return _settings; }

  private:
    ChatModel& _model;
    std::filesystem::path _jailRoot;
    ReactSettings _settings;
    ObservationHook _onObservation;
};

} // namespace openloop
