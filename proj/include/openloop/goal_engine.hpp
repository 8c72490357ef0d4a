// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/memory.hpp>
#include <openloop/model_gateway.hpp>
#include <openloop/prompt_kit.hpp>

#include <optional>
#include <span>
#include <string>

namespace openloop
{

enum class TaskOrigin
{
    UserGiven,
    SelfGenerated,
    UserRefined,
};

std::string_view to_string(TaskOrigin origin);

struct TaskSpec
{
    std::string text;
    TaskOrigin origin = TaskOrigin::SelfGenerated;
    std::optional<std::string> source_user_prompt; // set whenever the user gave input
    std::optional<std::string> duplicate_of;       // run id

    bool operator==(const TaskSpec&) const = default;
};

Json to_json(const TaskSpec& spec);

/// Neither attempt produced a parseable <task> tag.
class TaskGenerationFailed: public Error
{
  public:
    explicit TaskGenerationFailed(std::string detail): Error("TaskGenerationFailed", std::move(detail)) {}
};

enum class DuplicatePolicy
{
    Allow,
    Warn,
    RegenerateOnce,
};

std::string_view to_string(DuplicatePolicy policy);
std::optional<DuplicatePolicy> parse_duplicate_policy(std::string_view name);

inline constexpr double kDefaultDedupThreshold = 0.6;

/// Lowercase, keep only letters, digits and spaces, collapse whitespace.
std::string normalize_task(std::string_view task);

/// Jaccard similarity of the normalized token sets; 1.0 when both are empty.
double task_similarity(std::string_view a, std::string_view b);

/// Run id of the most recent run record at least threshold-similar to task.
std::optional<std::string> dedup_check(std::string_view task, std::span<const RunRecord> records, double threshold);

struct GoalSettings
{
    ChatParams params;
    NudgeSet nudges = NudgeSet::defaults();
    std::size_t char_budget = 24000;
};

/// Produces the task of a run (steps 2-3 of a run).
class GoalEngine
{
  public:
    GoalEngine(ChatModel& model, GoalSettings settings);

    /// Appends the user input (if any) and the task nudge, asks the model and
    /// extracts the task, re-nudging once on a missing or empty tag. If the
    /// transcript does not show memory_digest yet, it is added as a system
    /// message first. Throws TaskGenerationFailed; gateway errors propagate.
    TaskSpec generate_task(Transcript& transcript, const std::optional<std::string>& user_input,
                           std::string_view memory_digest = {});

    /// duplicate is the result of dedup_check for spec. RegenerateOnce asks
    /// for one more task after naming the duplicate.
    TaskSpec apply_duplicate_policy(TaskSpec spec, const std::optional<std::string>& duplicate, DuplicatePolicy policy,
                                    Transcript& transcript, std::span<const RunRecord> records,
                                    double threshold = kDefaultDedupThreshold);

  private:
    TaskSpec request_task(Transcript& transcript, const std::optional<std::string>& user_input);

    ChatModel& _model;
    GoalSettings _settings;
};

} // namespace openloop
