// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/action.hpp>
#include <openloop/error.hpp>
#include <openloop/memory.hpp>
#include <openloop/message.hpp>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace openloop
{

class PromptError: public Error
{
  public:
    enum class Code
    {
        MissingBinding,
        NoTaskTag,
        EmptyTask,
        MalformedAction,
        NoActionOrFinal,
        BudgetTooSmall,
        NoRecordBlock,
        MissingField,
        MalformedRecord,
    };

    PromptError(Code code, std::string detail, std::optional<std::size_t> position = std::nullopt);

    Code code() const noexcept { return _code; }

    /// Byte offset into the parsed reply, for syntax faults.
    std::optional<std::size_t> position() const noexcept { return _position; }

  private:
    Code _code;
    std::optional<std::size_t> _position;
};

std::string_view to_string(PromptError::Code code);

// {{{ templates

inline constexpr std::string_view kCuriosityClause =
    "Be curious: explore the environment, read, summarize, and understand its files, and write down your progress "
    "and tasks.";

struct PromptTemplate
{
    std::string name;
    std::string body;

    /// Throws ConfigError if the file cannot be read.
    static PromptTemplate load(const std::filesystem::path& path);

    /// Default system prompt for tool-call actions, or for source actions
    /// run by an external interpreter.
    static PromptTemplate default_system();
    static PromptTemplate default_system_subprocess();
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Distinct {{name}} placeholders in order of first appearance.
std::vector<std::string> placeholders(std::string_view body);

/// Substitutes every placeholder in a single pass (bound text is not
/// re-scanned). Throws PromptError(MissingBinding) naming the first unbound one.
std::string render_system_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

/// Fixed texts of the short system messages inserted before key steps.
struct NudgeSet
{
    std::string task_generation;
    std::string act;
    std::string summary;

    static NudgeSet defaults();

    /// "step_tag: text" lines; '#' starts a comment. Unlisted steps keep their
    /// default text. Throws ConfigError.
    static NudgeSet parse(std::string_view content);
    static NudgeSet load(const std::filesystem::path& path);

    /// Throws std::invalid_argument unless step is task_generation, act or summary.
    const std::string& for_step(StepTag step) const;
};

/// Appends the nudge for step as a system message tagged Nudge.
const Message& insert_nudge(Transcript& transcript, StepTag step, const NudgeSet& nudges = NudgeSet::defaults());

/// Leading system messages, then the longest suffix of the rest that fits
/// char_budget. Messages are never split.
/// Throws PromptError(BudgetTooSmall), or std::invalid_argument if the first
/// message is not a system message.
std::vector<Message> render_prompt(std::span<const Message> messages, std::size_t char_budget);

inline std::vector<Message> render_prompt(const Transcript& transcript, std::size_t char_budget)
{
    return render_prompt(std::span<const Message>(transcript.messages()), char_budget);
}

// }}}
// {{{ parsers

struct ParsedTask
{
    std::string text;
};

/// Content of the first well-formed <task>...</task> pair, trimmed.
/// Throws PromptError(NoTaskTag | EmptyTask).
ParsedTask extract_task(std::string_view reply);

struct FinalAnswer
{
    std::string text;
};

/// Raw body of an action fence, run by the subprocess executor.
struct SourceAction
{
    std::string source;
};

enum class ActionSyntax
{
    ToolCalls, // body is a JSON array of tool calls
    Source,    // body is a program
};

using ParsedAction = std::variant<ActionProgram, SourceAction, FinalAnswer>;

/// An ```action fenced block wins over <final>...</final>.
/// prebound names variables bound by earlier steps of the episode.
/// Throws PromptError(MalformedAction | NoActionOrFinal).
ParsedAction extract_action(std::string_view reply, ActionSyntax syntax = ActionSyntax::ToolCalls,
                            const std::set<std::string>& prebound = {});

struct RecordFields
{
    std::string task;
    std::string action;
    std::string outcome;
};

/// Reads a ```record fenced block holding {"task", "action", "outcome"}.
/// Throws PromptError(NoRecordBlock | MissingField | MalformedRecord).
RecordFields extract_record(std::string_view reply);

struct FencedBlock
{
    std::string_view body;
    std::size_t offset = 0; // of body within the searched text
};

/// First ```label block. An unterminated fence runs to the end of the text.
std::optional<FencedBlock> find_fenced_block(std::string_view text, std::string_view label);

// }}}

} // namespace openloop
