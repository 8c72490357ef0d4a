// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace openloop
{

enum class ToolKind
{
    ReadFile,
    WriteFile,
    ListFiles,
};

std::string_view to_string(ToolKind tool);
std::optional<ToolKind> parse_tool(std::string_view name);

/// Argument names of a tool, in signature order.
std::span<const std::string_view> tool_arguments(ToolKind tool);

/// "read_file(path)\nwrite_file(path, content)\nlist_files(path)"
std::string tool_signatures();

struct ToolCall
{
    ToolKind tool = ToolKind::ReadFile;
    std::map<std::string, std::string> args;
    std::optional<std::string> bind;

    bool operator==(const ToolCall&) const = default;
};

inline constexpr std::size_t kMaxCallsPerProgram = 16;

/// Tool calls emitted by the model for one step.
struct ActionProgram
{
    std::vector<ToolCall> calls;

    bool operator==(const ActionProgram&) const = default;
};

/// Throws std::invalid_argument naming the first broken invariant: too many
/// calls, argument names that differ from the tool's signature, bad bind
/// names, or a $variable not bound by an earlier call. prebound holds names
/// bound by earlier programs of the same episode.
void validate_program(const ActionProgram& program, const std::set<std::string>& prebound = {});

bool is_identifier(std::string_view name);

/// Names referenced as $name in text. "$$" is an escaped dollar sign.
std::vector<std::string> variable_references(std::string_view text);

/// Replaces $name with its binding and "$$" with "$".
/// Throws std::out_of_range naming the first unbound variable.
std::string substitute_variables(std::string_view text, const std::map<std::string, std::string>& bindings);

} // namespace openloop
