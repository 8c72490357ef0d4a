// SPDX-License-Identifier: Apache-2.0
#include <openloop/action.hpp>

#include <array>
#include <set>
#include <stdexcept>

namespace openloop
{

namespace
{

constexpr std::array<std::string_view, 1> kPathOnly { "path" };
constexpr std::array<std::string_view, 2> kPathContent { "path", "content" };

bool is_identifier_start(char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_identifier_char(char c)
{
    return is_identifier_start(c) || (c >= '0' && c <= '9');
}

} // namespace

std::string_view to_string(ToolKind tool)
{
    switch (tool)
    {
        case ToolKind::ReadFile: return "read_file";
        case ToolKind::WriteFile: return "write_file";
        case ToolKind::ListFiles: return "list_files";
    }
    return "unknown";
}

std::optional<ToolKind> parse_tool(std::string_view name)
{
    for (auto tool: { ToolKind::ReadFile, ToolKind::WriteFile, ToolKind::ListFiles })
        if (to_string(tool) == name)
            return tool;
    return std::nullopt;
}

std::span<const std::string_view> tool_arguments(ToolKind tool)
{
    if (tool == ToolKind::WriteFile)
        return kPathContent;
    return kPathOnly;
}

std::string tool_signatures()
{
    std::string out;
    for (auto tool: { ToolKind::ReadFile, ToolKind::WriteFile, ToolKind::ListFiles })
    {
        if (!out.empty())
            out += '\n';
        out += to_string(tool);
        out += '(';
        bool first = true;
        for (auto arg: tool_arguments(tool))
        {
            if (!first)
                out += ", ";
            out += arg;
            first = false;
        }
        out += ')';
    }
    return out;
}

bool is_identifier(std::string_view name)
{
    if (name.empty() || !is_identifier_start(name.front()))
        return false;
    for (auto c: name)
        if (!is_identifier_char(c))
            return false;
    return true;
}

std::vector<std::string> variable_references(std::string_view text)
{
    std::vector<std::string> names;
    for (std::size_t i = 0; i < text.size(); ++i)
    {
        if (text[i] != '$')
            continue;
        if (i + 1 < text.size() && text[i + 1] == '$')
        {
            ++i;
            continue;
        }
        auto j = i + 1;
        if (j >= text.size() || !is_identifier_start(text[j]))
            continue;
        while (j < text.size() && is_identifier_char(text[j]))
            ++j;
        names.emplace_back(text.substr(i + 1, j - i - 1));
        i = j - 1;
    }
    return names;
}

std::string substitute_variables(std::string_view text, const std::map<std::string, std::string>& bindings)
{
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i)
    {
        if (text[i] != '$')
        {
            out += text[i];
            continue;
        }
        if (i + 1 < text.size() && text[i + 1] == '$')
        {
            out += '$';
            ++i;
            continue;
        }
        auto j = i + 1;
        if (j >= text.size() || !is_identifier_start(text[j]))
        {
            out += '$';
            continue;
        }
        while (j < text.size() && is_identifier_char(text[j]))
            ++j;
        auto const name = std::string(text.substr(i + 1, j - i - 1));
        auto const it = bindings.find(name);
        if (it == bindings.end())
            throw std::out_of_range("unbound variable $" + name);
        out += it->second;
        i = j - 1;
    }
    return out;
}

void validate_program(const ActionProgram& program, const std::set<std::string>& prebound)
{
    if (program.calls.size() > kMaxCallsPerProgram)
        throw std::invalid_argument("a program may hold at most " + std::to_string(kMaxCallsPerProgram)
                                    + " calls, got " + std::to_string(program.calls.size()));

    std::set<std::string> bound = prebound;
    for (std::size_t k = 0; k < program.calls.size(); ++k)
    {
        auto const& call = program.calls[k];
        auto const where = "call " + std::to_string(k + 1) + " (" + std::string(to_string(call.tool)) + ")";

        auto const expected = tool_arguments(call.tool);
        for (auto name: expected)
            if (!call.args.contains(std::string(name)))
                throw std::invalid_argument(where + ": missing argument \"" + std::string(name) + "\"");
        if (call.args.size() != expected.size())
        {
            for (auto const& [name, value]: call.args)
            {
                bool known = false;
                for (auto e: expected)
                    known = known || e == name;
                if (!known)
                    throw std::invalid_argument(where + ": unexpected argument \"" + name + "\"");
            }
        }

        for (auto const& [name, value]: call.args)
            for (auto const& ref: variable_references(value))
                if (!bound.contains(ref))
                    throw std::invalid_argument(where + ": $" + ref + " is not bound by an earlier call");

        if (call.bind)
        {
            if (!is_identifier(*call.bind))
                throw std::invalid_argument(where + ": bind name \"" + *call.bind + "\" is not an identifier");
            bound.insert(*call.bind);
        }
    }
}

} // namespace openloop
