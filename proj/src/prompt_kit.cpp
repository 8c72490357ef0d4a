// SPDX-License-Identifier: Apache-2.0
#include <openloop/prompt_kit.hpp>
#include <openloop/text.hpp>

#include "default_prompts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace openloop
{

namespace
{

bool is_placeholder_char(char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Length of "{{name}}" at body[i], or 0 when there is no placeholder there.
std::size_t placeholder_at(std::string_view body, std::size_t i, std::string_view& name)
{
    if (body.substr(i, 2) != "{{")
        return 0;
    auto j = i + 2;
    while (j < body.size() && is_placeholder_char(body[j]))
        ++j;
    if (j == i + 2 || body.substr(j, 2) != "}}")
        return 0;
    name = body.substr(i + 2, j - i - 2);
    return j + 2 - i;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

PromptError malformed(std::string detail, std::optional<std::size_t> position = std::nullopt)
{
    return PromptError(PromptError::Code::MalformedAction, std::move(detail), position);
}

ToolCall parse_call(const Json& item, std::size_t index, std::size_t offset)
{
    auto const where = "call " + std::to_string(index + 1);
    if (!item.is_object())
        throw malformed(where + " is not a JSON object", offset);

    for (auto const& [key, value]: item.items())
        if (key != "tool" && key != "args" && key != "bind")
            throw malformed(where + ": unexpected key \"" + key + "\"", offset);

    auto const toolIt = item.find("tool");
    if (toolIt == item.end() || !toolIt->is_string())
        throw malformed(where + ": \"tool\" must be a string", offset);
    auto const tool = parse_tool(toolIt->get<std::string>());
    if (!tool)
        throw malformed(where + ": unknown tool \"" + toolIt->get<std::string>()
                            + "\" (available: read_file, write_file, list_files)",
                        offset);

    ToolCall call { .tool = *tool, .args = {}, .bind = std::nullopt };
    if (auto const args = item.find("args"); args != item.end())
    {
        if (!args->is_object())
            throw malformed(where + ": \"args\" must be an object", offset);
        for (auto const& [name, value]: args->items())
        {
            if (!value.is_string())
                throw malformed(where + ": argument \"" + name + "\" must be a string", offset);
            call.args.emplace(name, value.get<std::string>());
        }
    }
    if (auto const bind = item.find("bind"); bind != item.end() && !bind->is_null())
    {
        if (!bind->is_string())
            throw malformed(where + ": \"bind\" must be a string", offset);
        call.bind = bind->get<std::string>();
    }
    return call;
}

} // namespace

PromptError::PromptError(Code code, std::string detail, std::optional<std::size_t> position):
    Error(std::string(to_string(code)), std::move(detail)), _code(code), _position(position)
{
}

std::string_view to_string(PromptError::Code code)
{
    switch (code)
    {
        case PromptError::Code::MissingBinding: return "MissingBinding";
        case PromptError::Code::NoTaskTag: return "NoTaskTag";
        case PromptError::Code::EmptyTask: return "EmptyTask";
        case PromptError::Code::MalformedAction: return "MalformedAction";
        case PromptError::Code::NoActionOrFinal: return "NoActionOrFinal";
        case PromptError::Code::BudgetTooSmall: return "BudgetTooSmall";
        case PromptError::Code::NoRecordBlock: return "NoRecordBlock";
        case PromptError::Code::MissingField: return "MissingField";
        case PromptError::Code::MalformedRecord: return "MalformedRecord";
    }
    return "PromptError";
}

// {{{ templates

PromptTemplate PromptTemplate::load(const std::filesystem::path& path)
{
    return PromptTemplate { .name = path.filename().string(), .body = read_text_file(path) };
}

PromptTemplate PromptTemplate::default_system()
{
    return PromptTemplate { .name = "system.txt", .body = std::string(defaults::kSystemPrompt) };
}

PromptTemplate PromptTemplate::default_system_subprocess()
{
    return PromptTemplate { .name = "system_subprocess.txt", .body = std::string(defaults::kSystemPromptSubprocess) };
}

std::vector<std::string> placeholders(std::string_view body)
{
    std::vector<std::string> names;
    for (std::size_t i = 0; i < body.size(); ++i)
    {
        std::string_view name;
        if (auto const n = placeholder_at(body, i, name); n > 0)
        {
            if (std::find(names.begin(), names.end(), name) == names.end())
                names.emplace_back(name);
            i += n - 1;
        }
    }
    return names;
}

std::string render_system_prompt(const PromptTemplate& tmpl, const Bindings& bindings)
{
    std::string_view const body = tmpl.body;
    std::string out;
    out.reserve(body.size());
    for (std::size_t i = 0; i < body.size();)
    {
        std::string_view name;
        auto const n = placeholder_at(body, i, name);
        if (n == 0)
        {
            out += body[i++];
            continue;
        }
        auto const it = bindings.find(name);
        if (it == bindings.end())
            throw PromptError(PromptError::Code::MissingBinding, std::string(name));
        out += it->second;
        i += n;
    }
    return out;
}

NudgeSet NudgeSet::defaults()
{
    static NudgeSet const parsed = [] {
        NudgeSet set;
        std::istringstream in { std::string(defaults::kNudges) };
        std::string line;
        while (std::getline(in, line))
        {
            auto const t = text::trim(line);
            if (t.empty() || t.front() == '#')
                continue;
            auto const colon = t.find(':');
            auto const key = text::trim(t.substr(0, colon));
            auto const value = std::string(text::trim(t.substr(colon + 1)));
            if (key == "task_generation")
                set.task_generation = value;
            else if (key == "act")
                set.act = value;
            else if (key == "summary")
                set.summary = value;
        }
        return set;
    }();
    return parsed;
}

NudgeSet NudgeSet::parse(std::string_view content)
{
    auto set = defaults();
    std::istringstream in { std::string(content) };
    std::string line;
    for (std::size_t lineNo = 1; std::getline(in, line); ++lineNo)
    {
        auto const t = text::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        auto const colon = t.find(':');
        if (colon == std::string_view::npos)
            throw ConfigError("nudges line " + std::to_string(lineNo) + ": expected \"step_tag: text\"");
        auto const key = text::trim(t.substr(0, colon));
        auto const value = std::string(text::trim(t.substr(colon + 1)));
        if (value.empty())
            throw ConfigError("nudges line " + std::to_string(lineNo) + ": empty text");
        if (key == "task_generation")
            set.task_generation = value;
        else if (key == "act")
            set.act = value;
        else if (key == "summary")
            set.summary = value;
        else
            throw ConfigError("nudges line " + std::to_string(lineNo) + ": unknown step \"" + std::string(key)
                              + "\"");
    }
    return set;
}

NudgeSet NudgeSet::load(const std::filesystem::path& path)
{
    return parse(read_text_file(path));
}

const std::string& NudgeSet::for_step(StepTag step) const
{
    switch (step)
    {
        case StepTag::TaskGeneration: return task_generation;
        case StepTag::Act: return act;
        case StepTag::Summary: return summary;
        default: break;
    }
    throw std::invalid_argument("no nudge for step " + std::string(to_string(step)));
}

const Message& insert_nudge(Transcript& transcript, StepTag step, const NudgeSet& nudges)
{
    return transcript.append(Role::System, nudges.for_step(step), StepTag::Nudge);
}

std::vector<Message> render_prompt(std::span<const Message> messages, std::size_t char_budget)
{
    if (messages.empty() || messages.front().role != Role::System)
        throw std::invalid_argument("prompt must start with a system message");

    std::size_t pinned = 0;
    std::size_t used = 0;
    while (pinned < messages.size() && messages[pinned].role == Role::System)
        used += text::length(messages[pinned++].content);
    if (used > char_budget)
        throw PromptError(PromptError::Code::BudgetTooSmall,
                          "system messages need " + std::to_string(used) + " characters, budget is "
                              + std::to_string(char_budget));

    auto start = messages.size();
    while (start > pinned)
    {
        auto const len = text::length(messages[start - 1].content);
        if (used + len > char_budget)
            break;
        used += len;
        --start;
    }

    std::vector<Message> prompt(messages.begin(), messages.begin() + static_cast<std::ptrdiff_t>(pinned));
    prompt.insert(prompt.end(), messages.begin() + static_cast<std::ptrdiff_t>(start), messages.end());
    return prompt;
}

// }}}
// {{{ parsers

ParsedTask extract_task(std::string_view reply)
{
    constexpr std::string_view open = "<task>";
    constexpr std::string_view close = "</task>";

    auto const first = reply.find(open);
    if (first == std::string_view::npos)
        throw PromptError(PromptError::Code::NoTaskTag, "no <task>...</task> pair in reply");
    auto const end = reply.find(close, first + open.size());
    if (end == std::string_view::npos)
        throw PromptError(PromptError::Code::NoTaskTag, "<task> is never closed with </task>");

    // nearest opening tag before the first closing one
    auto const start = reply.rfind(open, end - open.size());
    auto const body = text::trim(reply.substr(start + open.size(), end - start - open.size()));
    if (body.empty())
        throw PromptError(PromptError::Code::EmptyTask, "<task></task> is empty");
    return ParsedTask { .text = std::string(body) };
}

std::optional<FencedBlock> find_fenced_block(std::string_view text, std::string_view label)
{
    constexpr std::string_view fence = "```";
    for (auto pos = text.find(fence); pos != std::string_view::npos; pos = text.find(fence, pos + fence.size()))
    {
        auto r = pos + fence.size();
        if (text.substr(r, label.size()) != label)
            continue;
        r += label.size();
        if (r < text.size() && is_placeholder_char(text[r]))
            continue;
        while (r < text.size() && (text[r] == ' ' || text[r] == '\t'))
            ++r;
        if (r < text.size() && text[r] == '\r')
            ++r;
        if (r < text.size() && text[r] == '\n')
            ++r;
        auto const closing = text.find(fence, r);
        auto const end = closing == std::string_view::npos ? text.size() : closing;
        return FencedBlock { .body = text.substr(r, end - r), .offset = r };
    }
    return std::nullopt;
}

ParsedAction extract_action(std::string_view reply, ActionSyntax syntax, const std::set<std::string>& prebound)
{
    if (auto const block = find_fenced_block(reply, "action"))
    {
        if (syntax == ActionSyntax::Source)
        {
            if (text::trim(block->body).empty())
                throw malformed("action block is empty", block->offset);
            return SourceAction { .source = std::string(block->body) };
        }

        Json body;
        try
        {
            body = Json::parse(block->body);
        }
        catch (const Json::parse_error& e)
        {
            auto const at = e.byte == 0 ? 0 : e.byte - 1;
            throw malformed("action block is not valid JSON (byte " + std::to_string(at) + " of the block): "
                                + e.what(),
                            block->offset + at);
        }
        if (!body.is_array())
            throw malformed("action block must hold a JSON array of tool calls", block->offset);

        ActionProgram program;
        for (std::size_t i = 0; i < body.size(); ++i)
            program.calls.push_back(parse_call(body[i], i, block->offset));
        try
        {
            validate_program(program, prebound);
        }
        catch (const std::invalid_argument& e)
        {
            throw malformed(e.what(), block->offset);
        }
        return program;
    }

    constexpr std::string_view open = "<final>";
    constexpr std::string_view close = "</final>";
    if (auto const start = reply.find(open); start != std::string_view::npos)
    {
        auto const end = reply.find(close, start + open.size());
        if (end != std::string_view::npos)
            return FinalAnswer { .text = std::string(
                                     text::trim(reply.substr(start + open.size(), end - start - open.size()))) };
    }

    throw PromptError(PromptError::Code::NoActionOrFinal,
                      "reply holds neither an ```action block nor <final>...</final>");
}

RecordFields extract_record(std::string_view reply)
{
    auto const block = find_fenced_block(reply, "record");
    if (!block)
        throw PromptError(PromptError::Code::NoRecordBlock, "no ```record block in reply");

    Json body;
    try
    {
        body = Json::parse(block->body);
    }
    catch (const Json::parse_error& e)
    {
        auto const at = e.byte == 0 ? 0 : e.byte - 1;
        throw PromptError(PromptError::Code::MalformedRecord, "record block is not valid JSON", block->offset + at);
    }
    if (!body.is_object())
        throw PromptError(PromptError::Code::MalformedRecord, "record block must hold a JSON object", block->offset);

    auto field = [&](const char* name) {
        auto const it = body.find(name);
        if (it == body.end() || it->is_null())
            throw PromptError(PromptError::Code::MissingField, name);
        if (!it->is_string())
            throw PromptError(PromptError::Code::MalformedRecord, std::string(name) + " must be a string");
        return it->get<std::string>();
    };

    RecordFields fields;
    fields.task = field("task");
    fields.action = field("action");
    fields.outcome = field("outcome");
    return fields;
}

// }}}

} // namespace openloop
