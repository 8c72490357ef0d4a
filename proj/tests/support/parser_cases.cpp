// SPDX-License-Identifier: Apache-2.0
#include "support/parser_cases.hpp"
#include "support/test_support.hpp"

#include <openloop/prompt_kit.hpp>

namespace openloop::testing
{

namespace
{

Json program_to_json(const ActionProgram& program)
{
    Json calls = Json::array();
    for (auto const& c: program.calls)
    {
        Json call { { "tool", to_string(c.tool) }, { "args", Json::object() } };
        for (auto const& [k, v]: c.args)
            call["args"][k] = v;
        if (c.bind)
            call["bind"] = *c.bind;
        calls.push_back(call);
    }
    return calls;
}

Json parse_to_json(const std::string& parser, const std::string& input, ActionSyntax syntax)
{
    if (parser == "task")
        return Json { { "text", extract_task(input).text } };
    if (parser == "record")
    {
        auto r = extract_record(input);
        return Json { { "task", r.task }, { "action", r.action }, { "outcome", r.outcome } };
    }
    auto parsed = extract_action(input, syntax);
    if (auto const* p = std::get_if<ActionProgram>(&parsed))
        return Json { { "calls", program_to_json(*p) } };
    if (auto const* s = std::get_if<SourceAction>(&parsed))
        return Json { { "source", s->source } };
    return Json { { "final", std::get<FinalAnswer>(parsed).text } };
}

// Order-insensitive comparison of object keys.
bool same(const Json& a, const Json& b)
{
    return nlohmann::json::parse(a.dump()) == nlohmann::json::parse(b.dump());
}

} // namespace

Json load_parser_cases()
{
    return Json::parse(read_text(std::string(OPENLOOP_FIXTURE_DIR) + "/parser/cases.json"));
}

CaseOutcome run_parser_case(const Json& fixture)
{
    CaseOutcome out;
    out.name = fixture.at("parser").get<std::string>() + ": " + fixture.at("name").get<std::string>();
    auto const parser = fixture["parser"].get<std::string>();
    auto const input = fixture["input"].get<std::string>();
    auto const syntax = fixture.value("syntax", std::string("toolcalls")) == "source" ? ActionSyntax::Source
                                                                                   : ActionSyntax::ToolCalls;
    try
    {
        auto const got = parse_to_json(parser, input, syntax);
        if (fixture.contains("error"))
        {
            out.detail = "expected " + fixture["error"].get<std::string>() + ", parsed " + got.dump();
            return out;
        }
        out.passed = same(got, fixture["expect"]);
        if (!out.passed)
            out.detail = "expected " + fixture["expect"].dump() + ", got " + got.dump();
        return out;
    }
    catch (PromptError const& e)
    {
        if (!fixture.contains("error"))
        {
            out.detail = std::string("unexpected ") + e.what();
            return out;
        }
        auto const want = fixture["error"].get<std::string>();
        if (std::string(to_string(e.code())) != want)
        {
            out.detail = "expected " + want + ", got " + e.what();
            return out;
        }
        if (fixture.contains("detail") && e.detail() != fixture["detail"].get<std::string>())
        {
            out.detail = "expected detail " + fixture["detail"].get<std::string>() + ", got " + e.detail();
            return out;
        }
        if (fixture.contains("error_at"))
        {
            // Expected position: where the needle sits in the literal input.
            auto const needle = fixture["error_at"]["needle"].get<std::string>();
            auto const at = input.find(needle) + fixture["error_at"]["delta"].get<std::size_t>();
            if (!e.position() || *e.position() != at)
            {
                out.detail = "expected position " + std::to_string(at) + ", got "
                             + (e.position() ? std::to_string(*e.position()) : std::string("none"));
                return out;
            }
        }
        out.passed = true;
        return out;
    }
    catch (std::exception const& e)
    {
        out.detail = std::string("unexpected exception ") + e.what();
        return out;
    }
}

} // namespace openloop::testing
