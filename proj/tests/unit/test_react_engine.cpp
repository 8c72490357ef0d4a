// SPDX-License-Identifier: Apache-2.0
#include <openloop/react_engine.hpp>
#include <openloop/text.hpp>

#include "support/test_support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace openloop;
using openloop::testing::read_text;
using openloop::testing::snapshot_tree;
using openloop::testing::TempDir;
using openloop::testing::write_text;

namespace
{

std::vector<ScriptedModel::Entry> replies(std::initializer_list<std::string> texts)
{
    std::vector<ScriptedModel::Entry> out;
    for (auto const& t: texts)
        out.push_back({ ScriptedModel::Matcher::always(), t });
    return out;
}

std::string action(std::string_view json)
{
    return "Plan: next step.\n```action\n" + std::string(json) + "\n```";
}

std::string const kReadIn = action(R"([{"tool":"read_file","args":{"path":"in.txt"},"bind":"x"}])");
std::string const kWriteResult = action(R"([{"tool":"write_file","args":{"path":"result.txt","content":"$x"}}])");
std::string const kReadNotes = action(R"([{"tool":"read_file","args":{"path":"notes.txt"}}])");
std::string const kRecord =
    "```record\n{\"task\":\"t\",\"action\":\"read then write\",\"outcome\":\"copied 7\"}\n```";

TaskSpec task(std::string text = "Solve the task in file.txt, write the answer in result.txt")
{
    return { std::move(text), TaskOrigin::SelfGenerated, std::nullopt, std::nullopt };
}

Transcript started(const TaskSpec& spec)
{
    Transcript t("r0001-abcd");
    t.append(Role::System, "You are an agent.", StepTag::UserInput);
    t.append(Role::Assistant, "<task>" + spec.text + "</task>", StepTag::TaskGeneration);
    return t;
}

Clock::time_point fixed_time()
{
    return Clock::time_point(std::chrono::seconds(1767225600)); // 2026-01-01T00:00:00Z
}

ReactSettings settings(int max_steps = 8)
{
    ReactSettings s;
    s.max_steps = max_steps;
    s.clock = fixed_time;
    return s;
}

std::size_t count_tag(const Transcript& t, Role role, StepTag tag)
{
    return static_cast<std::size_t>(std::count_if(t.messages().begin(), t.messages().end(),
                                                  [&](auto const& m) { return m.role == role && m.step_tag == tag; }));
}

} // namespace

TEST_CASE("file-to-file episode: read, write, final")
{
    TempDir jail("react");
    write_text(jail / "in.txt", "7");
    ScriptedModel model(replies({ kReadIn, kWriteResult, "<final>done</final>", kRecord }));
    RecordingModel rec(model);
    ReactEngine engine(rec, jail.path(), settings());
    auto const spec = task();
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);

    CHECK(result.status == EpisodeStatus::FinalAnswer);
    CHECK(result.final_text == "done");
    CHECK(result.steps_used == 3);
    CHECK(read_text(jail / "result.txt") == "7");
    // steps_used model calls plus one summary
    CHECK(rec.requests().size() == 4);
    CHECK(count_tag(t, Role::Tool, StepTag::Observe) == 2);

    CHECK(result.record.run_id == "r0001-abcd");
    CHECK(result.record.task == spec.text);
    CHECK(result.record.action_summary == "read then write");
    CHECK(result.record.outcome == "copied 7");
    CHECK(result.record.artifacts == std::vector<std::string> { "result.txt" });
    CHECK(result.record.ts == "2026-01-01T00:00:00Z");
}

TEST_CASE("prose without action or final runs into the step limit")
{
    TempDir jail("react");
    std::vector<ScriptedModel::Entry> script(5, { ScriptedModel::Matcher::always(), "I am just thinking out loud." });
    ScriptedModel model(script);
    ReactEngine engine(model, jail.path(), settings(4));
    auto const spec = task();
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);

    CHECK(result.status == EpisodeStatus::StepLimit);
    CHECK(result.steps_used == 4);
    CHECK_FALSE(result.final_text);
    int observed = 0;
    for (auto const& m: t.messages())
        if (m.role == Role::Tool && m.content.rfind("NoActionOrFinal", 0) == 0)
            ++observed;
    CHECK(observed == 4);
    CHECK(count_tag(t, Role::Assistant, StepTag::Plan) == 4);
}

TEST_CASE("immediate final answer")
{
    TempDir jail("react");
    ScriptedModel model(replies({ "<final>42</final>", kRecord }));
    ReactEngine engine(model, jail.path(), settings());
    auto const spec = task("answer");
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);
    CHECK(result.steps_used == 1);
    CHECK(result.final_text == "42");
    CHECK(result.status == EpisodeStatus::FinalAnswer);
}

TEST_CASE("prose summary falls back to a deterministic record")
{
    TempDir jail("react");
    write_text(jail / "in.txt", "7");
    ScriptedModel model(replies({ kReadIn, kWriteResult, "<final>done</final>", "All good, nothing more to say." }));
    ReactEngine engine(model, jail.path(), settings());
    auto const spec = task();
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);

    RunRecord const expected { "r0001-abcd", RecordKind::Run, spec.text, "read_file, write_file", "done",
                               { "result.txt" }, "2026-01-01T00:00:00Z" };
    CHECK(result.record == expected);
}

TEST_CASE("aborted at step 0 leaves a minimal record and no summary call")
{
    TempDir jail("react");
    ScriptedModel model({ { ScriptedModel::Matcher::always(), "", true } });
    RecordingModel rec(model);
    ReactEngine engine(rec, jail.path(), settings());
    auto const spec = task();
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);

    CHECK(result.status == EpisodeStatus::Aborted);
    CHECK(result.steps_used == 0);
    REQUIRE(result.abort_reason);
    CHECK(result.abort_reason->rfind("TransportError", 0) == 0);
    CHECK(result.abort_cause);
    CHECK_THROWS_AS(std::rethrow_exception(result.abort_cause), TransportError);
    CHECK(result.record.outcome == "aborted");
    CHECK(result.record.artifacts.empty());
    CHECK(rec.requests().size() == 1);
}

TEST_CASE("script exhaustion mid episode aborts and keeps collected artifacts")
{
    TempDir jail("react");
    write_text(jail / "in.txt", "7");
    ScriptedModel model(replies({ kReadIn, kWriteResult }));
    ReactEngine engine(model, jail.path(), settings());
    auto const spec = task();
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);
    CHECK(result.status == EpisodeStatus::Aborted);
    CHECK(result.steps_used == 2);
    CHECK_THROWS_AS(std::rethrow_exception(result.abort_cause), ScriptExhausted);
    CHECK(result.record.artifacts == std::vector<std::string> { "result.txt" });
    CHECK(result.record.outcome.rfind("aborted: ", 0) == 0);
}

TEST_CASE("loop detector")
{
    Transcript t("r0001-abcd");
    t.append(Role::System, "s", StepTag::UserInput);
    SUBCASE("three identical programs")
    {
        for (int i = 0; i < 3; ++i)
        {
            t.append(Role::Assistant, kReadNotes, StepTag::Act);
            t.append(Role::Tool, "[1] read_file \xE2\x86\x92 x", StepTag::Observe);
        }
        CHECK(loop_detector(t, 3) == std::string(kLoopWarning));
    }
    SUBCASE("one differs in args")
    {
        t.append(Role::Assistant, kReadNotes, StepTag::Act);
        t.append(Role::Assistant, action(R"([{"tool":"read_file","args":{"path":"other.txt"}}])"), StepTag::Act);
        t.append(Role::Assistant, kReadNotes, StepTag::Act);
        CHECK_FALSE(loop_detector(t, 3));
    }
    SUBCASE("fewer than the window")
    {
        t.append(Role::Assistant, kReadNotes, StepTag::Act);
        t.append(Role::Assistant, kReadNotes, StepTag::Act);
        CHECK_FALSE(loop_detector(t, 3));
    }
    SUBCASE("prose between the programs does not count")
    {
        t.append(Role::Assistant, kReadNotes, StepTag::Act);
        t.append(Role::Assistant, "thinking", StepTag::Plan);
        t.append(Role::Assistant, "Different plan text.\n```action\n[{\"tool\":\"read_file\",\"args\":{\"path\":\"notes.txt\"}}]\n```",
                 StepTag::Act);
        t.append(Role::Assistant, kReadNotes, StepTag::Act);
        CHECK(loop_detector(t, 3));
    }
}

TEST_CASE("loop warning is injected once per episode")
{
    TempDir jail("react");
    write_text(jail / "notes.txt", "n");
    std::vector<ScriptedModel::Entry> script(6, { ScriptedModel::Matcher::always(), kReadNotes });
    script.push_back({ ScriptedModel::Matcher::always(), kRecord });
    ScriptedModel model(script);
    ReactEngine engine(model, jail.path(), settings(6));
    auto const spec = task("read notes");
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);
    CHECK(result.status == EpisodeStatus::StepLimit);
    auto const warnings = std::count_if(t.messages().begin(), t.messages().end(),
                                        [](auto const& m) { return m.content == kLoopWarning; });
    CHECK(warnings == 1);
    // Injected right after the third observation.
    auto const it = std::find_if(t.messages().begin(), t.messages().end(),
                                 [](auto const& m) { return m.content == kLoopWarning; });
    CHECK(it->role == Role::System);
    CHECK(std::prev(it)->role == Role::Tool);
    CHECK(std::count_if(t.messages().begin(), it, [](auto const& m) { return m.step_tag == StepTag::Observe; }) == 3);
}

TEST_CASE("executor and parse errors reach a later prompt verbatim")
{
    TempDir jail("react");
    std::string const malformed = "```action\n[{\"tool\": }]\n```";
    ScriptedModel model(replies({ action(R"([{"tool":"read_file","args":{"path":"missing.txt"}}])"), malformed,
                                  "<final>gave up</final>", kRecord }));
    RecordingModel rec(model);
    ReactEngine engine(rec, jail.path(), settings());
    auto const spec = task("x");
    auto t = started(spec);
    engine.run_episode(spec, t);

    std::vector<std::string> errors;
    for (auto const& m: t.messages())
        if (m.role == Role::Tool)
            errors.push_back(m.content);
    REQUIRE(errors.size() == 2);
    CHECK(text::contains(errors[0], "NotFound: missing.txt"));
    CHECK(errors[1].rfind("MalformedAction", 0) == 0);
    for (auto const& e: errors)
    {
        bool seen = false;
        for (auto const& request: rec.requests())
            for (auto const& m: request)
                seen = seen || m.content == e;
        CHECK(seen);
    }
}

TEST_CASE("property: the run log reproduces every prompt sent")
{
    TempDir jail("react");
    TempDir logs("logs");
    write_text(jail / "in.txt", "7");
    write_text(jail / "notes.txt", std::string(3000, 'n'));
    ScriptedModel model(replies({ kReadIn, "thinking only", kReadNotes, kReadNotes, kWriteResult,
                                  "<final>done</final>", kRecord }));
    RecordingModel rec(model);
    auto s = settings();
    s.char_budget = 2500; // forces trimming of older messages
    ReactEngine engine(rec, jail.path(), s);
    auto const spec = task();
    auto t = started(spec);
    engine.run_episode(spec, t);

    auto const replay = read_run_log(write_run_log(logs.path(), t));
    auto const requests = rec.requests();
    REQUIRE(requests.size() == 7);
    for (auto const& request: requests)
    {
        auto const lastSeq = request.back().seq;
        auto const end = std::find_if(replay.begin(), replay.end(), [&](auto const& m) { return m.seq == lastSeq; });
        REQUIRE(end != replay.end());
        std::vector<Message> const prefix(replay.begin(), std::next(end));
        CHECK(render_prompt(prefix, s.char_budget) == request);
        // Each prompt ends with the nudge inserted just before the call.
        CHECK(request.back().step_tag == StepTag::Nudge);
    }

    // Every model reply is in the transcript in order.
    std::size_t assistantReplies = 0;
    for (auto const& m: replay)
        if (m.role == Role::Assistant && m.step_tag != StepTag::TaskGeneration)
            ++assistantReplies;
    CHECK(assistantReplies == requests.size());
}

TEST_CASE("episode has no filesystem effects outside the jail")
{
    TempDir base("react");
    auto const jail = base / "jail";
    write_text(base / "outside" / "keep.txt", "keep");
    write_text(jail / "in.txt", "7");
    std::filesystem::create_symlink("../outside", jail / "out");
    auto const before = snapshot_tree(base / "outside");
    ScriptedModel model(replies({ action(R"([{"tool":"write_file","args":{"path":"out/keep.txt","content":"x"}}])"),
                                  action(R"([{"tool":"write_file","args":{"path":"../evil.txt","content":"x"}}])"),
                                  action(R"([{"tool":"write_file","args":{"path":"ok.txt","content":"x"}}])"),
                                  "<final>done</final>", kRecord }));
    ReactEngine engine(model, jail, settings());
    auto const spec = task("x");
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);
    CHECK(result.status == EpisodeStatus::FinalAnswer);
    CHECK(openloop::testing::diff_trees(before, snapshot_tree(base / "outside")).empty());
    CHECK_FALSE(std::filesystem::exists(base / "evil.txt"));
    CHECK(result.record.artifacts == std::vector<std::string> { "ok.txt" });
}

TEST_CASE("observation hook sees each observation")
{
    TempDir jail("react");
    write_text(jail / "in.txt", "7");
    ScriptedModel model(replies({ kReadIn, kWriteResult, "<final>done</final>", kRecord }));
    ReactEngine engine(model, jail.path(), settings());
    std::vector<std::string> seen;
    engine.set_observation_hook([&](const Transcript& tr, const Observation& o) {
        CHECK(tr.messages().back().content == o.render());
        seen.push_back(o.body);
    });
    auto const spec = task();
    auto t = started(spec);
    engine.run_episode(spec, t);
    REQUIRE(seen.size() == 2);
    CHECK(text::contains(seen[0], "read_file"));
}

TEST_CASE("subprocess syntax runs source blocks")
{
    TempDir jail("react");
    auto s = settings();
    s.syntax = ActionSyntax::Source;
    s.subprocess = { true, "sh {file}", std::chrono::seconds(10) };
    ScriptedModel model(replies({ "```action\necho hi > made.txt\necho listed\n```", "<final>ok</final>", kRecord }));
    ReactEngine engine(model, jail.path(), s);
    auto const spec = task("make a file");
    auto t = started(spec);
    auto const result = engine.run_episode(spec, t);
    CHECK(result.status == EpisodeStatus::FinalAnswer);
    CHECK(read_text(jail / "made.txt") == "hi\n");
    CHECK(result.trace.tools == std::vector<std::string> { "subprocess" });
}
