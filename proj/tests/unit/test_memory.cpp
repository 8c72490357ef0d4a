// SPDX-License-Identifier: Apache-2.0
#include <openloop/error.hpp>
#include <openloop/memory.hpp>
#include <openloop/text.hpp>

#include "support/test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <set>
#include <thread>

using namespace openloop;
using openloop::testing::read_text;
using openloop::testing::TempDir;
using openloop::testing::write_text;

namespace
{

RunRecord run_record(std::string id, std::string task, std::string outcome = "ok")
{
    RunRecord r;
    r.run_id = std::move(id);
    r.task = std::move(task);
    r.action_summary = "read_file";
    r.outcome = std::move(outcome);
    r.ts = "2026-01-01T00:00:00Z";
    return r;
}

} // namespace

TEST_CASE("run ids are monotone, well formed and unique")
{
    RunIdGenerator ids(42);
    std::set<std::string> seen;
    std::uint64_t last = 0;
    for (int i = 0; i < 200; ++i)
    {
        auto id = ids.next();
        CHECK(RunIdGenerator::is_well_formed(id));
        auto n = RunIdGenerator::number_of(id);
        REQUIRE(n);
        CHECK(*n == last + 1);
        last = *n;
        CHECK(seen.insert(id).second);
    }
    CHECK(ids.next().substr(0, 6) == "r0201-");
}

TEST_CASE("run id suffix is reproducible with a seed")
{
    RunIdGenerator a(7), b(7);
    for (int i = 0; i < 5; ++i)
        CHECK(a.next() == b.next());
}

TEST_CASE("observe continues numbering past existing ids")
{
    RunIdGenerator ids(1);
    ids.observe("r0041-beef");
    ids.observe("r0007-0000");
    ids.observe("garbage");
    CHECK(RunIdGenerator::number_of(ids.next()) == 42u);
    CHECK_FALSE(RunIdGenerator::is_well_formed("r001-abcd"));
    CHECK_FALSE(RunIdGenerator::is_well_formed("r0001-abcg"));
    CHECK_FALSE(RunIdGenerator::is_well_formed("r0001-abcd/../x"));
    CHECK(RunIdGenerator::is_well_formed("r12345-00ff"));
}

TEST_CASE("transcript assigns consecutive seq and notifies the observer")
{
    Transcript t("r0001-aaaa");
    std::vector<std::uint64_t> observed;
    t.set_observer([&](const Transcript&, const Message& m) { observed.push_back(m.seq); });
    t.append(Role::System, "sys", StepTag::UserInput);
    t.append(Role::User, "hi", StepTag::UserInput);
    t.append(Role::Assistant, "<task>x</task>", StepTag::TaskGeneration);
    CHECK(observed == std::vector<std::uint64_t> { 1, 2, 3 });
    CHECK(t.messages()[2].role == Role::Assistant);
}

TEST_CASE("reset_transcript starts empty with a fresh id")
{
    RunIdGenerator ids(3);
    Transcript t(ids.next());
    t.append(Role::System, "x", StepTag::UserInput);
    auto fresh = reset_transcript(t, ids);
    CHECK(fresh.empty());
    CHECK(fresh.run_id() != t.run_id());
}

TEST_CASE("run log round trips messages byte for byte")
{
    TempDir dir("log");
    Transcript t("r0003-abcd");
    t.append(Role::System, "line one\nline two \"quoted\"", StepTag::UserInput);
    t.append(Role::Tool, "[1] read_file \xE2\x86\x92 caf\xC3\xA9", StepTag::Observe);
    auto const path = write_run_log(dir.path() / "runs", t);
    CHECK(path.filename() == "r0003-abcd.jsonl");
    CHECK(read_run_log(path) == t.messages());
    CHECK_THROWS_AS(read_run_log(dir.path() / "none.jsonl"), StorageError);
}

TEST_CASE("record validation")
{
    auto r = run_record("r0001-aaaa", "task");
    CHECK_NOTHROW(validate_record(r));
    r.task = "   ";
    CHECK_THROWS_AS(validate_record(r), std::invalid_argument);
    r.kind = RecordKind::Feedback;
    CHECK_NOTHROW(validate_record(r));
    r = run_record("r0001-aaaa", "task");
    r.artifacts = { "../escape.txt" };
    CHECK_THROWS_AS(validate_record(r), std::invalid_argument);
    r.artifacts = { "/abs.txt" };
    CHECK_THROWS_AS(validate_record(r), std::invalid_argument);
    r.artifacts = { "dir/ok.txt" };
    CHECK_NOTHROW(validate_record(r));
}

TEST_CASE("record JSON keys")
{
    auto r = run_record("r0001-aaaa", "t");
    r.artifacts = { "a.txt" };
    auto j = to_json(r);
    CHECK(j.dump()
          == R"({"run_id":"r0001-aaaa","kind":"run","task":"t","action":"read_file","outcome":"ok","artifacts":["a.txt"],"ts":"2026-01-01T00:00:00Z"})");
    CHECK(record_from_json(j) == r);
}

TEST_CASE("memory store appends one line per record and survives reopen")
{
    TempDir dir("mem");
    auto const path = dir.path() / "sub" / "memory.jsonl";
    {
        MemoryStore store(path);
        store.append(run_record("r0001-aaaa", "first"));
        store.append(run_record("r0002-bbbb", "second"));
        CHECK(store.snapshot().size() == 2);
    }
    MemoryStore again(path);
    auto const records = again.snapshot();
    REQUIRE(records.size() == 2);
    CHECK(records[0].task == "first");
    CHECK(records[1].task == "second");
    auto const content = read_text(path);
    CHECK(std::count(content.begin(), content.end(), '\n') == 2);
}

TEST_CASE("memory store skips corrupt lines and repairs a missing final newline")
{
    TempDir dir("mem");
    auto const path = dir.path() / "memory.jsonl";
    write_text(path, to_json(run_record("r0001-aaaa", "kept")).dump() + "\n{broken json\n\n"
                         + to_json(run_record("r0002-aaaa", "also kept")).dump());
    MemoryStore store(path);
    CHECK(store.snapshot().size() == 2);
    CHECK(store.skipped() == 1);
    store.append(run_record("r0003-aaaa", "new"));
    auto reloaded = load_records(path);
    CHECK(reloaded.records.size() == 3);
    CHECK(reloaded.records.back().task == "new");
}

TEST_CASE("memory store rejects invalid records without touching the file")
{
    TempDir dir("mem");
    auto const path = dir.path() / "memory.jsonl";
    MemoryStore store(path);
    CHECK_THROWS_AS(store.append(run_record("r0001-aaaa", "")), std::invalid_argument);
    CHECK_FALSE(std::filesystem::exists(path));
}

TEST_CASE("memory store accepts /dev/null as a throwaway sink")
{
    MemoryStore store("/dev/null");
    CHECK_NOTHROW(store.append(run_record("r0001-aaaa", "lost")));
    CHECK(store.reload().records.empty());
}

TEST_CASE("snapshot is safe while the writer appends")
{
    TempDir dir("mem");
    MemoryStore store(dir.path() / "m.jsonl");
    std::atomic<bool> done { false };
    std::thread reader([&] {
        std::size_t last = 0;
        while (!done.load())
        {
            auto n = store.snapshot().size();
            CHECK(n >= last);
            last = n;
        }
    });
    for (int i = 0; i < 50; ++i)
        store.append(run_record("r0001-aaaa", "t" + std::to_string(i)));
    done = true;
    reader.join();
    CHECK(store.snapshot().size() == 50);
}

TEST_CASE("digest lists newest last and marks the empty case")
{
    CHECK(digest({}) == kEmptyDigest);
    std::vector<RunRecord> rs { run_record("r1", "alpha", "done a"), run_record("r2", "beta", "done b") };
    rs.push_back(run_record("r3", "user says hi", "user feedback"));
    rs.back().kind = RecordKind::Feedback;
    CHECK(digest(rs) == "- [run] task=alpha outcome=done a\n- [run] task=beta outcome=done b\n"
                        "- [feedback] task=user says hi outcome=user feedback");
    CHECK(digest(rs, 1, 4000) == "- [feedback] task=user says hi outcome=user feedback");
}

TEST_CASE("property: digest never exceeds its budget and keeps the newest entry")
{
    std::mt19937 rng(99);
    auto word = [&] {
        static constexpr std::string_view kWords[] = { "read", "notes", "caf\xC3\xA9", "summarize", "x",
                                                       "\xE6\x97\xA5\xE6\x9C\xAC", "write\nfile", "" };
        return std::string(kWords[std::uniform_int_distribution<int>(0, 7)(rng)]);
    };
    for (int iter = 0; iter < 400; ++iter)
    {
        std::vector<RunRecord> rs;
        auto const n = std::uniform_int_distribution<int>(1, 30)(rng);
        for (int i = 0; i < n; ++i)
        {
            std::string task = "task" + std::to_string(i);
            for (int w = std::uniform_int_distribution<int>(0, 12)(rng); w > 0; --w)
                task += " " + word();
            std::string outcome;
            for (int w = std::uniform_int_distribution<int>(0, 12)(rng); w > 0; --w)
                outcome += word() + " ";
            rs.push_back(run_record("r" + std::to_string(i), task, outcome));
        }
        auto const budget = std::uniform_int_distribution<std::size_t>(0, 1500)(rng);
        auto const entries = std::uniform_int_distribution<std::size_t>(1, 25)(rng);
        auto const d = digest(rs, entries, budget);
        CHECK(text::length(d) <= budget);
        CHECK(text::is_valid_utf8(d));
        if (budget >= 200)
        {
            // The newest record always shows, possibly clipped to a few characters.
            auto const cut = d.rfind('\n');
            auto const lastLine = d.substr(cut == std::string::npos ? 0 : cut + 1);
            INFO(d);
            CHECK(lastLine.rfind("- [run] task=t", 0) == 0);
            auto const newest = "task" + std::to_string(n - 1);
            if (budget >= 1500 / 2 && entries == 1)
                CHECK(lastLine.rfind("- [run] task=" + newest, 0) == 0);
        }
    }
}
