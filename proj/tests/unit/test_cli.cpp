// SPDX-License-Identifier: Apache-2.0
#include <openloop/cli.hpp>
#include <openloop/memory.hpp>
#include <openloop/prompt_kit.hpp>
#include <openloop/text.hpp>

#include "support/stub_server.hpp"
#include "support/test_support.hpp"

#include <doctest.h>

#include <atomic>
#include <sstream>
#include <thread>

using namespace openloop;
using openloop::testing::TempDir;
using openloop::testing::write_text;

namespace
{

struct Result
{
    int code = -1;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args, std::string stdin_text = {})
{
    args.insert(args.begin(), "openloop");
    std::vector<const char*> argv;
    for (auto const& a: args)
        argv.push_back(a.c_str());
    std::istringstream in(stdin_text);
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = cli_main(static_cast<int>(argv.size()), argv.data(), CliStreams { in, out, err, false });
    r.out = out.str();
    r.err = err.str();
    return r;
}

/// Scripted config answering every prompt with the same few replies.
std::string scripted_config(int repeats)
{
    auto script = Json::array();
    for (int i = 0; i < repeats; ++i)
    {
        script.push_back({ { "match", { { "contains", "generate the task" } } },
                           { "reply", "<task>write hello.txt</task>" } });
        script.push_back({ { "match", { { "contains", "plan your next step" } } },
                           { "reply", "```action\n[{\"tool\":\"write_file\",\"args\":{\"path\":\"hello.txt\","
                                      "\"content\":\"hi\"}}]\n```" } });
        script.push_back({ { "match", { { "contains", "plan your next step" } } },
                           { "reply", "<final>wrote hello.txt</final>" } });
        script.push_back({ { "match", { { "contains", "summarize" } } },
                           { "reply", "```record\n{\"task\":\"t\",\"action\":\"write_file\",\"outcome\":\"ok\"}\n```" } });
    }
    Json cfg { { "workspace_root", "ws" },
               { "model", { { "provider", "scripted" }, { "script", script } } },
               { "loop", { { "seed", 4 } } } };
    return cfg.dump(2);
}

} // namespace

TEST_CASE("run with a scripted config exits 0 and prints a summary")
{
    TempDir d("cli");
    write_text(d / "cfg.json", scripted_config(2));
    auto const r = run_cli({ "run", "--config", (d / "cfg.json").string(), "--runs", "2" });
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(text::contains(r.out, "runs attempted: 2, completed: 2, errors: 0, stopped: max_runs"));
    CHECK(load_records(d / "ws" / "memory.jsonl").records.size() == 2);
    CHECK(openloop::testing::read_text(d / "ws" / "hello.txt") == "hi");
}

TEST_CASE("missing config exits 2 naming the path")
{
    TempDir d("cli");
    auto const path = (d / "missing.json").string();
    auto const r = run_cli({ "run", "--config", path });
    CHECK(r.code == 2);
    CHECK(text::contains(r.err, path));
    CHECK(text::contains(r.err, "Usage"));
}

TEST_CASE("flag errors exit 2")
{
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({ "run" }).code == 2);
    CHECK(run_cli({ "run", "--config", "x.json", "--bogus" }).code == 2);
    CHECK(run_cli({ "run", "--config", "x.json", "--runs", "-1" }).code == 2);
    CHECK(run_cli({ "--help" }).code == 0);
}

TEST_CASE("invalid config values exit 2")
{
    TempDir d("cli");
    write_text(d / "cfg.json", R"({"loop":{"max_steps":0}})");
    auto const r = run_cli({ "run", "--config", (d / "cfg.json").string() });
    CHECK(r.code == 2);
    CHECK(text::contains(r.err, "max_steps"));
}

TEST_CASE("dry run prints the system prompt without contacting the model")
{
    openloop::testing::StubServer endpoint([](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        FAIL("the model endpoint must not be contacted");
    });
    TempDir d("cli");
    Json cfg { { "model", { { "endpoint", endpoint.url() } } } };
    write_text(d / "cfg.json", cfg.dump());
    auto const r = run_cli({ "run", "--config", (d / "cfg.json").string(), "--dry-run" });
    CHECK(r.code == 0);
    CHECK(text::contains(r.out, kCuriosityClause));
    CHECK(text::contains(r.out, "explore the environment"));
    CHECK(endpoint.hits() == 0);
    CHECK_FALSE(std::filesystem::exists(d / "workspace" / "runs"));
}

TEST_CASE("--workspace overrides the config")
{
    TempDir d("cli");
    write_text(d / "cfg.json", scripted_config(1));
    auto const r = run_cli({ "run", "--config", (d / "cfg.json").string(), "--runs", "1", "--workspace",
                             (d / "other").string() });
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(d / "other" / "hello.txt"));
    CHECK_FALSE(std::filesystem::exists(d / "ws"));
}

TEST_CASE("interactive mode reads stdin until EOF")
{
    TempDir d("cli");
    write_text(d / "cfg.json", scripted_config(2));
    auto const r = run_cli({ "run", "--config", (d / "cfg.json").string(), "--interactive" }, "write hello\n\n");
    CHECK(r.code == 0);
    CHECK(text::contains(r.out, "runs attempted: 2"));
    CHECK(text::contains(r.out, "stopped: input_exhausted"));
}

TEST_CASE("a busy port is a runtime failure")
{
    openloop::testing::StubServer busy([](const httplib::Request&, httplib::Response&) {});
    TempDir d("cli");
    write_text(d / "cfg.json", scripted_config(1));
    auto const port = busy.url().substr(busy.url().rfind(':') + 1);
    auto const r = run_cli({ "run", "--config", (d / "cfg.json").string(), "--serve", "--port", port });
    CHECK(r.code == 1);
    CHECK(text::contains(r.err, "BindError"));
}

TEST_CASE("--serve keeps the API up until a stop command")
{
    TempDir d("cli");
    write_text(d / "cfg.json", scripted_config(1));
    auto const port = openloop::testing::unused_port();
    Result r;
    std::atomic<bool> done { false };
    std::thread cli([&] {
        r = run_cli({ "run", "--config", (d / "cfg.json").string(), "--runs", "1", "--serve", "--port",
                      std::to_string(port) });
        done = true;
    });
    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(1, 0);
    client.set_read_timeout(5, 0);
    bool sawRun = false;
    for (int i = 0; i < 300 && !sawRun && !done; ++i)
    {
        if (auto res = client.Get("/api/runs"); res && res->status == 200)
            sawRun = Json::parse(res->body).size() == 1 && Json::parse(res->body)[0]["live"] == false;
        if (!sawRun)
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    CHECK(sawRun);
    if (!done)
    {
        auto stop = client.Post("/api/control", R"({"command":"stop"})", "application/json");
        CHECK((stop && stop->status == 200));
    }
    cli.join();
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(text::contains(r.err, "serving on http://127.0.0.1:" + std::to_string(port)));
}
