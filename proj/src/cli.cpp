// SPDX-License-Identifier: Apache-2.0
#include <openloop/cli.hpp>
#include <openloop/config.hpp>
#include <openloop/orchestrator.hpp>
#include <openloop/service.hpp>
#include <openloop/text.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;

namespace openloop
{

namespace
{

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

LoopControl* g_signalTarget = nullptr;

extern "C" void on_sigint(int)
{
    if (g_signalTarget)
        g_signalTarget->interrupt();
    // A second Ctrl-C kills the process the usual way.
    std::signal(SIGINT, SIG_DFL);
}

struct SignalScope
{
    explicit SignalScope(LoopControl* control)
    {
        if (!control)
            return;
        g_signalTarget = control;
        _previous = std::signal(SIGINT, on_sigint);
        _active = true;
    }
    ~SignalScope()
    {
        if (!_active)
            return;
        std::signal(SIGINT, _previous);
        g_signalTarget = nullptr;
    }
    SignalScope(const SignalScope&) = delete;
    SignalScope& operator=(const SignalScope&) = delete;

  private:
    void (*_previous)(int) = SIG_DFL;
    bool _active = false;
};

std::unique_ptr<ChatModel> make_model(const AgentConfig& cfg)
{
    if (cfg.model.provider == ModelProvider::Scripted)
        return std::make_unique<ScriptedModel>(cfg.model.script);
    return std::make_unique<HttpChatModel>(
        HttpChatModel::Options { cfg.model.endpoint, api_key_from_env(), cfg.model.retry_base_delay });
}

void print_summary(std::ostream& out, const ExitSummary& summary)
{
    for (auto const& r: summary.runs)
    {
        out << r.run_id << "  ";
        if (r.error)
            out << "error: " << text::single_line(r.error_text);
        else
            out << (r.status ? to_string(*r.status) : "?") << "  " << (r.task ? text::single_line(r.task->text) : "");
        out << '\n';
    }
    out << "runs attempted: " << summary.runs_attempted << ", completed: " << summary.runs_completed
        << ", errors: " << summary.errors << ", stopped: " << to_string(summary.stop_reason) << '\n';
}

} // namespace

int cli_main(int argc, const char* const* argv, CliStreams io)
{
    CLI::App app { "Open-ended ReAct agent loop", "openloop" };
    app.require_subcommand(1);

    std::string configPath;
    std::optional<int> runs;
    bool interactive = false;
    bool serve = false;
    std::optional<int> port;
    std::string workspace;
    bool dryRun = false;

    auto* run = app.add_subcommand("run", "Run the agent loop");
    run->add_option("--config", configPath, "Configuration file (JSON)")->required();
    run->add_option("--runs", runs, "Stop after N runs")->check(CLI::NonNegativeNumber);
    run->add_flag("--interactive", interactive, "Read one input line per run from stdin");
    run->add_flag("--serve", serve, "Expose the HTTP API while running");
    run->add_option("--port", port, "HTTP port (with --serve)")->check(CLI::Range(0, 65535));
    run->add_option("--workspace", workspace, "Workspace directory (overrides the config)");
    run->add_flag("--dry-run", dryRun, "Print the rendered system prompt and exit");

    try
    {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i)
            args.emplace_back(argv[i]);
        app.parse(args);
    }
    catch (CLI::CallForHelp const&)
    {
        io.out << app.help();
        return kExitOk;
    }
    catch (CLI::ParseError const& e)
    {
        io.err << "openloop: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    AgentConfig cfg;
    try
    {
        cfg = AgentConfig::load(configPath);
        if (runs)
            cfg.loop.max_runs = *runs;
        if (port)
            cfg.service.port = static_cast<std::uint16_t>(*port);
        if (!workspace.empty())
            cfg.workspace_root = fs::absolute(workspace).lexically_normal();
        cfg.validate();
    }
    catch (ConfigError const& e)
    {
        io.err << "openloop: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try
    {
        auto model = make_model(cfg);
        EventBus events;
        FeedbackMailbox mailbox;
        LoopControl control;
        Orchestrator orchestrator(cfg, *model, events, mailbox, control);

        if (dryRun)
        {
            io.out << orchestrator.render_system_prompt_now() << '\n';
            return kExitOk;
        }

        SignalScope signals(io.handle_signals ? &control : nullptr);

        std::unique_ptr<ApiService> service;
        if (serve)
        {
            service = std::make_unique<ApiService>(
                orchestrator, events, mailbox, control,
                ServiceOptions { cfg.service.bind, cfg.service.port, cfg.service.static_dir });
            service->start();
            io.err << "openloop: serving on http://" << cfg.service.bind << ':' << service->port() << '\n';
        }

        std::unique_ptr<InputSource> input;
        if (interactive)
            input = std::make_unique<InteractiveInput>(io.in, io.out);
        else
            input = std::make_unique<BatchInput>(cfg.queries);

        auto const summary = orchestrator.run_loop(*input);
        print_summary(io.out, summary);

        if (service)
        {
            if (!control.stop_requested())
            {
                io.err << "openloop: loop finished; still serving until stopped\n";
                control.wait_for_stop();
            }
            events.close();
            service->stop();
        }
        events.close();
        return kExitOk;
    }
    catch (ConfigError const& e)
    {
        io.err << "openloop: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }
    catch (std::exception const& e)
    {
        io.err << "openloop: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace openloop
