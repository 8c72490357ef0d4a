// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/goal_engine.hpp>
#include <openloop/memory.hpp>
#include <openloop/model_gateway.hpp>
#include <openloop/prompt_kit.hpp>
#include <openloop/toolbelt.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace openloop
{

enum class ModelProvider
{
    OpenAI,   // OpenAI-compatible HTTP endpoint
    Scripted, // canned replies, no network
};

enum class ExecutorMode
{
    ToolCalls,
    Subprocess,
};

/// Everything a loop needs, read from one JSON file. Relative paths are
/// resolved against the directory of that file.
struct AgentConfig
{
    struct Model
    {
        ModelProvider provider = ModelProvider::OpenAI;
        std::string endpoint = "http://127.0.0.1:8080";
        ChatParams params;
        std::chrono::milliseconds retry_base_delay { 500 };
        std::vector<ScriptedModel::Entry> script;
    } model;

    std::filesystem::path workspace_root = "workspace";

    struct Memory
    {
        std::optional<std::filesystem::path> path; // default: <workspace>/memory.jsonl
        bool store_feedback = true;
        DigestLimits digest;
    } memory;

    struct Loop
    {
        int max_steps = 8;
        std::optional<int> max_runs; // absent: run until stopped
        DuplicatePolicy duplicate_policy = DuplicatePolicy::Warn;
        double dedup_threshold = kDefaultDedupThreshold;
        std::size_t observation_cap = kDefaultObservationCap;
        std::size_t char_budget = 24000;
        std::size_t loop_window = 3;
        std::optional<std::uint64_t> seed; // run id suffixes
    } loop;

    struct Executor
    {
        ExecutorMode mode = ExecutorMode::ToolCalls;
        std::string command_template;
        std::chrono::duration<double> timeout = std::chrono::seconds(30);
    } executor;

    struct Prompts
    {
        std::optional<std::filesystem::path> system;
        std::optional<std::filesystem::path> nudges;
        std::string curiosity_clause = std::string(kCuriosityClause);
    } prompts;

    struct Service
    {
        std::uint16_t port = 8765;
        std::string bind = "127.0.0.1";
        std::optional<std::filesystem::path> static_dir;
    } service;

    /// Batch input, one entry per run; nullopt means "no input this run".
    std::vector<std::optional<std::string>> queries;

    std::filesystem::path memory_path() const;
    std::filesystem::path runs_dir() const { return workspace_root / "runs"; }

    /// Throws ConfigError naming the offending key.
    void validate() const;

    static AgentConfig from_json(const Json& j, const std::filesystem::path& base_dir);

    /// Throws ConfigError naming the path when it cannot be read or parsed.
    static AgentConfig load(const std::filesystem::path& path);

    PromptTemplate system_template() const;
    NudgeSet nudge_set() const;
};

} // namespace openloop
