// SPDX-License-Identifier: Apache-2.0
#include <openloop/config.hpp>
#include <openloop/error.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace openloop
{

namespace
{

// {{{ strict object reader
class Section
{
  public:
    Section(const Json& j, std::string prefix): _json(j), _prefix(std::move(prefix))
    {
        if (!j.is_object())
            throw ConfigError(where() + " must be an object");
    }

    ~Section() = default;

    /// Throws on keys nobody asked for. Call after all reads.
    void finish() const
    {
        for (auto const& [key, _]: _json.items())
            if (!_seen.count(key))
                throw ConfigError("unknown key " + qualified(key));
    }

    const Json* get(const std::string& key)
    {
        _seen.insert(key);
        auto it = _json.find(key);
        if (it == _json.end() || it->is_null())
            return nullptr;
        return &*it;
    }

    std::string qualified(const std::string& key) const { return _prefix.empty() ? key : _prefix + "." + key; }

    void read(const std::string& key, std::string& out)
    {
        if (auto const* v = get(key))
        {
            if (!v->is_string())
                throw ConfigError(qualified(key) + " must be a string");
            out = v->get<std::string>();
        }
    }

    void read(const std::string& key, bool& out)
    {
        if (auto const* v = get(key))
        {
            if (!v->is_boolean())
                throw ConfigError(qualified(key) + " must be a boolean");
            out = v->get<bool>();
        }
    }

    void read(const std::string& key, double& out)
    {
        if (auto const* v = get(key))
        {
            if (!v->is_number())
                throw ConfigError(qualified(key) + " must be a number");
            out = v->get<double>();
        }
    }

    template <typename T>
    void read_integer(const std::string& key, T& out, long long lo, long long hi)
    {
        if (auto const* v = get(key))
            out = static_cast<T>(integer(key, *v, lo, hi));
    }

    template <typename T>
    void read_integer(const std::string& key, std::optional<T>& out, long long lo, long long hi)
    {
        if (auto const* v = get(key))
            out = static_cast<T>(integer(key, *v, lo, hi));
    }

    void read_path(const std::string& key, fs::path& out, const fs::path& base)
    {
        std::string s;
        if (get_string(key, s))
            out = resolve(base, s);
    }

    void read_path(const std::string& key, std::optional<fs::path>& out, const fs::path& base)
    {
        std::string s;
        if (get_string(key, s))
            out = resolve(base, s);
    }

    void read_seconds(const std::string& key, std::chrono::duration<double>& out)
    {
        double s = out.count();
        read(key, s);
        if (!(s > 0) || !std::isfinite(s))
            throw ConfigError(qualified(key) + " must be a positive number of seconds");
        out = std::chrono::duration<double>(s);
    }

    static fs::path resolve(const fs::path& base, const std::string& s)
    {
        if (s.empty())
            throw ConfigError("empty path");
        fs::path p(s);
        return p.is_absolute() ? p : (base / p).lexically_normal();
    }

  private:
    bool get_string(const std::string& key, std::string& out)
    {
        auto const* v = get(key);
        if (!v)
            return false;
        if (!v->is_string() || v->get<std::string>().empty())
            throw ConfigError(qualified(key) + " must be a non-empty path string");
        out = v->get<std::string>();
        return true;
    }

    long long integer(const std::string& key, const Json& v, long long lo, long long hi) const
    {
        if (!v.is_number_integer())
            throw ConfigError(qualified(key) + " must be an integer");
        long long n = 0;
        if (v.is_number_unsigned())
        {
            auto u = v.get<unsigned long long>();
            if (u > static_cast<unsigned long long>(std::numeric_limits<long long>::max()))
                throw ConfigError(qualified(key) + " is out of range");
            n = static_cast<long long>(u);
        }
        else
            n = v.get<long long>();
        if (n < lo || n > hi)
            throw ConfigError(qualified(key) + " must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return n;
    }

    std::string where() const { return _prefix.empty() ? "config" : _prefix; }

    const Json& _json;
    std::string _prefix;
    std::set<std::string> _seen;
};
// }}}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json parse_json_file(const fs::path& path)
{
    auto text = read_text(path);
    try
    {
        return Json::parse(text);
    }
    catch (Json::parse_error const& e)
    {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

constexpr long long kBig = 1LL << 40;

} // namespace

fs::path AgentConfig::memory_path() const
{
    return memory.path ? *memory.path : workspace_root / "memory.jsonl";
}

void AgentConfig::validate() const
{
    try
    {
        model.params.validate();
    }
    catch (std::invalid_argument const& e)
    {
        throw ConfigError(std::string("model.params: ") + e.what());
    }
    if (model.provider == ModelProvider::OpenAI && model.endpoint.empty())
        throw ConfigError("model.endpoint is required for provider openai");
    if (model.provider == ModelProvider::Scripted && model.script.empty())
        throw ConfigError("model.script is required for provider scripted");
    if (workspace_root.empty())
        throw ConfigError("workspace_root must not be empty");
    if (loop.max_steps < 1)
        throw ConfigError("loop.max_steps must be at least 1");
    if (loop.max_runs && *loop.max_runs < 0)
        throw ConfigError("loop.max_runs must not be negative");
    if (!(loop.dedup_threshold >= 0.0 && loop.dedup_threshold <= 1.0))
        throw ConfigError("loop.dedup_threshold must be in [0, 1]");
    if (loop.observation_cap < 16)
        throw ConfigError("loop.observation_cap must be at least 16");
    if (loop.loop_window < 2)
        throw ConfigError("loop.loop_window must be at least 2");
    if (memory.digest.char_budget < 32)
        throw ConfigError("memory.digest_char_budget must be at least 32");
    if (executor.mode == ExecutorMode::Subprocess && executor.command_template.find("{file}") == std::string::npos)
        throw ConfigError("executor.command_template must contain {file}");
}

AgentConfig AgentConfig::from_json(const Json& j, const fs::path& base_dir)
{
    AgentConfig cfg;
    cfg.workspace_root = (base_dir / cfg.workspace_root).lexically_normal();

    Section top(j, "");
    top.read_path("workspace_root", cfg.workspace_root, base_dir);

    if (auto const* m = top.get("model"))
    {
        Section s(*m, "model");
        std::string provider = "openai";
        s.read("provider", provider);
        if (provider == "openai")
            cfg.model.provider = ModelProvider::OpenAI;
        else if (provider == "scripted")
            cfg.model.provider = ModelProvider::Scripted;
        else
            throw ConfigError("model.provider must be \"openai\" or \"scripted\"");
        s.read("endpoint", cfg.model.endpoint);
        s.read("name", cfg.model.params.model_name);
        int delayMs = static_cast<int>(cfg.model.retry_base_delay.count());
        s.read_integer("retry_base_delay_ms", delayMs, 0, 60000);
        cfg.model.retry_base_delay = std::chrono::milliseconds(delayMs);
        if (auto const* p = s.get("params"))
        {
            Section ps(*p, "model.params");
            ps.read("temperature", cfg.model.params.temperature);
            ps.read_integer("max_tokens", cfg.model.params.max_tokens, 1, kBig);
            ps.read_seconds("timeout", cfg.model.params.timeout);
            ps.read_integer("max_retries", cfg.model.params.max_retries, 0, 5);
            ps.finish();
        }
        std::optional<fs::path> scriptPath;
        s.read_path("script_path", scriptPath, base_dir);
        auto const* inlineScript = s.get("script");
        if (inlineScript && scriptPath)
            throw ConfigError("model.script and model.script_path are mutually exclusive");
        if (inlineScript)
            cfg.model.script = ScriptedModel::parse_script(*inlineScript);
        else if (scriptPath)
            cfg.model.script = ScriptedModel::parse_script(parse_json_file(*scriptPath));
        s.finish();
    }

    if (auto const* m = top.get("memory"))
    {
        Section s(*m, "memory");
        s.read_path("path", cfg.memory.path, base_dir);
        s.read("store_feedback", cfg.memory.store_feedback);
        s.read_integer("digest_max_entries", cfg.memory.digest.max_entries, 0, kBig);
        s.read_integer("digest_char_budget", cfg.memory.digest.char_budget, 0, kBig);
        s.finish();
    }

    if (auto const* l = top.get("loop"))
    {
        Section s(*l, "loop");
        s.read_integer("max_steps", cfg.loop.max_steps, 1, 10000);
        s.read_integer("max_runs", cfg.loop.max_runs, 0, kBig);
        std::string policy(to_string(cfg.loop.duplicate_policy));
        s.read("duplicate_policy", policy);
        auto parsed = parse_duplicate_policy(policy);
        if (!parsed)
            throw ConfigError("loop.duplicate_policy must be allow, warn or regenerate_once");
        cfg.loop.duplicate_policy = *parsed;
        s.read("dedup_threshold", cfg.loop.dedup_threshold);
        s.read_integer("observation_cap", cfg.loop.observation_cap, 0, kBig);
        s.read_integer("char_budget", cfg.loop.char_budget, 1, kBig);
        s.read_integer("loop_window", cfg.loop.loop_window, 0, 1000);
        s.read_integer("seed", cfg.loop.seed, 0, std::numeric_limits<long long>::max());
        s.finish();
    }

    if (auto const* e = top.get("executor"))
    {
        Section s(*e, "executor");
        std::string mode = "toolcalls";
        s.read("mode", mode);
        if (mode == "toolcalls")
            cfg.executor.mode = ExecutorMode::ToolCalls;
        else if (mode == "subprocess")
            cfg.executor.mode = ExecutorMode::Subprocess;
        else
            throw ConfigError("executor.mode must be \"toolcalls\" or \"subprocess\"");
        s.read("command_template", cfg.executor.command_template);
        s.read_seconds("timeout", cfg.executor.timeout);
        s.finish();
    }

    if (auto const* p = top.get("prompts"))
    {
        Section s(*p, "prompts");
        s.read_path("system", cfg.prompts.system, base_dir);
        s.read_path("nudges", cfg.prompts.nudges, base_dir);
        if (auto const* c = s.get("curiosity"))
        {
            if (c->is_boolean())
                cfg.prompts.curiosity_clause = c->get<bool>() ? std::string(kCuriosityClause) : std::string();
            else if (c->is_string())
                cfg.prompts.curiosity_clause = c->get<std::string>();
            else
                throw ConfigError("prompts.curiosity must be a boolean or a string");
        }
        s.finish();
    }

    if (auto const* v = top.get("service"))
    {
        Section s(*v, "service");
        s.read_integer("port", cfg.service.port, 0, 65535);
        s.read("bind", cfg.service.bind);
        s.read_path("static_dir", cfg.service.static_dir, base_dir);
        s.finish();
    }

    if (auto const* q = top.get("queries"))
    {
        if (!q->is_array())
            throw ConfigError("queries must be an array");
        for (auto const& item: *q)
        {
            if (item.is_null())
                cfg.queries.emplace_back(std::nullopt);
            else if (item.is_string())
                cfg.queries.emplace_back(item.get<std::string>());
            else
                throw ConfigError("queries entries must be strings or null");
        }
    }

    top.finish();
    cfg.validate();
    return cfg;
}

AgentConfig AgentConfig::load(const fs::path& path)
{
    std::error_code ec;
    if (!fs::is_regular_file(path, ec))
        throw ConfigError("config file not found: " + path.string());
    auto base = fs::absolute(path, ec).parent_path();
    try
    {
        return from_json(parse_json_file(path), base);
    }
    catch (ConfigError const& e)
    {
        if (e.detail().find(path.string()) != std::string::npos)
            throw;
        throw ConfigError(path.string() + ": " + e.detail());
    }
}

PromptTemplate AgentConfig::system_template() const
{
    if (prompts.system)
        return PromptTemplate::load(*prompts.system);
    return executor.mode == ExecutorMode::Subprocess ? PromptTemplate::default_system_subprocess()
                                                     : PromptTemplate::default_system();
}

NudgeSet AgentConfig::nudge_set() const
{
    return prompts.nudges ? NudgeSet::load(*prompts.nudges) : NudgeSet::defaults();
}

} // namespace openloop
