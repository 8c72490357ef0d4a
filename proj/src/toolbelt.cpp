// SPDX-License-Identifier: Apache-2.0
#include <openloop/text.hpp>
#include <openloop/toolbelt.hpp>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace openloop
{

ToolError::ToolError(Code code, std::string detail):
    Error(std::string(to_string(code)), std::move(detail)), _code(code)
{
}

std::string_view to_string(ToolError::Code code)
{
    switch (code)
    {
        case ToolError::Code::InvalidPath: return "InvalidPath";
        case ToolError::Code::AbsolutePathRejected: return "AbsolutePathRejected";
        case ToolError::Code::JailEscape: return "JailEscape";
        case ToolError::Code::NotFound: return "NotFound";
        case ToolError::Code::NotAFile: return "NotAFile";
        case ToolError::Code::NotADirectory: return "NotADirectory";
        case ToolError::Code::NotUtf8: return "NotUtf8";
        case ToolError::Code::IoError: return "IoError";
    }
    return "ToolError";
}

// {{{ path jail

namespace
{

std::vector<std::string> split_segments(std::string_view path)
{
    std::vector<std::string> segments;
    std::size_t start = 0;
    while (start <= path.size())
    {
        auto end = path.find('/', start);
        if (end == std::string_view::npos)
            end = path.size();
        segments.emplace_back(path.substr(start, end - start));
        start = end + 1;
    }
    return segments;
}

bool is_within(const fs::path& path, const fs::path& root)
{
    auto p = path.begin();
    for (auto r = root.begin(); r != root.end(); ++r, ++p)
    {
        if (r->empty() && std::next(r) == root.end())
            break; // trailing separator
        if (p == path.end() || *p != *r)
            return false;
    }
    return true;
}

// Follows every symlink along root/rel the way the kernel would, so that
// dangling or chained links cannot point the final access outside the jail.
fs::path physical_location(const fs::path& root, std::string_view rel)
{
    std::deque<std::string> pending;
    for (auto& segment: split_segments(rel))
        pending.push_back(std::move(segment));

    fs::path current = root;
    int hops = 0;
    while (!pending.empty())
    {
        auto const segment = std::move(pending.front());
        pending.pop_front();
        if (segment.empty() || segment == ".")
            continue;
        if (segment == "..")
        {
            current = current.parent_path();
            continue;
        }

        auto const next = current / segment;
        std::error_code ec;
        auto const st = fs::symlink_status(next, ec);
        if (ec || !fs::exists(st) || !fs::is_symlink(st))
        {
            current = next;
            continue;
        }

        if (++hops > 40)
            throw ToolError(ToolError::Code::JailEscape, std::string(rel) + " (too many symbolic links)");
        auto const target = fs::read_symlink(next, ec);
        if (ec)
            throw ToolError(ToolError::Code::IoError, std::string(rel) + ": " + ec.message());

        auto const targetText = target.generic_string();
        auto segments = split_segments(targetText);
        pending.insert(pending.begin(), segments.begin(), segments.end());
        if (target.is_absolute())
            current = "/";
    }
    return current;
}

} // namespace

JailedPath resolve_jailed(const fs::path& root, std::string_view requested)
{
    std::error_code ec;
    if (!fs::is_directory(root, ec))
        throw std::invalid_argument("jail root is not a directory: " + root.string());

    if (requested.empty())
        throw ToolError(ToolError::Code::InvalidPath, "empty path");
    if (requested.find('\0') != std::string_view::npos)
        throw ToolError(ToolError::Code::InvalidPath, "path contains a NUL byte");

    auto const normalizedSeparators = text::replace_all(std::string(requested), "\\", "/");
    if (normalizedSeparators.front() == '/')
        throw ToolError(ToolError::Code::AbsolutePathRejected, std::string(requested));

    std::vector<std::string> stack;
    for (auto& segment: split_segments(normalizedSeparators))
    {
        if (segment.empty() || segment == ".")
            continue;
        if (segment == "..")
        {
            if (stack.empty())
                throw ToolError(ToolError::Code::JailEscape, std::string(requested));
            stack.pop_back();
            continue;
        }
        stack.push_back(std::move(segment));
    }

    std::string rel;
    for (auto const& segment: stack)
    {
        if (!rel.empty())
            rel += '/';
        rel += segment;
    }

    auto const canonicalRoot = fs::canonical(root);
    if (!is_within(physical_location(canonicalRoot, rel), canonicalRoot))
        throw ToolError(ToolError::Code::JailEscape, std::string(requested));

    return JailedPath { .root = canonicalRoot, .rel = std::move(rel) };
}

// }}}
// {{{ file tools

FileContent read_file(const JailedPath& path, std::size_t cap)
{
    auto const abs = path.absolute();
    std::error_code ec;
    auto const st = fs::status(abs, ec);
    if (!fs::exists(st))
        throw ToolError(ToolError::Code::NotFound, path.display());
    if (!fs::is_regular_file(st))
        throw ToolError(ToolError::Code::NotAFile, path.display());

    std::ifstream in(abs, std::ios::binary);
    if (!in)
        throw ToolError(ToolError::Code::IoError, "cannot open " + path.display());

    // cap code points take at most 4 bytes each
    auto const limit = cap * 4 + 4;
    std::string buffer(limit, '\0');
    in.read(buffer.data(), static_cast<std::streamsize>(limit));
    buffer.resize(static_cast<std::size_t>(in.gcount()));
    bool const complete = buffer.size() < limit || in.peek() == std::char_traits<char>::eof();

    std::string_view view = buffer;
    bool valid = text::is_valid_utf8(view);
    // reading stopped early, possibly in the middle of a sequence
    for (std::size_t cut = 1; !valid && !complete && cut <= 3 && cut <= view.size(); ++cut)
    {
        if (text::is_valid_utf8(view.substr(0, view.size() - cut)))
        {
            view = view.substr(0, view.size() - cut);
            valid = true;
        }
    }
    if (!valid)
        throw ToolError(ToolError::Code::NotUtf8, path.display());

    auto const kept = text::prefix(view, cap);
    return FileContent { .text = std::string(kept), .truncated = !complete || kept.size() < view.size() };
}

std::size_t write_file(const JailedPath& path, std::string_view content)
{
    if (path.rel.empty())
        throw ToolError(ToolError::Code::NotAFile, path.display());

    auto const abs = path.absolute();
    std::error_code ec;
    fs::create_directories(abs.parent_path(), ec);
    if (ec)
        throw ToolError(ToolError::Code::IoError, path.display() + ": " + ec.message());
    if (fs::is_directory(abs, ec))
        throw ToolError(ToolError::Code::NotAFile, path.display());

    std::ofstream out(abs, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ToolError(ToolError::Code::IoError, "cannot open " + path.display() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush())
        throw ToolError(ToolError::Code::IoError, "write to " + path.display() + " failed");
    return content.size();
}

std::vector<DirEntry> list_files(const JailedPath& path)
{
    auto const abs = path.absolute();
    std::error_code ec;
    auto const st = fs::status(abs, ec);
    if (!fs::exists(st))
        throw ToolError(ToolError::Code::NotFound, path.display());
    if (!fs::is_directory(st))
        throw ToolError(ToolError::Code::NotADirectory, path.display());

    std::vector<DirEntry> entries;
    for (auto it = fs::directory_iterator(abs, ec); !ec && it != fs::directory_iterator(); it.increment(ec))
    {
        DirEntry entry { .name = it->path().filename().string(), .kind = DirEntry::Kind::File, .size = 0 };
        std::error_code statEc;
        if (it->is_directory(statEc))
            entry.kind = DirEntry::Kind::Dir;
        else if (it->is_regular_file(statEc))
        {
            auto const size = it->file_size(statEc);
            entry.size = statEc ? 0 : size;
        }
        entries.push_back(std::move(entry));
    }
    if (ec)
        throw ToolError(ToolError::Code::IoError, path.display() + ": " + ec.message());

    std::sort(entries.begin(), entries.end(), [](auto const& a, auto const& b) { return a.name < b.name; });
    return entries;
}

std::string render_listing(const std::vector<DirEntry>& entries)
{
    if (entries.empty())
        return "(empty directory)";
    std::string out;
    for (auto const& e: entries)
    {
        if (!out.empty())
            out += '\n';
        if (e.kind == DirEntry::Kind::Dir)
            out += e.name + "/ (dir)";
        else
            out += e.name + " (file, " + std::to_string(e.size) + " bytes)";
    }
    return out;
}

// }}}
// {{{ execute

std::string Observation::render() const
{
    std::string out = body;
    if (error)
    {
        if (!out.empty())
            out += '\n';
        out += "Error: " + *error;
    }
    if (out.empty())
        out = "(no output)";
    return out;
}

namespace
{

void finish(Observation& obs, std::string body, std::size_t cap, std::chrono::steady_clock::time_point started)
{
    auto const kept = text::prefix(body, cap);
    obs.truncated = kept.size() < body.size();
    obs.body = std::string(kept);
    obs.duration = std::chrono::steady_clock::now() - started;
}

} // namespace

Observation execute(const ActionProgram& program, const fs::path& jail_root, std::size_t cap, ExecutionTrace* trace)
{
    auto const started = std::chrono::steady_clock::now();
    Observation obs;
    std::string body;
    std::map<std::string, std::string> bindings;
    if (trace)
        bindings = trace->variables;

    for (std::size_t k = 0; k < program.calls.size(); ++k)
    {
        auto const& call = program.calls[k];
        auto const toolName = std::string(to_string(call.tool));
        if (trace)
            trace->tools.push_back(toolName);

        try
        {
            auto arg = [&](const char* name) {
                auto const it = call.args.find(name);
                if (it == call.args.end())
                    throw ToolError(ToolError::Code::InvalidPath, std::string("missing argument ") + name);
                try
                {
                    return substitute_variables(it->second, bindings);
                }
                catch (const std::out_of_range& e)
                {
                    throw Error("UnboundVariable", e.what());
                }
            };

            std::string result;
            std::string value;
            switch (call.tool)
            {
                case ToolKind::ReadFile: {
                    auto const content = read_file(resolve_jailed(jail_root, arg("path")), cap);
                    result = content.text;
                    if (content.truncated)
                        result += "\n[truncated]";
                    value = content.text;
                    break;
                }
                case ToolKind::WriteFile: {
                    auto const target = resolve_jailed(jail_root, arg("path"));
                    auto const bytes = write_file(target, arg("content"));
                    if (trace
                        && std::find(trace->written.begin(), trace->written.end(), target.rel) == trace->written.end())
                        trace->written.push_back(target.rel);
                    result = "wrote " + std::to_string(bytes) + " bytes to " + target.display();
                    value = std::to_string(bytes);
                    break;
                }
                case ToolKind::ListFiles: {
                    result = render_listing(list_files(resolve_jailed(jail_root, arg("path"))));
                    value = result;
                    break;
                }
            }

            if (!body.empty())
                body += '\n';
            body += "[" + std::to_string(k + 1) + "] " + toolName + " → " + result;
            if (call.bind)
            {
                if (trace)
                    trace->variables[*call.bind] = value;
                bindings[*call.bind] = std::move(value);
            }
        }
        catch (const Error& e)
        {
            obs.error = e.what();
            break;
        }
        catch (const std::exception& e)
        {
            obs.error = std::string("IoError: ") + e.what();
            break;
        }
    }

    finish(obs, std::move(body), cap, started);
    return obs;
}

// }}}
// {{{ execute_subprocess

namespace
{

std::string shell_quote(std::string_view s)
{
    std::string out = "'";
    for (char c: s)
    {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += '\'';
    return out;
}

} // namespace

Observation execute_subprocess(std::string_view source, const fs::path& jail_root, std::size_t cap,
                               const SubprocessOptions& options)
{
    auto const started = std::chrono::steady_clock::now();
    Observation obs;

    if (!options.enabled)
    {
        obs.error = "subprocess execution disabled";
        finish(obs, {}, cap, started);
        return obs;
    }
    if (!text::contains(options.command_template, "{file}"))
    {
        obs.error = "SpawnError: command template must contain {file}";
        finish(obs, {}, cap, started);
        return obs;
    }

    std::error_code ec;
    auto const root = fs::canonical(jail_root, ec);
    if (ec)
    {
        obs.error = "SpawnError: " + ec.message();
        finish(obs, {}, cap, started);
        return obs;
    }

    auto pattern = (root / ".openloop-action-XXXXXX").string();
    int const fileFd = ::mkstemp(pattern.data());
    if (fileFd < 0)
    {
        obs.error = std::string("SpawnError: cannot create source file: ") + std::strerror(errno);
        finish(obs, {}, cap, started);
        return obs;
    }
    auto const sourcePath = fs::path(pattern);
    for (std::string_view rest = source; !rest.empty();)
    {
        auto const n = ::write(fileFd, rest.data(), rest.size());
        if (n <= 0 && errno != EINTR)
            break;
        if (n > 0)
            rest.remove_prefix(static_cast<std::size_t>(n));
    }
    ::close(fileFd);

    auto const command =
        text::replace_all(options.command_template, "{file}", shell_quote(sourcePath.filename().string()));

    int pipeFds[2];
    if (::pipe2(pipeFds, O_CLOEXEC) != 0)
    {
        obs.error = std::string("SpawnError: ") + std::strerror(errno);
        fs::remove(sourcePath, ec);
        finish(obs, {}, cap, started);
        return obs;
    }

    pid_t const pid = ::fork();
    if (pid < 0)
    {
        obs.error = std::string("SpawnError: ") + std::strerror(errno);
        ::close(pipeFds[0]);
        ::close(pipeFds[1]);
        fs::remove(sourcePath, ec);
        finish(obs, {}, cap, started);
        return obs;
    }

    if (pid == 0)
    {
        ::setpgid(0, 0);
        if (::chdir(root.c_str()) != 0)
            ::_exit(126);
        int const devNull = ::open("/dev/null", O_RDONLY);
        if (devNull >= 0)
            ::dup2(devNull, STDIN_FILENO);
        ::dup2(pipeFds[1], STDOUT_FILENO);
        ::dup2(pipeFds[1], STDERR_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }

    ::setpgid(pid, pid);
    ::close(pipeFds[1]);

    auto const deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(options.timeout);
    auto const byteLimit = cap * 4 + 4;
    std::string captured;
    bool timedOut = false;
    bool exited = false;
    bool pipeOpen = true;
    int status = 0;

    while (!exited)
    {
        auto const now = std::chrono::steady_clock::now();
        if (now >= deadline)
        {
            timedOut = true;
            break;
        }
        auto const remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        auto const waitMs = static_cast<int>(std::min<long long>(remaining + 1, 50));

        if (pipeOpen)
        {
            pollfd pfd { .fd = pipeFds[0], .events = POLLIN, .revents = 0 };
            if (::poll(&pfd, 1, waitMs) > 0)
            {
                char chunk[4096];
                auto const n = ::read(pipeFds[0], chunk, sizeof(chunk));
                if (n > 0 && captured.size() < byteLimit)
                    captured.append(chunk, std::min<std::size_t>(static_cast<std::size_t>(n), byteLimit - captured.size()));
                else if (n == 0)
                    pipeOpen = false;
            }
        }
        else
            ::usleep(static_cast<useconds_t>(waitMs) * 1000);

        if (::waitpid(pid, &status, WNOHANG) == pid)
            exited = true;
    }

    // drain what is already buffered, then take down any leftover children
    if (exited && pipeOpen)
    {
        ::fcntl(pipeFds[0], F_SETFL, O_NONBLOCK);
        char chunk[4096];
        ssize_t n = 0;
        while ((n = ::read(pipeFds[0], chunk, sizeof(chunk))) > 0 && captured.size() < byteLimit)
            captured.append(chunk, std::min<std::size_t>(static_cast<std::size_t>(n), byteLimit - captured.size()));
    }
    ::kill(-pid, SIGKILL);
    if (!exited)
        ::waitpid(pid, &status, 0);
    ::close(pipeFds[0]);
    fs::remove(sourcePath, ec);

    if (timedOut)
        obs.error = "Timeout after " + text::format_seconds(options.timeout.count()) + "s";
    else if (WIFEXITED(status) && WEXITSTATUS(status) != 0)
        obs.error = "ExitStatus: " + std::to_string(WEXITSTATUS(status));
    else if (WIFSIGNALED(status))
        obs.error = "Signal: " + std::to_string(WTERMSIG(status));

    finish(obs, text::sanitize_utf8(captured), cap, started);
    return obs;
}

// }}}

} // namespace openloop
