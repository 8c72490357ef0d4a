// SPDX-License-Identifier: Apache-2.0
#include <openloop/error.hpp>
#include <openloop/memory.hpp>
#include <openloop/text.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace openloop
{

// {{{ RunIdGenerator

RunIdGenerator::RunIdGenerator(std::optional<std::uint64_t> seed, std::uint64_t first_number):
    _rng(seed ? *seed : std::random_device {}()), _next(first_number == 0 ? 1 : first_number)
{
}

std::string RunIdGenerator::next()
{
    auto const suffix = static_cast<unsigned>(_rng() & 0xFFFF);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "r%04llu-%04x", static_cast<unsigned long long>(_next++), suffix);
    return buf;
}

void RunIdGenerator::observe(std::string_view run_id)
{
    if (auto const n = number_of(run_id); n && *n >= _next)
        _next = *n + 1;
}

std::optional<std::uint64_t> RunIdGenerator::number_of(std::string_view run_id)
{
    if (!is_well_formed(run_id))
        return std::nullopt;
    auto const digits = run_id.substr(1, run_id.find('-') - 1);
    return std::stoull(std::string(digits));
}

bool RunIdGenerator::is_well_formed(std::string_view run_id)
{
    // r<4+ digits>-<4 hex>
    auto const dash = run_id.find('-');
    if (run_id.size() < 10 || run_id.front() != 'r' || dash == std::string_view::npos || dash < 5
        || dash > 20 || run_id.size() - dash - 1 != 4)
        return false;
    for (auto c: run_id.substr(1, dash - 1))
        if (c < '0' || c > '9')
            return false;
    for (auto c: run_id.substr(dash + 1))
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')))
            return false;
    return true;
}

// }}}
// {{{ Transcript

Transcript::Transcript(std::string run_id, Clock::time_point created_at):
    _runId(std::move(run_id)), _createdAt(created_at)
{
}

const Message& Transcript::append(Role role, std::string content, StepTag tag)
{
    _messages.push_back(Message {
        .role = role,
        .content = std::move(content),
        .step_tag = tag,
        .seq = ++_lastSeq,
    });
    if (_observer)
        _observer(*this, _messages.back());
    return _messages.back();
}

Transcript reset_transcript(const Transcript& /*old*/, RunIdGenerator& ids, Clock::time_point now)
{
    return Transcript(ids.next(), now);
}

fs::path write_run_log(const fs::path& runs_dir, const Transcript& transcript)
{
    std::error_code ec;
    fs::create_directories(runs_dir, ec);
    if (ec)
        throw StorageError("cannot create " + runs_dir.string() + ": " + ec.message());

    auto const target = runs_dir / (transcript.run_id() + ".jsonl");
    auto const tmp = runs_dir / ("." + transcript.run_id() + ".jsonl.tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw StorageError("cannot write " + tmp.string());
        for (auto const& message: transcript.messages())
            out << to_json(message).dump() << '\n';
        if (!out.flush())
            throw StorageError("cannot write " + tmp.string());
    }
    fs::rename(tmp, target, ec);
    if (ec)
        throw StorageError("cannot rename run log to " + target.string() + ": " + ec.message());
    return target;
}

std::vector<Message> read_run_log(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw StorageError("cannot read " + path.string());

    std::vector<Message> messages;
    std::string line;
    for (std::size_t lineNo = 1; std::getline(in, line); ++lineNo)
    {
        if (text::trim(line).empty())
            continue;
        try
        {
            messages.push_back(message_from_json(Json::parse(line)));
        }
        catch (const std::exception& e)
        {
            throw StorageError(path.string() + ":" + std::to_string(lineNo) + ": " + e.what());
        }
    }
    return messages;
}

// }}}
// {{{ RunRecord

std::string_view to_string(RecordKind kind)
{
    return kind == RecordKind::Run ? "run" : "feedback";
}

bool is_jail_relative(std::string_view path)
{
    if (path.empty() || path.front() == '/' || path.find('\0') != std::string_view::npos
        || path.find('\\') != std::string_view::npos)
        return false;

    std::size_t start = 0;
    while (start <= path.size())
    {
        auto end = path.find('/', start);
        if (end == std::string_view::npos)
            end = path.size();
        auto const segment = path.substr(start, end - start);
        if (segment.empty() || segment == "." || segment == "..")
            return false;
        start = end + 1;
    }
    return true;
}

void validate_record(const RunRecord& record)
{
    if (record.kind == RecordKind::Run && text::trim(record.task).empty())
        throw std::invalid_argument("run record must have a non-empty task");
    for (auto const& artifact: record.artifacts)
        if (!is_jail_relative(artifact))
            throw std::invalid_argument("artifact path is not workspace-relative: " + artifact);
}

Json to_json(const RunRecord& record)
{
    auto j = Json::object();
    j["run_id"] = record.run_id;
    j["kind"] = to_string(record.kind);
    j["task"] = record.task;
    j["action"] = record.action_summary;
    j["outcome"] = record.outcome;
    j["artifacts"] = record.artifacts;
    j["ts"] = record.ts;
    return j;
}

RunRecord record_from_json(const Json& j)
{
    if (!j.is_object())
        throw std::invalid_argument("record must be a JSON object");

    auto const kind = j.at("kind").get<std::string>();
    if (kind != "run" && kind != "feedback")
        throw std::invalid_argument("unknown record kind: " + kind);

    auto record = RunRecord {
        .run_id = j.at("run_id").get<std::string>(),
        .kind = kind == "run" ? RecordKind::Run : RecordKind::Feedback,
        .task = j.at("task").get<std::string>(),
        .action_summary = j.at("action").get<std::string>(),
        .outcome = j.at("outcome").get<std::string>(),
        .artifacts = j.at("artifacts").get<std::vector<std::string>>(),
        .ts = j.at("ts").get<std::string>(),
    };
    validate_record(record);
    return record;
}

// }}}
// {{{ MemoryStore

LoadResult load_records(const fs::path& path)
{
    LoadResult result;
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return result;

    std::string line;
    while (std::getline(in, line))
    {
        if (text::trim(line).empty())
            continue;
        try
        {
            result.records.push_back(record_from_json(Json::parse(line)));
        }
        catch (const std::exception&)
        {
            ++result.skipped;
        }
    }
    return result;
}

MemoryStore::MemoryStore(fs::path path): _path(std::move(path))
{
    reload();
}

LoadResult MemoryStore::reload()
{
    auto result = load_records(_path);
    std::lock_guard lock(_mutex);
    _records = result.records;
    _skipped = result.skipped;
    return result;
}

std::vector<RunRecord> MemoryStore::snapshot() const
{
    std::lock_guard lock(_mutex);
    return _records;
}

std::size_t MemoryStore::skipped() const
{
    std::lock_guard lock(_mutex);
    return _skipped;
}

namespace
{

// A crash mid-append can leave a final line without its newline; the next
// record must not be glued onto it.
bool ends_with_newline_or_empty(const fs::path& path)
{
    int const fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0)
        return true;
    struct stat st {};
    bool result = true;
    if (::fstat(fd, &st) == 0 && S_ISREG(st.st_mode) && st.st_size > 0)
    {
        char last = '\n';
        if (::pread(fd, &last, 1, st.st_size - 1) == 1)
            result = last == '\n';
    }
    ::close(fd);
    return result;
}

void write_all(int fd, std::string_view data, const fs::path& path)
{
    while (!data.empty())
    {
        auto const n = ::write(fd, data.data(), data.size());
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            throw StorageError("write to " + path.string() + " failed: " + std::strerror(errno));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

} // namespace

void MemoryStore::append(const RunRecord& record)
{
    validate_record(record);

    if (auto const parent = _path.parent_path(); !parent.empty())
    {
        std::error_code ec;
        fs::create_directories(parent, ec);
        if (ec)
            throw StorageError("cannot create " + parent.string() + ": " + ec.message());
    }

    std::string line = ends_with_newline_or_empty(_path) ? "" : "\n";
    line += to_json(record).dump();
    line += '\n';

    int const fd = ::open(_path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0)
        throw StorageError("cannot open " + _path.string() + ": " + std::strerror(errno));
    try
    {
        write_all(fd, line, _path);
        // special files such as /dev/null reject fsync with EINVAL
        if (::fsync(fd) != 0 && errno != EINVAL && errno != EROFS)
            throw StorageError("fsync of " + _path.string() + " failed: " + std::strerror(errno));
    }
    catch (...)
    {
        ::close(fd);
        throw;
    }
    ::close(fd);

    std::lock_guard lock(_mutex);
    _records.push_back(record);
}

// }}}
// {{{ digest

namespace
{

std::string digest_line(const RunRecord& record, std::size_t task_chars, std::size_t outcome_chars)
{
    std::string line = "- [";
    line += to_string(record.kind);
    line += "] task=";
    line += text::clip(text::single_line(record.task), task_chars);
    line += " outcome=";
    line += text::clip(text::single_line(record.outcome), outcome_chars);
    return line;
}

std::size_t line_overhead(const RunRecord& record)
{
    return text::length(digest_line(record, 0, 0));
}

} // namespace

std::string digest(std::span<const RunRecord> records, std::size_t max_entries, std::size_t char_budget)
{
    if (records.empty() || max_entries == 0)
        return text::clip(kEmptyDigest, char_budget);

    auto const count = std::min(max_entries, records.size());
    auto recent = records.subspan(records.size() - count);

    // Drop the oldest entries until every line can show at least one
    // character of each field (plus its ellipsis) within an equal share of the budget.
    for (std::size_t keep = count; keep > 0; --keep)
    {
        auto const entries = recent.subspan(recent.size() - keep);
        auto const separators = keep - 1;
        if (char_budget <= separators)
            continue;
        auto const share = (char_budget - separators) / keep;

        bool fits = true;
        for (auto const& r: entries)
            fits = fits && share >= line_overhead(r) + 4;
        if (!fits)
            continue;

        std::string out;
        for (auto const& r: entries)
        {
            auto const room = share - line_overhead(r);
            auto const taskLen = text::length(text::single_line(r.task));
            auto const outcomeLen = text::length(text::single_line(r.outcome));
            auto taskChars = taskLen;
            auto outcomeChars = outcomeLen;
            if (taskLen + outcomeLen > room)
            {
                taskChars = std::min(taskLen, std::max(room / 2, room > outcomeLen ? room - outcomeLen : 0));
                outcomeChars = std::min(outcomeLen, room - taskChars);
            }
            if (!out.empty())
                out += '\n';
            out += digest_line(r, taskChars, outcomeChars);
        }
        return out;
    }

    return text::clip(digest_line(records.back(), char_budget, char_budget), char_budget);
}

// }}}

} // namespace openloop
