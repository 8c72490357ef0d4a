// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/message.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace openloop
{

using Clock = std::chrono::system_clock;

// {{{ short-term memory

/// Hands out run identifiers of the form r0001-ab12: a monotone number (so
/// ids sort by age) plus a random suffix (so two processes never collide).
class RunIdGenerator
{
  public:
    /// Without a seed the suffix comes from std::random_device.
    explicit RunIdGenerator(std::optional<std::uint64_t> seed = std::nullopt, std::uint64_t first_number = 1);

    std::string next();

    /// Makes sure the next number is strictly greater than the one in run_id.
    void observe(std::string_view run_id);

    /// The numeric part of a well-formed run id.
    static std::optional<std::uint64_t> number_of(std::string_view run_id);
    static bool is_well_formed(std::string_view run_id);

  private:
    std::mt19937_64 _rng;
    std::uint64_t _next;
};

/// Ordered message buffer of a single run. Every append gets the next seq.
class Transcript
{
  public:
    using Observer = std::function<void(const Transcript&, const Message&)>;

    explicit Transcript(std::string run_id, Clock::time_point created_at = Clock::now());

    const std::string& run_id() const noexcept { return _runId; }
    Clock::time_point created_at() const noexcept { return _createdAt; }
    const std::vector<Message>& messages() const noexcept { return _messages; }
    bool empty() const noexcept { return _messages.empty(); }
    std::size_t size() const noexcept { return _messages.size(); }

    const Message& append(Role role, std::string content, StepTag tag);

    /// Called after every append; used to publish message events.
    void set_observer(Observer observer) { _observer = std::move(observer); }

  private:
    std::string _runId;
    Clock::time_point _createdAt;
    std::vector<Message> _messages;
    std::uint64_t _lastSeq = 0;
    Observer _observer;
};

/// Fresh, empty transcript for the next run. Persisting the old one is the
/// caller's job (see write_run_log).
Transcript reset_transcript(const Transcript& old, RunIdGenerator& ids, Clock::time_point now = Clock::now());

/// Writes runs_dir/<run_id>.jsonl, one Message per line.
std::filesystem::path write_run_log(const std::filesystem::path& runs_dir, const Transcript& transcript);

/// Throws StorageError if the file cannot be read or a line is malformed.
std::vector<Message> read_run_log(const std::filesystem::path& path);

// }}}

// {{{ long-term memory

enum class RecordKind
{
    Run,
    Feedback,
};

std::string_view to_string(RecordKind kind);

/// The persisted (task, action, outcome) tuple of one run, or a piece of
/// user feedback (kind=Feedback, feedback text in task).
struct RunRecord
{
    std::string run_id;
    RecordKind kind = RecordKind::Run;
    std::string task;
    std::string action_summary;
    std::string outcome;
    std::vector<std::string> artifacts; // workspace-relative
    std::string ts;

    bool operator==(const RunRecord&) const = default;
};

Json to_json(const RunRecord& record);

/// Throws std::invalid_argument on missing keys, wrong types or a record that
/// breaks validate_record().
RunRecord record_from_json(const Json& j);

/// Throws std::invalid_argument if the record must not be persisted.
void validate_record(const RunRecord& record);

/// True for a non-empty relative path without "..", ".", empty segments,
/// backslashes or NUL bytes.
bool is_jail_relative(std::string_view path);

struct LoadResult
{
    std::vector<RunRecord> records;
    std::size_t skipped = 0; // malformed lines
};

/// Missing file yields an empty result. Malformed lines are skipped and counted.
LoadResult load_records(const std::filesystem::path& path);

/// Append-only JSONL store. One writer; snapshot() may be called from any thread.
class MemoryStore
{
  public:
    explicit MemoryStore(std::filesystem::path path);

    const std::filesystem::path& path() const noexcept { return _path; }

    /// Appends exactly one line and fsyncs before returning.
    /// Throws std::invalid_argument (bad record) or StorageError (I/O).
    void append(const RunRecord& record);

    /// Re-reads the file, replacing the cache.
    LoadResult reload();

    std::vector<RunRecord> snapshot() const;
    std::size_t skipped() const;

  private:
    std::filesystem::path _path;
    mutable std::mutex _mutex;
    std::vector<RunRecord> _records;
    std::size_t _skipped = 0;
};

inline constexpr std::string_view kEmptyDigest = "(no prior runs)";

struct DigestLimits
{
    std::size_t max_entries = 20;
    std::size_t char_budget = 4000;
};

/// One line per record, "- [kind] task=... outcome=...", newest last.
/// The result never exceeds char_budget characters.
std::string digest(std::span<const RunRecord> records, std::size_t max_entries, std::size_t char_budget);

inline std::string digest(std::span<const RunRecord> records, DigestLimits limits = {})
{
    return digest(records, limits.max_entries, limits.char_budget);
}

// }}}

} // namespace openloop
