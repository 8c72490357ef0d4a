// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/action.hpp>
#include <openloop/error.hpp>

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace openloop
{

class ToolError: public Error
{
  public:
    enum class Code
    {
        InvalidPath,
        AbsolutePathRejected,
        JailEscape,
        NotFound,
        NotAFile,
        NotADirectory,
        NotUtf8,
        IoError,
    };

    ToolError(Code code, std::string detail);

    Code code() const noexcept { return _code; }

  private:
    Code _code;
};

std::string_view to_string(ToolError::Code code);

inline constexpr std::size_t kDefaultObservationCap = 16384;

/// A location inside the workspace jail.
struct JailedPath
{
    std::filesystem::path root; // canonical, absolute
    std::string rel;            // normalized, no "." or ".." segments; empty means the root

    std::filesystem::path absolute() const { return rel.empty() ? root : root / rel; }

    /// rel, or "." for the root.
    std::string display() const { return rel.empty() ? "." : rel; }

    bool operator==(const JailedPath&) const = default;
};

/// Lexically normalizes requested against root ("\" counts as a separator)
/// and rejects anything that would leave the jail, including through
/// symlinks. Throws ToolError(InvalidPath | AbsolutePathRejected | JailEscape)
/// or std::invalid_argument if root is not an existing directory.
JailedPath resolve_jailed(const std::filesystem::path& root, std::string_view requested);

struct FileContent
{
    std::string text;
    bool truncated = false;
};

/// UTF-8 contents cut at cap characters. Throws ToolError(NotFound | NotAFile | NotUtf8 | IoError).
FileContent read_file(const JailedPath& path, std::size_t cap = kDefaultObservationCap);

/// Overwrites the file, creating missing parents inside the jail. Returns bytes written.
std::size_t write_file(const JailedPath& path, std::string_view content);

struct DirEntry
{
    enum class Kind
    {
        File,
        Dir,
    };

    std::string name;
    Kind kind = Kind::File;
    std::uintmax_t size = 0; // 0 for directories

    bool operator==(const DirEntry&) const = default;
};

/// Entries sorted by name, hidden entries included.
/// Throws ToolError(NotFound | NotADirectory | IoError).
std::vector<DirEntry> list_files(const JailedPath& path);

/// One entry per line: "name (file, N bytes)" or "name/ (dir)".
std::string render_listing(const std::vector<DirEntry>& entries);

struct Observation
{
    std::string body;
    std::optional<std::string> error;
    bool truncated = false;
    std::chrono::duration<double> duration {};

    /// What the model sees: the body, then "Error: ..." if any.
    std::string render() const;
};

/// Side facts about an execution, used for the end-of-run record.
struct ExecutionTrace
{
    std::vector<std::string> tools;   // every call attempted, in order
    std::vector<std::string> written; // jail-relative paths written, first write first
    std::map<std::string, std::string> variables; // binds, visible to later programs
};

/// Runs calls in order, stopping at the first failure. Never throws: every
/// failure ends up in Observation::error. Body lines are "[k] tool → result".
Observation execute(const ActionProgram& program, const std::filesystem::path& jail_root,
                    std::size_t cap = kDefaultObservationCap, ExecutionTrace* trace = nullptr);

struct SubprocessOptions
{
    bool enabled = false;
    std::string command_template; // must contain {file}
    std::chrono::duration<double> timeout = std::chrono::seconds(30);
};

/// Saves source to a temporary file in the jail and runs command_template
/// through /bin/sh with the jail as working directory. Combined output is
/// captured up to cap characters; the process group is killed at timeout.
/// Never throws.
Observation execute_subprocess(std::string_view source, const std::filesystem::path& jail_root, std::size_t cap,
                               const SubprocessOptions& options);

} // namespace openloop
