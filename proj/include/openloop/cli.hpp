// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace openloop
{

struct CliStreams
{
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
    bool handle_signals = false; // SIGINT stops the loop at the next boundary
};

/// `openloop run --config <path> [--runs N] [--interactive] [--serve]
/// [--port P] [--workspace DIR] [--dry-run]`.
/// Returns 2 on flag or config errors, 1 on runtime failure, 0 otherwise.
int cli_main(int argc, const char* const* argv, CliStreams io);

} // namespace openloop
