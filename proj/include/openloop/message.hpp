// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace openloop
{

/// JSON value that preserves key insertion order (stable, readable files).
using Json = nlohmann::ordered_json;

enum class Role
{
    System,
    User,
    Assistant,
    Tool, // executor observations only
};

/// Which step of a run produced a message.
enum class StepTag
{
    UserInput,
    TaskGeneration,
    Plan,
    Act,
    Observe,
    Summary,
    Nudge,
    Feedback,
};

std::string_view to_string(Role role);
std::string_view to_string(StepTag tag);
std::optional<Role> parse_role(std::string_view name);
std::optional<StepTag> parse_step_tag(std::string_view name);

struct Message
{
    Role role = Role::User;
    std::string content;
    StepTag step_tag = StepTag::UserInput;
    std::uint64_t seq = 0;

    bool operator==(const Message&) const = default;
};

Json to_json(const Message& message);

/// Throws std::invalid_argument on a malformed object.
Message message_from_json(const Json& j);

} // namespace openloop
