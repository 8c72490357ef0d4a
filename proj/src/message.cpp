// SPDX-License-Identifier: Apache-2.0
#include <openloop/message.hpp>

#include <array>
#include <stdexcept>
#include <utility>

namespace openloop
{

namespace
{

constexpr std::array<std::pair<Role, std::string_view>, 4> kRoles { {
    { Role::System, "system" },
    { Role::User, "user" },
    { Role::Assistant, "assistant" },
    { Role::Tool, "tool" },
} };

constexpr std::array<std::pair<StepTag, std::string_view>, 8> kTags { {
    { StepTag::UserInput, "user_input" },
    { StepTag::TaskGeneration, "task_generation" },
    { StepTag::Plan, "plan" },
    { StepTag::Act, "act" },
    { StepTag::Observe, "observe" },
    { StepTag::Summary, "summary" },
    { StepTag::Nudge, "nudge" },
    { StepTag::Feedback, "feedback" },
} };

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table, Enum value)
{
    for (auto const& [v, name]: table)
        if (v == value)
            return name;
    return "unknown";
}

template <typename Enum, std::size_t N>
std::optional<Enum> value_of(const std::array<std::pair<Enum, std::string_view>, N>& table,
                             std::string_view name)
{
    for (auto const& [v, n]: table)
        if (n == name)
            return v;
    return std::nullopt;
}

} // namespace

std::string_view to_string(Role role)
{
    return name_of(kRoles, role);
}

std::string_view to_string(StepTag tag)
{
    return name_of(kTags, tag);
}

std::optional<Role> parse_role(std::string_view name)
{
    return value_of(kRoles, name);
}

std::optional<StepTag> parse_step_tag(std::string_view name)
{
    return value_of(kTags, name);
}

Json to_json(const Message& message)
{
    auto j = Json::object();
    j["seq"] = message.seq;
    j["role"] = to_string(message.role);
    j["step_tag"] = to_string(message.step_tag);
    j["content"] = message.content;
    return j;
}

Message message_from_json(const Json& j)
{
    if (!j.is_object())
        throw std::invalid_argument("message must be a JSON object");

    auto const role = parse_role(j.at("role").get<std::string>());
    auto const tag = parse_step_tag(j.at("step_tag").get<std::string>());
    if (!role)
        throw std::invalid_argument("unknown role");
    if (!tag)
        throw std::invalid_argument("unknown step_tag");

    return Message {
        .role = *role,
        .content = j.at("content").get<std::string>(),
        .step_tag = *tag,
        .seq = j.at("seq").get<std::uint64_t>(),
    };
}

} // namespace openloop
