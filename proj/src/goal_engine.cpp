// SPDX-License-Identifier: Apache-2.0
#include <openloop/goal_engine.hpp>
#include <openloop/text.hpp>

#include <algorithm>
#include <clocale>
#include <cwctype>
#include <set>
#include <sstream>

#include <locale.h>
#include <wctype.h>

namespace openloop
{

std::string_view to_string(TaskOrigin origin)
{
    switch (origin)
    {
        case TaskOrigin::UserGiven: return "user_given";
        case TaskOrigin::SelfGenerated: return "self_generated";
        case TaskOrigin::UserRefined: return "user_refined";
    }
    return "unknown";
}

Json to_json(const TaskSpec& spec)
{
    auto j = Json::object();
    j["text"] = spec.text;
    j["origin"] = to_string(spec.origin);
    j["source_user_prompt"] = spec.source_user_prompt ? Json(*spec.source_user_prompt) : Json(nullptr);
    j["duplicate_of"] = spec.duplicate_of ? Json(*spec.duplicate_of) : Json(nullptr);
    return j;
}

std::string_view to_string(DuplicatePolicy policy)
{
    switch (policy)
    {
        case DuplicatePolicy::Allow: return "allow";
        case DuplicatePolicy::Warn: return "warn";
        case DuplicatePolicy::RegenerateOnce: return "regenerate_once";
    }
    return "warn";
}

std::optional<DuplicatePolicy> parse_duplicate_policy(std::string_view name)
{
    for (auto p: { DuplicatePolicy::Allow, DuplicatePolicy::Warn, DuplicatePolicy::RegenerateOnce })
        if (to_string(p) == name)
            return p;
    return std::nullopt;
}

// {{{ similarity

namespace
{

locale_t utf8_locale()
{
    static locale_t const loc = [] {
        locale_t l = ::newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(0));
        if (!l)
            l = ::newlocale(LC_CTYPE_MASK, "C", static_cast<locale_t>(0));
        return l;
    }();
    return loc;
}

std::set<std::string> token_set(std::string_view task)
{
    std::set<std::string> tokens;
    std::istringstream in(normalize_task(task));
    std::string token;
    while (in >> token)
        tokens.insert(token);
    return tokens;
}

} // namespace

std::string normalize_task(std::string_view task)
{
    auto const loc = utf8_locale();
    std::u32string out;
    bool pendingSpace = false;
    for (char32_t cp: text::decode_utf8(task))
    {
        auto const wc = static_cast<wint_t>(cp);
        if (::iswspace_l(wc, loc))
        {
            pendingSpace = !out.empty();
            continue;
        }
        if (!::iswalnum_l(wc, loc))
            continue;
        if (pendingSpace)
            out += U' ';
        pendingSpace = false;
        out += static_cast<char32_t>(::towlower_l(wc, loc));
    }
    return text::encode_utf8(out);
}

double task_similarity(std::string_view a, std::string_view b)
{
    auto const left = token_set(a);
    auto const right = token_set(b);
    if (left.empty() && right.empty())
        return 1.0;

    std::size_t shared = 0;
    for (auto const& t: left)
        shared += right.count(t);
    auto const combined = left.size() + right.size() - shared;
    return static_cast<double>(shared) / static_cast<double>(combined);
}

std::optional<std::string> dedup_check(std::string_view task, std::span<const RunRecord> records, double threshold)
{
    for (auto it = records.rbegin(); it != records.rend(); ++it)
        if (it->kind == RecordKind::Run && task_similarity(task, it->task) >= threshold)
            return it->run_id;
    return std::nullopt;
}

// }}}
// {{{ GoalEngine

GoalEngine::GoalEngine(ChatModel& model, GoalSettings settings): _model(model), _settings(std::move(settings))
{
}

TaskSpec GoalEngine::request_task(Transcript& transcript, const std::optional<std::string>& user_input)
{
    std::optional<ParsedTask> parsed;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt)
    {
        insert_nudge(transcript, StepTag::TaskGeneration, _settings.nudges);
        auto const reply = _model.complete(render_prompt(transcript, _settings.char_budget), _settings.params);
        transcript.append(Role::Assistant, reply.content, StepTag::TaskGeneration);
        try
        {
            parsed = extract_task(reply.content);
        }
        catch (const PromptError& e)
        {
            if (attempt == 1)
                throw TaskGenerationFailed(std::string("no usable task after two attempts: ") + e.what());
        }
    }

    TaskSpec spec { .text = parsed->text, .origin = TaskOrigin::SelfGenerated, .source_user_prompt = user_input,
                    .duplicate_of = std::nullopt };
    if (user_input)
        spec.origin = text::trim(*user_input) == spec.text ? TaskOrigin::UserGiven : TaskOrigin::UserRefined;
    return spec;
}

TaskSpec GoalEngine::generate_task(Transcript& transcript, const std::optional<std::string>& user_input,
                                   std::string_view memory_digest)
{
    if (transcript.empty() || transcript.messages().front().role != Role::System)
        throw std::invalid_argument("task generation needs the system prompt in the transcript");

    std::optional<std::string> input;
    if (user_input && !text::trim(*user_input).empty())
        input = std::string(text::trim(*user_input));

    if (!memory_digest.empty())
    {
        auto const& messages = transcript.messages();
        bool const shown = std::any_of(messages.begin(), messages.end(),
                                       [&](auto const& m) { return text::contains(m.content, memory_digest); });
        if (!shown)
            transcript.append(Role::System,
                              "Long-term memory (records of previous runs, newest last):\n" + std::string(memory_digest),
                              StepTag::TaskGeneration);
    }

    if (input)
        transcript.append(Role::User, *input, StepTag::UserInput);
    return request_task(transcript, input);
}

TaskSpec GoalEngine::apply_duplicate_policy(TaskSpec spec, const std::optional<std::string>& duplicate,
                                            DuplicatePolicy policy, Transcript& transcript,
                                            std::span<const RunRecord> records, double threshold)
{
    spec.duplicate_of.reset();
    if (!duplicate || policy == DuplicatePolicy::Allow)
        return spec;
    if (policy == DuplicatePolicy::Warn)
    {
        spec.duplicate_of = duplicate;
        return spec;
    }

    auto const previous = std::find_if(records.begin(), records.end(),
                                       [&](auto const& r) { return r.run_id == *duplicate; });
    auto const previousTask = previous != records.end() ? previous->task : spec.text;
    transcript.append(Role::System,
                      "You already did: " + previousTask + " (run " + *duplicate
                          + "). Generate a different task that you have not done before.",
                      StepTag::TaskGeneration);

    auto regenerated = request_task(transcript, spec.source_user_prompt);
    regenerated.duplicate_of = dedup_check(regenerated.text, records, threshold);
    return regenerated;
}

// }}}

} // namespace openloop
