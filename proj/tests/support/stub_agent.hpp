// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/model_gateway.hpp>
#include <openloop/prompt_kit.hpp>
#include <openloop/text.hpp>

#include <functional>
#include <mutex>
#include <string>
#include <vector>

namespace openloop::testing
{

/// A fake model that answers by looking at the nudge closing the prompt.
/// Runs are told apart by the message seq restarting at 1.
class StubAgent final: public ChatModel
{
  public:
    struct Call
    {
        int run = 0;  // 1-based
        int step = 0; // act calls within the run, 1-based
        const std::vector<Message>& prompt;
    };
    using Reply = std::function<std::string(const Call&)>;

    Reply on_task = [](const Call& c) { return "<task>" + default_task(c) + "</task>"; };
    Reply on_act = [](const Call&) { return std::string("<final>done</final>"); };
    Reply on_summary = [](const Call&) {
        return std::string("```record\n{\"task\":\"t\",\"action\":\"none\",\"outcome\":\"done\"}\n```");
    };

    ModelReply complete(const std::vector<Message>& messages, const ChatParams&) override
    {
        std::lock_guard lock(_mutex);
        auto const lastSeq = messages.back().seq;
        if (_run == 0 || lastSeq <= _lastSeq)
        {
            ++_run;
            _step = 0;
        }
        _lastSeq = lastSeq;
        prompts.push_back({ _run, messages });

        auto const& nudge = messages.back().content;
        auto const n = NudgeSet::defaults();
        std::string reply;
        if (nudge == n.task_generation)
        {
            task_prompts.push_back({ _run, messages });
            reply = on_task(Call { _run, _step, messages });
        }
        else if (nudge == n.act)
            reply = on_act(Call { _run, ++_step, messages });
        else if (nudge == n.summary)
            reply = on_summary(Call { _run, _step, messages });
        else
            reply = on_task(Call { _run, _step, messages });
        return ModelReply { reply, FinishReason::Stop, {} };
    }

    /// The last user message that is not feedback, else a fixed task.
    static std::string default_task(const Call& c)
    {
        for (auto it = c.prompt.rbegin(); it != c.prompt.rend(); ++it)
            if (it->role == Role::User && it->step_tag == StepTag::UserInput)
                return it->content;
        return "explore the workspace";
    }

    struct Prompt
    {
        int run;
        std::vector<Message> messages;
    };
    std::vector<Prompt> prompts;
    std::vector<Prompt> task_prompts;

  private:
    std::mutex _mutex;
    std::uint64_t _lastSeq = 0;
    int _run = 0;
    int _step = 0;
};

inline bool prompt_contains(const std::vector<Message>& prompt, std::string_view needle)
{
    for (auto const& m: prompt)
        if (text::contains(m.content, needle))
            return true;
    return false;
}

} // namespace openloop::testing
