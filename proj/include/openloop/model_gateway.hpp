// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openloop/error.hpp>
#include <openloop/message.hpp>

#include <chrono>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace openloop
{

// {{{ errors

class GatewayError: public Error
{
  public:
    using Error::Error;
};

/// Network failure or timeout, after all retries.
class TransportError: public GatewayError
{
  public:
    explicit TransportError(std::string detail): GatewayError("TransportError", std::move(detail)) {}
};

/// The response body does not follow the wire format.
class ProtocolError: public GatewayError
{
  public:
    explicit ProtocolError(std::string detail): GatewayError("ProtocolError", std::move(detail)) {}
};

/// The model answered with finish_reason=error (or a content filter).
class ModelRefusal: public GatewayError
{
  public:
    explicit ModelRefusal(std::string detail): GatewayError("ModelRefusal", std::move(detail)) {}
};

class ScriptExhausted: public GatewayError
{
  public:
    explicit ScriptExhausted(std::string detail): GatewayError("ScriptExhausted", std::move(detail)) {}
};

class NoMatch: public GatewayError
{
  public:
    explicit NoMatch(std::string detail): GatewayError("NoMatch", std::move(detail)) {}
};

// }}}
// {{{ types

struct ChatParams
{
    std::string model_name = "default";
    double temperature = 0.7;
    int max_tokens = 2048;
    std::chrono::duration<double> timeout = std::chrono::seconds(120);
    int max_retries = 2;

    /// Throws std::invalid_argument when out of range.
    void validate() const;
};

enum class FinishReason
{
    Stop,
    Length,
    Error,
};

std::string_view to_string(FinishReason reason);

struct Usage
{
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ModelReply
{
    std::string content;
    FinishReason finish_reason = FinishReason::Stop;
    std::optional<Usage> usage;
};

/// A chat-completion backend. Implementations are used serially by one loop.
class ChatModel
{
  public:
    virtual ~ChatModel() = default;

    /// Requires a non-empty list whose first message has role=system
    /// (std::invalid_argument otherwise). Never mutates messages.
    virtual ModelReply complete(const std::vector<Message>& messages, const ChatParams& params) = 0;
};

/// Throws std::invalid_argument if the messages break complete()'s precondition.
void check_request(const std::vector<Message>& messages);

// }}}
// {{{ wire format

/// OpenAI-compatible request body. Tool observations travel as role "user".
Json to_wire_request(const std::vector<Message>& messages, const ChatParams& params);

struct WireRequest
{
    std::vector<Message> messages; // seq numbered from 1, step tags unknown (UserInput)
    ChatParams params;
};

/// Inverse of to_wire_request for bodies using the documented keys only.
/// Throws ProtocolError.
WireRequest from_wire_request(const Json& body);

/// Reads choices[0].message.content. Throws ProtocolError or ModelRefusal.
ModelReply parse_wire_response(std::string_view body);

// }}}
// {{{ HTTP backend

/// Talks to POST <endpoint>/v1/chat/completions. An endpoint whose path
/// already ends in /chat/completions is used as is.
class HttpChatModel final: public ChatModel
{
  public:
    struct Options
    {
        std::string endpoint;                                          // http://host:port[/prefix]
        std::string api_key;                                           // empty: no Authorization header
        std::chrono::milliseconds retry_base_delay { 500 };           // doubles per retry
    };

    explicit HttpChatModel(Options options);

    ModelReply complete(const std::vector<Message>& messages, const ChatParams& params) override;

    const std::string& base_url() const noexcept { return _baseUrl; }
    const std::string& path() const noexcept { return _path; }

  private:
    Options _options;
    std::string _baseUrl; // scheme://host:port
    std::string _path;
};

/// OPENLOOP_API_KEY, or empty.
std::string api_key_from_env();

// }}}
// {{{ test doubles

/// Deterministic replay of canned replies.
class ScriptedModel final: public ChatModel
{
  public:
    struct Matcher
    {
        enum class Kind
        {
            Always,
            LastMessageContains,
        };
        Kind kind = Kind::Always;
        std::string text;

        static Matcher always() { return {}; }
        static Matcher last_message_contains(std::string needle)
        {
            return { Kind::LastMessageContains, std::move(needle) };
        }
        bool accepts(const std::vector<Message>& messages) const;
    };

    struct Entry
    {
        Matcher matcher;
        std::string reply;
        bool transport_failure = false; // throw TransportError instead of replying
    };

    explicit ScriptedModel(std::vector<Entry> script);

    /// Script file format: [{"match": "always" | {"contains": text}, "reply": text,
    /// "fail": "transport"}]. Throws ConfigError.
    static std::vector<Entry> parse_script(const Json& j);

    /// Returns the first unconsumed entry accepting the last message and moves
    /// the cursor past it. Throws ScriptExhausted or NoMatch.
    ModelReply next(const std::vector<Message>& messages);

    ModelReply complete(const std::vector<Message>& messages, const ChatParams& params) override;

    std::size_t cursor() const noexcept { return _cursor; }
    std::size_t size() const noexcept { return _script.size(); }
    bool exhausted() const noexcept { return _cursor >= _script.size(); }

  private:
    std::vector<Entry> _script;
    std::size_t _cursor = 0;
};

/// Wraps a callable; handy for stubs that react to the prompt they receive.
class FunctionModel final: public ChatModel
{
  public:
    using Function = std::function<std::string(const std::vector<Message>&)>;

    explicit FunctionModel(Function fn): _fn(std::move(fn)) {}

    ModelReply complete(const std::vector<Message>& messages, const ChatParams& params) override;

  private:
    Function _fn;
};

/// Decorator remembering every request that reached the inner model.
class RecordingModel final: public ChatModel
{
  public:
    explicit RecordingModel(ChatModel& inner): _inner(inner) {}

    ModelReply complete(const std::vector<Message>& messages, const ChatParams& params) override;

    std::vector<std::vector<Message>> requests() const;

  private:
    ChatModel& _inner;
    mutable std::mutex _mutex;
    std::vector<std::vector<Message>> _requests;
};

// }}}

} // namespace openloop
