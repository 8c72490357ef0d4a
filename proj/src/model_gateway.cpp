// SPDX-License-Identifier: Apache-2.0
#include <openloop/model_gateway.hpp>
#include <openloop/text.hpp>

#include <httplib.h>

#include <cstdlib>
#include <regex>
#include <stdexcept>
#include <thread>

namespace openloop
{

// {{{ types

void ChatParams::validate() const
{
    if (!(temperature >= 0.0 && temperature <= 2.0))
        throw std::invalid_argument("temperature must be within [0, 2]");
    if (max_tokens < 1)
        throw std::invalid_argument("max_tokens must be at least 1");
    if (max_retries < 0 || max_retries > 5)
        throw std::invalid_argument("max_retries must be within [0, 5]");
    if (!(timeout.count() > 0.0))
        throw std::invalid_argument("timeout must be positive");
}

std::string_view to_string(FinishReason reason)
{
    switch (reason)
    {
        case FinishReason::Stop: return "stop";
        case FinishReason::Length: return "length";
        case FinishReason::Error: return "error";
    }
    return "error";
}

void check_request(const std::vector<Message>& messages)
{
    if (messages.empty())
        throw std::invalid_argument("completion request needs at least one message");
    if (messages.front().role != Role::System)
        throw std::invalid_argument("first message of a completion request must have role=system");
}

// }}}
// {{{ wire format

Json to_wire_request(const std::vector<Message>& messages, const ChatParams& params)
{
    auto wireMessages = Json::array();
    for (auto const& m: messages)
    {
        auto const role = m.role == Role::Tool ? Role::User : m.role;
        wireMessages.push_back(Json { { "role", to_string(role) }, { "content", m.content } });
    }

    auto body = Json::object();
    body["model"] = params.model_name;
    body["messages"] = std::move(wireMessages);
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_tokens;
    return body;
}

WireRequest from_wire_request(const Json& body)
{
    try
    {
        WireRequest request;
        request.params.model_name = body.at("model").get<std::string>();
        request.params.temperature = body.at("temperature").get<double>();
        request.params.max_tokens = body.at("max_tokens").get<int>();
        std::uint64_t seq = 0;
        for (auto const& m: body.at("messages"))
        {
            auto const role = parse_role(m.at("role").get<std::string>());
            if (!role || *role == Role::Tool)
                throw ProtocolError("unsupported role " + m.at("role").dump());
            request.messages.push_back(Message {
                .role = *role,
                .content = m.at("content").get<std::string>(),
                .step_tag = StepTag::UserInput,
                .seq = ++seq,
            });
        }
        return request;
    }
    catch (const Json::exception& e)
    {
        throw ProtocolError(std::string("malformed request: ") + e.what());
    }
}

ModelReply parse_wire_response(std::string_view body)
{
    Json j;
    try
    {
        j = Json::parse(body);
    }
    catch (const Json::parse_error& e)
    {
        throw ProtocolError("response is not JSON (byte " + std::to_string(e.byte) + ")");
    }

    if (!j.is_object())
        throw ProtocolError("response is not a JSON object");
    if (!j.contains("choices") && j.contains("error"))
        throw ProtocolError("server returned an error object: " + text::clip(j["error"].dump(), 200));

    auto const choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty())
        throw ProtocolError("response has no choices");
    auto const& choice = choices->front();
    if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object())
        throw ProtocolError("choices[0].message missing");

    ModelReply reply;
    auto const& content = choice["message"]["content"];
    if (content.is_string())
        reply.content = content.get<std::string>();
    else if (!content.is_null())
        throw ProtocolError("choices[0].message.content is not a string");

    if (auto const it = choice.find("finish_reason"); it != choice.end() && it->is_string())
    {
        auto const reason = it->get<std::string>();
        if (reason == "length")
            reply.finish_reason = FinishReason::Length;
        else if (reason == "error" || reason == "content_filter")
            throw ModelRefusal("finish_reason=" + reason);
    }

    if (auto const it = j.find("usage"); it != j.end() && it->is_object())
    {
        reply.usage = Usage {
            .prompt_tokens = it->value("prompt_tokens", 0),
            .completion_tokens = it->value("completion_tokens", 0),
        };
    }
    return reply;
}

// }}}
// {{{ HttpChatModel

HttpChatModel::HttpChatModel(Options options): _options(std::move(options))
{
    static const std::regex urlPattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch match;
    if (!std::regex_match(_options.endpoint, match, urlPattern))
        throw std::invalid_argument("model endpoint must be an http(s) URL: " + _options.endpoint);

    _baseUrl = match[1].str();
    _path = match[2].str();
    auto const endsWith = [](std::string_view s, std::string_view suffix) {
        return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
    };
    if (!endsWith(_path, "/chat/completions"))
    {
        while (!_path.empty() && _path.back() == '/')
            _path.pop_back();
        _path += "/v1/chat/completions";
    }
}

ModelReply HttpChatModel::complete(const std::vector<Message>& messages, const ChatParams& params)
{
    check_request(messages);
    params.validate();

    auto const body = to_wire_request(messages, params).dump();
    auto const timeout = std::chrono::duration_cast<std::chrono::microseconds>(params.timeout);

    httplib::Headers headers;
    if (!_options.api_key.empty())
        headers.emplace("Authorization", "Bearer " + _options.api_key);

    std::string lastFailure;
    for (int attempt = 0; attempt <= params.max_retries; ++attempt)
    {
        if (attempt > 0)
            std::this_thread::sleep_for(_options.retry_base_delay * (1 << (attempt - 1)));

        httplib::Client client(_baseUrl);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        auto const res = client.Post(_path, headers, body, "application/json");
        if (!res)
        {
            lastFailure = "request to " + _baseUrl + _path + " failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300)
            return parse_wire_response(res->body);
        if (res->status == 429 || res->status >= 500)
        {
            lastFailure = "HTTP " + std::to_string(res->status) + " from " + _baseUrl + _path;
            continue;
        }
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + _baseUrl + _path + ": "
                             + text::clip(res->body, 200));
    }
    throw TransportError(lastFailure + " (" + std::to_string(params.max_retries + 1) + " attempts)");
}

std::string api_key_from_env()
{
    auto const* key = std::getenv("OPENLOOP_API_KEY");
    return key ? key : "";
}

// }}}
// {{{ test doubles

bool ScriptedModel::Matcher::accepts(const std::vector<Message>& messages) const
{
    if (kind == Kind::Always)
        return true;
    return !messages.empty() && text::contains(messages.back().content, text);
}

ScriptedModel::ScriptedModel(std::vector<Entry> script): _script(std::move(script))
{
}

std::vector<ScriptedModel::Entry> ScriptedModel::parse_script(const Json& j)
{
    if (!j.is_array())
        throw ConfigError("model script must be a JSON array");

    std::vector<Entry> script;
    for (std::size_t i = 0; i < j.size(); ++i)
    {
        auto const& item = j[i];
        auto const where = "script entry " + std::to_string(i);
        if (!item.is_object())
            throw ConfigError(where + " must be an object");

        Entry entry;
        if (auto const m = item.find("match"); m != item.end())
        {
            if (m->is_string() && *m == "always")
                entry.matcher = Matcher::always();
            else if (m->is_object() && m->contains("contains") && (*m)["contains"].is_string())
                entry.matcher = Matcher::last_message_contains((*m)["contains"].get<std::string>());
            else
                throw ConfigError(where + ": match must be \"always\" or {\"contains\": text}");
        }
        if (auto const f = item.find("fail"); f != item.end())
        {
            if (*f != "transport")
                throw ConfigError(where + ": fail must be \"transport\"");
            entry.transport_failure = true;
        }
        else if (auto const r = item.find("reply"); r != item.end() && r->is_string())
            entry.reply = r->get<std::string>();
        else
            throw ConfigError(where + " needs a string \"reply\"");
        script.push_back(std::move(entry));
    }
    return script;
}

ModelReply ScriptedModel::next(const std::vector<Message>& messages)
{
    if (exhausted())
        throw ScriptExhausted("all " + std::to_string(_script.size()) + " script entries consumed");

    for (auto i = _cursor; i < _script.size(); ++i)
    {
        auto const& entry = _script[i];
        if (!entry.matcher.accepts(messages))
            continue;
        _cursor = i + 1;
        if (entry.transport_failure)
            throw TransportError("scripted transport failure at entry " + std::to_string(i));
        return ModelReply { .content = entry.reply, .finish_reason = FinishReason::Stop, .usage = std::nullopt };
    }

    auto const last = messages.empty() ? std::string() : text::clip(text::single_line(messages.back().content), 80);
    throw NoMatch("no remaining script entry accepts the last message \"" + last + "\"");
}

ModelReply ScriptedModel::complete(const std::vector<Message>& messages, const ChatParams& /*params*/)
{
    check_request(messages);
    return next(messages);
}

ModelReply FunctionModel::complete(const std::vector<Message>& messages, const ChatParams& /*params*/)
{
    check_request(messages);
    return ModelReply { .content = _fn(messages), .finish_reason = FinishReason::Stop, .usage = std::nullopt };
}

ModelReply RecordingModel::complete(const std::vector<Message>& messages, const ChatParams& params)
{
    {
        std::lock_guard lock(_mutex);
        _requests.push_back(messages);
    }
    return _inner.complete(messages, params);
}

std::vector<std::vector<Message>> RecordingModel::requests() const
{
    std::lock_guard lock(_mutex);
    return _requests;
}

// }}}

} // namespace openloop
