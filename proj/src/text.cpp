// SPDX-License-Identifier: Apache-2.0
#include <openloop/text.hpp>

#include <ctime>
#include <sstream>

namespace openloop::text
{

namespace
{

bool is_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Length of the valid UTF-8 sequence starting at s[i], or 0 if invalid.
std::size_t sequence_length(std::string_view s, std::size_t i)
{
    auto const lead = static_cast<unsigned char>(s[i]);
    if (lead < 0x80)
        return 1;

    std::size_t need = 0;
    char32_t cp = 0;
    if ((lead & 0xE0) == 0xC0)
    {
        need = 2;
        cp = lead & 0x1F;
    }
    else if ((lead & 0xF0) == 0xE0)
    {
        need = 3;
        cp = lead & 0x0F;
    }
    else if ((lead & 0xF8) == 0xF0)
    {
        need = 4;
        cp = lead & 0x07;
    }
    else
        return 0;

    if (i + need > s.size())
        return 0;
    for (std::size_t k = 1; k < need; ++k)
    {
        auto const c = static_cast<unsigned char>(s[i + k]);
        if ((c & 0xC0) != 0x80)
            return 0;
        cp = (cp << 6) | (c & 0x3F);
    }

    // overlong forms, surrogates and out-of-range values
    if ((need == 2 && cp < 0x80) || (need == 3 && cp < 0x800) || (need == 4 && cp < 0x10000))
        return 0;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
        return 0;
    return need;
}

} // namespace

std::string_view trim(std::string_view s)
{
    while (!s.empty() && is_space(s.front()))
        s.remove_prefix(1);
    while (!s.empty() && is_space(s.back()))
        s.remove_suffix(1);
    return s;
}

bool is_valid_utf8(std::string_view s)
{
    for (std::size_t i = 0; i < s.size();)
    {
        auto const n = sequence_length(s, i);
        if (n == 0)
            return false;
        i += n;
    }
    return true;
}

std::size_t length(std::string_view s)
{
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size(); ++count)
    {
        auto const n = sequence_length(s, i);
        i += n == 0 ? 1 : n;
    }
    return count;
}

std::string_view prefix(std::string_view s, std::size_t max_chars)
{
    std::size_t i = 0;
    for (std::size_t count = 0; i < s.size() && count < max_chars; ++count)
    {
        auto const n = sequence_length(s, i);
        i += n == 0 ? 1 : n;
    }
    return s.substr(0, i);
}

std::string clip(std::string_view s, std::size_t max_chars)
{
    if (length(s) <= max_chars)
        return std::string(s);
    if (max_chars == 0)
        return {};
    auto out = std::string(prefix(s, max_chars - 1));
    out += "…";
    return out;
}

std::u32string decode_utf8(std::string_view s)
{
    std::u32string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();)
    {
        auto const n = sequence_length(s, i);
        if (n == 0)
        {
            out += U'\uFFFD';
            ++i;
            continue;
        }
        auto const lead = static_cast<unsigned char>(s[i]);
        char32_t cp = n == 1 ? lead : n == 2 ? (lead & 0x1F) : n == 3 ? (lead & 0x0F) : (lead & 0x07);
        for (std::size_t k = 1; k < n; ++k)
            cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        out += cp;
        i += n;
    }
    return out;
}

std::string encode_utf8(std::u32string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (char32_t cp: s)
    {
        if (cp < 0x80)
            out += static_cast<char>(cp);
        else if (cp < 0x800)
        {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
        else if (cp < 0x10000)
        {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
        else
        {
            out += static_cast<char>(0xF0 | (cp >> 18));
            out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }
    return out;
}

std::string sanitize_utf8(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();)
    {
        auto const n = sequence_length(s, i);
        if (n == 0)
        {
            out += "�";
            ++i;
        }
        else
        {
            out.append(s.substr(i, n));
            i += n;
        }
    }
    return out;
}

std::string single_line(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    bool last_break = false;
    for (char c: s)
    {
        if (c == '\n' || c == '\r')
        {
            if (!last_break)
                out += ' ';
            last_break = true;
            continue;
        }
        last_break = false;
        out += c;
    }
    return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to)
{
    if (from.empty())
        return s;
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

bool contains(std::string_view haystack, std::string_view needle)
{
    return haystack.find(needle) != std::string_view::npos;
}

std::string format_timestamp(std::chrono::system_clock::time_point tp)
{
    auto const t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm {};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string format_seconds(double seconds)
{
    std::ostringstream os;
    os << seconds;
    return os.str();
}

} // namespace openloop::text
