// SPDX-License-Identifier: Apache-2.0
#include <openloop/action.hpp>
#include <openloop/text.hpp>

#include <doctest.h>

#include <random>
#include <stdexcept>

using namespace openloop;

namespace
{

// Independent encoder for the property tests.
std::string encode(char32_t cp)
{
    std::string out;
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
    return out;
}

char32_t random_code_point(std::mt19937& rng)
{
    static constexpr char32_t kRanges[][2] = { { 0x20, 0x7E }, { 0xA0, 0x7FF }, { 0x800, 0xD7FF },
                                               { 0xE000, 0xFFFD }, { 0x10000, 0x10FFFF } };
    auto const& r = kRanges[std::uniform_int_distribution<int>(0, 4)(rng)];
    return std::uniform_int_distribution<char32_t>(r[0], r[1])(rng);
}

} // namespace

TEST_CASE("trim strips ASCII whitespace at both ends")
{
    CHECK(text::trim("  a b \n\t") == "a b");
    CHECK(text::trim("") == "");
    CHECK(text::trim(" \r\n ") == "");
}

TEST_CASE("utf8 validation rejects overlong forms, surrogates and truncation")
{
    CHECK(text::is_valid_utf8("plain"));
    CHECK(text::is_valid_utf8("\xC3\xA9t\xC3\xA9"));
    CHECK(text::is_valid_utf8("\xF0\x9F\x98\x80"));
    CHECK_FALSE(text::is_valid_utf8("\xC0\xAF"));         // overlong '/'
    CHECK_FALSE(text::is_valid_utf8("\xE0\x80\xAF"));     // overlong '/'
    CHECK_FALSE(text::is_valid_utf8("\xED\xA0\x80"));     // U+D800
    CHECK_FALSE(text::is_valid_utf8("\xF4\x90\x80\x80")); // above U+10FFFF
    CHECK_FALSE(text::is_valid_utf8("\xE2\x82"));         // truncated
    CHECK_FALSE(text::is_valid_utf8("\x80"));
}

TEST_CASE("length, prefix and clip count code points")
{
    std::string const s = "h\xC3\xA9llo \xE2\x82\xAC"; // "héllo €"
    CHECK(text::length(s) == 7);
    CHECK(text::prefix(s, 2) == "h\xC3\xA9");
    CHECK(text::clip(s, 7) == s);
    CHECK(text::clip(s, 3) == "h\xC3\xA9\xE2\x80\xA6");
    CHECK(text::clip(s, 0).empty());
}

TEST_CASE("property: encode/decode round trip and clip bound on random utf8")
{
    std::mt19937 rng(1234);
    for (int iter = 0; iter < 500; ++iter)
    {
        std::u32string cps;
        std::string bytes;
        auto const n = std::uniform_int_distribution<int>(0, 40)(rng);
        for (int i = 0; i < n; ++i)
        {
            auto cp = random_code_point(rng);
            cps += cp;
            bytes += encode(cp);
        }
        REQUIRE(text::is_valid_utf8(bytes));
        CHECK(text::length(bytes) == cps.size());
        CHECK(text::decode_utf8(bytes) == cps);
        CHECK(text::encode_utf8(cps) == bytes);
        auto const budget = std::uniform_int_distribution<std::size_t>(0, 45)(rng);
        auto const clipped = text::clip(bytes, budget);
        CHECK(text::length(clipped) <= budget);
        CHECK(text::is_valid_utf8(clipped));
    }
}

TEST_CASE("sanitize replaces invalid bytes with U+FFFD")
{
    CHECK(text::sanitize_utf8("a\xFF"
                              "b") == "a\xEF\xBF\xBD"
                                      "b");
    CHECK(text::sanitize_utf8("ok") == "ok");
}

TEST_CASE("single_line, replace_all and timestamps")
{
    CHECK(text::single_line("a\nb\r\nc") == "a b c");
    CHECK(text::replace_all("a-b-c", "-", "+") == "a+b+c");
    CHECK(text::format_timestamp(std::chrono::system_clock::time_point(std::chrono::seconds(86400 + 3661)))
          == "1970-01-02T01:01:01Z");
    CHECK(text::format_seconds(2.0) == "2");
    CHECK(text::format_seconds(0.5) == "0.5");
}

TEST_CASE("tool names and signatures")
{
    CHECK(parse_tool("read_file") == ToolKind::ReadFile);
    CHECK(parse_tool("write_file") == ToolKind::WriteFile);
    CHECK(parse_tool("list_files") == ToolKind::ListFiles);
    CHECK_FALSE(parse_tool("rm").has_value());
    CHECK(tool_signatures() == "read_file(path)\nwrite_file(path, content)\nlist_files(path)");
}

TEST_CASE("variable references honour the $$ escape")
{
    CHECK(variable_references("$a and $b_2, $$c") == std::vector<std::string> { "a", "b_2" });
    CHECK(substitute_variables("x=$a $$a", { { "a", "1" } }) == "x=1 $a");
    CHECK_THROWS_AS(substitute_variables("$missing", {}), std::out_of_range);
    CHECK(substitute_variables("$ alone", {}) == "$ alone");
}

TEST_CASE("validate_program enforces signatures, bind order and size")
{
    ActionProgram ok { { { ToolKind::ReadFile, { { "path", "a" } }, "x" },
                         { ToolKind::WriteFile, { { "path", "b" }, { "content", "$x" } }, std::nullopt } } };
    CHECK_NOTHROW(validate_program(ok));

    auto missing = ok;
    missing.calls[1].args.erase("content");
    CHECK_THROWS_AS(validate_program(missing), std::invalid_argument);

    auto reversed = ok;
    std::swap(reversed.calls[0], reversed.calls[1]);
    CHECK_THROWS_AS(validate_program(reversed), std::invalid_argument);

    auto badBind = ok;
    badBind.calls[0].bind = "not ok";
    CHECK_THROWS_AS(validate_program(badBind), std::invalid_argument);

    ActionProgram big;
    big.calls.assign(kMaxCallsPerProgram + 1, ToolCall { ToolKind::ListFiles, { { "path", "." } }, std::nullopt });
    CHECK_THROWS_AS(validate_program(big), std::invalid_argument);
    big.calls.pop_back();
    CHECK_NOTHROW(validate_program(big));
}
