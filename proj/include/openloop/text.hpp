// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>

/// Small text helpers shared by every module. Lengths are counted in Unicode
/// code points, which is what "characters" means throughout the runtime.
namespace openloop::text
{

std::string_view trim(std::string_view s);

bool is_valid_utf8(std::string_view s);

/// Number of code points. Invalid bytes count as one code point each.
std::size_t length(std::string_view s);

/// Longest prefix holding at most max_chars code points. Never splits a sequence.
std::string_view prefix(std::string_view s, std::size_t max_chars);

/// Like prefix(), but marks a cut with a trailing ellipsis; the result still
/// holds at most max_chars code points.
std::string clip(std::string_view s, std::size_t max_chars);

/// Code points of s; invalid bytes decode as U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

/// Replaces invalid UTF-8 bytes with U+FFFD.
std::string sanitize_utf8(std::string_view s);

/// Collapses CR/LF into single spaces so the result fits on one line.
std::string single_line(std::string_view s);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

bool contains(std::string_view haystack, std::string_view needle);

/// ISO 8601 UTC, second precision: 2026-01-31T12:00:00Z.
std::string format_timestamp(std::chrono::system_clock::time_point tp);

/// Seconds rendered without a trailing ".0": 2 -> "2", 0.5 -> "0.5".
std::string format_seconds(double seconds);

} // namespace openloop::text
