#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

namespace termstat {

using Json = nlohmann::json;

/// Calls `fn(record, line_number)` for every non-blank line of a
/// line-delimited JSON stream. Malformed lines raise ParseError.
void for_each_jsonl(std::istream& in, const std::function<void(const Json&, std::size_t)>& fn);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

/// 64-bit FNV-1a over the bytes, rendered as 16 hex digits.
std::string fingerprint(std::string_view bytes);
std::string fingerprint_file(const std::filesystem::path& path);

/// Stable 64-bit mix of a seed with a string key. Used to derive
/// per-unit RNG seeds that do not depend on iteration order.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view key);

}  // namespace termstat
