#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace iids {

/// Plain-text `key = value` file. Blank lines and lines starting with `#`
/// are ignored; keys are case-sensitive; a repeated key keeps the last value.
using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues parse_key_values(std::string_view text, std::string_view source_name = "<text>");
KeyValues read_key_values(const std::filesystem::path& path);

std::string trim(std::string_view s);
/// Splits on `sep`, trimming each piece and dropping empty pieces.
std::vector<std::string> split_list(std::string_view s, char sep = ',');

}  // namespace iids
