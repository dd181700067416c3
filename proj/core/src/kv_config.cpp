#include "iids/kv_config.hpp"

#include <fstream>
#include <sstream>

#include "iids/error.hpp"

namespace iids {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find(sep, start);
        const auto piece = trim(s.substr(start, end == std::string_view::npos ? s.npos : end - start));
        if (!piece.empty()) out.push_back(piece);
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return out;
}

KeyValues parse_key_values(std::string_view text, std::string_view source_name) {
    KeyValues kv;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        const auto raw = text.substr(pos, end == std::string_view::npos ? text.npos : end - pos);
        ++line_no;
        const auto line = trim(raw);
        if (!line.empty() && line.front() != '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw InputError(std::string(source_name) + ":" + std::to_string(line_no) +
                                 ": expected 'key = value'");
            }
            auto key = trim(std::string_view(line).substr(0, eq));
            if (key.empty()) {
                throw InputError(std::string(source_name) + ":" + std::to_string(line_no) + ": empty key");
            }
            kv[std::move(key)] = trim(std::string_view(line).substr(eq + 1));
        }
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_key_values(buf.str(), path.string());
}

}  // namespace iids
