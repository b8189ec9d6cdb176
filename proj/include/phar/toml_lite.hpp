#pragma once

// Flat TOML subset used for extraction configs: `key = value` lines with booleans,
// integers, floats and double-quoted strings; `#` comments. Section headers are accepted
// and ignored, so keys must be unique across the file.

#include "core.hpp"
#include "dataset_io.hpp"

namespace phar::toml_lite {

inline json parse(std::string_view text) {
    json out = json::object();
    std::size_t lineno = 0;
    for (auto raw : detail::split_lines(text)) {
        ++lineno;
        std::string line;
        bool in_string = false;
        for (char c : raw) {
            if (c == '"') in_string = !in_string;
            if (c == '#' && !in_string) break;
            line += c;
        }
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        line = line.substr(first, line.find_last_not_of(" \t") - first + 1);
        if (line.front() == '[') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("toml line " + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        key.erase(key.find_last_not_of(" \t") + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        if (key.empty() || value.empty()) throw ParseError("toml line " + std::to_string(lineno) + ": empty key or value");
        if (value == "true" || value == "false") {
            out[key] = value == "true";
        } else if (value.front() == '"') {
            if (value.size() < 2 || value.back() != '"')
                throw ParseError("toml line " + std::to_string(lineno) + ": unterminated string");
            out[key] = value.substr(1, value.size() - 2);
        } else {
            std::string cleaned;
            for (char c : value)
                if (c != '_') cleaned += c;
            char* end = nullptr;
            long long iv = std::strtoll(cleaned.c_str(), &end, 10);
            if (end && *end == '\0') {
                out[key] = iv;
                continue;
            }
            double dv;
            if (!detail::parse_double(cleaned, dv))
                throw ParseError("toml line " + std::to_string(lineno) + ": cannot read value '" + value + "'");
            out[key] = dv;
        }
    }
    return out;
}

inline std::string dump(const json& flat) {
    std::string out;
    for (const auto& [key, v] : flat.items()) {
        out += key + " = ";
        if (v.is_boolean()) out += v.get<bool>() ? "true" : "false";
        else if (v.is_string()) out += "\"" + v.get<std::string>() + "\"";
        else if (v.is_number_integer() || v.is_number_unsigned()) out += v.dump();
        else if (v.is_number_float()) {
            auto text = detail::exact(v.get<double>());
            if (text.find_first_of(".eni") == std::string::npos) text += ".0";
            out += text;
        }
        else throw ConfigError("toml_lite only writes scalar values (key '" + key + "')");
        out += "\n";
    }
    return out;
}

} // namespace phar::toml_lite
