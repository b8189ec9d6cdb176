#pragma once

// Dataset loaders: UCR-style TSV (label<TAB>v1<TAB>...<TAB>vT, univariate) and a JSON
// container {"name", "labels", "values": N x T x C, "split"} for multivariate data.

#include <filesystem>
#include <fstream>
#include <sstream>

#include "core.hpp"

namespace phar {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(contents.data(), std::streamsize(contents.size()));
    if (!out) throw Error("write failed for " + path.string());
}

inline bool parse_double(std::string_view text, double& out) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (text.empty()) return false;
    std::string s(text);
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline ClassLabel label_from_double(double v, std::size_t line) {
    if (!std::isfinite(v) || v != std::floor(v))
        throw IngestError("line " + std::to_string(line) + ": class label must be integral");
    return ClassLabel(v);
}

} // namespace detail

/// Rows of one UCR TSV file. Tabs, commas or spaces separate fields.
inline void append_ucr_rows(const std::filesystem::path& path, Split split, Dataset& data) {
    auto text = detail::read_file(path);
    std::size_t lineno = 0;
    for (auto line : detail::split_lines(text)) {
        ++lineno;
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        char sep = line.find('\t') != std::string_view::npos ? '\t' : (line.find(',') != std::string_view::npos ? ',' : ' ');
        std::vector<double> row;
        for (auto f : detail::split_fields(line, sep)) {
            if (sep == ' ' && f.empty()) continue;
            double v;
            if (!detail::parse_double(f, v))
                throw IngestError(path.string() + ": line " + std::to_string(lineno) + ": bad number '" + std::string(f) + "'");
            row.push_back(v);
        }
        if (row.size() < 2) throw IngestError(path.string() + ": line " + std::to_string(lineno) + ": no values");
        std::size_t t = row.size() - 1;
        if (data.shape.timesteps == 0) data.shape = {t, 1};
        if (t != data.shape.timesteps)
            throw IngestError(path.string() + ": line " + std::to_string(lineno) + ": expected " +
                              std::to_string(data.shape.timesteps) + " values, got " + std::to_string(t));
        data.labels.push_back(detail::label_from_double(row[0], lineno));
        data.values.insert(data.values.end(), row.begin() + 1, row.end());
        data.split.push_back(split);
    }
}

/// Instances without an explicit split alternate train (even index) / test (odd index).
inline std::vector<Split> alternating_split(std::size_t n) {
    std::vector<Split> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = i % 2 == 0 ? Split::Train : Split::Test;
    return s;
}

/// Loads "<name>_TRAIN.tsv" together with its "<name>_TEST.tsv" sibling when present;
/// any other TSV is split by alternating_split.
inline Dataset load_ucr_tsv(const std::filesystem::path& path) {
    Dataset data;
    std::string stem = path.stem().string();
    const std::string suffix = "_TRAIN";
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
        data.name = stem.substr(0, stem.size() - suffix.size());
        append_ucr_rows(path, Split::Train, data);
        auto test = path.parent_path() / (data.name + "_TEST" + path.extension().string());
        if (std::filesystem::exists(test)) append_ucr_rows(test, Split::Test, data);
    } else {
        data.name = stem;
        append_ucr_rows(path, Split::Train, data);
        data.split = alternating_split(data.size());
    }
    data.validate();
    return data;
}

inline Dataset dataset_from_json(const json& j) {
    Dataset data;
    try {
        data.name = j.value("name", std::string("dataset"));
        const auto& labels = j.at("labels");
        const auto& values = j.at("values");
        if (labels.size() != values.size()) throw IngestError("labels and values differ in length");
        for (std::size_t n = 0; n < values.size(); ++n) {
            const auto& inst = values[n];
            std::size_t t = inst.size();
            if (t == 0) throw IngestError("instance " + std::to_string(n) + " has no timesteps");
            std::size_t c = inst[0].is_array() ? inst[0].size() : 1;
            if (n == 0) data.shape = {t, c};
            if (t != data.shape.timesteps) throw IngestError("instance " + std::to_string(n) + " has a different T");
            for (const auto& step : inst) {
                if (step.is_array()) {
                    if (step.size() != data.shape.channels)
                        throw IngestError("instance " + std::to_string(n) + " has a different C");
                    for (const auto& v : step) data.values.push_back(v.get<double>());
                } else {
                    if (data.shape.channels != 1) throw IngestError("instance " + std::to_string(n) + " has a different C");
                    data.values.push_back(step.get<double>());
                }
            }
            data.labels.push_back(detail::label_from_double(labels[n].get<double>(), n + 1));
        }
        if (j.contains("split")) {
            for (const auto& s : j.at("split")) {
                auto v = s.get<std::string>();
                if (v == "train") data.split.push_back(Split::Train);
                else if (v == "test") data.split.push_back(Split::Test);
                else throw IngestError("split entries must be \"train\" or \"test\"");
            }
        } else {
            data.split = alternating_split(data.size());
        }
    } catch (const json::exception& e) {
        throw IngestError(std::string("malformed dataset JSON: ") + e.what());
    }
    data.validate();
    return data;
}

inline json dataset_to_json(const Dataset& data) {
    json values = json::array();
    for (std::size_t n = 0; n < data.size(); ++n) {
        json inst = json::array();
        for (std::size_t t = 0; t < data.shape.timesteps; ++t) {
            json step = json::array();
            for (std::size_t c = 0; c < data.shape.channels; ++c) step.push_back(data.value(n, {std::uint32_t(t), std::uint32_t(c)}));
            inst.push_back(std::move(step));
        }
        values.push_back(std::move(inst));
    }
    json split = json::array();
    for (auto s : data.split) split.push_back(s == Split::Train ? "train" : "test");
    return {{"name", data.name}, {"labels", data.labels}, {"values", std::move(values)}, {"split", std::move(split)}};
}

/// Dispatches on extension: .json is the container format, anything else is UCR TSV.
inline Dataset load_dataset(const std::filesystem::path& path) {
    if (path.extension() == ".json") {
        json j;
        try {
            j = json::parse(detail::read_file(path));
        } catch (const json::parse_error& e) {
            throw IngestError(path.string() + ": " + e.what());
        }
        auto data = dataset_from_json(j);
        if (!j.contains("name")) data.name = path.stem().string();
        return data;
    }
    return load_ucr_tsv(path);
}

} // namespace phar
