/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/records.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "patchgrade/data_ingest.hpp"
#include "patchgrade/error.hpp"

namespace patchgrade {

namespace {
constexpr const char* kHeader = "id,score,grade,pseudo_candidate,denoise_removed";
constexpr const char* kDigestPrefix = "# config_digest=";

bool parse_flag(const std::string& s, const std::string& where) {
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    throw ValidationError("bad boolean '" + s + "' in " + where);
}
}  // namespace

void write_score_table(const std::filesystem::path& path, const ScoreTable& table) {
    std::string out;
    if (!table.config_digest.empty()) out += std::string(kDigestPrefix) + table.config_digest + "\n";
    out += kHeader;
    out += '\n';
    char buf[64];
    for (const auto& r : table.records) {
        if (r.id.find(',') != std::string::npos) throw ValidationError("id '" + r.id + "' contains a comma");
        std::snprintf(buf, sizeof buf, "%.17g", r.score);
        out += r.id;
        out += ',';
        out += buf;
        out += ',';
        if (r.grade) out += std::to_string(*r.grade);
        out += r.pseudo_candidate ? ",1" : ",0";
        out += r.denoise_removed ? ",1\n" : ",0\n";
    }
    write_text_file(path, out);
}

ScoreTable read_score_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open score table " + path.string());
    ScoreTable table;
    std::string line;
    bool have_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind(kDigestPrefix, 0) == 0) {
            table.config_digest = line.substr(std::string(kDigestPrefix).size());
            continue;
        }
        if (line[0] == '#') continue;
        if (!have_header) {
            if (line != kHeader) {
                throw IncompatibleError("score table " + path.string() + " has unexpected header '" + line + "'");
            }
            have_header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (cells.size() != 5) throw ValidationError("expected 5 fields at " + where);
        ScoreRecord r;
        r.id = cells[0];
        const auto& s = cells[1];
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), r.score);
        if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad score '" + s + "' at " + where);
        if (!cells[2].empty()) r.grade = std::stoi(cells[2]);
        r.pseudo_candidate = parse_flag(cells[3], where);
        r.denoise_removed = parse_flag(cells[4], where);
        table.records.push_back(std::move(r));
    }
    if (!have_header) throw IncompatibleError("score table " + path.string() + " is empty or has no header");
    return table;
}

}  // namespace patchgrade
