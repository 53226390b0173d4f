/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "patchgrade/error.hpp"
#include "patchgrade/rng.hpp"

namespace patchgrade {

// --- dictionary ------------------------------------------------------------

void StatementDictionary::validate() const {
    if (statements.empty()) throw ValidationError("statement dictionary must hold at least one statement");
    for (const auto& s : statements) {
        if (s.empty()) throw ValidationError("statement dictionary contains an empty statement");
    }
    if (!(cutoff_z > 0.0)) throw ValidationError("cutoff_z must be positive");
}

StatementDictionary StatementDictionary::defaults() {
    return {{"there is a screw present in the image", "there is a metal implant in the image",
             "there is a surgical pin in the image"},
            2.0,
            0.5};
}

StatementDictionary StatementDictionary::read(const std::filesystem::path& path, double cutoff_z,
                                              double absolute_cutoff) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open statement dictionary " + path.string());
    StatementDictionary d{{}, cutoff_z, absolute_cutoff};
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        d.statements.push_back(line.substr(b, e - b + 1));
    }
    d.validate();
    return d;
}

void StatementDictionary::write(const std::filesystem::path& path) const {
    std::string out = "# One confounder statement per line.\n";
    for (const auto& s : statements) out += s + "\n";
    write_text_file(path, out);
}

// --- scorers ---------------------------------------------------------------

MockTextImageScorer::MockTextImageScorer(float saturation, double reference_fraction)
    : saturation_(saturation), reference_fraction_(reference_fraction) {}

double MockTextImageScorer::metal_fraction(const GradedImage& image) const {
    if (image.pixels.empty()) throw ScorerError("image '" + image.id + "' has no pixels");
    std::size_t hits = 0;
    for (float v : image.pixels.data) hits += v >= saturation_ ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(image.pixels.size());
}

double MockTextImageScorer::similarity(const GradedImage& image, std::string_view statement) const {
    const double response = std::min(1.0, metal_fraction(image) / reference_fraction_);
    Rng jitter(Rng::derive(0, image.id + "|" + std::string(statement)));
    return 0.15 + 0.7 * response + jitter.uniform(-0.01, 0.01);
}

EmbeddingTableScorer EmbeddingTableScorer::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open embedding table " + path.string());
    EmbeddingTableScorer s;
    try {
        const auto j = nlohmann::json::parse(in);
        s.logit_scale_ = j.value("logit_scale", 1.0);
        for (const auto& [k, v] : j.at("images").items()) s.images_.emplace(k, v.get<std::vector<double>>());
        for (const auto& [k, v] : j.at("statements").items()) s.statements_.emplace(k, v.get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed embedding table " + path.string() + ": " + e.what());
    }
    return s;
}

double EmbeddingTableScorer::similarity(const GradedImage& image, std::string_view statement) const {
    const auto im = images_.find(image.id);
    if (im == images_.end()) throw ScorerError("no image embedding for '" + image.id + "'");
    const auto st = statements_.find(statement);
    if (st == statements_.end()) throw ScorerError("no text embedding for statement '" + std::string(statement) + "'");
    const auto& a = im->second;
    const auto& b = st->second;
    if (a.size() != b.size()) throw ScorerError("embedding dimensions differ for '" + image.id + "'");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return logit_scale_ * dot / std::sqrt(na * nb);
}

StatementScores statement_similarity(const TextImageScorer& scorer, const GradedImage& image,
                                     const StatementDictionary& dict) {
    dict.validate();
    StatementScores out;
    out.per_statement.reserve(dict.statements.size());
    for (const auto& s : dict.statements) {
        try {
            out.per_statement.push_back(scorer.similarity(image, s));
        } catch (const ScorerError& e) {
            throw ScorerError("text-image scoring failed for '" + image.id + "': " + e.what());
        }
    }
    out.max = *std::max_element(out.per_statement.begin(), out.per_statement.end());
    return out;
}

// --- selection -------------------------------------------------------------

std::vector<ScoreRecord> select_candidates(std::span<const ScoreRecord> records, double baseline, double multiplier) {
    if (!(baseline >= 0.0)) throw ValidationError("baseline must be non-negative");
    const double threshold = multiplier * baseline;
    std::vector<ScoreRecord> out;
    for (const auto& r : records) {
        if (r.score > threshold) {
            ScoreRecord c = r;
            c.pseudo_candidate = true;
            out.push_back(std::move(c));
        }
    }
    return out;
}

// --- denoising -------------------------------------------------------------

DenoiseStats compute_denoise_stats(const std::vector<std::vector<double>>& scores, const StatementDictionary& dict) {
    dict.validate();
    DenoiseStats st;
    const std::size_t k = dict.statements.size();
    st.mean.assign(k, 0.0);
    st.stddev.assign(k, 0.0);
    st.absolute_mode = scores.size() < 3;
    if (scores.empty()) return st;
    for (const auto& row : scores) {
        for (std::size_t s = 0; s < k; ++s) st.mean[s] += row[s];
    }
    for (auto& m : st.mean) m /= static_cast<double>(scores.size());
    for (const auto& row : scores) {
        for (std::size_t s = 0; s < k; ++s) st.stddev[s] += (row[s] - st.mean[s]) * (row[s] - st.mean[s]);
    }
    for (auto& v : st.stddev) v = std::sqrt(v / static_cast<double>(scores.size()));
    return st;
}

namespace {

struct ScoredPool {
    std::vector<const GradedImage*> images;
    std::vector<std::vector<double>> scores;
};

ScoredPool score_pool(std::span<const ScoreRecord> candidates, std::span<const GradedImage> pool,
                      const TextImageScorer& scorer, const StatementDictionary& dict) {
    dict.validate();
    std::unordered_map<std::string, const GradedImage*> by_id;
    for (const auto& img : pool) by_id.emplace(img.id, &img);
    ScoredPool sp;
    for (const auto& c : candidates) {
        if (!c.pseudo_candidate) throw PreconditionError("record '" + c.id + "' is not flagged as a pseudo candidate");
        auto it = by_id.find(c.id);
        if (it == by_id.end()) throw PreconditionError("candidate '" + c.id + "' is not in the unlabeled pool");
        sp.images.push_back(it->second);
        sp.scores.push_back(statement_similarity(scorer, *it->second, dict).per_statement);
    }
    return sp;
}

DenoiseResult apply_rule(std::span<const ScoreRecord> candidates, const ScoredPool& sp, const StatementDictionary& dict,
                         const DenoiseStats& stats) {
    DenoiseResult res;
    res.stats = stats;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        bool remove = false;
        std::vector<double> zs(dict.statements.size(), 0.0);
        for (std::size_t s = 0; s < dict.statements.size(); ++s) {
            const double v = sp.scores[i][s];
            if (stats.stddev[s] > 1e-12) zs[s] = (v - stats.mean[s]) / stats.stddev[s];
            remove |= stats.absolute_mode ? v > dict.absolute_cutoff : zs[s] > dict.cutoff_z;
        }
        ScoreRecord r = candidates[i];
        r.denoise_removed = remove;
        for (std::size_t s = 0; s < dict.statements.size(); ++s) {
            res.audit.push_back({r.id, dict.statements[s], sp.scores[i][s], zs[s], remove});
        }
        if (!remove) res.denoised.push_back(*sp.images[i]);
        res.records.push_back(std::move(r));
    }
    return res;
}

}  // namespace

DenoiseResult denoise(std::span<const ScoreRecord> candidates, std::span<const GradedImage> pool,
                      const TextImageScorer& scorer, const StatementDictionary& dict) {
    const ScoredPool sp = score_pool(candidates, pool, scorer, dict);
    return apply_rule(candidates, sp, dict, compute_denoise_stats(sp.scores, dict));
}

DenoiseResult denoise_with_stats(std::span<const ScoreRecord> candidates, std::span<const GradedImage> pool,
                                 const TextImageScorer& scorer, const StatementDictionary& dict,
                                 const DenoiseStats& stats) {
    if (stats.mean.size() != dict.statements.size() || stats.stddev.size() != dict.statements.size()) {
        throw PreconditionError("frozen statistics do not match the dictionary");
    }
    const ScoredPool sp = score_pool(candidates, pool, scorer, dict);
    return apply_rule(candidates, sp, dict, stats);
}

void write_denoise_audit(const std::filesystem::path& path, std::span<const DenoiseAuditRow> rows) {
    std::string out = "id,statement,score,z,removed\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%d\n", r.score, r.z, r.removed ? 1 : 0);
        out += r.id + ",\"" + r.statement + "\"" + buf;
    }
    write_text_file(path, out);
}

}  // namespace patchgrade
