/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "patchgrade/error.hpp"

namespace patchgrade {

void ReferenceBank::validate() const {
    if (maps.size() < 2) throw BankError("a reference bank needs at least 2 normal maps");
    for (const auto& m : maps) {
        if (!m.same_shape(maps.front())) throw BankError("reference maps differ in shape");
    }
    if (!(baseline >= 0.0 && baseline <= 2.0)) throw BankError("bank baseline outside [0,2]");
}

double pair_score(const PatchEmbeddingMap& a, const PatchEmbeddingMap& b) {
    return 1.0 - patchwise_cosine(a, b).mean();
}

double pairwise_baseline(std::span<const PatchEmbeddingMap> maps) {
    if (maps.size() < 2) throw BankError("pairwise baseline needs at least 2 maps");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        for (std::size_t j = i + 1; j < maps.size(); ++j, ++pairs) sum += pair_score(maps[i], maps[j]);
    }
    return std::clamp(sum / static_cast<double>(pairs), 0.0, 2.0);
}

double mean_similarity(std::span<const PatchEmbeddingMap> references, const PatchEmbeddingMap& query) {
    if (references.empty()) throw BankError("no reference maps");
    double total = 0.0;
    for (const auto& r : references) {
        if (!r.same_shape(query)) throw ShapeError("query and reference maps differ in shape");
        total += patchwise_cosine(r, query).mean();
    }
    return total / static_cast<double>(references.size());
}

ReferenceBank make_reference_bank(std::vector<PatchEmbeddingMap> maps, std::string model_ref) {
    ReferenceBank bank;
    bank.maps = std::move(maps);
    bank.model_ref = std::move(model_ref);
    if (bank.maps.size() < 2) throw BankError("a reference bank needs at least 2 normal maps");
    bank.baseline = pairwise_baseline(bank.maps);
    bank.validate();
    return bank;
}

ReferenceBank build_reference_bank(const Checkpoint& checkpoint, std::span<const GradedImage> normals) {
    if (normals.size() < 2) throw BankError("a reference bank needs at least 2 normal images");
    const Backbone bb = checkpoint.make_backbone();
    std::vector<PatchEmbeddingMap> maps;
    maps.reserve(normals.size());
    for (const auto& img : normals) {
        maps.push_back(patchgrade::embed(bb, preprocess(img, checkpoint.preprocess), checkpoint.window, img.id));
    }
    auto bank = make_reference_bank(std::move(maps), checkpoint.model_id());
    bank.config_digest = checkpoint.config_digest;
    return bank;
}

void save_reference_bank(const std::filesystem::path& path, const ReferenceBank& bank) {
    bank.validate();
    Artifact a;
    a.kind = "reference_bank";
    std::vector<std::string> ids;
    for (const auto& m : bank.maps) ids.push_back(m.source_id);
    const auto& first = bank.maps.front();
    a.header = {{"grid", first.grid},         {"channels", first.channels},
                {"window", first.window},     {"ids", ids},
                {"baseline", bank.baseline},  {"model_ref", bank.model_ref},
                {"config_digest", bank.config_digest}};
    for (const auto& m : bank.maps) a.values.insert(a.values.end(), m.values.begin(), m.values.end());
    write_artifact(path, a);
}

ReferenceBank load_reference_bank(const std::filesystem::path& path) {
    Artifact a = read_artifact(path, "reference_bank");
    ReferenceBank bank;
    try {
        const int g = a.header.at("grid").get<int>();
        const int c = a.header.at("channels").get<int>();
        const int sw = a.header.at("window").get<int>();
        const auto ids = a.header.at("ids").get<std::vector<std::string>>();
        const std::size_t per = static_cast<std::size_t>(g) * g * c;
        if (a.values.size() != per * ids.size()) throw IncompatibleError("bank payload size mismatch");
        for (std::size_t i = 0; i < ids.size(); ++i) {
            PatchEmbeddingMap m(g, c, sw);
            std::copy_n(a.values.begin() + static_cast<std::ptrdiff_t>(i * per), per, m.values.begin());
            m.source_id = ids[i];
            bank.maps.push_back(std::move(m));
        }
        bank.baseline = a.header.at("baseline").get<double>();
        bank.model_ref = a.header.at("model_ref").get<std::string>();
        bank.config_digest = a.header.value("config_digest", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw IncompatibleError("reference bank " + path.string() + " has an unexpected header: " + e.what());
    }
    bank.validate();
    return bank;
}

// --- scorer ----------------------------------------------------------------

AnomalyScorer::AnomalyScorer(const Checkpoint& checkpoint, ReferenceBank bank)
    : backbone_(checkpoint.make_backbone()),
      preprocess_(checkpoint.preprocess),
      window_(checkpoint.window),
      bank_(std::move(bank)) {
    bank_.validate();
    if (bank_.model_ref != checkpoint.model_id()) {
        throw ReferenceError("bank was built by model " + bank_.model_ref + " but the checkpoint is model " +
                             checkpoint.model_id());
    }
    const auto& first = bank_.maps.front();
    unit_sums_.assign(first.patch_count() * first.channels, 0.0);
    for (const auto& m : bank_.maps) {
        for (std::size_t p = 0; p < m.patch_count(); ++p) {
            const auto v = m.patch(p);
            double n2 = 0.0;
            for (float x : v) n2 += static_cast<double>(x) * x;
            const double n = std::sqrt(n2);
            if (n < kZeroNorm) continue;
            double* dst = unit_sums_.data() + p * first.channels;
            for (int k = 0; k < first.channels; ++k) dst[k] += v[k] / n;
        }
    }
}

double AnomalyScorer::score_map(const PatchEmbeddingMap& query) const {
    const auto& first = bank_.maps.front();
    if (!query.same_shape(first)) throw ShapeError("query map does not match the bank");
    double total = 0.0;
    for (std::size_t p = 0; p < query.patch_count(); ++p) {
        const auto v = query.patch(p);
        double n2 = 0.0, dot = 0.0;
        const double* s = unit_sums_.data() + p * query.channels;
        for (int k = 0; k < query.channels; ++k) {
            n2 += static_cast<double>(v[k]) * v[k];
            dot += v[k] * s[k];
        }
        const double n = std::sqrt(n2);
        if (n < kZeroNorm) continue;
        total += dot / n;
    }
    const double mean = total / (static_cast<double>(bank_.size()) * static_cast<double>(query.patch_count()));
    return std::clamp(1.0 - mean, 0.0, 2.0);
}

PatchEmbeddingMap AnomalyScorer::embed(const GradedImage& image) const {
    return patchgrade::embed(backbone_, preprocess(image, preprocess_), window_, image.id);
}

ScoreRecord AnomalyScorer::score(const GradedImage& image) const {
    ScoreRecord r;
    r.id = image.id;
    r.grade = image.grade;
    r.score = score_map(embed(image));
    return r;
}

std::vector<ScoreRecord> AnomalyScorer::score_batch(std::span<const GradedImage> images) const {
    std::vector<ScoreRecord> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        try {
            out.push_back(score(img));
        } catch (const Error& e) {
            throw Error("scoring '" + img.id + "' failed: " + e.what());
        }
    }
    return out;
}

ScoreRecord anomaly_score(const ReferenceBank& bank, const GradedImage& image, const Checkpoint& checkpoint) {
    return AnomalyScorer(checkpoint, bank).score(image);
}

std::vector<ScoreRecord> score_batch(const ReferenceBank& bank, std::span<const GradedImage> images,
                                     const Checkpoint& checkpoint) {
    return AnomalyScorer(checkpoint, bank).score_batch(images);
}

}  // namespace patchgrade
