/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "patchgrade/data_ingest.hpp"
#include "patchgrade/error.hpp"
#include "patchgrade/rng.hpp"

namespace patchgrade {

namespace {

constexpr float kTissueCeiling = 0.93f;  // non-metal content stays below the metal range
constexpr float kMetalFloor = 0.975f;

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

double bump(double u, double c, double w) { return std::exp(-((u - c) / w) * ((u - c) / w)); }

void check_counts(const std::map<int, int>& m, const char* what) {
    for (const auto& [g, n] : m) {
        if (g < 0 || g > kMaxGrade) throw ValidationError(std::string("synth.") + what + ": grade keys must be 0..4");
        if (n <= 0) throw ValidationError(std::string("synth.") + what + ": counts must be positive");
    }
}

}  // namespace

void SynthSpec::validate() const {
    if (image_side < 32) throw ValidationError("synth.image_side must be at least 32");
    if (normal_pool < 2) throw ValidationError("synth.normal_pool must be at least 2");
    check_counts(unlabeled_per_grade, "unlabeled_per_grade");
    check_counts(test_per_grade, "test_per_grade");
    if (!(confounder_fraction >= 0.0 && confounder_fraction < 1.0)) {
        throw ValidationError("synth.confounder_fraction must lie in [0,1)");
    }
    if (!(noise_sigma >= 0.0)) throw ValidationError("synth.noise_sigma must be non-negative");
    if (!lesions.sigma.valid() || lesions.sigma.lo <= 0.0) throw ValidationError("synth.lesions.sigma invalid");
    if (!lesions.amplitude.valid() || lesions.amplitude.lo <= 0.0) {
        throw ValidationError("synth.lesions.amplitude invalid");
    }
    if (normal_count < 2 || normal_count > normal_pool) {
        throw ValidationError("synth.normal_count must lie in 2..normal_pool");
    }
}

namespace {
nlohmann::json counts_json(const std::map<int, int>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [g, n] : m) j[std::to_string(g)] = n;
    return j;
}
std::map<int, int> counts_from(const nlohmann::json& j) {
    std::map<int, int> m;
    for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<int>();
    return m;
}
}  // namespace

void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = {{"image_side", s.image_side},
         {"normal_pool", s.normal_pool},
         {"normal_count", s.normal_count},
         {"unlabeled_per_grade", counts_json(s.unlabeled_per_grade)},
         {"test_per_grade", counts_json(s.test_per_grade)},
         {"confounder_fraction", s.confounder_fraction},
         {"texture_seed", s.texture_seed},
         {"noise_sigma", s.noise_sigma},
         {"lesions",
          {{"sigma", {s.lesions.sigma.lo, s.lesions.sigma.hi}},
           {"amplitude", {s.lesions.amplitude.lo, s.lesions.amplitude.hi}},
           {"bright_fraction", s.lesions.bright_fraction},
           {"band_halfwidth", s.lesions.band_halfwidth}}}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
    const SynthSpec d;
    s.image_side = j.value("image_side", d.image_side);
    s.normal_pool = j.value("normal_pool", d.normal_pool);
    s.normal_count = j.value("normal_count", d.normal_count);
    s.unlabeled_per_grade = j.contains("unlabeled_per_grade") ? counts_from(j.at("unlabeled_per_grade"))
                                                              : d.unlabeled_per_grade;
    s.test_per_grade = j.contains("test_per_grade") ? counts_from(j.at("test_per_grade")) : d.test_per_grade;
    s.confounder_fraction = j.value("confounder_fraction", d.confounder_fraction);
    s.texture_seed = j.value("texture_seed", d.texture_seed);
    s.noise_sigma = j.value("noise_sigma", d.noise_sigma);
    s.lesions = d.lesions;
    if (j.contains("lesions")) {
        const auto& l = j.at("lesions");
        if (l.contains("sigma")) s.lesions.sigma = {l.at("sigma")[0].get<double>(), l.at("sigma")[1].get<double>()};
        if (l.contains("amplitude")) {
            s.lesions.amplitude = {l.at("amplitude")[0].get<double>(), l.at("amplitude")[1].get<double>()};
        }
        s.lesions.bright_fraction = l.value("bright_fraction", d.lesions.bright_fraction);
        s.lesions.band_halfwidth = l.value("band_halfwidth", d.lesions.band_halfwidth);
    }
}

Tensor3 render_template(const SynthSpec& spec) {
    const int n = spec.image_side;
    Tensor3 t(1, n, n);
    Rng rng(Rng::derive(spec.texture_seed, "anatomy"));
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 12; ++i) {
        const double angle = rng.uniform(0.0, std::numbers::pi);
        const double freq = rng.uniform(6.0, 22.0);
        waves.push_back({freq * std::cos(angle), freq * std::sin(angle), rng.uniform(0.0, 2 * std::numbers::pi),
                         rng.uniform(0.002, 0.006)});
    }
    const double edge = 1.5 / n;
    for (int y = 0; y < n; ++y) {
        const double v = (y + 0.5) / n;
        for (int x = 0; x < n; ++x) {
            const double u = (x + 0.5) / n;
            const double du = std::abs(u - 0.5);
            const double condyles = bump(u, 0.38, 0.08) + bump(u, 0.62, 0.08);
            // Femur: above a condylar boundary, widening towards the joint.
            const double femur_bottom = 0.462 + 0.018 * condyles;
            const double femur_half = 0.17 + 0.12 * smoothstep(0.15, 0.42, v);
            const double in_femur = (1.0 - smoothstep(femur_bottom - edge, femur_bottom + edge, v)) *
                                    (1.0 - smoothstep(femur_half - edge, femur_half + edge, du));
            // Tibia: below a flat plateau, narrowing into the shaft.
            const double tibia_top = 0.538 + 0.008 * (1.0 - condyles);
            const double tibia_half = 0.30 - 0.13 * smoothstep(0.58, 0.86, v);
            const double in_tibia = smoothstep(tibia_top - edge, tibia_top + edge, v) *
                                    (1.0 - smoothstep(tibia_half - edge, tibia_half + edge, du));
            const double in_soft = 1.0 - smoothstep(0.40, 0.46, du);
            double value = 0.10 + 0.16 * in_soft;
            const double bone = std::max(in_femur, in_tibia);
            if (bone > 0.0) {
                double texture = 0.0;
                for (const auto& w : waves) texture += w.amp * std::sin(2 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
                // Brighter cortex near the articular surfaces.
                const double cortex = std::max(bump(v, femur_bottom - 0.012, 0.012) * in_femur,
                                               bump(v, tibia_top + 0.012, 0.012) * in_tibia);
                value += bone * (0.34 + texture + 0.10 * cortex);
            }
            t.at(0, y, x) = static_cast<float>(std::clamp(value, 0.0, static_cast<double>(kTissueCeiling)));
        }
    }
    return t;
}

SynthImage render_image(const SynthSpec& spec, const Tensor3& templ, std::string id, std::string split, int grade,
                        bool confounder, std::uint64_t image_seed) {
    const int n = spec.image_side;
    const double scale = n / 256.0;
    Rng rng(image_seed);
    SynthImage img;
    img.id = std::move(id);
    img.split = std::move(split);
    img.grade = grade;
    img.confounder = confounder;
    img.pixels = templ;

    // Lesions first so their placement does not depend on the noise stream.
    Rng lesion_rng = rng.fork(1);
    for (int k = 0; k < grade; ++k) {
        Lesion l;
        for (int attempt = 0; attempt < 50; ++attempt) {
            l.x = n * lesion_rng.uniform(0.26, 0.74);
            l.y = n * (0.5 + lesion_rng.uniform(-spec.lesions.band_halfwidth, spec.lesions.band_halfwidth));
            const bool clear = std::all_of(img.lesions.begin(), img.lesions.end(), [&](const Lesion& o) {
                return std::hypot(o.x - l.x, o.y - l.y) > 4.0 * spec.lesions.sigma.hi * scale;
            });
            if (clear) break;
        }
        l.sigma = scale * lesion_rng.uniform(spec.lesions.sigma.lo, spec.lesions.sigma.hi);
        const double amp = lesion_rng.uniform(spec.lesions.amplitude.lo, spec.lesions.amplitude.hi);
        l.amplitude = lesion_rng.uniform() < spec.lesions.bright_fraction ? amp : -amp;
        img.lesions.push_back(l);
    }
    for (const auto& l : img.lesions) {
        const int r = static_cast<int>(std::ceil(3.5 * l.sigma));
        for (int y = std::max(0, static_cast<int>(l.y) - r); y <= std::min(n - 1, static_cast<int>(l.y) + r); ++y) {
            for (int x = std::max(0, static_cast<int>(l.x) - r); x <= std::min(n - 1, static_cast<int>(l.x) + r); ++x) {
                const double d2 = (x + 0.5 - l.x) * (x + 0.5 - l.x) + (y + 0.5 - l.y) * (y + 0.5 - l.y);
                img.pixels.at(0, y, x) += static_cast<float>(l.amplitude * std::exp(-d2 / (2 * l.sigma * l.sigma)));
            }
        }
    }

    Rng noise_rng = rng.fork(2);
    const float sigma = static_cast<float>(spec.noise_sigma);
    for (float& v : img.pixels.data) {
        v = std::clamp(v + sigma * static_cast<float>(noise_rng.normal()), 0.0f, kTissueCeiling);
    }

    if (confounder) {
        Rng metal_rng = rng.fork(3);
        const int w = static_cast<int>(std::lround(n * metal_rng.uniform(0.04, 0.07)));
        const int h = static_cast<int>(std::lround(n * metal_rng.uniform(0.14, 0.24)));
        const int x = static_cast<int>(std::lround(n * metal_rng.uniform(0.40, 0.60) - w / 2.0));
        const bool upper = metal_rng.uniform() < 0.5;
        const int y = static_cast<int>(std::lround(n * (upper ? metal_rng.uniform(0.12, 0.26) : metal_rng.uniform(0.58, 0.70))));
        const Box box{std::clamp(x, 0, n - w), std::clamp(y, 0, n - h), w, h};
        for (int yy = box.y; yy < box.y + box.height; ++yy) {
            for (int xx = box.x; xx < box.x + box.width; ++xx) {
                img.pixels.at(0, yy, xx) = static_cast<float>(metal_rng.uniform(kMetalFloor + 0.005, 1.0));
            }
        }
        img.metal = box;
    }
    return img;
}

std::vector<SynthImage> render_corpus(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const Tensor3 templ = render_template(spec);
    struct Job {
        std::string split;
        int grade;
        bool confounder;
    };
    std::vector<Job> pool_jobs, unl_jobs, test_jobs;
    for (int i = 0; i < spec.normal_pool; ++i) pool_jobs.push_back({"pool", 0, false});
    for (const auto& [g, count] : spec.unlabeled_per_grade) {
        const int metal = g == 0 ? static_cast<int>(std::lround(spec.confounder_fraction * count)) : 0;
        for (int i = 0; i < count; ++i) unl_jobs.push_back({"unlabeled", g, i < metal});
    }
    for (const auto& [g, count] : spec.test_per_grade) {
        for (int i = 0; i < count; ++i) test_jobs.push_back({"test", g, false});
    }
    // Shuffle within each split so ids carry no grade information.
    Rng order(Rng::derive(seed, "order"));
    auto shuffle = [&](std::vector<Job>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[order.below(i)]);
    };
    shuffle(unl_jobs);
    shuffle(test_jobs);

    std::vector<SynthImage> out;
    auto emit = [&](const std::vector<Job>& jobs, const char* prefix) {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "%s_%05zu", prefix, i + 1);
            out.push_back(render_image(spec, templ, id, jobs[i].split, jobs[i].grade, jobs[i].confounder,
                                       Rng::derive(seed, id)));
        }
    };
    emit(pool_jobs, "pool");
    emit(unl_jobs, "unl");
    emit(test_jobs, "test");
    return out;
}

SynthSummary generate(const SynthSpec& spec, std::uint64_t seed, const std::filesystem::path& root) {
    const auto corpus = render_corpus(spec, seed);
    std::error_code ec;
    std::filesystem::create_directories(root / "images", ec);
    if (ec) throw IoError("cannot create " + (root / "images").string() + ": " + ec.message());

    std::vector<LabelRow> labels;
    std::string meta = "id,split,grade,confounder,lesion_count,lesions\n";
    SplitSpec split;
    split.normal_count = spec.normal_count;
    split.normal_seed = seed;
    SynthSummary summary;
    char buf[96];
    for (const auto& img : corpus) {
        write_png_gray(root / "images" / (img.id + ".png"), img.pixels);
        labels.push_back({img.id, img.split == "unlabeled" ? std::nullopt : std::optional<int>(img.grade)});
        std::string lesions;
        for (const auto& l : img.lesions) {
            std::snprintf(buf, sizeof buf, "%s%.2f:%.2f:%.2f:%.3f", lesions.empty() ? "" : ";", l.x, l.y, l.sigma,
                          l.amplitude);
            lesions += buf;
        }
        meta += img.id + "," + img.split + "," + std::to_string(img.grade) + "," + (img.confounder ? "1" : "0") + "," +
                std::to_string(img.lesions.size()) + "," + lesions + "\n";
        if (img.split == "unlabeled") split.unlabeled_ids.push_back(img.id);
        if (img.split == "test") split.test_ids.push_back(img.id);
        summary.confounders += img.confounder ? 1 : 0;
    }
    summary.images = corpus.size();
    write_labels(root / "labels.csv", labels);
    write_text_file(root / "meta.csv", meta);
    split.write(root / "split.json");
    nlohmann::json sj = spec;
    sj["seed"] = seed;
    write_text_file(root / "synth.json", sj.dump(2) + "\n");
    return summary;
}

std::vector<MetaRow> read_meta(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<MetaRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5) throw ValidationError("malformed meta row in " + path.string());
        rows.push_back({cells[0], cells[1], std::stoi(cells[2]), cells[3] == "1", std::stoi(cells[4])});
    }
    return rows;
}

}  // namespace patchgrade
