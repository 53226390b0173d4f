/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "patchgrade/digest.hpp"
#include "patchgrade/error.hpp"

namespace patchgrade {

namespace fs = std::filesystem;

namespace {

// Paths whose objects are free-form maps rather than fixed records.
const std::set<std::string> kOpenObjects = {"synth.unlabeled_per_grade", "synth.test_per_grade"};

void check_keys(const nlohmann::json& given, const nlohmann::json& schema, const std::string& path) {
    if (!given.is_object()) return;
    if (!schema.is_object()) throw ConfigError("config: '" + path + "' must not be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string sub = path.empty() ? key : path + "." + key;
        if (!schema.contains(key)) throw ConfigError("config: unknown key '" + sub + "'");
        if (kOpenObjects.count(sub)) continue;
        const auto& expected = schema.at(key);
        if (value.is_object() && expected.is_object()) check_keys(value, expected, sub);
    }
}

std::string opt_path(const std::optional<fs::path>& p) { return p ? p->string() : std::string(); }

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return (base / p).lexically_normal();
}

nlohmann::json config_json(const RunConfig& c, bool with_outputs) {
    nlohmann::json synth = c.synth;
    synth["seed"] = c.synth_seed;
    nlohmann::json j = {
        {"dataset",
         {{"root", c.dataset_root.string()},
          {"split", c.split.string()},
          {"normal_count", c.normal_count ? nlohmann::json(*c.normal_count) : nlohmann::json(nullptr)}}},
        {"synth", synth},
        {"preprocess", c.preprocess},
        {"augment", c.augment},
        {"window", c.window},
        {"pretrain", {{"backbone", c.pretrain.backbone}, {"train", c.pretrain.train}}},
        {"retrain", {{"backbone", c.retrain.backbone}, {"train", c.retrain.train}}},
        {"pseudo_label",
         {{"threshold_multiplier", c.pseudo_label.threshold_multiplier},
          {"statements", opt_path(c.pseudo_label.statements)},
          {"cutoff_z", c.pseudo_label.cutoff_z},
          {"absolute_cutoff", c.pseudo_label.absolute_cutoff},
          {"scorer", c.pseudo_label.scorer},
          {"embedding_table", opt_path(c.pseudo_label.embedding_table)}}},
    };
    if (with_outputs) {
        j["seeds"] = c.seeds;
        j["run"] = {{"name", c.run_name}, {"dir", c.run_dir.string()}};
    }
    return j;
}

}  // namespace

void RunConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
    if (window < 1) throw ConfigError("config: 'window' must be >= 1");
    if (normal_count && *normal_count < 2) throw ConfigError("config: 'dataset.normal_count' must be >= 2");
    if (!(pseudo_label.threshold_multiplier > 0.0)) {
        throw ConfigError("config: 'pseudo_label.threshold_multiplier' must be positive");
    }
    if (pseudo_label.scorer != "mock" && pseudo_label.scorer != "production") {
        throw ConfigError("config: 'pseudo_label.scorer' must be 'mock' or 'production'");
    }
    if (run_name.empty() || run_name.find('/') != std::string::npos) {
        throw ConfigError("config: 'run.name' must be a plain file name");
    }
    auto wrap = [](const char* key, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(std::string("config: '") + key + "': " + e.what());
        }
    };
    wrap("synth", [&] { synth.validate(); });
    wrap("preprocess", [&] { preprocess.validate(); });
    wrap("augment", [&] { augment.validate(); });
    wrap("pretrain.backbone", [&] { pretrain.backbone.validate(); });
    wrap("pretrain.train", [&] { pretrain.train.validate(); });
    wrap("retrain.backbone", [&] { retrain.backbone.validate(); });
    wrap("retrain.train", [&] { retrain.train.validate(); });
}

fs::path RunConfig::split_path() const { return split.is_absolute() ? split : dataset_root / split; }

void RunConfig::check_paths() const {
    if (!fs::is_directory(dataset_root)) {
        throw ConfigError("config: 'dataset.root' does not exist: " + dataset_root.string() +
                          " (run `synth` to generate a corpus)");
    }
    if (!fs::exists(split_path())) throw ConfigError("config: 'dataset.split' does not exist: " + split_path().string());
    if (pseudo_label.statements && !fs::exists(*pseudo_label.statements)) {
        throw ConfigError("config: 'pseudo_label.statements' does not exist: " + pseudo_label.statements->string());
    }
    if (pseudo_label.scorer == "production") {
        if (!pseudo_label.embedding_table) {
            throw ConfigError("config: 'pseudo_label.embedding_table' is required by the production scorer");
        }
        if (!fs::exists(*pseudo_label.embedding_table)) {
            throw ConfigError("config: 'pseudo_label.embedding_table' does not exist: " +
                              pseudo_label.embedding_table->string());
        }
    }
    for (const auto* s : {&pretrain.backbone, &retrain.backbone}) {
        if (s->weights_source != kBuiltinWeights && !fs::exists(s->weights_source)) {
            throw ConfigError("config: weights file does not exist: " + s->weights_source);
        }
    }
}

std::string RunConfig::digest() const { return sha256_hex(config_json(*this, false).dump()); }

nlohmann::json to_json(const RunConfig& c) { return config_json(c, true); }

RunConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    const RunConfig d;
    check_keys(j, to_json(d), "");
    RunConfig c;
    std::string at;
    try {
        if (j.contains("dataset")) {
            const auto& ds = j.at("dataset");
            at = "dataset.root";
            if (ds.contains("root")) c.dataset_root = ds.at("root").get<std::string>();
            at = "dataset.split";
            if (ds.contains("split")) c.split = ds.at("split").get<std::string>();
            at = "dataset.normal_count";
            if (ds.contains("normal_count") && !ds.at("normal_count").is_null()) {
                c.normal_count = ds.at("normal_count").get<int>();
            }
        }
        at = "synth";
        if (j.contains("synth")) {
            nlohmann::json merged = to_json(d).at("synth");
            merged.merge_patch(j.at("synth"));
            for (const char* k : {"unlabeled_per_grade", "test_per_grade"}) {
                if (j.at("synth").contains(k)) merged[k] = j.at("synth").at(k);
            }
            c.synth = merged.get<SynthSpec>();
            c.synth_seed = merged.at("seed").get<std::uint64_t>();
        }
        at = "preprocess";
        if (j.contains("preprocess")) c.preprocess = j.at("preprocess").get<PreprocessSpec>();
        at = "augment";
        if (j.contains("augment")) c.augment = j.at("augment").get<AugmentParams>();
        at = "window";
        if (j.contains("window")) c.window = j.at("window").get<int>();
        for (auto [name, stage] : {std::pair{"pretrain", &c.pretrain}, std::pair{"retrain", &c.retrain}}) {
            if (!j.contains(name)) continue;
            const auto& s = j.at(name);
            at = std::string(name) + ".backbone";
            if (s.contains("backbone")) stage->backbone = s.at("backbone").get<BackboneSpec>();
            at = std::string(name) + ".train";
            if (s.contains("train")) {
                nlohmann::json merged = nlohmann::json(stage->train);
                merged.merge_patch(s.at("train"));
                stage->train = merged.get<TrainConfig>();
            }
        }
        if (j.contains("pseudo_label")) {
            const auto& p = j.at("pseudo_label");
            auto& o = c.pseudo_label;
            at = "pseudo_label.threshold_multiplier";
            o.threshold_multiplier = p.value("threshold_multiplier", o.threshold_multiplier);
            at = "pseudo_label.statements";
            if (p.contains("statements") && !p.at("statements").get<std::string>().empty()) {
                o.statements = p.at("statements").get<std::string>();
            }
            at = "pseudo_label.cutoff_z";
            o.cutoff_z = p.value("cutoff_z", o.cutoff_z);
            at = "pseudo_label.absolute_cutoff";
            o.absolute_cutoff = p.value("absolute_cutoff", o.absolute_cutoff);
            at = "pseudo_label.scorer";
            o.scorer = p.value("scorer", o.scorer);
            at = "pseudo_label.embedding_table";
            if (p.contains("embedding_table") && !p.at("embedding_table").get<std::string>().empty()) {
                o.embedding_table = p.at("embedding_table").get<std::string>();
            }
        }
        at = "seeds";
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("run")) {
            at = "run.name";
            c.run_name = j.at("run").value("name", c.run_name);
            at = "run.dir";
            if (j.at("run").contains("dir")) c.run_dir = j.at("run").at("dir").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: invalid value at '" + at + "': " + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("config: invalid value at '" + at + "': " + e.what());
    }
    c.dataset_root = resolve(c.dataset_root, base_dir);
    c.run_dir = resolve(c.run_dir, base_dir);
    if (c.pseudo_label.statements) c.pseudo_label.statements = resolve(*c.pseudo_label.statements, base_dir);
    if (c.pseudo_label.embedding_table) {
        c.pseudo_label.embedding_table = resolve_model_file(resolve(*c.pseudo_label.embedding_table, base_dir));
    }
    for (auto* s : {&c.pretrain.backbone, &c.retrain.backbone}) {
        if (s->weights_source != kBuiltinWeights) {
            s->weights_source = resolve_model_file(resolve(s->weights_source, base_dir)).string();
        }
    }
    c.validate();
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, fs::absolute(path).parent_path());
}

void write_config(const fs::path& path, const RunConfig& c) { write_text_file(path, to_json(c).dump(2) + "\n"); }

fs::path resolve_model_file(const fs::path& p) {
    if (p.empty() || fs::exists(p)) return p;
    const char* cache = std::getenv(kModelCacheEnv);
    if (cache == nullptr || *cache == '\0') return p;
    const fs::path candidate = fs::path(cache) / p.filename();
    return fs::exists(candidate) ? candidate : p;
}

}  // namespace patchgrade
