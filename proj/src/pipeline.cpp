/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "patchgrade/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "patchgrade/error.hpp"
#include "patchgrade/plots.hpp"
#include "patchgrade/records.hpp"
#include "patchgrade/scoring.hpp"
#include "patchgrade/training.hpp"

namespace patchgrade {

namespace fs = std::filesystem;

std::string_view to_string(Model m) { return m == Model::Pretrain ? "pretrain" : "retrain"; }

Model model_from_string(std::string_view s) {
    if (s == "pretrain") return Model::Pretrain;
    if (s == "retrain") return Model::Retrain;
    throw ValidationError("unknown model '" + std::string(s) + "' (expected pretrain or retrain)");
}

namespace {

void say(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

std::string name(Model m) { return std::string(to_string(m)); }

void require(const fs::path& p, const std::string& producer, const std::string& consumer) {
    if (!fs::exists(p)) {
        throw OrderingError("`" + consumer + "` needs the output of `" + producer + "` (missing " + p.string() + ")");
    }
}

DatasetSplit load_split(const RunConfig& cfg, std::uint64_t seed) {
    SplitSpec spec = SplitSpec::read(cfg.split_path());
    if (cfg.normal_count) {
        if (!spec.normal_ids.empty()) {
            throw ConfigError("config: 'dataset.normal_count' conflicts with explicit normal_ids in the split spec");
        }
        spec.normal_count = cfg.normal_count;
    }
    return load_dataset(cfg.dataset_root, spec, seed);
}

std::map<std::string, int> ground_truth_grades(const RunConfig& cfg) {
    std::map<std::string, int> out;
    const fs::path meta = cfg.dataset_root / "meta.csv";
    if (!fs::exists(meta)) return out;
    for (const auto& row : read_meta(meta)) out[row.id] = row.grade;
    return out;
}

std::optional<double> grade0_fraction(const std::vector<ScoreRecord>& records, const std::map<std::string, int>& truth,
                                      bool skip_removed) {
    if (truth.empty()) return std::nullopt;
    int total = 0, zero = 0;
    for (const auto& r : records) {
        if (skip_removed && r.denoise_removed) continue;
        const auto it = truth.find(r.id);
        if (it == truth.end()) return std::nullopt;
        ++total;
        zero += it->second == 0 ? 1 : 0;
    }
    if (total == 0) return 0.0;
    return static_cast<double>(zero) / total;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

AggregateReport aggregate(std::span<const MetricReport> reports) {
    if (reports.size() >= 2) return multi_seed_report(reports);
    AggregateReport a;
    a.runs = static_cast<int>(reports.size());
    if (!reports.empty()) {
        a.srcc = {reports[0].srcc, 0.0};
        a.auc_g4 = {reports[0].auc_g4, 0.0};
    }
    return a;
}

std::vector<GradedImage> select_images(std::span<const GradedImage> pool, const std::vector<ScoreRecord>& keep) {
    std::map<std::string, const GradedImage*> by_id;
    for (const auto& img : pool) by_id[img.id] = &img;
    std::vector<GradedImage> out;
    for (const auto& r : keep) {
        const auto it = by_id.find(r.id);
        if (it == by_id.end()) throw LoadError("image " + r.id + " is not in the unlabeled pool");
        out.push_back(*it->second);
    }
    return out;
}

}  // namespace

fs::path SeedLayout::checkpoint(Model m) const { return root / "checkpoints" / (name(m) + ".pgar"); }
fs::path SeedLayout::bank(Model m) const { return root / "banks" / (name(m) + ".pgar"); }
fs::path SeedLayout::trace(Model m) const { return root / "checkpoints" / (name(m) + "_trace.csv"); }
fs::path SeedLayout::test_scores(Model m) const { return root / "scores" / (name(m) + "_test.csv"); }
fs::path SeedLayout::unlabeled_scores() const { return root / "scores" / "pretrain_unlabeled.csv"; }
fs::path SeedLayout::candidates() const { return root / "scores" / "pseudo_candidates.csv"; }
fs::path SeedLayout::denoised() const { return root / "scores" / "denoised.csv"; }
fs::path SeedLayout::denoise_audit() const { return root / "scores" / "denoise_audit.csv"; }
fs::path SeedLayout::metrics(Model m) const { return root / "metrics" / (name(m) + ".json"); }
fs::path SeedLayout::pseudo_summary() const { return root / "metrics" / "pseudo_label.json"; }

SeedLayout seed_layout(const RunConfig& cfg, std::uint64_t seed) {
    SeedLayout l{cfg.run_dir / ("seed_" + std::to_string(seed))};
    RunLayout(l.root).create();
    return l;
}

void to_json(nlohmann::json& j, const PseudoSummary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    j = {{"unlabeled", s.unlabeled},
         {"candidates", s.candidates},
         {"kept", s.kept},
         {"threshold", s.threshold},
         {"grade0_fraction_before", opt(s.grade0_fraction_before)},
         {"grade0_fraction_after", opt(s.grade0_fraction_after)}};
}

void from_json(const nlohmann::json& j, PseudoSummary& s) {
    auto opt = [&](const char* k) -> std::optional<double> {
        if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
        return j.at(k).get<double>();
    };
    s.unlabeled = j.at("unlabeled").get<int>();
    s.candidates = j.at("candidates").get<int>();
    s.kept = j.value("kept", 0);
    s.threshold = j.value("threshold", 0.0);
    s.grade0_fraction_before = opt("grade0_fraction_before");
    s.grade0_fraction_after = opt("grade0_fraction_after");
}

std::unique_ptr<TextImageScorer> make_scorer(const RunConfig& cfg, const std::string& override_name) {
    const std::string which = override_name.empty() ? cfg.pseudo_label.scorer : override_name;
    if (which == "mock") return std::make_unique<MockTextImageScorer>();
    if (which == "production") {
        if (!cfg.pseudo_label.embedding_table) {
            throw ConfigError("config: 'pseudo_label.embedding_table' is required by the production scorer");
        }
        return std::make_unique<EmbeddingTableScorer>(EmbeddingTableScorer::load(*cfg.pseudo_label.embedding_table));
    }
    throw ConfigError("config: 'pseudo_label.scorer' must be 'mock' or 'production'");
}

StatementDictionary load_statements(const RunConfig& cfg) {
    StatementDictionary d = cfg.pseudo_label.statements
                                ? StatementDictionary::read(*cfg.pseudo_label.statements, cfg.pseudo_label.cutoff_z,
                                                            cfg.pseudo_label.absolute_cutoff)
                                : StatementDictionary::defaults();
    d.cutoff_z = cfg.pseudo_label.cutoff_z;
    d.absolute_cutoff = cfg.pseudo_label.absolute_cutoff;
    d.validate();
    return d;
}

SynthSummary run_synth(const RunConfig& cfg, const Logger& log) {
    SynthSpec spec = cfg.synth;
    if (cfg.normal_count) spec.normal_count = *cfg.normal_count;
    say(log, "synth: writing corpus to " + cfg.dataset_root.string());
    const auto summary = generate(spec, cfg.synth_seed, cfg.dataset_root);
    say(log, "synth: " + std::to_string(summary.images) + " images, " + std::to_string(summary.confounders) +
                 " confounders");
    return summary;
}

void run_pretrain(const RunConfig& cfg, std::uint64_t seed, const Logger& log) {
    cfg.check_paths();
    const auto layout = seed_layout(cfg, seed);
    const auto split = load_split(cfg, seed);
    TrainConfig tc = cfg.pretrain.train;
    tc.stage = Stage::Pretrain;
    tc.seed = seed;
    say(log, "pretrain[seed " + std::to_string(seed) + "]: " + std::to_string(split.normals.size()) + " normals, " +
                 std::to_string(tc.epochs) + " epochs");
    auto result = pretrain(split.normals, cfg.pretrain.backbone, cfg.augment, tc, cfg.preprocess, cfg.window,
                           [&](int epoch, double loss) {
                               char buf[96];
                               std::snprintf(buf, sizeof buf, "  epoch %d loss %.5f", epoch, loss);
                               say(log, buf);
                           });
    result.checkpoint.config_digest = cfg.digest();
    save_checkpoint(layout.checkpoint(Model::Pretrain), result.checkpoint);
    write_training_trace(layout.trace(Model::Pretrain), result.trace);
    const auto bank = build_reference_bank(result.checkpoint, split.normals);
    save_reference_bank(layout.bank(Model::Pretrain), bank);
}

void run_score(const RunConfig& cfg, std::uint64_t seed, Model model, const Logger& log) {
    cfg.check_paths();
    const auto layout = seed_layout(cfg, seed);
    const std::string producer = name(model);
    require(layout.checkpoint(model), producer, "score");
    require(layout.bank(model), producer, "score");
    const auto ckpt = load_checkpoint(layout.checkpoint(model));
    const AnomalyScorer scorer(ckpt, load_reference_bank(layout.bank(model)));
    const auto split = load_split(cfg, seed);
    const std::string digest = cfg.digest();
    say(log, "score[seed " + std::to_string(seed) + ", " + producer + "]: " + std::to_string(split.test.size()) +
                 " test images");
    write_score_table(layout.test_scores(model), {scorer.score_batch(split.test), digest});
    if (model == Model::Pretrain) {
        write_score_table(layout.unlabeled_scores(), {scorer.score_batch(split.unlabeled), digest});
    }
}

PseudoSummary run_pseudo_label(const RunConfig& cfg, std::uint64_t seed, const Logger& log) {
    const auto layout = seed_layout(cfg, seed);
    require(layout.unlabeled_scores(), "score", "pseudo-label");
    require(layout.bank(Model::Pretrain), "pretrain", "pseudo-label");
    const auto table = read_score_table(layout.unlabeled_scores());
    const auto bank = load_reference_bank(layout.bank(Model::Pretrain));
    const auto candidates = select_candidates(table.records, bank.baseline, cfg.pseudo_label.threshold_multiplier);
    write_score_table(layout.candidates(), {candidates, cfg.digest()});
    PseudoSummary s;
    s.unlabeled = static_cast<int>(table.records.size());
    s.candidates = static_cast<int>(candidates.size());
    s.threshold = bank.baseline * cfg.pseudo_label.threshold_multiplier;
    s.grade0_fraction_before = grade0_fraction(candidates, ground_truth_grades(cfg), false);
    write_json(layout.pseudo_summary(), s);
    say(log, "pseudo-label[seed " + std::to_string(seed) + "]: " + std::to_string(s.candidates) + " of " +
                 std::to_string(s.unlabeled) + " above " + std::to_string(s.threshold));
    return s;
}

PseudoSummary run_denoise(const RunConfig& cfg, std::uint64_t seed, const TextImageScorer& scorer, const Logger& log) {
    cfg.check_paths();
    const auto layout = seed_layout(cfg, seed);
    require(layout.candidates(), "pseudo-label", "denoise");
    require(layout.pseudo_summary(), "pseudo-label", "denoise");
    const auto candidates = read_score_table(layout.candidates());
    const auto split = load_split(cfg, seed);
    const auto dict = load_statements(cfg);
    const auto result = denoise(candidates.records, split.unlabeled, scorer, dict);
    write_score_table(layout.denoised(), {result.records, cfg.digest()});
    write_denoise_audit(layout.denoise_audit(), result.audit);
    PseudoSummary s = read_json(layout.pseudo_summary()).get<PseudoSummary>();
    s.kept = static_cast<int>(result.denoised.size());
    s.grade0_fraction_after = grade0_fraction(result.records, ground_truth_grades(cfg), true);
    write_json(layout.pseudo_summary(), s);
    say(log, "denoise[seed " + std::to_string(seed) + ", " + scorer.name() + "]: kept " + std::to_string(s.kept) +
                 " of " + std::to_string(s.candidates));
    return s;
}

void run_retrain(const RunConfig& cfg, std::uint64_t seed, const Logger& log) {
    cfg.check_paths();
    const auto layout = seed_layout(cfg, seed);
    require(layout.denoised(), "denoise", "retrain");
    const auto table = read_score_table(layout.denoised());
    std::vector<ScoreRecord> keep;
    for (const auto& r : table.records) {
        if (!r.denoise_removed) keep.push_back(r);
    }
    const auto split = load_split(cfg, seed);
    const auto denoised = select_images(split.unlabeled, keep);
    TrainConfig tc = cfg.retrain.train;
    tc.stage = Stage::Retrain;
    tc.seed = seed;
    say(log, "retrain[seed " + std::to_string(seed) + "]: " + std::to_string(split.normals.size()) + " normals, " +
                 std::to_string(denoised.size()) + " pseudo anomalies, " + std::to_string(tc.epochs) + " epochs");
    auto result = retrain(split.normals, denoised, cfg.retrain.backbone, tc, cfg.preprocess, cfg.window,
                          [&](int epoch, double loss) {
                              char buf[96];
                              std::snprintf(buf, sizeof buf, "  epoch %d loss %.5f", epoch, loss);
                              say(log, buf);
                          });
    result.checkpoint.config_digest = cfg.digest();
    save_checkpoint(layout.checkpoint(Model::Retrain), result.checkpoint);
    write_training_trace(layout.trace(Model::Retrain), result.trace);
    const auto bank = build_reference_bank(result.checkpoint, split.normals);
    save_reference_bank(layout.bank(Model::Retrain), bank);
}

MetricReport run_evaluate(const RunConfig& cfg, std::uint64_t seed, Model model, const Logger& log) {
    const auto layout = seed_layout(cfg, seed);
    require(layout.test_scores(model), "score", "evaluate");
    const auto table = read_score_table(layout.test_scores(model));
    MetricReport r = evaluate_records(table.records, seed, name(model));
    r.config_digest = table.config_digest;
    write_json(layout.metrics(model), r);
    char buf[128];
    std::snprintf(buf, sizeof buf, "evaluate[seed %llu, %s]: SRCC %.4f AUC_g4 %.4f (n=%d)",
                  static_cast<unsigned long long>(seed), name(model).c_str(), r.srcc, r.auc_g4, r.n_test);
    say(log, buf);
    return r;
}

TableColumn read_baseline_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open baseline CSV " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("name,srcc,auc_g4", 0) != 0) {
        throw ValidationError("baseline CSV " + path.string() + " must start with header name,srcc,auc_g4");
    }
    std::vector<MetricReport> rows;
    std::string column;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string n, s, a;
        if (!std::getline(ss, n, ',') || !std::getline(ss, s, ',') || !std::getline(ss, a, ',')) {
            throw ValidationError("malformed baseline row in " + path.string() + ": " + line);
        }
        if (column.empty()) column = n;
        MetricReport r;
        try {
            r.srcc = std::stod(s);
            r.auc_g4 = std::stod(a);
        } catch (const std::exception&) {
            throw ValidationError("non-numeric baseline row in " + path.string() + ": " + line);
        }
        rows.push_back(r);
    }
    if (rows.empty()) throw ValidationError("baseline CSV " + path.string() + " has no rows");
    return {column, aggregate(rows)};
}

ReportOutputs run_report(const RunConfig& cfg, const ReportOptions& opts, const Logger& log) {
    const std::string digest = cfg.digest();
    std::map<Model, std::vector<MetricReport>> by_model;
    std::vector<nlohmann::json> pseudo;
    std::set<std::string> mismatched;
    for (const auto seed : cfg.seeds) {
        const SeedLayout layout{cfg.run_dir / ("seed_" + std::to_string(seed))};
        require(layout.metrics(Model::Pretrain), "evaluate", "report");
        for (const Model m : {Model::Pretrain, Model::Retrain}) {
            if (!fs::exists(layout.metrics(m))) continue;
            auto r = read_json(layout.metrics(m)).get<MetricReport>();
            if (r.config_digest != digest) mismatched.insert(layout.metrics(m).string());
            by_model[m].push_back(std::move(r));
        }
        if (fs::exists(layout.pseudo_summary())) {
            auto j = read_json(layout.pseudo_summary());
            j["seed"] = seed;
            pseudo.push_back(std::move(j));
        }
    }
    if (!mismatched.empty() && !opts.force) {
        throw IncompatibleError("config digest mismatch in " + *mismatched.begin() + " (" +
                                std::to_string(mismatched.size()) + " artifact(s)); rerun or pass --force");
    }
    const bool has_retrain = by_model.count(Model::Retrain) && by_model[Model::Retrain].size() == cfg.seeds.size();
    const Model final_model = has_retrain ? Model::Retrain : Model::Pretrain;

    nlohmann::json out;
    out["run"] = cfg.run_name;
    out["config_digest"] = digest;
    out["seeds"] = cfg.seeds;
    for (const auto& [m, reports] : by_model) {
        nlohmann::json stage;
        stage["reports"] = reports;
        stage["aggregate"] = reports.size() >= 2 ? nlohmann::json(multi_seed_report(reports)) : nlohmann::json(nullptr);
        out["stages"][name(m)] = stage;
    }
    out["reports"] = by_model[final_model];
    out["aggregate"] = out["stages"][name(final_model)]["aggregate"];
    out["pseudo_label"] = pseudo;
    if (!mismatched.empty()) out["forced"] = true;

    ReportOutputs res;
    fs::create_directories(cfg.run_dir / "metrics");
    res.metrics_json = cfg.run_dir / "metrics" / (cfg.run_name + ".json");
    write_json(res.metrics_json, out);

    std::vector<TableColumn> columns;
    columns.push_back({"pretrain", aggregate(by_model[Model::Pretrain])});
    if (has_retrain) columns.push_back({"retrain (pseudo x " + cfg.pseudo_label.scorer + ")", aggregate(by_model[Model::Retrain])});
    if (opts.baseline_csv) columns.push_back(read_baseline_csv(*opts.baseline_csv));
    res.table_text = format_comparison_table(columns);
    res.table = cfg.run_dir / "report.txt";
    write_text_file(res.table, res.table_text);

    const fs::path plots = cfg.run_dir / "plots";
    fs::create_directories(plots);
    for (const auto seed : cfg.seeds) {
        const SeedLayout layout{cfg.run_dir / ("seed_" + std::to_string(seed))};
        for (const Model m : {Model::Pretrain, Model::Retrain}) {
            if (!fs::exists(layout.test_scores(m))) continue;
            const auto table = read_score_table(layout.test_scores(m));
            const std::string stem = "seed_" + std::to_string(seed) + "_" + name(m);
            const std::string title = name(m) + ", seed " + std::to_string(seed);
            res.plots.push_back(plots / (stem + "_scores.png"));
            plot_score_distribution(res.plots.back(), table.records, title);
            res.plots.push_back(plots / (stem + "_roc_g4.png"));
            plot_roc_grade4(res.plots.back(), table.records, title);
        }
    }
    say(log, res.table_text);
    return res;
}

ReportOutputs run_pipeline(const RunConfig& cfg, const TextImageScorer& scorer, const ReportOptions& opts,
                           const Logger& log) {
    cfg.check_paths();
    for (const auto seed : cfg.seeds) {
        run_pretrain(cfg, seed, log);
        run_score(cfg, seed, Model::Pretrain, log);
        run_evaluate(cfg, seed, Model::Pretrain, log);
        run_pseudo_label(cfg, seed, log);
        if (run_denoise(cfg, seed, scorer, log).kept == 0) {
            const auto layout = seed_layout(cfg, seed);
            for (const auto& stale : {layout.checkpoint(Model::Retrain), layout.trace(Model::Retrain),
                                      layout.bank(Model::Retrain), layout.test_scores(Model::Retrain),
                                      layout.metrics(Model::Retrain)}) {
                fs::remove(stale);
            }
            say(log, "retrain[seed " + std::to_string(seed) + "]: no pseudo anomalies survived, skipped");
            continue;
        }
        run_retrain(cfg, seed, log);
        run_score(cfg, seed, Model::Retrain, log);
        run_evaluate(cfg, seed, Model::Retrain, log);
    }
    return run_report(cfg, opts, log);
}

}  // namespace patchgrade
