// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "tigereval/annotations.hpp"
#include "tigereval/detection.hpp"
#include "tigereval/enhancement.hpp"
#include "tigereval/error.hpp"
#include "tigereval/hash.hpp"
#include "tigereval/image_io.hpp"
#include "tigereval/kvfile.hpp"
#include "tigereval/metrics.hpp"
#include "tigereval/parallel.hpp"

namespace tigereval {

/// Environment variable overriding dataset.root (below command-line flags).
inline constexpr const char* kDatasetRootEnv = "TIGEREVAL_DATASET_ROOT";

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::filesystem::path dataset_root = ".";
    std::optional<std::filesystem::path> split_list;
    EnhancerConfig enhancer;
    DetectorConfig detector;
    EvalOptions eval;
    std::filesystem::path output_dir = "tigereval_out";
    int worker_count = 1;

    DatasetLayout layout() const { return {dataset_root}; }
};

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys{
        "dataset.root",          "dataset.split",        "enhancer.kind",           "enhancer.gamma",
        "enhancer.model_path",   "enhancer.precomputed_dir", "enhancer.multiply_with", "detector.kind",
        "detector.model_path",   "detector.predictions_path", "detector.score_floor", "detector.nms_iou",
        "eval.thresholds",       "eval.threshold_rule",  "eval.ignore_difficult",   "eval.classes",
        "output.dir",            "workers",
    };
    return keys;
}

/// Parses thresholds given either as "start:step:stop" or as a comma list.
/// Range values are rounded to 6 decimals so 0.5:0.05:0.95 yields the
/// doubles nearest to 0.55, 0.6, ... rather than accumulated sums.
inline std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<double> parts;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ':')) {
            const auto v = parse_double(item);
            if (!v) throw ConfigError("bad threshold range '" + text + "'");
            parts.push_back(*v);
        }
        if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0]) {
            throw ConfigError("threshold range must be start:step:stop with positive step, got '" + text + "'");
        }
        const auto steps = static_cast<long long>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
        for (long long i = 0; i <= steps; ++i) {
            out.push_back(std::round((parts[0] + static_cast<double>(i) * parts[1]) * 1e6) / 1e6);
        }
    } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto v = parse_double(item);
            if (!v) throw ConfigError("bad threshold '" + trim(item) + "'");
            out.push_back(*v);
        }
    }
    EvalOptions probe;
    probe.thresholds = out;
    probe.validate();
    // A threshold of 0 would count any touching box as correct; runs require (0,1).
    if (!out.empty() && out.front() == 0.0) throw ConfigError("IoU thresholds of a run must be above 0");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

/// Builds a RunConfig from merged key-value settings. Unknown keys are errors.
inline RunConfig run_config_from(const KeyValueFile& kv) {
    for (const auto& [key, value] : kv.values()) {
        if (!known_config_keys().count(key)) throw ConfigError("unknown configuration key '" + key + "'");
    }
    RunConfig cfg;
    if (auto v = kv.get("dataset.root")) cfg.dataset_root = *v;
    if (auto v = kv.get("dataset.split"); v && !v->empty()) cfg.split_list = *v;
    if (auto v = kv.get("output.dir")) cfg.output_dir = *v;
    if (auto v = kv.get("workers")) {
        const auto n = parse_int(*v);
        if (!n || *n < 1) throw ConfigError("workers must be a positive integer, got '" + *v + "'");
        cfg.worker_count = static_cast<int>(*n);
    }

    auto& e = cfg.enhancer;
    if (auto v = kv.get("enhancer.kind")) e.kind = parse_enhancer_kind(*v);
    if (kv.contains("enhancer.gamma")) e.gamma = kv.get_double("enhancer.gamma");
    if (auto v = kv.get("enhancer.model_path")) e.model_path = *v;
    if (auto v = kv.get("enhancer.precomputed_dir")) e.precomputed_dir = *v;
    if (auto v = kv.get("enhancer.multiply_with")) {
        try {
            e.multiply_with = parse_map_selector(*v);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError(ex.what());
        }
    }
    e.validate();

    auto& d = cfg.detector;
    if (auto v = kv.get("detector.kind")) d.kind = parse_detector_kind(*v);
    if (auto v = kv.get("detector.model_path")) d.model_path = *v;
    if (auto v = kv.get("detector.predictions_path")) d.predictions_path = *v;
    if (auto v = kv.get_double("detector.score_floor")) d.score_floor = *v;
    if (auto v = kv.get_double("detector.nms_iou")) d.nms_iou = *v;

    if (auto v = kv.get("eval.thresholds")) cfg.eval.thresholds = parse_thresholds(*v);
    if (auto v = kv.get("eval.threshold_rule")) cfg.eval.rule = parse_threshold_rule(*v);
    if (auto v = kv.get("eval.ignore_difficult")) cfg.eval.ignore_difficult = parse_bool("eval.ignore_difficult", *v);
    if (auto v = kv.get("eval.classes")) cfg.eval.classes = ClassTable::parse(*v);
    cfg.eval.validate();
    return cfg;
}

/// Merges defaults < config file < environment (dataset root) < overrides.
inline RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                                 const std::map<std::string, std::string>& overrides,
                                 const char* env_dataset_root = std::getenv(kDatasetRootEnv)) {
    KeyValueFile kv = file ? KeyValueFile::load(*file) : KeyValueFile{};
    if (env_dataset_root && *env_dataset_root) kv.set("dataset.root", env_dataset_root);
    for (const auto& [key, value] : overrides) kv.set(key, value);
    return run_config_from(kv);
}

/// Image ids of the run: the split list when given, else every annotation.
inline std::vector<std::string> resolve_image_ids(const RunConfig& cfg) {
    if (cfg.split_list) return read_split_list(*cfg.split_list);
    return cfg.layout().all_image_ids();
}

/// Injection points for model backends; empty members fall back to ONNX
/// models named in the configuration. Injected models must tolerate
/// concurrent calls.
struct PipelineBackends {
    std::shared_ptr<GeneratorModel> generator;
    std::optional<BackendManifest> generator_manifest;
    std::shared_ptr<DetectorModel> detector;
};

// ---------------------------------------------------------------------------
// enhance
// ---------------------------------------------------------------------------

struct EnhanceRecord {
    std::string image_id;
    bool ok = false;
    std::string output;     // file name inside the enhanced directory
    std::string cache_key;  // sha256(image bytes, settings hash)
    std::string message;
    ExitCode failure = ExitCode::kSuccess;
    bool cached = false;
};

struct EnhanceSummary {
    std::filesystem::path dir;
    std::string settings_hash;
    std::vector<EnhanceRecord> records;

    std::size_t failed() const {
        return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](auto& r) { return !r.ok; }));
    }
    std::size_t cached() const {
        return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](auto& r) { return r.cached; }));
    }
    /// Non-zero only when every image failed.
    ExitCode exit_code() const {
        if (records.empty() || failed() < records.size()) return ExitCode::kSuccess;
        const bool backend = std::any_of(records.begin(), records.end(),
                                         [](auto& r) { return r.failure == ExitCode::kBackend; });
        return backend ? ExitCode::kBackend : ExitCode::kData;
    }
};

inline constexpr const char* kEnhanceManifest = "manifest.tsv";

namespace detail {

inline std::string tsv_field(std::string s) {
    std::replace_if(s.begin(), s.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
    return s;
}

inline std::map<std::string, EnhanceRecord> read_enhance_manifest(const std::filesystem::path& path) {
    std::map<std::string, EnhanceRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() < 4) continue;
        EnhanceRecord r;
        r.image_id = cols[0];
        r.ok = cols[1] == "ok";
        r.output = cols[2];
        r.cache_key = cols[3];
        out[r.image_id] = r;
    }
    return out;
}

inline std::string lower_extension(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

}  // namespace detail

/// Hash of the enhancer settings plus the model file contents, if any.
inline std::string enhancer_settings_hash(const EnhancerConfig& cfg) {
    Sha256 h;
    h.update(cfg.settings_string());
    if (cfg.model_path && std::filesystem::is_regular_file(*cfg.model_path)) {
        h.update(read_file_bytes(*cfg.model_path));
        const auto mp = manifest_path_for(*cfg.model_path);
        if (std::filesystem::is_regular_file(mp)) h.update(read_file_bytes(mp));
    }
    return h.hex_digest();
}

/// Enhances every split image from <root>/JPEGImages into <out>/enhanced and
/// writes a manifest. Outputs whose cache key is unchanged since the last run
/// are reused. Per-image failures are recorded, not thrown.
inline EnhanceSummary cmd_enhance(const RunConfig& cfg, const PipelineBackends& backends = {}) {
    EnhanceSummary summary;
    summary.dir = cfg.output_dir / "enhanced";
    std::filesystem::create_directories(summary.dir);
    const auto ids = resolve_image_ids(cfg);
    summary.records.resize(ids.size());
    summary.settings_hash = enhancer_settings_hash(cfg.enhancer);
    const auto previous = detail::read_enhance_manifest(summary.dir / kEnhanceManifest);

    std::unique_ptr<Enhancer> enhancer;
    std::string setup_error;
    ExitCode setup_code = ExitCode::kSuccess;
    try {
        enhancer = std::make_unique<Enhancer>(cfg.enhancer, backends.generator, backends.generator_manifest);
    } catch (const Error& e) {
        setup_error = e.what();
        setup_code = e.code();
    }

    const auto images_dir = cfg.layout().images_dir();
    const bool identity = cfg.enhancer.kind == EnhancerKind::kIdentity;
    parallel_for(ids.size(), cfg.worker_count, [&](std::size_t i) {
        auto& rec = summary.records[i];
        rec.image_id = ids[i];
        try {
            if (!enhancer) throw Error(setup_code, setup_error);
            const auto src = find_image(images_dir, rec.image_id);
            if (!src) throw DataError("source image not found for '" + rec.image_id + "' in " + images_dir.string());
            const auto bytes = read_file_bytes(*src);
            rec.cache_key = Sha256().update(bytes).update(summary.settings_hash).hex_digest();
            rec.output = rec.image_id + (identity ? detail::lower_extension(*src) : ".png");
            const auto target = summary.dir / rec.output;
            const auto prev = previous.find(rec.image_id);
            if (prev != previous.end() && prev->second.ok && prev->second.cache_key == rec.cache_key &&
                prev->second.output == rec.output && std::filesystem::is_regular_file(target)) {
                rec.ok = true;
                rec.cached = true;
                return;
            }
            if (identity) {
                write_file_bytes(target, bytes);
            } else {
                const RasterImage img = decode_image(bytes, src->string());
                write_file_bytes(target, encode_png(enhancer->enhance(img, rec.image_id)));
            }
            rec.ok = true;
        } catch (const Error& e) {
            rec.ok = false;
            rec.message = e.what();
            rec.failure = e.code();
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.message = e.what();
            rec.failure = ExitCode::kData;
        }
    });

    std::ofstream out(summary.dir / kEnhanceManifest, std::ios::trunc);
    if (!out) throw DataError("cannot write enhancement manifest in " + summary.dir.string());
    out << "image_id\tstatus\toutput\tcache_key\tsettings_hash\tsettings\tmessage\n";
    for (const auto& r : summary.records) {
        out << r.image_id << '\t' << (r.ok ? "ok" : "error") << '\t' << r.output << '\t' << r.cache_key << '\t'
            << summary.settings_hash << '\t' << detail::tsv_field(cfg.enhancer.settings_string()) << '\t'
            << detail::tsv_field(r.message) << '\n';
    }
    return summary;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectSummary {
    std::filesystem::path predictions_path;
    PredictionSet predictions;
    std::vector<std::string> warnings;
};

/// Runs the detector over the split and writes <out>/predictions.jsonl.
/// Precomputed detection takes image sizes from the annotations when
/// available; model detection reads pixels from `images_dir`.
inline DetectSummary cmd_detect(const RunConfig& cfg, const std::filesystem::path& images_dir,
                                const PipelineBackends& backends = {}) {
    const Detector detector(cfg.detector, backends.detector);
    const auto ids = resolve_image_ids(cfg);
    std::vector<DetectResult> results(ids.size());
    const auto annotations = cfg.layout().annotations_dir();

    parallel_for(ids.size(), cfg.worker_count, [&](std::size_t i) {
        const auto& id = ids[i];
        const auto load_pixels = [&] {
            const auto path = find_image(images_dir, id);
            if (!path) throw DataError("image not found for '" + id + "' in " + images_dir.string());
            return load_image(*path);
        };
        if (detector.needs_pixels()) {
            results[i] = detector.detect(load_pixels(), id);
            return;
        }
        const auto xml = annotations / (id + ".xml");
        Extent extent;
        if (std::filesystem::is_regular_file(xml)) {
            const auto rec = parse_voc_xml(xml, cfg.eval.classes).record;
            extent = {rec.width, rec.height};
        } else {
            extent = load_pixels().extent();
        }
        results[i] = detector.detect(extent, id);
    });

    DetectSummary summary;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!results[i].detections.empty()) summary.predictions[ids[i]] = std::move(results[i].detections);
        for (auto& w : results[i].warnings) summary.warnings.push_back(std::move(w));
    }
    std::filesystem::create_directories(cfg.output_dir);
    summary.predictions_path = cfg.output_dir / "predictions.jsonl";
    write_predictions(summary.predictions_path, summary.predictions);
    std::ofstream warn(cfg.output_dir / "detect_warnings.txt", std::ios::trunc);
    for (const auto& w : summary.warnings) warn << w << '\n';
    return summary;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline GroundTruthSet load_run_ground_truth(const RunConfig& cfg) {
    return load_ground_truth(cfg.layout().annotations_dir(), resolve_image_ids(cfg), cfg.eval.classes);
}

/// Evaluates a predictions file against the run's ground truth and writes
/// report.txt, report.csv and pr/*.csv into the output directory.
inline EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& predictions_path) {
    const auto gts = load_run_ground_truth(cfg);
    const auto preds = parse_predictions(predictions_path);
    auto report = evaluate(preds, gts, cfg.eval);
    write_report_files(cfg.output_dir, report);
    return report;
}

/// enhance -> detect (on the enhanced images) -> eval.
inline EvalReport run_pipeline(const RunConfig& cfg, const PipelineBackends& backends = {}) {
    const auto enhanced = cmd_enhance(cfg, backends);
    if (enhanced.exit_code() != ExitCode::kSuccess) {
        const std::string msg = "enhancement failed for every image: " + enhanced.records.front().message;
        throw Error(enhanced.exit_code(), msg);
    }
    const auto detected = cmd_detect(cfg, enhanced.dir, backends);
    return cmd_eval(cfg, detected.predictions_path);
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string label;
    double map_coco = 0.0;
};

struct ComparisonReport {
    std::string metric = "mAP[0.5:0.95]";
    std::vector<ComparisonRow> references;  // fixed rows shown above the compared pair
    std::vector<ComparisonRow> rows;        // the compared pair: A then B
    double delta = 0.0;                     // rows[1] - rows[0]
};

inline std::string metric_name(const EvalOptions& o) {
    if (o.thresholds.size() == 1) return fmt::format("mAP[{}]", o.thresholds.front());
    return fmt::format("mAP[{}:{}]", o.thresholds.front(), o.thresholds.back());
}

inline ComparisonReport compare_reports(const std::string& label_a, const EvalReport& a, const std::string& label_b,
                                        const EvalReport& b) {
    ComparisonReport r;
    r.metric = metric_name(a.options);
    r.rows = {{label_a, a.map_coco}, {label_b, b.map_coco}};
    r.delta = b.map_coco - a.map_coco;
    return r;
}

inline std::string format_delta(double delta) { return fmt::format("{:+.3f}", delta); }

/// Aligned text table: Model | metric, followed by the delta line.
inline void write_comparison_table(std::ostream& out, const ComparisonReport& r) {
    std::size_t width = 5;
    for (const auto* rows : {&r.references, &r.rows}) {
        for (const auto& row : *rows) width = std::max(width, row.label.size());
    }
    const std::size_t mwidth = std::max<std::size_t>(r.metric.size(), 5);
    const std::string rule = fmt::format("+{}+{}+\n", std::string(width + 2, '-'), std::string(mwidth + 2, '-'));
    out << rule << fmt::format("| {:<{}} | {:<{}} |\n", "Model", width, r.metric, mwidth) << rule;
    for (const auto& row : r.references) {
        out << fmt::format("| {:<{}} | {:<{}.3f} |\n", row.label, width, row.map_coco, mwidth);
    }
    for (const auto& row : r.rows) {
        out << fmt::format("| {:<{}} | {:<{}.3f} |\n", row.label, width, row.map_coco, mwidth);
    }
    out << rule;
    out << fmt::format("delta ({} - {}) = {}\n", r.rows.at(1).label, r.rows.at(0).label, format_delta(r.delta));
}

inline void write_comparison_csv(std::ostream& out, const ComparisonReport& r) {
    out << "label,kind,map_coco\n";
    for (const auto& row : r.references) out << fmt::format("{},reference,{}\n", row.label, row.map_coco);
    for (const auto& row : r.rows) out << fmt::format("{},compared,{}\n", row.label, row.map_coco);
    out << fmt::format("delta,delta,{}\n", r.delta);
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Self-contained SVG bar chart of every row; compared rows are highlighted.
inline void write_comparison_svg(std::ostream& out, const ComparisonReport& r) {
    std::vector<std::pair<ComparisonRow, bool>> bars;
    for (const auto& row : r.references) bars.emplace_back(row, false);
    for (const auto& row : r.rows) bars.emplace_back(row, true);
    constexpr int kBarWidth = 70, kGap = 30, kLeft = 60, kTop = 40, kPlotHeight = 300, kBottom = 90;
    const int width = kLeft + static_cast<int>(bars.size()) * (kBarWidth + kGap) + kGap;
    const int height = kTop + kPlotHeight + kBottom;
    out << fmt::format(R"svg(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)svg", width,
                       height, width, height)
        << '\n';
    out << fmt::format(R"svg(<rect width="{}" height="{}" fill="white"/>)svg", width, height) << '\n';
    out << fmt::format(R"svg(<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>)svg",
                       width / 2, detail::xml_escape(r.metric))
        << '\n';
    for (int tick = 0; tick <= 10; tick += 2) {
        const double y = kTop + kPlotHeight - kPlotHeight * tick / 10.0;
        out << fmt::format(R"svg(<line x1="{}" y1="{:.1f}" x2="{}" y2="{:.1f}" stroke="#dddddd"/>)svg", kLeft, y, width - kGap / 2,
                           y)
            << '\n';
        out << fmt::format(
                   R"svg(<text x="{}" y="{:.1f}" font-family="sans-serif" font-size="11" text-anchor="end">{:.1f}</text>)svg",
                   kLeft - 6, y + 4, tick / 10.0)
            << '\n';
    }
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& [row, compared] = bars[i];
        const double v = std::clamp(row.map_coco, 0.0, 1.0);
        const double h = v * kPlotHeight;
        const int x = kLeft + kGap + static_cast<int>(i) * (kBarWidth + kGap);
        const double y = kTop + kPlotHeight - h;
        out << fmt::format(R"svg(<rect x="{}" y="{:.1f}" width="{}" height="{:.1f}" fill="{}"/>)svg", x, y, kBarWidth, h,
                           compared ? "#d9822b" : "#7f8c99")
            << '\n';
        out << fmt::format(
                   R"svg(<text x="{}" y="{:.1f}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3f}</text>)svg",
                   x + kBarWidth / 2, y - 4, row.map_coco)
            << '\n';
        out << fmt::format(
                   R"svg(<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end" transform="rotate(-30 {} {})">{}</text>)svg",
                   x + kBarWidth / 2, kTop + kPlotHeight + 16, x + kBarWidth / 2, kTop + kPlotHeight + 16,
                   detail::xml_escape(row.label))
            << '\n';
    }
    out << fmt::format(R"svg(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>)svg", kLeft, kTop + kPlotHeight,
                       width - kGap / 2, kTop + kPlotHeight)
        << '\n';
    out << "</svg>\n";
}

/// Writes comparison.txt, comparison.csv and comparison.svg under `dir`.
inline void write_comparison_files(const std::filesystem::path& dir, const ComparisonReport& r) {
    std::filesystem::create_directories(dir);
    std::ofstream txt(dir / "comparison.txt", std::ios::trunc);
    std::ofstream csv(dir / "comparison.csv", std::ios::trunc);
    std::ofstream svg(dir / "comparison.svg", std::ios::trunc);
    if (!txt || !csv || !svg) throw DataError("cannot write comparison files in " + dir.string());
    write_comparison_table(txt, r);
    write_comparison_csv(csv, r);
    write_comparison_svg(svg, r);
}

/// One side of a comparison: a predictions file, or (when absent) a full
/// enhance -> detect -> eval run of `config`.
struct CompareSide {
    std::string label;
    RunConfig config;
    std::optional<std::filesystem::path> predictions;
    PipelineBackends backends;
};

/// Evaluates both sides identically and reports B - A. Each side's evaluation
/// output lands in <out_dir>/run_a and <out_dir>/run_b.
inline ComparisonReport cmd_compare(CompareSide a, CompareSide b, const std::filesystem::path& out_dir,
                                    std::vector<ComparisonRow> references = {}) {
    if (load_run_ground_truth(a.config) != load_run_ground_truth(b.config)) {
        throw DataError("compare: the two runs use different ground-truth sets");
    }
    if (a.config.eval.thresholds != b.config.eval.thresholds || a.config.eval.rule != b.config.eval.rule ||
        a.config.eval.ignore_difficult != b.config.eval.ignore_difficult) {
        throw ConfigError("compare: the two runs use different evaluation settings");
    }
    const auto run = [](CompareSide& side, const std::filesystem::path& dir) {
        side.config.output_dir = dir;
        if (side.predictions) return cmd_eval(side.config, *side.predictions);
        return run_pipeline(side.config, side.backends);
    };
    const auto report_a = run(a, out_dir / "run_a");
    const auto report_b = run(b, out_dir / "run_b");
    auto cmp = compare_reports(a.label, report_a, b.label, report_b);
    cmp.references = std::move(references);
    write_comparison_files(out_dir, cmp);
    return cmp;
}

}  // namespace tigereval
