// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: enhance, detect, eval, compare, stats.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tigereval/tigereval.hpp"

namespace {

using tigereval::ExitCode;

struct CommonArgs {
    std::optional<std::string> config;
    std::map<std::string, std::string> overrides;
};

// Registers a string flag whose value, when given, becomes a config override.
void add_override(CLI::App* cmd, CommonArgs& args, const std::string& flag, const std::string& key,
                  const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&args, key](const std::string& v) { args.overrides[key] = v; }, help);
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_backends) {
    cmd->add_option_function<std::string>(
        "--config", [&args](const std::string& v) { args.config = v; }, "Key-value run configuration file");
    add_override(cmd, args, "--root", "dataset.root", "Dataset root (Annotations/, JPEGImages/)");
    add_override(cmd, args, "--split", "dataset.split", "Split list: one image id per line");
    add_override(cmd, args, "--out", "output.dir", "Output directory");
    add_override(cmd, args, "--workers", "workers", "Number of worker threads");
    add_override(cmd, args, "--thresholds", "eval.thresholds", "IoU thresholds: start:step:stop or a,b,c");
    add_override(cmd, args, "--threshold-rule", "eval.threshold_rule", "strict (IoU > t) or non-strict (IoU >= t)");
    add_override(cmd, args, "--classes", "eval.classes", "Class table name:id[,name:id...]");
    add_override(cmd, args, "--eval.ignore_difficult", "eval.ignore_difficult", "Ignore difficult objects");
    if (!with_backends) return;
    for (const char* key : {"enhancer.kind", "enhancer.gamma", "enhancer.model_path", "enhancer.precomputed_dir",
                            "enhancer.multiply_with", "detector.kind", "detector.model_path",
                            "detector.predictions_path", "detector.score_floor", "detector.nms_iou"}) {
        add_override(cmd, args, std::string("--") + key, key, std::string("Override ") + key);
    }
}

tigereval::RunConfig make_config(const CommonArgs& args) {
    std::optional<std::filesystem::path> file;
    if (args.config) file = *args.config;
    return tigereval::load_run_config(file, args.overrides);
}

int run_enhance(const CommonArgs& args) {
    const auto cfg = make_config(args);
    const auto summary = tigereval::cmd_enhance(cfg);
    for (const auto& r : summary.records) {
        if (!r.ok) std::cerr << "error: " << r.image_id << ": " << r.message << '\n';
    }
    std::cerr << fmt::format("enhanced {} image(s) into {} ({} cached, {} failed)\n",
                             summary.records.size() - summary.failed(), summary.dir.string(), summary.cached(),
                             summary.failed());
    return static_cast<int>(summary.exit_code());
}

int run_detect(const CommonArgs& args, const std::optional<std::string>& images) {
    const auto cfg = make_config(args);
    const std::filesystem::path dir = images ? std::filesystem::path(*images) : cfg.layout().images_dir();
    const auto summary = tigereval::cmd_detect(cfg, dir);
    for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
    std::size_t n = 0;
    for (const auto& [id, dets] : summary.predictions) n += dets.size();
    std::cerr << fmt::format("wrote {} detection(s) to {}\n", n, summary.predictions_path.string());
    return 0;
}

int run_eval(const CommonArgs& args, const std::optional<std::string>& predictions) {
    const auto cfg = make_config(args);
    const std::filesystem::path path = predictions ? std::filesystem::path(*predictions)
                                                   : cfg.output_dir / "predictions.jsonl";
    const auto report = tigereval::cmd_eval(cfg, path);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << fmt::format("{:.3f}", report.map_coco) << std::endl;
    return 0;
}

struct CompareArgs {
    std::optional<std::string> config_b;
    std::optional<std::string> predictions_a;
    std::optional<std::string> predictions_b;
    std::string label_a = "A";
    std::string label_b = "B";
    std::vector<std::string> references;
};

int run_compare(const CommonArgs& args, const CompareArgs& cmp) {
    const auto cfg_a = make_config(args);
    CommonArgs args_b = args;
    if (cmp.config_b) args_b.config = *cmp.config_b;
    const auto cfg_b = make_config(args_b);

    std::vector<tigereval::ComparisonRow> refs;
    for (const auto& r : cmp.references) {
        const auto eq = r.rfind('=');
        const auto v = eq == std::string::npos ? std::nullopt : tigereval::parse_double(r.substr(eq + 1));
        if (!v) throw tigereval::ConfigError("--reference expects label=value, got '" + r + "'");
        refs.push_back({r.substr(0, eq), *v});
    }

    tigereval::CompareSide a{cmp.label_a, cfg_a, std::nullopt, {}};
    tigereval::CompareSide b{cmp.label_b, cfg_b, std::nullopt, {}};
    if (cmp.predictions_a) a.predictions = *cmp.predictions_a;
    if (cmp.predictions_b) b.predictions = *cmp.predictions_b;
    const auto out_dir = cfg_a.output_dir;
    const auto report = tigereval::cmd_compare(a, b, out_dir, refs);
    tigereval::write_comparison_table(std::cout, report);
    std::cerr << "comparison written to " << out_dir.string() << '\n';
    return 0;
}

int run_stats(const CommonArgs& args) {
    const auto cfg = make_config(args);
    const auto gts = tigereval::load_run_ground_truth(cfg);
    const auto stats = tigereval::dataset_stats(gts);
    std::cout << "images = " << stats.image_count << '\n';
    std::cout << "boxes = " << stats.box_count << '\n';
    for (const auto& [cls, n] : stats.per_class) {
        std::cout << "class." << cfg.eval.classes.name_of(cls) << " = " << n << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tigereval: low-light enhancement and detection evaluation pipeline"};
    app.require_subcommand(1);

    CommonArgs enhance_args, detect_args, eval_args, compare_args, stats_args;
    std::optional<std::string> images, predictions;
    CompareArgs cmp;

    auto* enhance = app.add_subcommand("enhance", "Enhance every split image");
    add_common(enhance, enhance_args, true);

    auto* detect = app.add_subcommand("detect", "Run the detector and write predictions.jsonl");
    add_common(detect, detect_args, true);
    detect->add_option_function<std::string>(
        "--images", [&](const std::string& v) { images = v; }, "Image directory (default <root>/JPEGImages)");

    auto* eval = app.add_subcommand("eval", "Evaluate predictions and print mAP[0.5:0.95]");
    add_common(eval, eval_args, false);
    eval->add_option_function<std::string>(
        "--predictions", [&](const std::string& v) { predictions = v; },
        "Predictions JSON-lines file (default <out>/predictions.jsonl)");

    auto* compare = app.add_subcommand("compare", "Compare two runs or two prediction files");
    add_common(compare, compare_args, false);
    compare->add_option_function<std::string>(
        "--config-b", [&](const std::string& v) { cmp.config_b = v; }, "Configuration of run B (default: --config)");
    compare->add_option_function<std::string>(
        "--predictions-a", [&](const std::string& v) { cmp.predictions_a = v; }, "Predictions of run A");
    compare->add_option_function<std::string>(
        "--predictions-b", [&](const std::string& v) { cmp.predictions_b = v; }, "Predictions of run B");
    compare->add_option("--label-a", cmp.label_a, "Label of run A");
    compare->add_option("--label-b", cmp.label_b, "Label of run B");
    compare->add_option("--reference", cmp.references, "Extra fixed table row label=value (repeatable)");

    auto* stats = app.add_subcommand("stats", "Print dataset image and box counts");
    add_common(stats, stats_args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
    }

    try {
        if (enhance->parsed()) return run_enhance(enhance_args);
        if (detect->parsed()) return run_detect(detect_args, images);
        if (eval->parsed()) return run_eval(eval_args, predictions);
        if (compare->parsed()) return run_compare(compare_args, cmp);
        if (stats->parsed()) return run_stats(stats_args);
    } catch (const tigereval::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::kData);
    }
    return static_cast<int>(ExitCode::kUsage);
}
