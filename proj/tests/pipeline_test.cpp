// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/reference_eval.hpp"
#include "support/temp_dir.hpp"
#include "tigereval/pipeline.hpp"

namespace tigereval {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

RunConfig base_config(const TempDir& dir, const std::string& out = "out") {
    RunConfig cfg;
    cfg.dataset_root = dir / "data";
    cfg.split_list = dir / "data" / "split.txt";
    cfg.output_dir = dir / out;
    return cfg;
}

/// Stub emitting the same box once per image.
class FixedBoxDetector final : public DetectorModel {
public:
    std::vector<Detection> infer(const RasterImage&) override { return {{{2, 2, 10, 10}, 0.5, 0}}; }
};

/// Predictions that hit the ground truth of the first `hits` images.
PredictionSet near_gt_predictions(const GroundTruthSet& gts, std::size_t hits) {
    PredictionSet preds;
    std::size_t i = 0;
    for (const auto& [id, img] : gts) {
        if (i++ >= hits) break;
        const auto& b = img.objects.at(0).box;
        preds[id].push_back({{b.x_min, b.y_min, b.x_max - 1.0, b.y_max}, 0.5 + 0.04 * static_cast<double>(i), 0});
        preds[id].push_back({{0, 0, 3, 3}, 0.3, 0});
    }
    return preds;
}

// --- configuration ----------------------------------------------------------------

TEST(RunConfigTest, Defaults) {
    const auto cfg = load_run_config(std::nullopt, {}, nullptr);
    EXPECT_EQ(cfg.dataset_root, ".");
    EXPECT_EQ(cfg.enhancer.kind, EnhancerKind::kIdentity);
    EXPECT_EQ(cfg.eval.thresholds, coco_thresholds());
    EXPECT_EQ(cfg.eval.rule, ThresholdRule::kStrict);
    EXPECT_EQ(cfg.detector.score_floor, kDefaultScoreFloor);
    EXPECT_EQ(cfg.detector.nms_iou, kDefaultNmsIou);
    EXPECT_EQ(cfg.worker_count, 1);
}

TEST(RunConfigTest, PrecedenceCliOverEnvOverFile) {
    TempDir dir;
    testing::write_text(dir / "run.cfg",
                        "# comment\n"
                        "dataset.root = /from/file\n"
                        "enhancer.kind = gamma\n"
                        "enhancer.gamma = 0.8\n"
                        "workers = 3\n"
                        "eval.threshold_rule = non-strict\n");
    auto cfg = load_run_config(dir / "run.cfg", {}, nullptr);
    EXPECT_EQ(cfg.dataset_root, "/from/file");
    EXPECT_EQ(cfg.enhancer.gamma, 0.8);
    EXPECT_EQ(cfg.worker_count, 3);
    EXPECT_EQ(cfg.eval.rule, ThresholdRule::kNonStrict);

    cfg = load_run_config(dir / "run.cfg", {}, "/from/env");
    EXPECT_EQ(cfg.dataset_root, "/from/env");

    cfg = load_run_config(dir / "run.cfg", {{"dataset.root", "/from/cli"}, {"enhancer.gamma", "2"}}, "/from/env");
    EXPECT_EQ(cfg.dataset_root, "/from/cli");
    EXPECT_EQ(cfg.enhancer.gamma, 2.0);
}

TEST(RunConfigTest, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(load_run_config(std::nullopt, {{"enhancer.gama", "2"}}, nullptr), ConfigError);
    EXPECT_THROW(load_run_config(std::nullopt, {{"workers", "0"}}, nullptr), ConfigError);
    EXPECT_THROW(load_run_config(std::nullopt, {{"enhancer.kind", "gamma"}}, nullptr), ConfigError);
    EXPECT_THROW(load_run_config(std::nullopt, {{"eval.threshold_rule", "loose"}}, nullptr), ConfigError);
    EXPECT_THROW(load_run_config(std::nullopt, {{"eval.ignore_difficult", "maybe"}}, nullptr), ConfigError);
    EXPECT_THROW(load_run_config(std::nullopt, {{"detector.nms_iou", "x"}}, nullptr), ConfigError);
    TempDir dir;
    testing::write_text(dir / "bad.cfg", "just words\n");
    EXPECT_THROW(load_run_config(dir / "bad.cfg", {}, nullptr), ConfigError);
    EXPECT_THROW(load_run_config(dir / "missing.cfg", {}, nullptr), ConfigError);
}

TEST(ParseThresholdsTest, RangeAndList) {
    EXPECT_EQ(parse_thresholds("0.5:0.05:0.95"), coco_thresholds());
    EXPECT_EQ(parse_thresholds("0.5"), std::vector<double>{0.5});
    EXPECT_EQ(parse_thresholds("0.5, 0.75"), (std::vector<double>{0.5, 0.75}));
    EXPECT_THROW(parse_thresholds("0.75,0.5"), ConfigError);
    EXPECT_THROW(parse_thresholds("0.5,1.0"), ConfigError);
    EXPECT_THROW(parse_thresholds("0,0.5"), ConfigError);
    EXPECT_THROW(parse_thresholds("0.5:0:0.9"), ConfigError);
    EXPECT_THROW(parse_thresholds("half"), ConfigError);
}

// --- enhance -----------------------------------------------------------------------

TEST(CmdEnhanceTest, IdentityCopiesBytesAndWritesManifest) {
    TempDir dir;
    const auto ids = testing::make_quadrant_dataset(dir / "data", 3);
    const auto cfg = base_config(dir);
    const auto s = cmd_enhance(cfg);
    EXPECT_EQ(s.exit_code(), ExitCode::kSuccess);
    EXPECT_EQ(s.failed(), 0U);
    for (const auto& id : ids) {
        EXPECT_EQ(slurp(s.dir / (id + ".png")), slurp(dir / "data" / "JPEGImages" / (id + ".png")));
    }
    const auto manifest = lines_of(s.dir / kEnhanceManifest);
    ASSERT_EQ(manifest.size(), 4U);
    EXPECT_EQ(manifest[0], "image_id\tstatus\toutput\tcache_key\tsettings_hash\tsettings\tmessage");
    EXPECT_EQ(manifest[1].rfind(ids[0] + "\tok\t" + ids[0] + ".png\t", 0), 0U);
    EXPECT_NE(manifest[1].find(s.settings_hash), std::string::npos);
}

TEST(CmdEnhanceTest, GammaMatchesPixelOracle) {
    TempDir dir;
    fs::create_directories(dir / "data" / "JPEGImages");
    fs::create_directories(dir / "data" / "Annotations");
    testing::write_png_rgb8(dir / "data" / "JPEGImages" / "gray.png", 4, 4, std::vector<std::uint8_t>(48, 128));
    testing::write_text(dir / "data" / "split.txt", "gray\n");
    auto cfg = base_config(dir);
    cfg.enhancer = EnhancerConfig::gamma_correction(0.5);
    const auto s = cmd_enhance(cfg);
    ASSERT_EQ(s.failed(), 0U);
    const auto out = load_image(s.dir / "gray.png");
    const double expected = std::lround(std::sqrt(128.0 / 255.0) * 255.0) / 255.0;
    for (float v : out.data()) EXPECT_NEAR(v, expected, 1e-6);
    EXPECT_GT(out.at(0, 0, 0), 128.0F / 255.0F);
}

TEST(CmdEnhanceTest, MissingImageIsRecordedNotFatal) {
    TempDir dir;
    const auto ids = testing::make_quadrant_dataset(dir / "data", 3);
    fs::remove(dir / "data" / "JPEGImages" / (ids[1] + ".png"));
    const auto s = cmd_enhance(base_config(dir));
    EXPECT_EQ(s.failed(), 1U);
    EXPECT_EQ(s.exit_code(), ExitCode::kSuccess);
    EXPECT_TRUE(fs::exists(s.dir / (ids[0] + ".png")));
    EXPECT_TRUE(fs::exists(s.dir / (ids[2] + ".png")));
    const auto manifest = lines_of(s.dir / kEnhanceManifest);
    ASSERT_EQ(manifest.size(), 4U);
    EXPECT_EQ(manifest[2].rfind(ids[1] + "\terror\t", 0), 0U);
    EXPECT_NE(manifest[2].find("not found"), std::string::npos);
}

TEST(CmdEnhanceTest, AllFailingGivesDataOrBackendExit) {
    TempDir dir;
    const auto ids = testing::make_quadrant_dataset(dir / "data", 2);
    for (const auto& id : ids) fs::remove(dir / "data" / "JPEGImages" / (id + ".png"));
    EXPECT_EQ(cmd_enhance(base_config(dir)).exit_code(), ExitCode::kData);

    auto cfg = base_config(dir, "out2");
    testing::make_quadrant_dataset(dir / "data", 2);
    cfg.enhancer = EnhancerConfig::generator(dir / "no_model.onnx");
    EXPECT_EQ(cmd_enhance(cfg).exit_code(), ExitCode::kBackend);
}

TEST(CmdEnhanceTest, RerunReusesUnchangedOutputs) {
    TempDir dir;
    const auto ids = testing::make_quadrant_dataset(dir / "data", 3);
    auto cfg = base_config(dir);
    cfg.enhancer = EnhancerConfig::gamma_correction(0.7);
    EXPECT_EQ(cmd_enhance(cfg).cached(), 0U);
    EXPECT_EQ(cmd_enhance(cfg).cached(), 3U);

    // A changed source image invalidates only its own entry.
    testing::write_png_rgb8(dir / "data" / "JPEGImages" / (ids[0] + ".png"), 32, 24, std::vector<std::uint8_t>(32 * 24 * 3, 9));
    const auto s = cmd_enhance(cfg);
    EXPECT_EQ(s.cached(), 2U);
    EXPECT_FALSE(s.records[0].cached);

    cfg.enhancer = EnhancerConfig::gamma_correction(0.6);
    EXPECT_EQ(cmd_enhance(cfg).cached(), 0U);
}

// --- detect ------------------------------------------------------------------------

TEST(CmdDetectTest, PrecomputedPassthrough) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 4);
    auto cfg = base_config(dir);
    const auto gts = load_run_ground_truth(cfg);
    auto preds = near_gt_predictions(gts, 3);
    preds.begin()->second.push_back({{-4, 0, 6, 6}, 0.0001, 0});  // below the default floor
    write_predictions(dir / "in.jsonl", preds);
    cfg.detector = DetectorConfig::precomputed(dir / "in.jsonl");
    const auto s = cmd_detect(cfg, cfg.layout().images_dir());

    preds.begin()->second.pop_back();
    for (auto& [id, dets] : preds) std::sort(dets.begin(), dets.end(), detection_before);
    EXPECT_EQ(parse_predictions(s.predictions_path), preds);
    EXPECT_EQ(s.warnings.size(), 1U);  // the fourth image has no entry
    EXPECT_EQ(lines_of(cfg.output_dir / "detect_warnings.txt").size(), 1U);
}

TEST(CmdDetectTest, EmptySplitGivesEmptyFile) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 2);
    testing::write_text(dir / "empty.txt", "");
    auto cfg = base_config(dir);
    cfg.split_list = dir / "empty.txt";
    testing::write_text(dir / "p.jsonl", "");
    cfg.detector = DetectorConfig::precomputed(dir / "p.jsonl");
    const auto s = cmd_detect(cfg, cfg.layout().images_dir());
    EXPECT_EQ(fs::file_size(s.predictions_path), 0U);
}

TEST(CmdDetectTest, StubModelOneLinePerImage) {
    TempDir dir;
    const auto ids = testing::make_quadrant_dataset(dir / "data", 5);
    auto cfg = base_config(dir);
    cfg.detector = DetectorConfig::model("stub.onnx");
    PipelineBackends backends;
    backends.detector = std::make_shared<FixedBoxDetector>();
    const auto s = cmd_detect(cfg, cfg.layout().images_dir(), backends);
    const auto lines = lines_of(s.predictions_path);
    ASSERT_EQ(lines.size(), 5U);
    EXPECT_EQ(lines[0], R"({"image_id":"tiger_0000","x_min":2.0,"y_min":2.0,"x_max":10.0,"y_max":10.0,"score":0.5,"class_id":0})");
}

TEST(CmdDetectTest, MissingImageForModelIsDataError) {
    TempDir dir;
    const auto ids = testing::make_quadrant_dataset(dir / "data", 2);
    fs::remove(dir / "data" / "JPEGImages" / (ids[1] + ".png"));
    auto cfg = base_config(dir);
    cfg.detector = DetectorConfig::model("stub.onnx");
    PipelineBackends backends;
    backends.detector = std::make_shared<FixedBoxDetector>();
    EXPECT_THROW(cmd_detect(cfg, cfg.layout().images_dir(), backends), DataError);
}

// --- eval --------------------------------------------------------------------------

TEST(CmdEvalTest, PerfectAndEmpty) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 4);
    auto cfg = base_config(dir);
    const auto gts = load_run_ground_truth(cfg);
    PredictionSet perfect;
    for (const auto& [id, img] : gts) perfect[id].push_back({img.objects[0].box, 1.0, 0});
    write_predictions(dir / "perfect.jsonl", perfect);
    write_predictions(dir / "empty.jsonl", {});
    EXPECT_EQ(fmt::format("{:.3f}", cmd_eval(cfg, dir / "perfect.jsonl").map_coco), "1.000");
    EXPECT_EQ(fmt::format("{:.3f}", cmd_eval(cfg, dir / "empty.jsonl").map_coco), "0.000");
    EXPECT_TRUE(fs::exists(cfg.output_dir / "report.txt"));
    EXPECT_TRUE(fs::exists(cfg.output_dir / "report.csv"));
    EXPECT_TRUE(fs::exists(cfg.output_dir / "pr" / "pr_t0.95_c0.csv"));
}

TEST(CmdEvalTest, MatchesReferenceEvaluator) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 6);
    const auto cfg = base_config(dir);
    const auto gts = load_run_ground_truth(cfg);
    const auto preds = near_gt_predictions(gts, 4);
    write_predictions(dir / "p.jsonl", preds);
    const auto r = cmd_eval(cfg, dir / "p.jsonl");
    const auto ref = testing::reference_evaluate(preds, gts, coco_thresholds());
    EXPECT_NEAR(r.map_coco, ref.map_coco, 1e-12);
    EXPECT_GT(r.map_coco, 0.0);
}

TEST(CmdEvalTest, ParseErrorsCarryContext) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 1);
    testing::write_text(dir / "p.jsonl", "\n{oops}\n");
    try {
        cmd_eval(base_config(dir), dir / "p.jsonl");
        FAIL() << "expected a data error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("p.jsonl:2"), std::string::npos);
    }
}

// --- full pipeline -----------------------------------------------------------------

TEST(RunPipelineTest, IdentityPlusPrecomputedEqualsDirectEvaluate) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 6);
    auto cfg = base_config(dir);
    const auto gts = load_run_ground_truth(cfg);
    const auto preds = near_gt_predictions(gts, 5);
    write_predictions(dir / "p.jsonl", preds);
    cfg.detector = DetectorConfig::precomputed(dir / "p.jsonl");
    const auto r = run_pipeline(cfg);
    EXPECT_EQ(r.map_coco, evaluate(preds, gts).map_coco);
}

TEST(RunPipelineTest, ReportsIdenticalAcrossWorkerCounts) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 10);
    std::vector<std::string> reports, predictions;
    for (int workers : {1, 3, 8}) {
        auto cfg = base_config(dir, fmt::format("out{}", workers));
        cfg.worker_count = workers;
        cfg.enhancer = EnhancerConfig::gamma_correction(0.6);
        cfg.detector = DetectorConfig::model("stub.onnx");
        PipelineBackends backends;
        backends.detector = std::make_shared<testing::QuadrantDetector>();
        run_pipeline(cfg, backends);
        reports.push_back(slurp(cfg.output_dir / "report.txt") + slurp(cfg.output_dir / "report.csv"));
        predictions.push_back(slurp(cfg.output_dir / "predictions.jsonl"));
    }
    EXPECT_EQ(reports[0], reports[1]);
    EXPECT_EQ(reports[0], reports[2]);
    EXPECT_EQ(predictions[0], predictions[2]);
}

// --- compare -----------------------------------------------------------------------

TEST(CmdCompareTest, IdenticalPredictionsGiveZeroDelta) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 5);
    const auto cfg = base_config(dir);
    write_predictions(dir / "p.jsonl", near_gt_predictions(load_run_ground_truth(cfg), 3));
    const auto r = cmd_compare({"YOLOv8", cfg, dir / "p.jsonl", {}}, {"Enhanced + YOLOv8", cfg, dir / "p.jsonl", {}},
                               dir / "cmp");
    EXPECT_EQ(r.delta, 0.0);
    EXPECT_EQ(format_delta(r.delta), "+0.000");
    const auto table = slurp(dir / "cmp" / "comparison.txt");
    EXPECT_NE(table.find("| Model             | mAP[0.5:0.95] |"), std::string::npos);
    EXPECT_NE(table.find("delta (Enhanced + YOLOv8 - YOLOv8) = +0.000"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "cmp" / "run_a" / "report.txt"));
    EXPECT_TRUE(fs::exists(dir / "cmp" / "run_b" / "report.txt"));
    const auto svg = slurp(dir / "cmp" / "comparison.svg");
    EXPECT_EQ(svg.rfind("<svg ", 0), 0U);
    EXPECT_NE(svg.find("Enhanced + YOLOv8"), std::string::npos);
}

TEST(CmdCompareTest, ExtraTopScoreTruePositiveMatchesReferenceDelta) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 5);
    const auto cfg = base_config(dir);
    const auto gts = load_run_ground_truth(cfg);
    const auto a = near_gt_predictions(gts, 3);
    auto b = a;
    const auto& missed = std::prev(gts.end())->second;
    b[missed.record.image_id].push_back({missed.objects[0].box, 1.0, 0});
    write_predictions(dir / "a.jsonl", a);
    write_predictions(dir / "b.jsonl", b);

    const auto r = cmd_compare({"A", cfg, dir / "a.jsonl", {}}, {"B", cfg, dir / "b.jsonl", {}}, dir / "cmp",
                               {{"Faster R-CNN", 0.5}});
    const auto ref_a = testing::reference_evaluate(a, gts, coco_thresholds());
    const auto ref_b = testing::reference_evaluate(b, gts, coco_thresholds());
    EXPECT_NEAR(r.delta, ref_b.map_coco - ref_a.map_coco, 1e-12);
    EXPECT_EQ(r.delta, r.rows[1].map_coco - r.rows[0].map_coco);
    EXPECT_GT(r.delta, 0.0);
    const auto csv = lines_of(dir / "cmp" / "comparison.csv");
    ASSERT_EQ(csv.size(), 5U);
    EXPECT_EQ(csv[1], "Faster R-CNN,reference,0.5");
}

TEST(CmdCompareTest, MismatchedGroundTruthRejected) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 4);
    const auto cfg_a = base_config(dir);
    auto cfg_b = cfg_a;
    testing::write_text(dir / "short.txt", "tiger_0000\ntiger_0001\n");
    cfg_b.split_list = dir / "short.txt";
    write_predictions(dir / "p.jsonl", {});
    EXPECT_THROW(cmd_compare({"A", cfg_a, dir / "p.jsonl", {}}, {"B", cfg_b, dir / "p.jsonl", {}}, dir / "cmp"),
                 DataError);
    auto cfg_c = cfg_a;
    cfg_c.eval.rule = ThresholdRule::kNonStrict;
    EXPECT_THROW(cmd_compare({"A", cfg_a, dir / "p.jsonl", {}}, {"C", cfg_c, dir / "p.jsonl", {}}, dir / "cmp"),
                 ConfigError);
}

TEST(CmdCompareTest, FullPipelineSides) {
    TempDir dir;
    testing::make_quadrant_dataset(dir / "data", 6);
    auto cfg_a = base_config(dir);
    cfg_a.detector = DetectorConfig::model("stub.onnx");
    auto cfg_b = cfg_a;
    cfg_b.enhancer = EnhancerConfig::hist_equalization();
    PipelineBackends backends;
    backends.detector = std::make_shared<testing::QuadrantDetector>();
    const auto r = cmd_compare({"plain", cfg_a, std::nullopt, backends}, {"equalized", cfg_b, std::nullopt, backends},
                               dir / "cmp");
    EXPECT_TRUE(fs::exists(dir / "cmp" / "run_a" / "enhanced" / kEnhanceManifest));
    EXPECT_TRUE(fs::exists(dir / "cmp" / "run_b" / "predictions.jsonl"));
    EXPECT_EQ(r.delta, r.rows[1].map_coco - r.rows[0].map_coco);
}

TEST(ComparisonTableTest, Layout) {
    ComparisonReport r;
    r.references = {{"Faster R-CNN", 0.5}};
    r.rows = {{"YOLOv8", 0.610}, {"Enhanced + YOLOv8", 0.617}};
    r.delta = 0.617 - 0.610;
    std::ostringstream out;
    write_comparison_table(out, r);
    EXPECT_EQ(out.str(),
              "+-------------------+---------------+\n"
              "| Model             | mAP[0.5:0.95] |\n"
              "+-------------------+---------------+\n"
              "| Faster R-CNN      | 0.500         |\n"
              "| YOLOv8            | 0.610         |\n"
              "| Enhanced + YOLOv8 | 0.617         |\n"
              "+-------------------+---------------+\n"
              "delta (Enhanced + YOLOv8 - YOLOv8) = +0.007\n");
}

}  // namespace
}  // namespace tigereval
