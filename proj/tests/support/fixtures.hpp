// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "tigereval/annotations.hpp"
#include "tigereval/detection.hpp"
#include "tigereval/enhancement.hpp"

namespace tigereval::testing {

/// Writes an 8-bit RGB PNG straight through OpenCV, bypassing the library's encoder.
inline void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                           const std::vector<std::uint8_t>& rgb) {
    cv::Mat bgr(height, width, CV_8UC3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
            bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(rgb[i + 2], rgb[i + 1], rgb[i]);
        }
    }
    cv::imwrite(path.string(), bgr);
}

/// Hand-written VOC XML for one image (1-based pixel coordinates).
inline std::string voc_xml(int width, int height, const std::vector<std::tuple<std::string, double, double, double, double, int>>& objs) {
    std::string s = "<annotation>\n  <filename>img.jpg</filename>\n";
    s += fmt::format("  <size><width>{}</width><height>{}</height><depth>3</depth></size>\n", width, height);
    for (const auto& [name, x0, y0, x1, y1, difficult] : objs) {
        s += fmt::format(
            "  <object><name>{}</name><difficult>{}</difficult><bndbox><xmin>{}</xmin><ymin>{}</ymin>"
            "<xmax>{}</xmax><ymax>{}</ymax></bndbox></object>\n",
            name, difficult, x0, y0, x1, y1);
    }
    return s + "</annotation>\n";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
}

/// Small randomized evaluation instance on a coarse grid so that score ties,
/// identical boxes and IoU values equal to thresholds all occur.
struct Instance {
    GroundTruthSet gts;
    PredictionSet preds;
};

inline BoundingBox random_grid_box(std::mt19937_64& rng, int grid = 8) {
    std::uniform_int_distribution<int> coord(0, grid - 1);
    std::uniform_int_distribution<int> extent(1, 4);
    const int x = coord(rng), y = coord(rng);
    return {static_cast<double>(x), static_cast<double>(y), static_cast<double>(x + extent(rng)),
            static_cast<double>(y + extent(rng))};
}

inline Instance random_instance(std::mt19937_64& rng, int max_images = 4, int max_gts = 3, int max_dets = 4,
                                int num_classes = 1, double difficult_rate = 0.0) {
    Instance inst;
    std::uniform_int_distribution<int> n_images(1, max_images);
    std::uniform_int_distribution<int> n_gts(0, max_gts);
    std::uniform_int_distribution<int> n_dets(0, max_dets);
    std::uniform_int_distribution<int> cls(0, num_classes - 1);
    std::uniform_int_distribution<int> score_step(1, 10);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution near_gt(0.6);
    const int images = n_images(rng);
    for (int i = 0; i < images; ++i) {
        const std::string id = fmt::format("img{}", i);
        AnnotatedImage image;
        image.record = {id, id + ".jpg", 16, 16};
        for (int g = n_gts(rng); g > 0; --g) {
            image.objects.push_back({random_grid_box(rng), cls(rng), unit(rng) < difficult_rate});
        }
        std::vector<Detection> dets;
        for (int d = n_dets(rng); d > 0; --d) {
            Detection det;
            if (!image.objects.empty() && near_gt(rng)) {
                // Jitter a ground-truth box by at most one grid cell per side.
                std::uniform_int_distribution<std::size_t> pick(0, image.objects.size() - 1);
                std::uniform_int_distribution<int> jitter(-1, 1);
                const auto& src = image.objects[pick(rng)];
                double x0 = src.box.x_min + jitter(rng), y0 = src.box.y_min + jitter(rng);
                double x1 = src.box.x_max + jitter(rng), y1 = src.box.y_max + jitter(rng);
                if (x1 <= x0) x1 = x0 + 1;
                if (y1 <= y0) y1 = y0 + 1;
                det.box = {x0, y0, x1, y1};
                det.class_id = num_classes > 1 && unit(rng) < 0.2 ? cls(rng) : src.class_id;
            } else {
                det.box = random_grid_box(rng);
                det.class_id = cls(rng);
            }
            det.score = score_step(rng) / 10.0;
            dets.push_back(det);
        }
        if (!dets.empty()) inst.preds[id] = std::move(dets);
        inst.gts.emplace(id, std::move(image));
    }
    return inst;
}

/// Generator stub returning its RGB input channels in the raw range [-1, 1].
class EchoGenerator final : public GeneratorModel {
public:
    std::vector<float> infer(const GeneratorInput& input) override {
        std::vector<float> out;
        const auto d = input.data();
        out.reserve(d.size() / 4 * 3);
        for (std::size_t p = 0; p < d.size() / 4; ++p) {
            for (int c = 0; c < 3; ++c) out.push_back(d[p * 4 + c] * 2.0F - 1.0F);
        }
        return out;
    }
};

/// Generator stub returning a constant raw value everywhere.
class ConstantGenerator final : public GeneratorModel {
public:
    explicit ConstantGenerator(float v) : v_(v) {}
    std::vector<float> infer(const GeneratorInput& input) override {
        return std::vector<float>(static_cast<std::size_t>(input.width()) * input.height() * 3, v_);
    }

private:
    float v_;
};

/// Detector stub: one box covering the brightest quadrant of the image with a
/// score derived from its mean intensity, plus one fixed low-score box.
class QuadrantDetector final : public DetectorModel {
public:
    std::vector<Detection> infer(const RasterImage& img) override {
        const int hw = img.width() / 2, hh = img.height() / 2;
        double best = -1.0;
        int bx = 0, by = 0;
        for (int qy = 0; qy < 2; ++qy) {
            for (int qx = 0; qx < 2; ++qx) {
                double sum = 0.0;
                for (int y = qy * hh; y < (qy + 1) * hh; ++y) {
                    for (int x = qx * hw; x < (qx + 1) * hw; ++x) sum += img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2);
                }
                const double mean = sum / (3.0 * hw * hh);
                if (mean > best) {
                    best = mean;
                    bx = qx;
                    by = qy;
                }
            }
        }
        std::vector<Detection> out;
        out.push_back({{static_cast<double>(bx * hw), static_cast<double>(by * hh), static_cast<double>((bx + 1) * hw),
                        static_cast<double>((by + 1) * hh)},
                       std::clamp(best, 0.0, 1.0), 0});
        out.push_back({{1.0, 1.0, 5.0, 5.0}, 0.05, 0});
        return out;
    }
};

/// Synthetic VOC dataset: `count` images of size w x h with one bright
/// quadrant each, annotated with a box on that quadrant.
inline std::vector<std::string> make_quadrant_dataset(const std::filesystem::path& root, int count, int w = 32,
                                                      int h = 24) {
    std::filesystem::create_directories(root / "Annotations");
    std::filesystem::create_directories(root / "JPEGImages");
    std::vector<std::string> ids;
    std::string split;
    for (int i = 0; i < count; ++i) {
        const std::string id = fmt::format("tiger_{:04d}", i);
        const int qx = i % 2, qy = (i / 2) % 2;
        std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const bool bright = (x / (w / 2)) == qx && (y / (h / 2)) == qy;
                const std::uint8_t base = static_cast<std::uint8_t>(bright ? 120 + 10 * (i % 7) : 20 + (x + y + i) % 15);
                const std::size_t k = (static_cast<std::size_t>(y) * w + x) * 3;
                rgb[k] = base;
                rgb[k + 1] = static_cast<std::uint8_t>(base * 3 / 4);
                rgb[k + 2] = static_cast<std::uint8_t>(base / 2);
            }
        }
        write_png_rgb8(root / "JPEGImages" / (id + ".png"), w, h, rgb);
        // Ground truth slightly offset from the quadrant so IoU varies by image.
        const int shift = i % 3;
        write_text(root / "Annotations" / (id + ".xml"),
                   voc_xml(w, h, {{"tiger", qx * (w / 2) + 1.0 + shift, qy * (h / 2) + 1.0, (qx + 1) * (w / 2.0),
                                   (qy + 1) * (h / 2.0), 0}}));
        ids.push_back(id);
        split += id + "\n";
    }
    write_text(root / "split.txt", split);
    return ids;
}

}  // namespace tigereval::testing
