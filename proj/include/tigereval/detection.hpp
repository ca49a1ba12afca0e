// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include "tigereval/annotations.hpp"
#include "tigereval/box.hpp"
#include "tigereval/error.hpp"
#include "tigereval/image.hpp"
#include "tigereval/kvfile.hpp"

namespace tigereval {

/// Clamps a box to [0, width] x [0, height]. Returns nullopt when nothing of
/// positive area remains.
inline std::optional<BoundingBox> clip_box(const BoundingBox& box, double width, double height) {
    if (!(width > 0.0) || !(height > 0.0)) throw std::invalid_argument("clip_box: image size must be positive");
    const double x0 = std::clamp(box.x_min, 0.0, width);
    const double y0 = std::clamp(box.y_min, 0.0, height);
    const double x1 = std::clamp(box.x_max, 0.0, width);
    const double y1 = std::clamp(box.y_max, 0.0, height);
    if (!BoundingBox::is_valid(x0, y0, x1, y1)) return std::nullopt;
    return BoundingBox{x0, y0, x1, y1};
}

/// Greedy class-wise non-maximum suppression. Detections are visited in
/// canonical order; one is kept unless a kept detection of the same class
/// overlaps it with IoU > iou_thresh. Output is in canonical order.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
    if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) {
        throw std::invalid_argument(fmt::format("nms: iou threshold {} is outside (0,1)", iou_thresh));
    }
    std::sort(dets.begin(), dets.end(), detection_before);
    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (const auto& d : dets) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.class_id == d.class_id && iou(k.box, d.box) > iou_thresh;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

/// Confidence filter (score >= score_floor), clipping to the image, NMS.
inline std::vector<Detection> postprocess_detections(const std::vector<Detection>& raw, Extent extent,
                                                     double score_floor, double nms_iou) {
    std::vector<Detection> filtered;
    for (const auto& d : raw) {
        if (d.score < score_floor) continue;
        if (auto clipped = clip_box(d.box, extent.width, extent.height)) {
            filtered.push_back({*clipped, d.score, d.class_id});
        }
    }
    return nms(std::move(filtered), nms_iou);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class DetectorKind { kModel, kPrecomputed };

inline std::string to_string(DetectorKind k) { return k == DetectorKind::kModel ? "model" : "precomputed"; }

inline DetectorKind parse_detector_kind(const std::string& s) {
    if (s == "model") return DetectorKind::kModel;
    if (s == "precomputed") return DetectorKind::kPrecomputed;
    throw ConfigError("unknown detector kind '" + s + "' (expected model|precomputed)");
}

inline constexpr double kDefaultScoreFloor = 0.001;
inline constexpr double kDefaultNmsIou = 0.7;

struct DetectorConfig {
    DetectorKind kind = DetectorKind::kPrecomputed;
    std::optional<std::filesystem::path> model_path;
    std::optional<std::filesystem::path> predictions_path;
    double score_floor = kDefaultScoreFloor;
    double nms_iou = kDefaultNmsIou;

    static DetectorConfig precomputed(std::filesystem::path predictions) {
        DetectorConfig c;
        c.kind = DetectorKind::kPrecomputed;
        c.predictions_path = std::move(predictions);
        return c;
    }
    static DetectorConfig model(std::filesystem::path model_path) {
        DetectorConfig c;
        c.kind = DetectorKind::kModel;
        c.model_path = std::move(model_path);
        return c;
    }

    void validate() const {
        const bool want_model = kind == DetectorKind::kModel;
        if (model_path.has_value() != want_model) {
            throw ConfigError(want_model ? "detector.model_path is required for kind model"
                                         : "detector.model_path is not allowed for kind precomputed");
        }
        if (predictions_path.has_value() == want_model) {
            throw ConfigError(want_model ? "detector.predictions_path is not allowed for kind model"
                                         : "detector.predictions_path is required for kind precomputed");
        }
        if (!(score_floor >= 0.0 && score_floor <= 1.0)) {
            throw ConfigError(fmt::format("detector.score_floor {} is outside [0,1]", score_floor));
        }
        if (!(nms_iou > 0.0 && nms_iou < 1.0)) {
            throw ConfigError(fmt::format("detector.nms_iou {} is outside (0,1)", nms_iou));
        }
    }
};

// ---------------------------------------------------------------------------
// Model backend
// ---------------------------------------------------------------------------

/// How raw detector outputs are decoded.
///   decoded: rows of (x_min, y_min, x_max, y_max, score, class_id).
///   yolov8:  [1, 4 + num_classes, N] with (cx, cy, w, h, class scores...).
/// Coordinates are in the model input frame and are rescaled to the image.
struct DetectorManifest {
    enum class Format { kDecoded, kYolov8 };
    Format output_format = Format::kDecoded;
    int input_width = 0;   // 0: feed the image at its native size
    int input_height = 0;

    static DetectorManifest from_kv(const KeyValueFile& kv, const std::string& origin) {
        DetectorManifest m;
        if (auto f = kv.get("output_format")) {
            if (*f == "decoded") {
                m.output_format = Format::kDecoded;
            } else if (*f == "yolov8") {
                m.output_format = Format::kYolov8;
            } else {
                throw ConfigError(origin + ": output_format must be decoded or yolov8");
            }
        }
        const auto dim = [&](const char* key) {
            const auto v = kv.get_double(key);
            if (!v) return 0;
            if (*v < 1 || *v != std::floor(*v)) throw ConfigError(origin + ": " + key + " must be a positive integer");
            return static_cast<int>(*v);
        };
        m.input_width = dim("input_width");
        m.input_height = dim("input_height");
        if ((m.input_width == 0) != (m.input_height == 0)) {
            throw ConfigError(origin + ": input_width and input_height must be given together");
        }
        return m;
    }

    static DetectorManifest load(const std::filesystem::path& path) {
        return from_kv(KeyValueFile::load(path), path.string());
    }
};

/// A detector network producing unfiltered detections in image coordinates.
class DetectorModel {
public:
    virtual ~DetectorModel() = default;
    virtual std::vector<Detection> infer(const RasterImage& img) = 0;
};

/// Decodes a raw output tensor according to the manifest. `sx`, `sy` map the
/// model input frame onto the image frame.
inline std::vector<Detection> decode_detector_output(const cv::Mat& out, DetectorManifest::Format format,
                                                     double sx, double sy) {
    if (out.type() != CV_32F) throw BackendError("detector output must be float32");
    std::vector<int> dims(out.size.p, out.size.p + out.dims);
    while (dims.size() > 2 && dims.front() == 1) dims.erase(dims.begin());
    if (dims.size() != 2) throw BackendError("detector output must be a 2-d table after squeezing");
    const auto* v = out.ptr<float>();
    std::vector<Detection> dets;
    const auto push = [&](double x0, double y0, double x1, double y1, double score, int cls) {
        if (!std::isfinite(score)) throw BackendError("detector produced a non-finite score");
        x0 *= sx;
        x1 *= sx;
        y0 *= sy;
        y1 *= sy;
        if (!BoundingBox::is_valid(x0, y0, x1, y1)) return;
        dets.push_back({{x0, y0, x1, y1}, std::clamp(score, 0.0, 1.0), cls});
    };
    if (format == DetectorManifest::Format::kDecoded) {
        if (dims[1] != 6) throw BackendError(fmt::format("decoded detector output needs 6 columns, got {}", dims[1]));
        for (int r = 0; r < dims[0]; ++r) {
            const float* row = v + static_cast<std::size_t>(r) * 6;
            push(row[0], row[1], row[2], row[3], row[4], static_cast<int>(std::lround(row[5])));
        }
    } else {
        const int channels = dims[0];
        const int n = dims[1];
        if (channels < 5) throw BackendError("yolov8 detector output needs at least 5 channels");
        const auto at = [&](int c, int i) { return static_cast<double>(v[static_cast<std::size_t>(c) * n + i]); };
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int c = 1; c < channels - 4; ++c) {
                if (at(4 + c, i) > at(4 + best, i)) best = c;
            }
            const double cx = at(0, i), cy = at(1, i), w = at(2, i), h = at(3, i);
            push(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, at(4 + best, i), best);
        }
    }
    return dets;
}

/// ONNX detector via OpenCV DNN. Input is RGB in [0,1], NCHW, resized to the
/// manifest's input size. Calls are serialized on one network instance.
class OnnxDetectorModel final : public DetectorModel {
public:
    OnnxDetectorModel(const std::filesystem::path& model_path, DetectorManifest manifest) : manifest_(manifest) {
        if (!std::filesystem::is_regular_file(model_path)) {
            throw BackendError("detector model not found: " + model_path.string());
        }
        try {
            net_ = cv::dnn::readNetFromONNX(model_path.string());
        } catch (const cv::Exception& e) {
            throw BackendError("cannot load detector model " + model_path.string() + ": " + e.what());
        }
        if (net_.empty()) throw BackendError("empty detector model: " + model_path.string());
    }

    std::vector<Detection> infer(const RasterImage& img) override {
        cv::Mat rgb(img.height(), img.width(), CV_32FC3, const_cast<float*>(img.data().data()));
        const int iw = manifest_.input_width ? manifest_.input_width : img.width();
        const int ih = manifest_.input_height ? manifest_.input_height : img.height();
        cv::Mat resized = rgb;
        if (iw != img.width() || ih != img.height()) cv::resize(rgb, resized, cv::Size(iw, ih), 0, 0, cv::INTER_LINEAR);
        const cv::Mat blob = cv::dnn::blobFromImage(resized);
        cv::Mat out;
        {
            std::lock_guard lock(mutex_);
            try {
                net_.setInput(blob);
                out = net_.forward().clone();
            } catch (const cv::Exception& e) {
                throw BackendError(std::string("detector inference failed: ") + e.what());
            }
        }
        return decode_detector_output(out, manifest_.output_format, static_cast<double>(img.width()) / iw,
                                      static_cast<double>(img.height()) / ih);
    }

private:
    DetectorManifest manifest_;
    cv::dnn::Net net_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Detector
// ---------------------------------------------------------------------------

struct DetectResult {
    std::vector<Detection> detections;
    std::vector<std::string> warnings;
};

/// Detector front end: raw detections from a model or a precomputed
/// JSON-lines file, followed by filtering, clipping and NMS. Concurrent calls
/// to `detect` are safe.
class Detector {
public:
    explicit Detector(DetectorConfig cfg, std::shared_ptr<DetectorModel> model = nullptr)
        : cfg_(std::move(cfg)), model_(std::move(model)) {
        cfg_.validate();
        if (cfg_.kind == DetectorKind::kPrecomputed) {
            if (!std::filesystem::is_regular_file(*cfg_.predictions_path)) {
                throw DataError("predictions file not found: " + cfg_.predictions_path->string());
            }
            predictions_ = parse_predictions(*cfg_.predictions_path);
        } else if (!model_) {
            const auto mp = cfg_.model_path->string() + ".manifest";
            if (!std::filesystem::is_regular_file(mp)) throw BackendError("detector manifest not found: " + mp);
            model_ = std::make_shared<OnnxDetectorModel>(*cfg_.model_path, DetectorManifest::load(mp));
        }
    }

    const DetectorConfig& config() const noexcept { return cfg_; }
    bool needs_pixels() const noexcept { return cfg_.kind == DetectorKind::kModel; }
    const PredictionSet& precomputed() const noexcept { return predictions_; }

    DetectResult detect(const RasterImage& img, const std::string& image_id) const {
        if (cfg_.kind == DetectorKind::kPrecomputed) return detect(img.extent(), image_id);
        DetectResult r;
        r.detections = postprocess_detections(model_->infer(img), img.extent(), cfg_.score_floor, cfg_.nms_iou);
        return r;
    }

    /// Precomputed lookup; only the image size is needed.
    DetectResult detect(Extent extent, const std::string& image_id) const {
        if (cfg_.kind != DetectorKind::kPrecomputed) {
            throw std::logic_error("model detector needs image pixels");
        }
        DetectResult r;
        const auto it = predictions_.find(image_id);
        if (it == predictions_.end()) {
            r.warnings.push_back("no precomputed predictions for image '" + image_id + "'");
            return r;
        }
        r.detections = postprocess_detections(it->second, extent, cfg_.score_floor, cfg_.nms_iou);
        return r;
    }

private:
    DetectorConfig cfg_;
    std::shared_ptr<DetectorModel> model_;
    PredictionSet predictions_;
};

/// One-shot detection of a single image.
inline DetectResult detect(const RasterImage& img, const std::string& image_id, const DetectorConfig& cfg) {
    return Detector(cfg).detect(img, image_id);
}

}  // namespace tigereval
