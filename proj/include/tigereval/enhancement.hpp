// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "tigereval/error.hpp"
#include "tigereval/image.hpp"
#include "tigereval/image_io.hpp"
#include "tigereval/kvfile.hpp"

namespace tigereval {

// ---------------------------------------------------------------------------
// Classical baselines
// ---------------------------------------------------------------------------

/// Per-channel power law v -> v^gamma.
inline RasterImage gamma_correct(const RasterImage& img, double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument(fmt::format("gamma must be positive and finite, got {}", gamma));
    }
    const auto src = img.data();
    std::vector<float> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        out[i] = detail::clamp_unit(std::pow(static_cast<double>(src[i]), gamma));
    }
    return RasterImage(img.width(), img.height(), std::move(out));
}

inline constexpr int kHistogramBins = 256;

/// Histogram bin of an intensity in [0,1]. 8-bit values k/255 land in bin k.
inline int histogram_bin(double v) {
    return std::clamp(static_cast<int>(std::floor(v * kHistogramBins)), 0, kHistogramBins - 1);
}

/// Equalization target per bin: (cdf - cdf_min) / (count - cdf_min), where
/// cdf_min is the cdf of the first occupied bin. Returns nullopt when at most
/// one bin is occupied; that case is defined as the identity.
inline std::optional<std::array<double, kHistogramBins>> equalization_targets(
    const std::array<std::size_t, kHistogramBins>& hist) {
    std::size_t count = 0;
    for (auto h : hist) count += h;
    std::size_t cdf_min = 0;
    for (auto h : hist) {
        if (h != 0) {
            cdf_min = h;
            break;
        }
    }
    if (count == cdf_min) return std::nullopt;
    std::array<double, kHistogramBins> target{};
    std::size_t cdf = 0;
    for (int b = 0; b < kHistogramBins; ++b) {
        cdf += hist[b];
        target[b] = cdf < cdf_min ? 0.0
                                  : static_cast<double>(cdf - cdf_min) / static_cast<double>(count - cdf_min);
    }
    return target;
}

/// Histogram equalization of the illumination channel (max over RGB). Each
/// pixel's channels are scaled by I_new / I_old so hue is preserved; pixels
/// with I_old = 0 pass through.
inline RasterImage histogram_equalize(const RasterImage& img) {
    const ScalarMap illum = illumination_map(img);
    std::array<std::size_t, kHistogramBins> hist{};
    for (double v : illum.data()) ++hist[histogram_bin(v)];
    const auto targets = equalization_targets(hist);
    if (!targets) return img;

    const auto src = img.data();
    const auto lum = illum.data();
    std::vector<float> out(src.begin(), src.end());
    for (std::size_t p = 0; p < lum.size(); ++p) {
        const double old_i = lum[p];
        if (old_i <= 0.0) continue;
        const double ratio = (*targets)[histogram_bin(old_i)] / old_i;
        for (int c = 0; c < RasterImage::kChannels; ++c) {
            const std::size_t i = p * RasterImage::kChannels + c;
            out[i] = detail::clamp_unit(static_cast<double>(src[i]) * ratio);
        }
    }
    return RasterImage(img.width(), img.height(), std::move(out));
}

// ---------------------------------------------------------------------------
// Generator loss total
// ---------------------------------------------------------------------------

/// The four terms of the generator objective: self-feature-preserving and
/// adversarial losses, each for the global and local discriminator.
struct LossComponents {
    double sfp_global = 0.0;
    double sfp_local = 0.0;
    double adv_global = 0.0;
    double adv_local = 0.0;
};

/// Unweighted sum of the four loss terms.
inline double total_enlighten_loss(const LossComponents& c) {
    for (double v : {c.sfp_global, c.sfp_local, c.adv_global, c.adv_local}) {
        if (!std::isfinite(v)) throw std::invalid_argument("loss component is not finite");
    }
    return c.sfp_global + c.sfp_local + c.adv_global + c.adv_local;
}

// ---------------------------------------------------------------------------
// Generator backend
// ---------------------------------------------------------------------------

enum class TensorLayout { kNchw, kNhwc };
enum class OutputKind { kResidual, kFinal };

inline std::string to_string(OutputKind k) { return k == OutputKind::kResidual ? "residual" : "final"; }

/// Sidecar description of a generator model's I/O. Raw outputs in
/// [raw_min, raw_max] are mapped affinely onto [0,1].
struct BackendManifest {
    TensorLayout input_layout = TensorLayout::kNchw;
    double raw_min = 0.0;
    double raw_max = 1.0;
    OutputKind output_kind = OutputKind::kResidual;

    static BackendManifest from_kv(const KeyValueFile& kv, const std::string& origin) {
        BackendManifest m;
        if (auto layout = kv.get("input_layout")) {
            if (*layout == "nchw") {
                m.input_layout = TensorLayout::kNchw;
            } else if (*layout == "nhwc") {
                m.input_layout = TensorLayout::kNhwc;
            } else {
                throw ConfigError(origin + ": input_layout must be nchw or nhwc");
            }
        }
        if (auto v = kv.get_double("raw_min")) m.raw_min = *v;
        if (auto v = kv.get_double("raw_max")) m.raw_max = *v;
        if (!(m.raw_max > m.raw_min)) throw ConfigError(origin + ": raw_max must exceed raw_min");
        if (auto kind = kv.get("output_kind")) {
            if (*kind == "residual") {
                m.output_kind = OutputKind::kResidual;
            } else if (*kind == "final") {
                m.output_kind = OutputKind::kFinal;
            } else {
                throw ConfigError(origin + ": output_kind must be residual or final");
            }
        }
        return m;
    }

    static BackendManifest load(const std::filesystem::path& path) {
        return from_kv(KeyValueFile::load(path), path.string());
    }
};

/// Manifest location for a model file: the model path with ".manifest" appended.
inline std::filesystem::path manifest_path_for(const std::filesystem::path& model_path) {
    return model_path.string() + ".manifest";
}

/// A generator network. `infer` returns raw outputs as an H x W x 3
/// interleaved buffer in the manifest's raw range.
class GeneratorModel {
public:
    virtual ~GeneratorModel() = default;
    virtual std::vector<float> infer(const GeneratorInput& input) = 0;
};

/// ONNX generator run through OpenCV's DNN module. A single cv::dnn::Net is
/// not reentrant, so calls are serialized.
class OnnxGeneratorModel final : public GeneratorModel {
public:
    OnnxGeneratorModel(const std::filesystem::path& model_path, TensorLayout layout) : layout_(layout) {
        if (!std::filesystem::is_regular_file(model_path)) {
            throw BackendError("generator model not found: " + model_path.string());
        }
        try {
            net_ = cv::dnn::readNetFromONNX(model_path.string());
        } catch (const cv::Exception& e) {
            throw BackendError("cannot load generator model " + model_path.string() + ": " + e.what());
        }
        if (net_.empty()) throw BackendError("empty generator model: " + model_path.string());
    }

    std::vector<float> infer(const GeneratorInput& input) override {
        const int h = input.height();
        const int w = input.width();
        const auto src = input.data();
        cv::Mat blob;
        if (layout_ == TensorLayout::kNchw) {
            const int shape[] = {1, 4, h, w};
            blob.create(4, shape, CV_32F);
            auto* dst = blob.ptr<float>();
            const std::size_t plane = static_cast<std::size_t>(h) * w;
            for (std::size_t p = 0; p < plane; ++p) {
                for (int c = 0; c < 4; ++c) dst[c * plane + p] = src[p * 4 + c];
            }
        } else {
            const int shape[] = {1, h, w, 4};
            blob.create(4, shape, CV_32F);
            std::copy(src.begin(), src.end(), blob.ptr<float>());
        }

        cv::Mat out;
        {
            std::lock_guard lock(mutex_);
            try {
                net_.setInput(blob);
                out = net_.forward().clone();
            } catch (const cv::Exception& e) {
                throw BackendError(std::string("generator inference failed: ") + e.what());
            }
        }
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        if (out.total() != plane * 3 || out.type() != CV_32F) {
            throw BackendError(fmt::format("generator output has {} values, expected {}x{}x3", out.total(), w, h));
        }
        const auto* raw = out.ptr<float>();
        std::vector<float> result(plane * 3);
        if (layout_ == TensorLayout::kNchw) {
            for (std::size_t p = 0; p < plane; ++p) {
                for (int c = 0; c < 3; ++c) result[p * 3 + c] = raw[c * plane + p];
            }
        } else {
            std::copy(raw, raw + plane * 3, result.begin());
        }
        return result;
    }

private:
    TensorLayout layout_;
    cv::dnn::Net net_;
    std::mutex mutex_;
};

/// Maps a raw generator output into a [0,1] image via the manifest's affine range.
inline RasterImage adapt_generator_output(std::span<const float> raw, Extent extent,
                                          const BackendManifest& manifest) {
    const std::size_t expected = static_cast<std::size_t>(extent.width) * extent.height * 3;
    if (raw.size() != expected) {
        throw BackendError(fmt::format("generator returned {} values, expected {} ({}x{}x3)", raw.size(),
                                       expected, extent.width, extent.height));
    }
    const double span = manifest.raw_max - manifest.raw_min;
    std::vector<float> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = static_cast<double>(raw[i]);
        if (!std::isfinite(v)) throw BackendError("generator produced a non-finite value");
        out[i] = detail::clamp_unit((v - manifest.raw_min) / span);
    }
    return RasterImage(extent.width, extent.height, std::move(out));
}

/// Runs the generator on a 4-channel input and returns A' in [0,1].
inline RasterImage run_generator_backend(const GeneratorInput& input, GeneratorModel& model,
                                         const BackendManifest& manifest) {
    const auto raw = model.infer(input);
    return adapt_generator_output(raw, input.extent(), manifest);
}

/// Loads the ONNX model at `model_path` and its manifest, then runs it.
inline RasterImage run_generator_backend(const GeneratorInput& input, const std::filesystem::path& model_path) {
    const auto manifest_path = manifest_path_for(model_path);
    if (!std::filesystem::is_regular_file(model_path)) {
        throw BackendError("generator model not found: " + model_path.string());
    }
    if (!std::filesystem::is_regular_file(manifest_path)) {
        throw BackendError("generator manifest not found: " + manifest_path.string());
    }
    const auto manifest = BackendManifest::load(manifest_path);
    OnnxGeneratorModel model(model_path, manifest.input_layout);
    return run_generator_backend(input, model, manifest);
}

// ---------------------------------------------------------------------------
// Enhancer configuration and dispatch
// ---------------------------------------------------------------------------

enum class EnhancerKind { kIdentity, kGamma, kHistEqualization, kGeneratorModel, kPrecomputed };

inline std::string to_string(EnhancerKind k) {
    switch (k) {
        case EnhancerKind::kIdentity: return "identity";
        case EnhancerKind::kGamma: return "gamma";
        case EnhancerKind::kHistEqualization: return "hist-equalization";
        case EnhancerKind::kGeneratorModel: return "generator-model";
        case EnhancerKind::kPrecomputed: return "precomputed";
    }
    return "?";
}

inline EnhancerKind parse_enhancer_kind(const std::string& s) {
    for (auto k : {EnhancerKind::kIdentity, EnhancerKind::kGamma, EnhancerKind::kHistEqualization,
                   EnhancerKind::kGeneratorModel, EnhancerKind::kPrecomputed}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown enhancer kind '" + s +
                      "' (expected identity|gamma|hist-equalization|generator-model|precomputed)");
}

struct EnhancerConfig {
    EnhancerKind kind = EnhancerKind::kIdentity;
    std::optional<double> gamma;
    std::optional<std::filesystem::path> model_path;
    std::optional<std::filesystem::path> precomputed_dir;
    MapSelector multiply_with = MapSelector::kIllumination;

    static EnhancerConfig identity() { return {}; }
    static EnhancerConfig gamma_correction(double g) {
        EnhancerConfig c;
        c.kind = EnhancerKind::kGamma;
        c.gamma = g;
        return c;
    }
    static EnhancerConfig hist_equalization() {
        EnhancerConfig c;
        c.kind = EnhancerKind::kHistEqualization;
        return c;
    }
    static EnhancerConfig generator(std::filesystem::path model, MapSelector sel = MapSelector::kIllumination) {
        EnhancerConfig c;
        c.kind = EnhancerKind::kGeneratorModel;
        c.model_path = std::move(model);
        c.multiply_with = sel;
        return c;
    }
    static EnhancerConfig precomputed(std::filesystem::path dir, MapSelector sel = MapSelector::kIllumination) {
        EnhancerConfig c;
        c.kind = EnhancerKind::kPrecomputed;
        c.precomputed_dir = std::move(dir);
        c.multiply_with = sel;
        return c;
    }

    /// Throws ConfigError unless exactly the fields required by `kind` are set.
    void validate() const {
        const bool want_gamma = kind == EnhancerKind::kGamma;
        const bool want_model = kind == EnhancerKind::kGeneratorModel;
        const bool want_dir = kind == EnhancerKind::kPrecomputed;
        const std::string k = to_string(kind);
        if (gamma.has_value() != want_gamma) {
            throw ConfigError(want_gamma ? "enhancer.gamma is required for kind gamma"
                                         : "enhancer.gamma is not allowed for kind " + k);
        }
        if (want_gamma && (!(*gamma > 0.0) || !std::isfinite(*gamma))) {
            throw ConfigError(fmt::format("enhancer.gamma must be positive, got {}", *gamma));
        }
        if (model_path.has_value() != want_model) {
            throw ConfigError(want_model ? "enhancer.model_path is required for kind generator-model"
                                         : "enhancer.model_path is not allowed for kind " + k);
        }
        if (precomputed_dir.has_value() != want_dir) {
            throw ConfigError(want_dir ? "enhancer.precomputed_dir is required for kind precomputed"
                                       : "enhancer.precomputed_dir is not allowed for kind " + k);
        }
    }

    /// Canonical text of the settings; part of the cache key.
    std::string settings_string() const {
        std::string s = "kind=" + to_string(kind);
        if (gamma) s += fmt::format(";gamma={}", *gamma);
        if (model_path) s += ";model_path=" + model_path->string();
        if (precomputed_dir) s += ";precomputed_dir=" + precomputed_dir->string();
        if (kind == EnhancerKind::kGeneratorModel || kind == EnhancerKind::kPrecomputed) {
            s += ";multiply_with=" + to_string(multiply_with);
        }
        return s;
    }
};

/// Name of the manifest inside a precomputed directory. It declares
/// `output_kind = residual | final`; residual is assumed when absent.
inline constexpr const char* kPrecomputedManifest = "manifest.txt";

/// Stateful enhancer: loads the model or precomputed manifest once and can
/// then be applied to many images. `enhance` is safe to call concurrently.
class Enhancer {
public:
    explicit Enhancer(EnhancerConfig cfg, std::shared_ptr<GeneratorModel> model = nullptr,
                      std::optional<BackendManifest> manifest = std::nullopt)
        : cfg_(std::move(cfg)), model_(std::move(model)) {
        cfg_.validate();
        if (cfg_.kind == EnhancerKind::kGeneratorModel) {
            if (manifest) {
                manifest_ = *manifest;
            } else {
                const auto mp = manifest_path_for(*cfg_.model_path);
                if (!std::filesystem::is_regular_file(mp)) {
                    throw BackendError("generator manifest not found: " + mp.string());
                }
                manifest_ = BackendManifest::load(mp);
            }
            if (!model_) model_ = std::make_shared<OnnxGeneratorModel>(*cfg_.model_path, manifest_.input_layout);
        } else if (cfg_.kind == EnhancerKind::kPrecomputed) {
            const auto mp = *cfg_.precomputed_dir / kPrecomputedManifest;
            if (manifest) {
                manifest_ = *manifest;
            } else if (std::filesystem::is_regular_file(mp)) {
                manifest_ = BackendManifest::load(mp);
            }
        }
    }

    const EnhancerConfig& config() const noexcept { return cfg_; }

    RasterImage enhance(const RasterImage& img, const std::string& image_id) const {
        switch (cfg_.kind) {
            case EnhancerKind::kIdentity: return img;
            case EnhancerKind::kGamma: return gamma_correct(img, *cfg_.gamma);
            case EnhancerKind::kHistEqualization: return histogram_equalize(img);
            case EnhancerKind::kGeneratorModel: {
                const ScalarMap illum = illumination_map(img);
                const GeneratorInput input = concat_generator_input(img, self_regularized_map(illum));
                RasterImage out = run_generator_backend(input, *model_, manifest_);
                if (manifest_.output_kind == OutputKind::kFinal) return out;
                return compose_enhanced(img, out, illum, cfg_.multiply_with);
            }
            case EnhancerKind::kPrecomputed: {
                const auto path = *cfg_.precomputed_dir / (image_id + ".png");
                if (!std::filesystem::is_regular_file(path)) {
                    throw DataError("no precomputed enhancement for image '" + image_id + "': " + path.string());
                }
                RasterImage stored = load_image(path);
                if (stored.extent() != img.extent()) {
                    throw DataError(fmt::format("precomputed image {} is {}x{}, source is {}x{}", path.string(),
                                                stored.width(), stored.height(), img.width(), img.height()));
                }
                if (manifest_.output_kind == OutputKind::kFinal) return stored;
                return compose_enhanced(img, stored, illumination_map(img), cfg_.multiply_with);
            }
        }
        throw std::logic_error("unhandled enhancer kind");
    }

private:
    EnhancerConfig cfg_;
    std::shared_ptr<GeneratorModel> model_;
    BackendManifest manifest_;
};

/// One-shot enhancement of a single image.
inline RasterImage enhance(const RasterImage& img, const EnhancerConfig& cfg, const std::string& image_id) {
    return Enhancer(cfg).enhance(img, image_id);
}

}  // namespace tigereval
