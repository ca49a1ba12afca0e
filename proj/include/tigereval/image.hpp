// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

namespace tigereval {

namespace detail {

template <typename T>
void check_unit_interval(std::span<const T> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        const T v = values[i];
        if (!(v >= T{0} && v <= T{1})) {
            throw std::invalid_argument(
                fmt::format("{}: value {} at index {} is outside [0,1]", what, v, i));
        }
    }
}

inline void check_dims(int width, int height, std::size_t size, int channels, const char* what) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument(fmt::format("{}: dimensions {}x{} must be positive", what, width, height));
    }
    const auto expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                          static_cast<std::size_t>(channels);
    if (size != expected) {
        throw std::invalid_argument(fmt::format("{}: data length {} does not match {}x{}x{}", what, size,
                                                width, height, channels));
    }
}

inline float clamp_unit(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace detail

/// Width and height of a raster, in pixels.
struct Extent {
    int width = 0;
    int height = 0;
    friend bool operator==(const Extent&, const Extent&) = default;
};

/// Row-major interleaved RGB image with intensities in [0,1]. Sample (x, y, c)
/// lives at index (y * width + x) * 3 + c. Immutable once built.
class RasterImage {
public:
    static constexpr int kChannels = 3;

    RasterImage(int width, int height, std::vector<float> data)
        : width_(width), height_(height), data_(std::move(data)) {
        detail::check_dims(width_, height_, data_.size(), kChannels, "RasterImage");
        detail::check_unit_interval(std::span<const float>(data_), "RasterImage");
    }

    static RasterImage filled(int width, int height, float r, float g, float b) {
        std::vector<float> data;
        data.reserve(static_cast<std::size_t>(width) * height * kChannels);
        for (int i = 0; i < width * height; ++i) {
            data.insert(data.end(), {r, g, b});
        }
        return RasterImage(width, height, std::move(data));
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    Extent extent() const noexcept { return {width_, height_}; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    std::span<const float> data() const noexcept { return data_; }

    float at(int x, int y, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    int width_;
    int height_;
    std::vector<float> data_;
};

/// Row-major single-channel map with values in [0,1]. Stored in double
/// precision so that 1 - (1 - v) reproduces v to within an ulp of 1.
class ScalarMap {
public:
    ScalarMap(int width, int height, std::vector<double> data)
        : width_(width), height_(height), data_(std::move(data)) {
        detail::check_dims(width_, height_, data_.size(), 1, "ScalarMap");
        detail::check_unit_interval(std::span<const double>(data_), "ScalarMap");
    }

    static ScalarMap filled(int width, int height, double v) {
        return ScalarMap(width, height, std::vector<double>(static_cast<std::size_t>(width) * height, v));
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    Extent extent() const noexcept { return {width_, height_}; }
    std::span<const double> data() const noexcept { return data_; }
    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    friend bool operator==(const ScalarMap&, const ScalarMap&) = default;

private:
    int width_;
    int height_;
    std::vector<double> data_;
};

/// Generator input: H x W x 4 grid, channels (R, G, B, attention) interleaved
/// per pixel, row-major. Sample (x, y, c) lives at (y * width + x) * 4 + c.
class GeneratorInput {
public:
    static constexpr int kChannels = 4;

    GeneratorInput(int width, int height, std::vector<float> data)
        : width_(width), height_(height), data_(std::move(data)) {
        detail::check_dims(width_, height_, data_.size(), kChannels, "GeneratorInput");
        detail::check_unit_interval(std::span<const float>(data_), "GeneratorInput");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    Extent extent() const noexcept { return {width_, height_}; }
    std::span<const float> data() const noexcept { return data_; }
    float at(int x, int y, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
    }

private:
    int width_;
    int height_;
    std::vector<float> data_;
};

/// Which map scales the residual when composing the enhanced image.
enum class MapSelector {
    kIllumination,     // B = A' * I + A
    kSelfRegularized,  // B = A' * (1 - I) + A
};

inline std::string to_string(MapSelector s) {
    return s == MapSelector::kIllumination ? "illumination" : "self-regularized";
}

inline MapSelector parse_map_selector(const std::string& s) {
    if (s == "illumination") return MapSelector::kIllumination;
    if (s == "self-regularized") return MapSelector::kSelfRegularized;
    throw std::invalid_argument("unknown map selector '" + s + "' (expected illumination|self-regularized)");
}

/// Per-pixel illumination component: the maximum over R, G and B.
inline ScalarMap illumination_map(const RasterImage& img) {
    const auto src = img.data();
    std::vector<double> out(img.pixel_count());
    for (std::size_t p = 0; p < out.size(); ++p) {
        const float* px = &src[p * RasterImage::kChannels];
        out[p] = std::max({px[0], px[1], px[2]});
    }
    return ScalarMap(img.width(), img.height(), std::move(out));
}

/// Attention map 1 - I. Applying it twice gives back the input up to rounding.
inline ScalarMap self_regularized_map(const ScalarMap& illum) {
    const auto src = illum.data();
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        out[i] = std::clamp(1.0 - src[i], 0.0, 1.0);
    }
    return ScalarMap(illum.width(), illum.height(), std::move(out));
}

/// Enhanced image B = clamp(A' * M + A), with M = I or M = 1 - I depending on
/// `multiply_with`. Arithmetic is carried out in double precision.
inline RasterImage compose_enhanced(const RasterImage& input_a, const RasterImage& residual_a_prime,
                                    const ScalarMap& illum_i,
                                    MapSelector multiply_with = MapSelector::kIllumination) {
    if (input_a.extent() != residual_a_prime.extent() || input_a.extent() != illum_i.extent()) {
        throw std::invalid_argument(fmt::format(
            "compose_enhanced: dimension mismatch: A is {}x{}, A' is {}x{}, I is {}x{}", input_a.width(),
            input_a.height(), residual_a_prime.width(), residual_a_prime.height(), illum_i.width(),
            illum_i.height()));
    }
    const auto a = input_a.data();
    const auto r = residual_a_prime.data();
    const auto m = illum_i.data();
    std::vector<float> out(a.size());
    for (std::size_t p = 0; p < m.size(); ++p) {
        double scale = m[p];
        if (multiply_with == MapSelector::kSelfRegularized) scale = 1.0 - scale;
        for (int c = 0; c < RasterImage::kChannels; ++c) {
            const std::size_t i = p * RasterImage::kChannels + c;
            out[i] = detail::clamp_unit(static_cast<double>(r[i]) * scale + static_cast<double>(a[i]));
        }
    }
    return RasterImage(input_a.width(), input_a.height(), std::move(out));
}

/// Stacks the image and an attention map into the 4-channel generator input.
inline GeneratorInput concat_generator_input(const RasterImage& input_a, const ScalarMap& attn) {
    if (input_a.extent() != attn.extent()) {
        throw std::invalid_argument(fmt::format("concat_generator_input: image is {}x{}, map is {}x{}",
                                                input_a.width(), input_a.height(), attn.width(),
                                                attn.height()));
    }
    const auto a = input_a.data();
    const auto m = attn.data();
    std::vector<float> out(m.size() * GeneratorInput::kChannels);
    for (std::size_t p = 0; p < m.size(); ++p) {
        out[p * 4 + 0] = a[p * 3 + 0];
        out[p * 4 + 1] = a[p * 3 + 1];
        out[p * 4 + 2] = a[p * 3 + 2];
        out[p * 4 + 3] = static_cast<float>(m[p]);
    }
    return GeneratorInput(input_a.width(), input_a.height(), std::move(out));
}

}  // namespace tigereval
