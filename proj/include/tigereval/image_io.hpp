// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "tigereval/error.hpp"
#include "tigereval/image.hpp"

namespace tigereval {

/// Reads a whole file into memory.
inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

/// Decodes an in-memory PNG or JPEG. `origin` only labels error messages.
/// Grayscale sources are replicated to three channels; alpha is dropped.
inline RasterImage decode_image(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    if (bytes.empty()) throw DataError("empty image file: " + origin);
    const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat bgr;
    try {
        bgr = cv::imdecode(buffer, cv::IMREAD_COLOR | cv::IMREAD_IGNORE_ORIENTATION);
    } catch (const cv::Exception& e) {
        throw DataError("cannot decode image " + origin + ": " + e.what());
    }
    if (bgr.empty() || bgr.type() != CV_8UC3) {
        throw DataError("unsupported or corrupt image: " + origin);
    }
    std::vector<float> data(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
    std::size_t i = 0;
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            data[i++] = static_cast<float>(row[x][2] / 255.0);
            data[i++] = static_cast<float>(row[x][1] / 255.0);
            data[i++] = static_cast<float>(row[x][0] / 255.0);
        }
    }
    return RasterImage(bgr.cols, bgr.rows, std::move(data));
}

/// Loads a PNG or JPEG file with 8-bit values mapped to v / 255.
inline RasterImage load_image(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw DataError("image file not found: " + path.string());
    return decode_image(read_file_bytes(path), path.string());
}

/// 8-bit quantization of an intensity, rounding v * 255 half away from zero.
inline std::uint8_t quantize_8bit(float v) {
    return static_cast<std::uint8_t>(std::lround(static_cast<double>(v) * 255.0));
}

inline cv::Mat to_bgr_mat(const RasterImage& img) {
    cv::Mat bgr(img.height(), img.width(), CV_8UC3);
    const auto src = img.data();
    std::size_t i = 0;
    for (int y = 0; y < img.height(); ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width(); ++x, i += 3) {
            row[x] = cv::Vec3b(quantize_8bit(src[i + 2]), quantize_8bit(src[i + 1]), quantize_8bit(src[i]));
        }
    }
    return bgr;
}

/// Encodes as PNG with fixed compression settings so output bytes are reproducible.
inline std::vector<std::uint8_t> encode_png(const RasterImage& img) {
    std::vector<std::uint8_t> out;
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
    if (!cv::imencode(".png", to_bgr_mat(img), out, params)) throw DataError("PNG encoding failed");
    return out;
}

inline std::vector<std::uint8_t> encode_jpeg(const RasterImage& img, int quality = 95) {
    std::vector<std::uint8_t> out;
    const std::vector<int> params{cv::IMWRITE_JPEG_QUALITY, quality};
    if (!cv::imencode(".jpg", to_bgr_mat(img), out, params)) throw DataError("JPEG encoding failed");
    return out;
}

/// Writes PNG or JPEG depending on the extension of `path`.
inline void save_image(const RasterImage& img, const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") {
        write_file_bytes(path, encode_png(img));
    } else if (ext == ".jpg" || ext == ".jpeg") {
        write_file_bytes(path, encode_jpeg(img));
    } else {
        throw DataError("unsupported output image format: " + path.string());
    }
}

}  // namespace tigereval
