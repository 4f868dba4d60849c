#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "kmoco/field/image.hpp"
#include "kmoco/io/raw.hpp"

namespace kmoco::io {

struct Gray8 {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  ///< row-major
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace detail

inline void write_png(const fs::path& path, const Gray8& img) {
    require(img.width > 0 && img.height > 0 && img.pixels.size() == std::size_t(img.width) * img.height,
            ErrorCategory::invalid_argument, "write_png: bad image buffer");
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(ErrorCategory::io, "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCategory::io, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCategory::io, "libpng error while writing " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, img.pixels.data() + std::size_t(y) * img.width);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Gray8 read_png(const fs::path& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(ErrorCategory::io, "cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCategory::io, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCategory::bad_header, "libpng error while reading " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    if (png_get_bit_depth(png, info) != 8 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCategory::unsupported_dtype, path.string() + ": only 8-bit grayscale PNG is supported");
    }
    Gray8 out;
    out.width = int(png_get_image_width(png, info));
    out.height = int(png_get_image_height(png, info));
    out.pixels.resize(std::size_t(out.width) * out.height);
    for (int y = 0; y < out.height; ++y) png_read_row(png, out.pixels.data() + std::size_t(y) * out.width, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

/// Window/level mapping: level - window/2 -> 0, level + window/2 -> 255.
inline Gray8 window_level(const RealImage& img, double window, double level) {
    require(window > 0.0 && std::isfinite(window) && std::isfinite(level), ErrorCategory::invalid_argument,
            "window must be positive and finite");
    img.require_finite("window_level");
    Gray8 out{img.nx(), img.ny(), std::vector<std::uint8_t>(img.size())};
    const double lo = level - window / 2.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double t = std::clamp((img.data()[i] - lo) / window, 0.0, 1.0);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
    return out;
}

/// Signed map scaled symmetrically about 0: -scale -> 0, 0 -> 128, +scale -> 255.
/// `scale` <= 0 selects max |d|.
inline Gray8 signed_map(const RealImage& diff, double scale = 0.0) {
    diff.require_finite("signed_map");
    if (scale <= 0.0) scale = max_abs(diff.data());
    Gray8 out{diff.nx(), diff.ny(), std::vector<std::uint8_t>(diff.size(), 128)};
    if (scale <= 0.0) return out;
    for (std::size_t i = 0; i < diff.size(); ++i) {
        const double t = std::clamp(diff.data()[i] / scale, -1.0, 1.0);
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp<long>(128 + std::lround(127.0 * t), 0, 255));
    }
    return out;
}

inline void export_png(const RealImage& img, const fs::path& path, double window, double level) {
    write_png(path, window_level(img, window, level));
}

/// Full-range export: window = data range, level = its centre.
inline void export_png(const RealImage& img, const fs::path& path) {
    const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    const double w = *hi > *lo ? *hi - *lo : 1.0;
    export_png(img, path, w, *lo + w / 2.0);
}

inline void export_difference_png(const RealImage& a, const RealImage& b, const fs::path& path, double scale = 0.0) {
    require(a.meta().same_grid(b.meta()), ErrorCategory::shape_mismatch, "difference map: image grids differ");
    RealImage d(a.meta());
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = a.data()[i] - b.data()[i];
    write_png(path, signed_map(d, scale));
}

} // namespace kmoco::io
