// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/common.hpp"

#include <filesystem>
#include <vector>

namespace splatlab {

/// Dense row-major H x W x C grid of doubles. Used for color, depth, normal and mask maps.
struct Image {
    int width    = 0;
    int height   = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c),
               fill) {}

    bool empty() const { return data.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image &other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }

    double &at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double &operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    Vec3 rgb(int x, int y) const {
        const double *p = &data[(static_cast<std::size_t>(y) * width + x) * channels];
        return {p[0], p[1], p[2]};
    }
    void set_rgb(int x, int y, const Vec3 &v) {
        double *p = &data[(static_cast<std::size_t>(y) * width + x) * channels];
        p[0]      = v.x();
        p[1]      = v.y();
        p[2]      = v.z();
    }
};

/// Binary PPM (3 channels) or PGM (1 channel), values clamped to [0,1] and quantized to 8 bits.
void
write_pnm(const std::filesystem::path &path, const Image &image);

Image
read_pnm(const std::filesystem::path &path);

/// 32-bit float grid with a one-line text header: "SPLATGRID <width> <height> <channels>\n".
void
write_float_grid(const std::filesystem::path &path, const Image &image);

Image
read_float_grid(const std::filesystem::path &path);

} // namespace splatlab
