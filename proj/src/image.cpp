// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/image.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace splatlab {

namespace {

int g_threads = 0;

} // namespace

int
thread_count() {
    if (g_threads == 0) {
        const char *env = std::getenv("SPLATLAB_THREADS");
        int n           = env ? std::atoi(env) : 0;
        g_threads       = n > 0 ? n : omp_get_max_threads();
    }
    return g_threads;
}

void
set_thread_count(int threads) {
    require(threads >= 0, "thread count must be non-negative");
    g_threads = threads;
}

void
write_pnm(const std::filesystem::path &path, const Image &image) {
    require(image.channels == 1 || image.channels == 3, "PNM export needs 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << (image.channels == 3 ? "P6" : "P5") << "\n"
        << image.width << " " << image.height << "\n255\n";
    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const double v = std::clamp(image.data[i], 0.0, 1.0);
        bytes[i]       = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image
read_pnm(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    if ((magic != "P6" && magic != "P5") || w <= 0 || h <= 0 || maxval != 255) {
        throw IoError("unsupported PNM file " + path.string());
    }
    Image image(w, h, magic == "P6" ? 3 : 1);
    std::vector<std::uint8_t> bytes(image.data.size());
    in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) {
        throw IoError("truncated PNM file " + path.string());
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        image.data[i] = bytes[i] / 255.0;
    }
    return image;
}

void
write_float_grid(const std::filesystem::path &path, const Image &image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << "SPLATGRID " << image.width << " " << image.height << " " << image.channels << "\n";
    std::vector<float> values(image.data.begin(), image.data.end());
    out.write(reinterpret_cast<const char *>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
}

Image
read_float_grid(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    std::istringstream header(line);
    std::string magic;
    int w = 0, h = 0, c = 0;
    header >> magic >> w >> h >> c;
    if (magic != "SPLATGRID" || w <= 0 || h <= 0 || c <= 0) {
        throw IoError("malformed grid header in " + path.string());
    }
    Image image(w, h, c);
    std::vector<float> values(image.data.size());
    in.read(reinterpret_cast<char *>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!in) {
        throw IoError("truncated grid file " + path.string());
    }
    std::copy(values.begin(), values.end(), image.data.begin());
    return image;
}

} // namespace splatlab
