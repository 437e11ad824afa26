#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

namespace dtmix {

struct Image8 {
    int width = 0, height = 0;
    std::vector<unsigned char> pixels;  // row-major
};

// Binary (P5) portable graymap, 8-bit only.
Image8 read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, int width, int height,
               const Eigen::VectorXd& values);  // values clamped from [0,2] to [0,255]

// Raw lossless image container: "GF64\n<width> <height>\n" followed by
// width*height little-endian doubles in row-major order.
Eigen::VectorXd read_gf64(const std::filesystem::path& path, int& width, int& height);
void write_gf64(const std::filesystem::path& path, int width, int height,
                const Eigen::VectorXd& values);

}  // namespace dtmix
