#include "dtmix/pgm.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dtmix/errors.hpp"

namespace dtmix {

namespace {

// Next token after whitespace and '#' comments.
int read_header_int(std::istream& is, const char* what) {
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            c = is.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) {
        throw ParseError(std::string("pgm: expected ") + what);
    }
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 30) throw ParseError("pgm: header value out of range");
        c = is.get();
    }
    if (c != EOF) is.unget();
    return static_cast<int>(value);
}

}  // namespace

Image8 read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFile("cannot open: " + path.string());

    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '5') throw ParseError("not a binary pgm (P5): " + path.string());

    Image8 img;
    img.width = read_header_int(is, "width");
    img.height = read_header_int(is, "height");
    const int maxval = read_header_int(is, "maxval");
    if (maxval <= 0 || maxval > 255) {
        throw ParseError("pgm: only 8-bit maxval supported: " + path.string());
    }
    is.get();  // single whitespace before the raster

    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    is.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!is) throw ParseError("pgm: truncated raster: " + path.string());
    return img;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const Eigen::VectorXd& values) {
    if (values.size() != static_cast<Eigen::Index>(width) * height) {
        throw DimensionMismatch("write_pgm: value count != width*height");
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    os << "P5\n" << width << " " << height << "\n255\n";
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        double v = values(i);
        if (v < 0.0) v = 0.0;
        if (v > 2.0) v = 2.0;
        os.put(static_cast<char>(std::lround(v * 127.5)));
    }
    if (!os) throw Error("write failed: " + path.string());
}

Eigen::VectorXd read_gf64(const std::filesystem::path& path, int& width, int& height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingFile("cannot open: " + path.string());
    std::string magic;
    if (!std::getline(is, magic) || magic != "GF64") {
        throw ParseError("not a gf64 image: " + path.string());
    }
    std::string dims;
    if (!std::getline(is, dims)) throw ParseError("gf64: missing dimensions: " + path.string());
    width = height = 0;
    if (std::sscanf(dims.c_str(), "%d %d", &width, &height) != 2 || width < 1 || height < 1) {
        throw ParseError("gf64: bad dimensions: " + path.string());
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(width) * height);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
    if (!is) throw ParseError("gf64: truncated data: " + path.string());
    return v;
}

void write_gf64(const std::filesystem::path& path, int width, int height,
                const Eigen::VectorXd& values) {
    if (values.size() != static_cast<Eigen::Index>(width) * height) {
        throw DimensionMismatch("write_gf64: value count != width*height");
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    os << "GF64\n" << width << " " << height << "\n";
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(sizeof(double) * values.size()));
    if (!os) throw Error("write failed: " + path.string());
}

}  // namespace dtmix
