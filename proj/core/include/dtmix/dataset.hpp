#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtmix/geometry.hpp"
#include "dtmix/model.hpp"

namespace dtmix {

struct Dataset {
    std::vector<Eigen::VectorXd> images;  // each of length grid.size(), values nominally in [0,2]
    PixelGrid grid;
    // Synthetic datasets carry their generating truth.
    std::optional<HiddenState> truth_hidden;
    std::optional<ModelParams> truth_params;

    int size() const { return static_cast<int>(images.size()); }
};

// Line-oriented dataset description: a `key = value` header block
// followed by one image path per line (relative to the manifest).
struct Manifest {
    int width = 0, height = 0;
    std::string normalization;  // "pgm8" or "raw"
    std::vector<std::filesystem::path> paths;

    static Manifest read(const std::filesystem::path& file);
    void write(const std::filesystem::path& file) const;
};

Dataset load_dataset(const std::filesystem::path& manifest_path, const Box& photometric_box);

// Forward model: label ~ rho, beta ~ N(0, gamma), y = K_p^beta alpha + noise.
Dataset generate_synthetic(const ModelParams& eta_true, int n, const Geometry& geom,
                           std::uint64_t seed);

// K_p^0 * alpha, unclamped; clamping to [0,2] happens at file-write time.
Eigen::VectorXd render_template(const ComponentParams& comp, const Geometry& geom);

struct SamplePair {
    Eigen::VectorXd plus;   // K_p^{ beta} alpha
    Eigen::VectorXd minus;  // K_p^{-beta} alpha
    Eigen::VectorXd beta;
};

// Draws beta ~ N(0, gamma of cov_comp) and renders the template of
// template_comp under beta and -beta.
std::vector<SamplePair> draw_samples(const ModelParams& eta, int count, int template_comp,
                                     int cov_comp, const Geometry& geom, std::uint64_t seed);

// Writes images (raw f64 containers) plus a manifest under dir.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

}  // namespace dtmix
