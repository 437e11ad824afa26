#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dtmix/geometry.hpp"
#include "dtmix/model.hpp"

namespace dtmix {

// Self-describing binary container: a plain-text header (sorted
// `key = value` pairs and one `block <name> <rows> <cols>` line per
// matrix) followed by the blocks' raw little-endian doubles in header
// order. Files are written atomically and round-trip bit-exactly.
class Container {
public:
    std::map<std::string, std::string> meta;

    void add(const std::string& name, const Eigen::MatrixXd& m);
    bool has(const std::string& name) const;
    const Eigen::MatrixXd& block(const std::string& name) const;

    void set_num(const std::string& key, double value);
    void set_int(const std::string& key, long long value);
    double num(const std::string& key) const;
    long long integer(const std::string& key) const;
    const std::string& str(const std::string& key) const;

    void write(const std::filesystem::path& path) const;
    static Container read(const std::filesystem::path& path);

    const std::vector<std::pair<std::string, Eigen::MatrixXd>>& blocks() const {
        return blocks_;
    }

private:
    std::vector<std::pair<std::string, Eigen::MatrixXd>> blocks_;
};

// Model checkpoints: parameters plus the hyperparameters and geometry
// needed to reuse them.
void save_model(const std::filesystem::path& path, const ModelParams& eta,
                const Hyperparams& hyper, const Geometry& geom);

struct LoadedModel {
    ModelParams eta;
    Hyperparams hyper;
    Geometry geom;
};

LoadedModel load_model(const std::filesystem::path& path);

// Ground-truth sidecar for synthetic datasets: the generating model plus
// per-image labels and deformations.
void save_truth(const std::filesystem::path& path, const ModelParams& eta,
                const Hyperparams& hyper, const Geometry& geom, const HiddenState& hidden);

struct LoadedTruth {
    ModelParams eta;
    Hyperparams hyper;
    Geometry geom;
    HiddenState hidden;
};

LoadedTruth load_truth(const std::filesystem::path& path);

}  // namespace dtmix
