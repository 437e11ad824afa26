#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "dtmix/dataset.hpp"
#include "dtmix/gibbs.hpp"
#include "dtmix/model.hpp"

namespace dtmix {

struct SaemConfig {
    int k_max = 200;
    int k_heat = 150;             // step size is 1 up to this iteration
    double step_exponent = 0.6;   // in (0.5, 1]
    int j0 = 50;                  // sweeps per iteration
    bool j_growth = false;        // J_k = j0 * ceil(sqrt(k)) when set
    double compact_radius0 = 0;   // 0 = 10 * (5 * tau_m)
    double compact_growth = 2.0;
    std::uint64_t seed = 0;
    bool sigma_fixed = false;
    int threads = 1;              // 0 = hardware concurrency
    int kappa_ceiling = 50;

    void validate() const;
};

// Step size: 1 during the heating period, then (k - k_heat)^(-exponent).
double step_size(int k, const SaemConfig& config);

// J_k schedule.
int sweeps_at(int k, const SaemConfig& config);

// Weighted norm over the statistic blocks; each block is scaled by its
// absorbing-set bound (the unbounded s3 block by a prior-sized constant),
// so healthy runs sit far inside the first compact set.
class StatNorm {
public:
    StatNorm(const StatBounds& bounds, const Eigen::MatrixXd& sigma_g_mat);

    double operator()(const SufficientStats& s) const;
    double distance(const SufficientStats& a, const SufficientStats& b) const;

private:
    StatBounds bounds_;
    double b3_;
};

// Closed-ball membership test for the expanding compact family.
bool compact_set_contains(const SufficientStats& s, int kappa, const SaemConfig& config,
                          const StatNorm& norm);

struct SaemState {
    HiddenState hidden;
    SufficientStats s;
    ModelParams eta;
    int kappa = 0;
    int k = 0;
};

struct TraceRow {
    int k = 0;
    double logpost = 0.0;  // complete-data log-posterior at (hidden_k, eta_k)
    int kappa = 0;
    double ds_norm = 0.0;  // weighted norm of s_k - s_{k-1}
    double accept_rate = 0.0;
    double mean_drift = 0.0;  // mean of 1 + ||beta_i||^2
    Eigen::VectorXd sigma2;
    Eigen::VectorXd rho;
};

struct Trace {
    std::vector<TraceRow> rows;

    void write_tsv(std::ostream& os) const;
};

using SaemObserver = std::function<void(const SaemState&, const TraceRow&)>;

// Everything saem_iteration needs besides the state.
class SaemEngine {
public:
    SaemEngine(const Dataset& data, const Hyperparams& hyper, const SaemConfig& config,
               const Geometry& geom);

    // Initial state: template fit to the mean image, prior covariances,
    // unit variances, uniform weights, random labels, zero deformations.
    SaemState init(const ModelParams* eta0 = nullptr) const;

    // One transition of the homogeneous chain (hidden, s, kappa, k).
    TraceRow iterate(SaemState& state) const;

    const StatNorm& norm() const { return norm_; }
    const StatBounds& bounds() const { return bounds_; }
    const Hyperparams& hyper() const { return hyper_; }

private:
    const Dataset& data_;
    Hyperparams hyper_;
    SaemConfig config_;
    const Geometry& geom_;
    StatBounds bounds_;
    StatNorm norm_;
};

// Runs k_max iterations and returns the final parameters with the full trace.
std::pair<ModelParams, Trace> train(const Dataset& data, const Hyperparams& hyper,
                                    const SaemConfig& config, const Geometry& geom,
                                    const SaemObserver& observer = nullptr,
                                    const ModelParams* eta0 = nullptr);

}  // namespace dtmix
