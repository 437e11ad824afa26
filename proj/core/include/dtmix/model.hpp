#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dtmix/errors.hpp"
#include "dtmix/geometry.hpp"

namespace dtmix {

// One mixture component: template coefficients, noise variance and the
// deformation covariance.
struct ComponentParams {
    Eigen::VectorXd alpha;     // length k_p
    double sigma2 = 1.0;       // > 0
    Eigen::MatrixXd gamma_g;   // 2k_g x 2k_g, SPD
};

struct ModelParams {
    std::vector<ComponentParams> components;
    Eigen::VectorXd rho;  // length tau_m, positive, sums to 1

    int count() const { return static_cast<int>(components.size()); }
    void validate() const;
};

// Fixed prior quantities plus the structural constants they constrain.
struct Hyperparams {
    Eigen::VectorXd mu_p;          // prior mean of alpha
    Eigen::MatrixXd sigma_p_mat;   // prior covariance of alpha (SPD)
    Eigen::MatrixXd sigma_p_inv;   // its inverse, kept explicitly
    double a_p = 3.0;              // >= 3
    double sigma0_2 = 1.0;         // > 0
    Eigen::MatrixXd sigma_g_mat;   // prior scale of gamma_g (SPD, 2k_g x 2k_g)
    double a_g = 0.0;              // >= 4*k_g + 1
    double a_rho = 1.0;            // > 0
    int tau_m = 1;
    double R = 1e6;                // ||alpha|| bound; validation warning only
    bool sigma_fixed = false;

    void validate(int k_p, int k_g) const;

    // Kernel-metric priors: sigma_p = gram(photo)^-1, and sigma_g the
    // two-coordinate block extension of gram(geo)^-1.
    static Hyperparams standard(const Geometry& geom, int tau_m);
};

// Raw per-component sums of the five statistics. The stochastic
// approximation averages these componentwise.
struct SufficientStats {
    std::vector<double> s0;            // soft counts
    std::vector<Eigen::VectorXd> s1;   // (K_p^beta)^T y sums, k_p
    std::vector<Eigen::MatrixXd> s2;   // (K_p^beta)^T (K_p^beta) sums, k_p x k_p
    std::vector<Eigen::MatrixXd> s3;   // beta beta^T sums, 2k_g x 2k_g
    std::vector<double> s4;            // ||y||^2 sums

    int count() const { return static_cast<int>(s0.size()); }
    static SufficientStats zeros(int tau_m, int k_p, int k_g);
};

// Per-image hidden variables. Component labels are 0-based.
struct HiddenState {
    std::vector<Eigen::VectorXd> beta;
    std::vector<int> tau;

    int size() const { return static_cast<int>(beta.size()); }
};

struct Dataset;  // dataset.hpp

// log q(y_i | beta_i, t, eta): Gaussian image likelihood.
double image_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                    const ComponentParams& comp, const Geometry& geom);

// log N(beta; 0, gamma). Throws SingularCovariance.
double gaussian_logpdf(const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma);

// Complete-data log-likelihood: photometric + deformation prior + label terms.
double complete_loglik(const Dataset& data, const HiddenState& hidden, const ModelParams& eta,
                       const Geometry& geom);

// Same quantity expressed through the statistics: L(s; eta). Equals
// complete_loglik when s = sufficient_stats(data, hidden).
double complete_loglik_from_stats(const SufficientStats& s, const ModelParams& eta,
                                  int pixel_count);

SufficientStats sufficient_stats(const Dataset& data, const HiddenState& hidden, int tau_m,
                                 const Geometry& geom);

// s + delta * (S_new - s), blockwise.
SufficientStats sa_update(const SufficientStats& s, const SufficientStats& s_new, double delta);

// Closed-form maximizer eta_hat(s) of the penalized objective. With
// sigma_fixed the variances are copied from prev and alpha is closed form;
// otherwise alpha and sigma2 are iterated to a fixed point from prev.
ModelParams m_step(const SufficientStats& s, const Hyperparams& hyper, const ModelParams& prev,
                   int pixel_count);

// Sum of the log prior densities, up to one fixed additive constant.
double log_posterior_penalty(const ModelParams& eta, const Hyperparams& hyper);

// Data-derived constants bounding the statistics. Kernel values lie in
// (0,1], so every design matrix has Frobenius norm at most
// sqrt(pixels*k_p); the bounds below follow for any deformations.
struct StatBounds {
    double n = 0;
    int pixel_count = 0;
    int k_p = 0;
    double y_norm2 = 0;  // sum over images of ||y_i||^2

    double b1() const;  // bound on ||s1_t||
    double b2() const;  // bound on ||s2_t||_F
    double b4() const { return y_norm2; }

    static StatBounds from(const Dataset& data, int k_p);
};

// Membership in the absorbing set, with relative slack for rounding.
bool in_absorbing_set(const SufficientStats& s, const StatBounds& bounds, double slack = 1e-9);

}  // namespace dtmix
