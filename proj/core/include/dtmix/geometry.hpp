#pragma once

#include <Eigen/Dense>

#include "dtmix/errors.hpp"

namespace dtmix {

struct Box {
    double x0 = -1.0, y0 = -1.0, x1 = 1.0, y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

// Fixed control points of a kernel expansion. Points are stored as
// columns; a grid of nx*ny landmarks is laid out row-major with the
// points at cell centers, so every landmark lies strictly inside the box.
struct LandmarkGrid {
    Eigen::Matrix2Xd points;
    int nx = 0, ny = 0;
    Box box;

    int count() const { return static_cast<int>(points.cols()); }

    static LandmarkGrid uniform(int nx, int ny, const Box& box);
};

// Kernel bandwidths and the domain boxes of the two expansions.
struct KernelConfig {
    double sigma_p = 0.2;
    double sigma_g = 0.12;
    Box photometric_box{-1.5, -1.5, 1.5, 1.5};
    Box geometric_box{-1.0, -1.0, 1.0, 1.0};
};

// Pixel centers mapped affinely into a continuous domain box.
struct PixelGrid {
    int width = 0, height = 0;
    Eigen::Matrix2Xd coords;  // 2 x (width*height), row-major pixel order
    Box box;

    int size() const { return width * height; }

    static PixelGrid make(int width, int height, const Box& box);
};

double gaussian_kernel(const Eigen::Vector2d& x, const Eigen::Vector2d& y, double sigma);

// Symmetric kernel matrix K(v_j, v_j') over one landmark set.
Eigen::MatrixXd build_gram(const LandmarkGrid& grid, double sigma);

// Inverse of (m + ridge*I); throws InversionFailure when the factorization
// degenerates even after regularization.
Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& m, double ridge = 1e-8);

// Cross-kernel matrix K(p_i, q_j) between two point sets (points as columns).
Eigen::MatrixXd cross_kernel(const Eigen::Matrix2Xd& p, const Eigen::Matrix2Xd& q, double sigma);

// Displacement field at the query points for coefficients beta.
// beta stores the k_g x-components first, then the k_g y-components.
Eigen::Matrix2Xd deformation_field(const Eigen::VectorXd& beta, const LandmarkGrid& g_landmarks,
                                   double sigma_g, const Eigen::Matrix2Xd& points);

// Deformed design matrix without a Geometry bundle: entry (u, j) is
// K_p(v_u - z_beta(v_u), v_pj). Equals Geometry::design entry for entry.
Eigen::MatrixXd deformed_design_matrix(const Eigen::VectorXd& beta, const PixelGrid& pixels,
                                       const LandmarkGrid& p_landmarks,
                                       const LandmarkGrid& g_landmarks,
                                       const KernelConfig& config);

// Everything fixed by the discretization: the pixel grid, both landmark
// sets, and the precomputed geometric kernel at the pixel centers. The
// per-proposal hot path only evaluates the photometric kernel.
class Geometry {
public:
    Geometry(PixelGrid pixels, LandmarkGrid photo, LandmarkGrid geo, KernelConfig kernel);

    static Geometry make(int width, int height, int kp_x, int kp_y, int kg_x, int kg_y,
                         const KernelConfig& kernel = KernelConfig{});

    const PixelGrid& pixels() const { return pixels_; }
    const LandmarkGrid& photo_landmarks() const { return photo_; }
    const LandmarkGrid& geo_landmarks() const { return geo_; }
    const KernelConfig& kernel() const { return kernel_; }

    int pixel_count() const { return pixels_.size(); }
    int k_p() const { return photo_.count(); }
    int k_g() const { return geo_.count(); }
    int beta_dim() const { return 2 * geo_.count(); }

    // K_g(v_u, v_{g,j}) evaluated once at the pixel centers.
    const Eigen::MatrixXd& geo_kernel() const { return geo_kernel_; }
    // Undeformed design matrix K_p^0.
    const Eigen::MatrixXd& design0() const { return design0_; }

    // Deformed design matrix K_p^beta, entries K_p(v_u - z_beta(v_u), v_{p,j}).
    Eigen::MatrixXd design(const Eigen::VectorXd& beta) const;

    // (K_p^beta) * alpha without materializing the design matrix.
    Eigen::VectorXd deformed_template(const Eigen::VectorXd& beta,
                                      const Eigen::VectorXd& alpha) const;

    // ||y - K_p^beta * alpha||^2, the quantity the samplers evaluate per proposal.
    double residual_sumsq(const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                          const Eigen::VectorXd& alpha) const;

private:
    void check_beta(const Eigen::VectorXd& beta) const;

    PixelGrid pixels_;
    LandmarkGrid photo_, geo_;
    KernelConfig kernel_;
    Eigen::MatrixXd geo_kernel_;
    Eigen::MatrixXd design0_;
};

}  // namespace dtmix
