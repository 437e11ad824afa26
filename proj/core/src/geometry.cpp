#include "dtmix/geometry.hpp"

#include <cmath>

namespace dtmix {

LandmarkGrid LandmarkGrid::uniform(int nx, int ny, const Box& box) {
    if (nx < 1 || ny < 1) throw DimensionMismatch("landmark grid needs nx,ny >= 1");
    LandmarkGrid g;
    g.nx = nx;
    g.ny = ny;
    g.box = box;
    g.points.resize(2, static_cast<Eigen::Index>(nx) * ny);
    const double hx = box.width() / nx;
    const double hy = box.height() / ny;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const Eigen::Index j = static_cast<Eigen::Index>(iy) * nx + ix;
            g.points(0, j) = box.x0 + (ix + 0.5) * hx;
            g.points(1, j) = box.y0 + (iy + 0.5) * hy;
        }
    }
    return g;
}

PixelGrid PixelGrid::make(int width, int height, const Box& box) {
    if (width < 1 || height < 1) throw DimensionMismatch("pixel grid needs width,height >= 1");
    PixelGrid p;
    p.width = width;
    p.height = height;
    p.box = box;
    p.coords.resize(2, static_cast<Eigen::Index>(width) * height);
    const double hx = box.width() / width;
    const double hy = box.height() / height;
    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            const Eigen::Index u = static_cast<Eigen::Index>(iy) * width + ix;
            p.coords(0, u) = box.x0 + (ix + 0.5) * hx;
            p.coords(1, u) = box.y0 + (iy + 0.5) * hy;
        }
    }
    return p;
}

double gaussian_kernel(const Eigen::Vector2d& x, const Eigen::Vector2d& y, double sigma) {
    // Same expression as the matrix builders so entries match bit for bit.
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double dx = x.x() - y.x();
    const double dy = x.y() - y.y();
    return std::exp(-(dx * dx + dy * dy) * inv2s2);
}

Eigen::MatrixXd cross_kernel(const Eigen::Matrix2Xd& p, const Eigen::Matrix2Xd& q, double sigma) {
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd k(p.cols(), q.cols());
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.cols(); ++i) {
            const double dx = p(0, i) - q(0, j);
            const double dy = p(1, i) - q(1, j);
            k(i, j) = std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    return k;
}

Eigen::MatrixXd build_gram(const LandmarkGrid& grid, double sigma) {
    if (grid.count() == 0) throw DimensionMismatch("build_gram: empty landmark grid");
    return cross_kernel(grid.points, grid.points, sigma);
}

Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& m, double ridge) {
    Eigen::MatrixXd r = m;
    r.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) {
        throw InversionFailure("regularized_inverse: matrix is numerically singular");
    }
    Eigen::MatrixXd inv =
        llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    if (!inv.allFinite()) {
        throw InversionFailure("regularized_inverse: non-finite inverse");
    }
    return inv;
}

Eigen::Matrix2Xd deformation_field(const Eigen::VectorXd& beta, const LandmarkGrid& g_landmarks,
                                   double sigma_g, const Eigen::Matrix2Xd& points) {
    const Eigen::Index kg = g_landmarks.count();
    if (beta.size() != 2 * kg) {
        throw DimensionMismatch("deformation_field: beta has wrong length");
    }
    const Eigen::MatrixXd k = cross_kernel(points, g_landmarks.points, sigma_g);
    Eigen::Matrix2Xd z(2, points.cols());
    z.row(0) = (k * beta.head(kg)).transpose();
    z.row(1) = (k * beta.tail(kg)).transpose();
    return z;
}

Eigen::MatrixXd deformed_design_matrix(const Eigen::VectorXd& beta, const PixelGrid& pixels,
                                       const LandmarkGrid& p_landmarks,
                                       const LandmarkGrid& g_landmarks,
                                       const KernelConfig& config) {
    const Eigen::Matrix2Xd z =
        deformation_field(beta, g_landmarks, config.sigma_g, pixels.coords);
    const double inv2s2 = 1.0 / (2.0 * config.sigma_p * config.sigma_p);
    Eigen::MatrixXd k(pixels.size(), p_landmarks.count());
    for (Eigen::Index j = 0; j < p_landmarks.count(); ++j) {
        const double px = p_landmarks.points(0, j);
        const double py = p_landmarks.points(1, j);
        for (Eigen::Index u = 0; u < pixels.size(); ++u) {
            const double dx = pixels.coords(0, u) - z(0, u) - px;
            const double dy = pixels.coords(1, u) - z(1, u) - py;
            k(u, j) = std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    return k;
}

Geometry::Geometry(PixelGrid pixels, LandmarkGrid photo, LandmarkGrid geo, KernelConfig kernel)
    : pixels_(std::move(pixels)),
      photo_(std::move(photo)),
      geo_(std::move(geo)),
      kernel_(kernel) {
    geo_kernel_ = cross_kernel(pixels_.coords, geo_.points, kernel_.sigma_g);
    design0_ = cross_kernel(pixels_.coords, photo_.points, kernel_.sigma_p);
}

Geometry Geometry::make(int width, int height, int kp_x, int kp_y, int kg_x, int kg_y,
                        const KernelConfig& kernel) {
    return Geometry(PixelGrid::make(width, height, kernel.photometric_box),
                    LandmarkGrid::uniform(kp_x, kp_y, kernel.photometric_box),
                    LandmarkGrid::uniform(kg_x, kg_y, kernel.geometric_box), kernel);
}

void Geometry::check_beta(const Eigen::VectorXd& beta) const {
    if (beta.size() != beta_dim()) {
        throw DimensionMismatch("beta has wrong length for this geometry");
    }
}

Eigen::MatrixXd Geometry::design(const Eigen::VectorXd& beta) const {
    check_beta(beta);
    const Eigen::Index kg = geo_.count();
    const Eigen::VectorXd zx = geo_kernel_ * beta.head(kg);
    const Eigen::VectorXd zy = geo_kernel_ * beta.tail(kg);
    const double inv2s2 = 1.0 / (2.0 * kernel_.sigma_p * kernel_.sigma_p);
    Eigen::MatrixXd k(pixels_.size(), photo_.count());
    for (Eigen::Index j = 0; j < photo_.count(); ++j) {
        const double px = photo_.points(0, j);
        const double py = photo_.points(1, j);
        for (Eigen::Index u = 0; u < pixels_.size(); ++u) {
            const double dx = pixels_.coords(0, u) - zx(u) - px;
            const double dy = pixels_.coords(1, u) - zy(u) - py;
            k(u, j) = std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    return k;
}

Eigen::VectorXd Geometry::deformed_template(const Eigen::VectorXd& beta,
                                            const Eigen::VectorXd& alpha) const {
    check_beta(beta);
    if (alpha.size() != photo_.count()) {
        throw DimensionMismatch("alpha has wrong length for this geometry");
    }
    const Eigen::Index kg = geo_.count();
    const Eigen::VectorXd zx = geo_kernel_ * beta.head(kg);
    const Eigen::VectorXd zy = geo_kernel_ * beta.tail(kg);
    const double inv2s2 = 1.0 / (2.0 * kernel_.sigma_p * kernel_.sigma_p);
    Eigen::VectorXd img(pixels_.size());
    for (Eigen::Index u = 0; u < pixels_.size(); ++u) {
        const double wx = pixels_.coords(0, u) - zx(u);
        const double wy = pixels_.coords(1, u) - zy(u);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < photo_.count(); ++j) {
            const double dx = wx - photo_.points(0, j);
            const double dy = wy - photo_.points(1, j);
            acc += std::exp(-(dx * dx + dy * dy) * inv2s2) * alpha(j);
        }
        img(u) = acc;
    }
    return img;
}

double Geometry::residual_sumsq(const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                const Eigen::VectorXd& alpha) const {
    if (y.size() != pixels_.size()) {
        throw DimensionMismatch("image has wrong length for this geometry");
    }
    check_beta(beta);
    if (alpha.size() != photo_.count()) {
        throw DimensionMismatch("alpha has wrong length for this geometry");
    }
    const Eigen::Index kg = geo_.count();
    const Eigen::VectorXd zx = geo_kernel_ * beta.head(kg);
    const Eigen::VectorXd zy = geo_kernel_ * beta.tail(kg);
    const double inv2s2 = 1.0 / (2.0 * kernel_.sigma_p * kernel_.sigma_p);
    double sumsq = 0.0;
    for (Eigen::Index u = 0; u < pixels_.size(); ++u) {
        const double wx = pixels_.coords(0, u) - zx(u);
        const double wy = pixels_.coords(1, u) - zy(u);
        double acc = 0.0;
        for (Eigen::Index j = 0; j < photo_.count(); ++j) {
            const double dx = wx - photo_.points(0, j);
            const double dy = wy - photo_.points(1, j);
            acc += std::exp(-(dx * dx + dy * dy) * inv2s2) * alpha(j);
        }
        const double r = y(u) - acc;
        sumsq += r * r;
    }
    return sumsq;
}

}  // namespace dtmix
