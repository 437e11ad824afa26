#include <cmath>
#include <random>

#include "doctest.h"
#include "dtmix/geometry.hpp"
#include "test_util.hpp"

using namespace dtmix;
using Eigen::Vector2d;

TEST_CASE("gaussian_kernel fixed values") {
    CHECK(gaussian_kernel(Vector2d(0.3, -0.1), Vector2d(0.3, -0.1), 0.2) == 1.0);
    CHECK(gaussian_kernel(Vector2d(0, 0), Vector2d(0.2, 0), 0.2) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
    CHECK(gaussian_kernel(Vector2d(0, 0), Vector2d(0.12, 0.12), 0.12) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("kernel symmetry and boundedness") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ud(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        const Vector2d x(ud(rng), ud(rng));
        const Vector2d y(ud(rng), ud(rng));
        const double k = gaussian_kernel(x, y, 0.3);
        CHECK(k == gaussian_kernel(y, x, 0.3));
        CHECK(k > 0.0);
        CHECK(k <= 1.0);
    }
}

TEST_CASE("build_gram small cases") {
    Box box{-1, -1, 1, 1};
    {
        const LandmarkGrid g = LandmarkGrid::uniform(1, 1, box);
        const Eigen::MatrixXd m = build_gram(g, 0.2);
        REQUIRE(m.rows() == 1);
        CHECK(m(0, 0) == 1.0);
    }
    {
        // Two landmarks at distance sigma.
        LandmarkGrid g;
        g.nx = 2;
        g.ny = 1;
        g.points.resize(2, 2);
        g.points.col(0) = Vector2d(0.0, 0.0);
        g.points.col(1) = Vector2d(0.3, 0.0);
        const Eigen::MatrixXd m = build_gram(g, 0.3);
        CHECK(m(0, 0) == 1.0);
        CHECK(m(1, 1) == 1.0);
        CHECK(m(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
        CHECK(m(1, 0) == m(0, 1));
    }
}

TEST_CASE("build_gram matches per-entry kernel evaluation") {
    // 3x3 grid with spacing 0.5, sigma 0.2.
    const LandmarkGrid g = LandmarkGrid::uniform(3, 3, Box{-0.75, -0.75, 0.75, 0.75});
    const Eigen::MatrixXd m = build_gram(g, 0.2);
    for (int i = 0; i < g.count(); ++i) {
        for (int j = 0; j < g.count(); ++j) {
            CHECK(m(i, j) == gaussian_kernel(g.points.col(i), g.points.col(j), 0.2));
        }
    }
}

TEST_CASE("regularized inverse rejects indefinite input") {
    CHECK_THROWS_AS(regularized_inverse(-Eigen::MatrixXd::Identity(3, 3)), InversionFailure);
}

TEST_CASE("regularized inverse keeps eigenvalues above the floor") {
    // Dense grid: nearly singular Gram matrix.
    const LandmarkGrid g = LandmarkGrid::uniform(4, 4, Box{-0.2, -0.2, 0.2, 0.2});
    const Eigen::MatrixXd m = build_gram(g, 0.3);
    const Eigen::MatrixXd inv = regularized_inverse(m, 1e-8);
    Eigen::MatrixXd reg = m;
    reg.diagonal().array() += 1e-8;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reg);
    CHECK(es.eigenvalues().minCoeff() >= 1e-8 * (1.0 - 1e-9));
    CHECK((reg * inv - Eigen::MatrixXd::Identity(m.rows(), m.cols())).norm() < 1e-6);
}

TEST_CASE("deformation_field basics") {
    const LandmarkGrid g = LandmarkGrid::uniform(2, 2, Box{-1, -1, 1, 1});
    const Geometry geom = testutil::toy_geometry();

    SUBCASE("zero coefficients give zero displacement") {
        const Eigen::VectorXd beta = Eigen::VectorXd::Zero(8);
        const Eigen::Matrix2Xd z =
            deformation_field(beta, g, 0.5, geom.pixels().coords);
        CHECK(z.norm() == 0.0);
    }

    SUBCASE("kernel value one at the landmark itself") {
        LandmarkGrid single;
        single.nx = single.ny = 1;
        single.points.resize(2, 1);
        single.points.col(0) = Vector2d(0.25, -0.5);
        Eigen::VectorXd beta(2);
        beta << 0.7, -0.3;
        Eigen::Matrix2Xd query(2, 1);
        query.col(0) = Vector2d(0.25, -0.5);
        const Eigen::Matrix2Xd z = deformation_field(beta, single, 0.12, query);
        CHECK(z(0, 0) == doctest::Approx(0.7).epsilon(1e-14));
        CHECK(z(1, 0) == doctest::Approx(-0.3).epsilon(1e-14));
    }

    SUBCASE("matches naive double-loop evaluation") {
        std::mt19937_64 rng(11);
        const Eigen::VectorXd beta = testutil::random_vector(8, rng);
        Eigen::Matrix2Xd pts(2, 10);
        for (int i = 0; i < 10; ++i) pts.col(i) = testutil::random_vector(2, rng);
        const Eigen::Matrix2Xd z = deformation_field(beta, g, 0.5, pts);
        for (int i = 0; i < 10; ++i) {
            double zx = 0.0, zy = 0.0;
            for (int j = 0; j < g.count(); ++j) {
                const double k = gaussian_kernel(pts.col(i), g.points.col(j), 0.5);
                zx += k * beta(j);
                zy += k * beta(4 + j);
            }
            CHECK(std::abs(z(0, i) - zx) <= 1e-12);
            CHECK(std::abs(z(1, i) - zy) <= 1e-12);
        }
    }

    SUBCASE("wrong beta length throws") {
        CHECK_THROWS_AS(deformation_field(Eigen::VectorXd::Zero(7), g, 0.5,
                                          geom.pixels().coords),
                        DimensionMismatch);
    }
}

TEST_CASE("deformed design matrix") {
    const Geometry geom = testutil::toy_geometry();

    SUBCASE("beta = 0 reproduces the undeformed design exactly") {
        const Eigen::MatrixXd k = geom.design(Eigen::VectorXd::Zero(geom.beta_dim()));
        CHECK(k == geom.design0());
    }

    SUBCASE("alpha = 0 renders the zero image") {
        std::mt19937_64 rng(3);
        const Eigen::VectorXd beta = testutil::random_vector(geom.beta_dim(), rng, 0.3);
        const Eigen::VectorXd img =
            geom.deformed_template(beta, Eigen::VectorXd::Zero(geom.k_p()));
        CHECK(img.norm() == 0.0);
    }

    SUBCASE("entries match the per-entry composition with the deformation field") {
        std::mt19937_64 rng(5);
        const Eigen::VectorXd beta = testutil::random_vector(geom.beta_dim(), rng, 0.3);
        const Eigen::MatrixXd k = geom.design(beta);
        const Eigen::Matrix2Xd z = deformation_field(beta, geom.geo_landmarks(),
                                                     geom.kernel().sigma_g,
                                                     geom.pixels().coords);
        for (int u = 0; u < geom.pixel_count(); ++u) {
            const Vector2d w = geom.pixels().coords.col(u) - z.col(u);
            for (int j = 0; j < geom.k_p(); ++j) {
                const double expected =
                    gaussian_kernel(w, geom.photo_landmarks().points.col(j),
                                    geom.kernel().sigma_p);
                CHECK(std::abs(k(u, j) - expected) <= 1e-12);
                CHECK(k(u, j) > 0.0);
                CHECK(k(u, j) <= 1.0);
            }
        }
    }

    SUBCASE("free-function form equals the bundled design, entry-exact") {
        std::mt19937_64 rng(13);
        const Eigen::VectorXd beta = testutil::random_vector(geom.beta_dim(), rng, 0.3);
        const Eigen::MatrixXd k =
            deformed_design_matrix(beta, geom.pixels(), geom.photo_landmarks(),
                                   geom.geo_landmarks(), geom.kernel());
        CHECK(k == geom.design(beta));
    }

    SUBCASE("deformed template equals design times alpha") {
        std::mt19937_64 rng(9);
        const Eigen::VectorXd beta = testutil::random_vector(geom.beta_dim(), rng, 0.3);
        const Eigen::VectorXd alpha = testutil::random_vector(geom.k_p(), rng);
        const Eigen::VectorXd img = geom.deformed_template(beta, alpha);
        CHECK((img - geom.design(beta) * alpha).norm() <= 1e-12);
    }
}

TEST_CASE("pixel grid is an affine map of indices") {
    const PixelGrid p = PixelGrid::make(8, 4, Box{-1.5, -1.0, 1.5, 1.0});
    REQUIRE(p.size() == 32);
    const double hx = 3.0 / 8, hy = 2.0 / 4;
    for (int iy = 0; iy < 4; ++iy) {
        for (int ix = 0; ix < 8; ++ix) {
            const int u = iy * 8 + ix;
            CHECK(p.coords(0, u) == doctest::Approx(-1.5 + (ix + 0.5) * hx).epsilon(1e-14));
            CHECK(p.coords(1, u) == doctest::Approx(-1.0 + (iy + 0.5) * hy).epsilon(1e-14));
        }
    }
}
