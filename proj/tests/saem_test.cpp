#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dtmix/saem.hpp"
#include "test_util.hpp"

using namespace dtmix;

namespace {

// Two well separated bar templates on a small grid.
ModelParams two_bar_truth(const Geometry& geom, double deform_sd = 0.15,
                          double sigma2 = 0.02) {
    ModelParams eta;
    eta.components.resize(2);
    const int nx = geom.photo_landmarks().nx;
    const int ny = geom.photo_landmarks().ny;
    Eigen::VectorXd ah = Eigen::VectorXd::Zero(geom.k_p());
    Eigen::VectorXd av = Eigen::VectorXd::Zero(geom.k_p());
    for (int ix = 0; ix < nx; ++ix) ah(static_cast<Eigen::Index>(ny / 2) * nx + ix) = 1.2;
    for (int iy = 0; iy < ny; ++iy) av(static_cast<Eigen::Index>(iy) * nx + nx / 2) = 1.2;
    eta.components[0].alpha = ah;
    eta.components[1].alpha = av;
    for (auto& c : eta.components) {
        c.sigma2 = sigma2;
        c.gamma_g =
            deform_sd * deform_sd * Eigen::MatrixXd::Identity(geom.beta_dim(), geom.beta_dim());
    }
    eta.rho = Eigen::VectorXd::Constant(2, 0.5);
    return eta;
}

Geometry small_geometry() {
    KernelConfig kc;
    kc.sigma_p = 0.5;
    kc.sigma_g = 0.4;
    return Geometry::make(8, 8, 3, 3, 2, 2, kc);
}

}  // namespace

TEST_CASE("step_size schedule") {
    SaemConfig cfg;
    cfg.k_heat = 150;
    cfg.step_exponent = 0.6;
    CHECK(step_size(1, cfg) == 1.0);
    CHECK(step_size(150, cfg) == 1.0);
    CHECK(step_size(151, cfg) == 1.0);  // (1)^(-0.6)
    CHECK(step_size(150 + 32, cfg) == doctest::Approx(std::pow(32.0, -0.6)).epsilon(1e-12));
    for (int k = 151; k < 400; ++k) CHECK(step_size(k + 1, cfg) <= step_size(k, cfg));
}

TEST_CASE("J schedule") {
    SaemConfig cfg;
    cfg.j0 = 50;
    CHECK(sweeps_at(1, cfg) == 50);
    CHECK(sweeps_at(999, cfg) == 50);
    cfg.j_growth = true;
    CHECK(sweeps_at(1, cfg) == 50);
    CHECK(sweeps_at(4, cfg) == 100);
    CHECK(sweeps_at(9, cfg) == 150);
    for (int k = 1; k < 200; ++k) CHECK(sweeps_at(k + 1, cfg) >= sweeps_at(k, cfg));
}

TEST_CASE("compact set membership") {
    const Geometry geom = small_geometry();
    const ModelParams truth = two_bar_truth(geom);
    const Dataset data = generate_synthetic(truth, 10, geom, 5);
    const StatBounds bounds = StatBounds::from(data, geom.k_p());
    const Hyperparams hyper = Hyperparams::standard(geom, 2);
    const StatNorm norm(bounds, hyper.sigma_g_mat);

    SaemConfig cfg;
    cfg.k_max = 1;

    HiddenState h;
    h.beta.assign(10, Eigen::VectorXd::Zero(geom.beta_dim()));
    h.tau.assign(10, 0);
    SufficientStats s = sufficient_stats(data, h, 2, geom);

    SUBCASE("zero statistics are inside the first set") {
        const SufficientStats z = SufficientStats::zeros(2, geom.k_p(), geom.k_g());
        CHECK(compact_set_contains(z, 0, cfg, norm));
    }

    SUBCASE("fresh statistics are inside the first set") {
        CHECK(compact_set_contains(s, 0, cfg, norm));
    }

    SUBCASE("any statistics enter for large enough kappa") {
        SufficientStats huge = s;
        huge.s3[0] = 1e9 * Eigen::MatrixXd::Identity(geom.beta_dim(), geom.beta_dim());
        CHECK_FALSE(compact_set_contains(huge, 0, cfg, norm));
        bool entered = false;
        for (int kappa = 1; kappa < 60; ++kappa) {
            if (compact_set_contains(huge, kappa, cfg, norm)) {
                entered = true;
                // Monotone in kappa from here on.
                CHECK(compact_set_contains(huge, kappa + 1, cfg, norm));
                break;
            }
        }
        CHECK(entered);
    }

    SUBCASE("the ball is closed: the boundary belongs") {
        SaemConfig exact = cfg;
        exact.compact_radius0 = norm(s);
        CHECK(compact_set_contains(s, 0, exact, norm));
    }
}

TEST_CASE("saem_iteration truncation branch") {
    const Geometry geom = small_geometry();
    const ModelParams truth = two_bar_truth(geom);
    const Dataset data = generate_synthetic(truth, 8, geom, 7);
    const Hyperparams hyper = Hyperparams::standard(geom, 2);

    SaemConfig cfg;
    cfg.k_max = 3;
    cfg.k_heat = 0;
    cfg.j0 = 4;
    cfg.seed = 3;

    SaemEngine engine(data, hyper, cfg, geom);
    SaemState state = engine.init();
    // Pretend one iteration has passed so the next step size is below one
    // and the injected statistic survives the averaging.
    state.k = 1;

    // Inject a synthetic statistic far outside every reachable compact set.
    state.s.s3[0] = 1e9 * Eigen::MatrixXd::Identity(geom.beta_dim(), geom.beta_dim());
    const int kappa_before = state.kappa;
    engine.iterate(state);

    CHECK(state.kappa == kappa_before + 1);
    for (const auto& b : state.hidden.beta) CHECK(b.norm() == 0.0);
    // The reinitialization point is the statistics of (beta = 0, sampled labels).
    const SufficientStats expected = sufficient_stats(data, state.hidden, 2, geom);
    for (int t = 0; t < 2; ++t) {
        CHECK(state.s.s0[t] == expected.s0[t]);
        CHECK((state.s.s1[t] - expected.s1[t]).norm() == 0.0);
        CHECK((state.s.s2[t] - expected.s2[t]).norm() == 0.0);
        CHECK((state.s.s3[t] - expected.s3[t]).norm() == 0.0);
        CHECK(state.s.s4[t] == expected.s4[t]);
    }

    // A healthy follow-up iteration does not truncate again.
    engine.iterate(state);
    CHECK(state.kappa == kappa_before + 1);
}

TEST_CASE("kappa ceiling raises ChainDiverged") {
    const Geometry geom = small_geometry();
    const ModelParams truth = two_bar_truth(geom);
    const Dataset data = generate_synthetic(truth, 4, geom, 9);
    const Hyperparams hyper = Hyperparams::standard(geom, 2);

    SaemConfig cfg;
    cfg.j0 = 2;
    cfg.kappa_ceiling = 1;
    cfg.seed = 1;
    // A radius this small rejects every statistic, forcing truncation
    // on each iteration.
    cfg.compact_radius0 = 1e-12;

    SaemEngine engine(data, hyper, cfg, geom);
    SaemState state = engine.init();
    engine.iterate(state);
    CHECK(state.kappa == 1);
    CHECK_THROWS_AS(engine.iterate(state), ChainDiverged);
}

TEST_CASE("training is deterministic") {
    const Geometry geom = small_geometry();
    const ModelParams truth = two_bar_truth(geom);
    const Dataset data = generate_synthetic(truth, 8, geom, 17);
    const Hyperparams hyper = Hyperparams::standard(geom, 2);

    SaemConfig cfg;
    cfg.k_max = 6;
    cfg.k_heat = 4;
    cfg.j0 = 5;
    cfg.seed = 42;
    cfg.threads = 2;

    const auto [eta_a, trace_a] = train(data, hyper, cfg, geom);
    const auto [eta_b, trace_b] = train(data, hyper, cfg, geom);

    std::ostringstream sa, sb;
    trace_a.write_tsv(sa);
    trace_b.write_tsv(sb);
    CHECK(sa.str() == sb.str());
    for (int t = 0; t < 2; ++t) {
        CHECK((eta_a.components[t].alpha - eta_b.components[t].alpha).norm() == 0.0);
        CHECK(eta_a.components[t].sigma2 == eta_b.components[t].sigma2);
    }
}

TEST_CASE("trace invariants on a healthy run") {
    const Geometry geom = small_geometry();
    const ModelParams truth = two_bar_truth(geom);
    const Dataset data = generate_synthetic(truth, 10, geom, 19);
    const Hyperparams hyper = Hyperparams::standard(geom, 2);

    SaemConfig cfg;
    cfg.k_max = 8;
    cfg.k_heat = 5;
    cfg.j0 = 5;
    cfg.seed = 8;

    SaemEngine engine(data, hyper, cfg, geom);
    SaemState state = engine.init();
    int last_kappa = 0;
    for (int k = 1; k <= cfg.k_max; ++k) {
        const TraceRow row = engine.iterate(state);
        CHECK(row.k == k);
        CHECK(state.k == k);
        CHECK(row.kappa >= last_kappa);  // non-decreasing
        last_kappa = row.kappa;
        CHECK(in_absorbing_set(state.s, engine.bounds()));
        CHECK(std::isfinite(row.logpost));
        CHECK(row.rho.sum() == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(last_kappa == 0);  // truncation is a safety net only
}

TEST_CASE("parameters are the exact maximizer of the running statistics") {
    // eta_k = m_step(s_k) along the whole chain: the parameter path is a
    // deterministic function of the statistic path.
    const Geometry geom = small_geometry();
    const ModelParams truth = two_bar_truth(geom);
    const Dataset data = generate_synthetic(truth, 8, geom, 29);
    const Hyperparams hyper = Hyperparams::standard(geom, 2);

    SaemConfig cfg;
    cfg.k_max = 6;
    cfg.k_heat = 3;
    cfg.j0 = 4;
    cfg.seed = 12;

    SaemEngine engine(data, hyper, cfg, geom);
    SaemState state = engine.init();
    ModelParams prev = state.eta;
    for (int k = 1; k <= cfg.k_max; ++k) {
        engine.iterate(state);
        const ModelParams expected = m_step(state.s, engine.hyper(), prev, geom.pixel_count());
        for (int t = 0; t < 2; ++t) {
            CHECK((state.eta.components[t].alpha - expected.components[t].alpha).norm() == 0.0);
            CHECK(state.eta.components[t].sigma2 == expected.components[t].sigma2);
            CHECK((state.eta.components[t].gamma_g - expected.components[t].gamma_g).norm() ==
                  0.0);
        }
        CHECK((state.eta.rho - expected.rho).norm() == 0.0);
        prev = state.eta;
    }
}

TEST_CASE("label weights approach the truth as J grows") {
    // Small quadrature toy: the Monte-Carlo label posterior at a large J
    // is at least as accurate as at a small J, averaged over seeds.
    KernelConfig kc;
    kc.sigma_p = 0.8;
    kc.sigma_g = 0.5;
    const Geometry geom = Geometry::make(3, 3, 2, 2, 1, 1, kc);

    ModelParams eta;
    eta.components.resize(2);
    eta.components[0].alpha = Eigen::VectorXd(4);
    eta.components[0].alpha << 1.1, 0.3, 0.2, 0.9;
    eta.components[0].sigma2 = 0.15;
    eta.components[0].gamma_g = 0.04 * Eigen::MatrixXd::Identity(2, 2);
    eta.components[1].alpha = Eigen::VectorXd(4);
    eta.components[1].alpha << 0.95, 0.4, 0.3, 0.8;
    eta.components[1].sigma2 = 0.2;
    eta.components[1].gamma_g = 0.09 * Eigen::MatrixXd::Identity(2, 2);
    eta.rho = Eigen::VectorXd(2);
    eta.rho << 0.55, 0.45;

    ModelParams gen = eta;
    gen.rho << 1.0, 0.0;
    Dataset data = generate_synthetic(gen, 1, geom, 555);
    data.truth_hidden.reset();
    data.truth_params.reset();

    // Tensor-grid quadrature of the beta integral per component.
    Eigen::VectorXd log_joint(2);
    for (int t = 0; t < 2; ++t) {
        const auto& comp = eta.components[t];
        const double sd = std::sqrt(comp.gamma_g(0, 0));
        const int m = 96;
        const double lo = -4.0 * sd, h = 8.0 * sd / m;
        double max_term = -std::numeric_limits<double>::infinity();
        std::vector<double> terms;
        Eigen::VectorXd beta(2);
        for (int a = 0; a < m; ++a) {
            beta(0) = lo + (a + 0.5) * h;
            for (int b = 0; b < m; ++b) {
                beta(1) = lo + (b + 0.5) * h;
                terms.push_back(image_loglik(data.images[0], beta, comp, geom) +
                                gaussian_logpdf(beta, comp.gamma_g));
                max_term = std::max(max_term, terms.back());
            }
        }
        double acc = 0.0;
        for (double lt : terms) acc += std::exp(lt - max_term);
        log_joint(t) =
            std::log(eta.rho(t)) + max_term + std::log(acc) + 2.0 * std::log(h);
    }
    Eigen::VectorXd p_true = (log_joint.array() - log_joint.maxCoeff()).exp();
    p_true /= p_true.sum();

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    auto mean_err = [&](int J) {
        double err = 0.0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const auto res = sample_hidden(data, eta, J, zero, zero, geom, seed, 1, 1);
            err += std::abs(res.weights.p(0, 0) - p_true(0)) / 3.0;
        }
        return err;
    };
    CHECK(mean_err(4000) <= mean_err(300));
}

TEST_CASE("empty dataset is rejected") {
    const Geometry geom = small_geometry();
    const Hyperparams hyper = Hyperparams::standard(geom, 2);
    Dataset empty;
    empty.grid = geom.pixels();
    SaemConfig cfg;
    CHECK_THROWS_AS(train(empty, hyper, cfg, geom), EmptyDataset);
}

TEST_CASE("single component recovers a clean template") {
    // Noisy copies of one kernel-representable template with essentially no
    // deformation: the estimate should approach the generating alpha.
    const Geometry geom = small_geometry();
    ModelParams truth;
    truth.components.resize(1);
    truth.components[0] = two_bar_truth(geom).components[0];
    truth.components[0].sigma2 = 0.005;
    truth.components[0].gamma_g =
        1e-10 * Eigen::MatrixXd::Identity(geom.beta_dim(), geom.beta_dim());
    truth.rho = Eigen::VectorXd::Ones(1);

    const Dataset data = generate_synthetic(truth, 30, geom, 23);
    const Hyperparams hyper = Hyperparams::standard(geom, 1);

    SaemConfig cfg;
    cfg.k_max = 40;
    cfg.k_heat = 25;
    cfg.j0 = 20;
    cfg.seed = 4;
    cfg.threads = 2;

    const auto [eta, trace] = train(data, hyper, cfg, geom);
    const double rel_err = (eta.components[0].alpha - truth.components[0].alpha).norm() /
                           truth.components[0].alpha.norm();
    CHECK(rel_err <= 0.05);

    // With no real deformation the estimate approaches the ridge fit of
    // the undeformed design.
    const Eigen::MatrixXd& k0 = geom.design0();
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(geom.k_p(), geom.k_p());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(geom.k_p());
    for (const auto& y : data.images) {
        lhs += k0.transpose() * k0;
        rhs += k0.transpose() * y;
    }
    const double s2 = eta.components[0].sigma2;
    lhs += s2 * hyper.sigma_p_inv;
    rhs += s2 * (hyper.sigma_p_inv * hyper.mu_p);
    const Eigen::VectorXd ridge = lhs.ldlt().solve(rhs);
    CHECK((eta.components[0].alpha - ridge).norm() / ridge.norm() <= 0.05);

    // The monitored objective should not decay over the final quartile.
    const int q = cfg.k_max / 4;
    double first = 0.0, second = 0.0;
    for (int k = cfg.k_max - 2 * q; k < cfg.k_max - q; ++k) first += trace.rows[k].logpost;
    for (int k = cfg.k_max - q; k < cfg.k_max; ++k) second += trace.rows[k].logpost;
    CHECK(second / q >= first / q - std::abs(first / q) * 0.05);
}
