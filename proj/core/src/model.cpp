#include "dtmix/model.hpp"

#include <cmath>

#include "dtmix/dataset.hpp"

namespace dtmix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double logdet_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw SingularCovariance(std::string(what) + ": covariance is not positive definite");
    }
    return llt;
}

}  // namespace

void ModelParams::validate() const {
    if (rho.size() != count()) throw DimensionMismatch("rho length != component count");
    if (std::abs(rho.sum() - 1.0) > 1e-12) throw Error("mixture weights do not sum to 1");
    for (const auto& c : components) {
        if (!(c.sigma2 > 0)) throw NonPositiveVariance("component sigma2 must be positive");
    }
    for (int t = 0; t < count(); ++t) {
        if (!(rho(t) > 0.0 && rho(t) < 1.0) && count() > 1) {
            throw Error("mixture weights must lie in (0,1)");
        }
    }
}

void Hyperparams::validate(int k_p, int k_g) const {
    if (mu_p.size() != k_p) throw DimensionMismatch("mu_p length != k_p");
    if (sigma_p_mat.rows() != k_p || sigma_p_mat.cols() != k_p) {
        throw DimensionMismatch("sigma_p_mat must be k_p x k_p");
    }
    if (sigma_g_mat.rows() != 2 * k_g || sigma_g_mat.cols() != 2 * k_g) {
        throw DimensionMismatch("sigma_g_mat must be 2k_g x 2k_g");
    }
    if (a_p < 3.0) throw Error("a_p must be >= 3");
    if (a_g < 4.0 * k_g + 1.0) throw Error("a_g must be >= 4*k_g + 1");
    if (!(a_rho > 0.0)) throw Error("a_rho must be positive");
    if (!(sigma0_2 > 0.0)) throw Error("sigma0_2 must be positive");
    if (tau_m < 1) throw Error("tau_m must be >= 1");
}

Hyperparams Hyperparams::standard(const Geometry& geom, int tau_m) {
    Hyperparams h;
    h.tau_m = tau_m;
    h.mu_p = Eigen::VectorXd::Zero(geom.k_p());

    const Eigen::MatrixXd m_p = build_gram(geom.photo_landmarks(), geom.kernel().sigma_p);
    h.sigma_p_mat = regularized_inverse(m_p);
    h.sigma_p_inv = m_p;
    h.sigma_p_inv.diagonal().array() += 1e-8;

    const Eigen::MatrixXd m_g = build_gram(geom.geo_landmarks(), geom.kernel().sigma_g);
    const Eigen::MatrixXd s_g = regularized_inverse(m_g);
    const int kg = geom.k_g();
    h.sigma_g_mat = Eigen::MatrixXd::Zero(2 * kg, 2 * kg);
    h.sigma_g_mat.topLeftCorner(kg, kg) = s_g;
    h.sigma_g_mat.bottomRightCorner(kg, kg) = s_g;

    h.a_g = 4.0 * kg + 1.0;
    return h;
}

SufficientStats SufficientStats::zeros(int tau_m, int k_p, int k_g) {
    SufficientStats s;
    s.s0.assign(tau_m, 0.0);
    s.s1.assign(tau_m, Eigen::VectorXd::Zero(k_p));
    s.s2.assign(tau_m, Eigen::MatrixXd::Zero(k_p, k_p));
    s.s3.assign(tau_m, Eigen::MatrixXd::Zero(2 * k_g, 2 * k_g));
    s.s4.assign(tau_m, 0.0);
    return s;
}

double image_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                    const ComponentParams& comp, const Geometry& geom) {
    const double sumsq = geom.residual_sumsq(y, beta, comp.alpha);
    const double n = static_cast<double>(geom.pixel_count());
    return -0.5 * n * (kLog2Pi + std::log(comp.sigma2)) - sumsq / (2.0 * comp.sigma2);
}

double gaussian_logpdf(const Eigen::VectorXd& beta, const Eigen::MatrixXd& gamma) {
    if (beta.size() != gamma.rows()) throw DimensionMismatch("gaussian_logpdf: size mismatch");
    const auto llt = factor_spd(gamma, "gaussian_logpdf");
    const Eigen::VectorXd w = llt.solve(beta);
    return -0.5 * static_cast<double>(beta.size()) * kLog2Pi - 0.5 * logdet_llt(llt) -
           0.5 * beta.dot(w);
}

double complete_loglik(const Dataset& data, const HiddenState& hidden, const ModelParams& eta,
                       const Geometry& geom) {
    if (hidden.size() != data.size()) throw DimensionMismatch("hidden/data size mismatch");
    const int tau_m = eta.count();

    // Factor each gamma once.
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
    std::vector<double> logdets;
    llts.reserve(tau_m);
    for (int t = 0; t < tau_m; ++t) {
        llts.push_back(factor_spd(eta.components[t].gamma_g, "complete_loglik"));
        logdets.push_back(logdet_llt(llts.back()));
    }

    double total = 0.0;
    for (int i = 0; i < data.size(); ++i) {
        const int t = hidden.tau[i];
        if (t < 0 || t >= tau_m) throw Error("complete_loglik: label out of range");
        const auto& comp = eta.components[t];
        total += image_loglik(data.images[i], hidden.beta[i], comp, geom);
        const Eigen::VectorXd w = llts[t].solve(hidden.beta[i]);
        total += -0.5 * static_cast<double>(hidden.beta[i].size()) * kLog2Pi -
                 0.5 * logdets[t] - 0.5 * hidden.beta[i].dot(w);
        total += std::log(eta.rho(t));
    }
    return total;
}

double complete_loglik_from_stats(const SufficientStats& s, const ModelParams& eta,
                                  int pixel_count) {
    const int tau_m = eta.count();
    if (s.count() != tau_m) throw DimensionMismatch("stats/eta component mismatch");
    double total = 0.0;
    for (int t = 0; t < tau_m; ++t) {
        const auto& c = eta.components[t];
        const auto llt = factor_spd(c.gamma_g, "complete_loglik_from_stats");
        const double quad = s.s4[t] - 2.0 * c.alpha.dot(s.s1[t]) + c.alpha.dot(s.s2[t] * c.alpha);
        const double dim_beta = static_cast<double>(c.gamma_g.rows());
        total += -0.5 * s.s0[t] * pixel_count * (kLog2Pi + std::log(c.sigma2)) -
                 quad / (2.0 * c.sigma2);
        total += -0.5 * s.s0[t] * dim_beta * kLog2Pi - 0.5 * s.s0[t] * logdet_llt(llt) -
                 0.5 * llt.solve(s.s3[t]).trace();
        total += s.s0[t] * std::log(eta.rho(t));
    }
    return total;
}

SufficientStats sufficient_stats(const Dataset& data, const HiddenState& hidden, int tau_m,
                                 const Geometry& geom) {
    if (hidden.size() != data.size()) throw DimensionMismatch("hidden/data size mismatch");
    SufficientStats s = SufficientStats::zeros(tau_m, geom.k_p(), geom.k_g());
    for (int i = 0; i < data.size(); ++i) {
        const int t = hidden.tau[i];
        if (t < 0 || t >= tau_m) throw Error("sufficient_stats: label out of range");
        const Eigen::MatrixXd k = geom.design(hidden.beta[i]);
        s.s0[t] += 1.0;
        s.s1[t].noalias() += k.transpose() * data.images[i];
        s.s2[t].noalias() += k.transpose() * k;
        s.s3[t].noalias() += hidden.beta[i] * hidden.beta[i].transpose();
        s.s4[t] += data.images[i].squaredNorm();
    }
    return s;
}

SufficientStats sa_update(const SufficientStats& s, const SufficientStats& s_new, double delta) {
    if (s.count() != s_new.count()) throw DimensionMismatch("sa_update: component mismatch");
    if (!(delta > 0.0 && delta <= 1.0)) throw Error("sa_update: delta must be in (0,1]");
    if (delta == 1.0) return s_new;  // no-memory step, exact
    SufficientStats out = s;
    for (int t = 0; t < s.count(); ++t) {
        out.s0[t] += delta * (s_new.s0[t] - s.s0[t]);
        out.s1[t] += delta * (s_new.s1[t] - s.s1[t]);
        out.s2[t] += delta * (s_new.s2[t] - s.s2[t]);
        out.s3[t] += delta * (s_new.s3[t] - s.s3[t]);
        out.s4[t] += delta * (s_new.s4[t] - s.s4[t]);
    }
    return out;
}

ModelParams m_step(const SufficientStats& s, const Hyperparams& hyper, const ModelParams& prev,
                   int pixel_count) {
    const int tau_m = s.count();
    if (prev.count() != tau_m) throw DimensionMismatch("m_step: prev/stats component mismatch");

    ModelParams out;
    out.components.resize(tau_m);
    out.rho.resize(tau_m);

    double n = 0.0;
    for (int t = 0; t < tau_m; ++t) n += s.s0[t];
    for (int t = 0; t < tau_m; ++t) {
        out.rho(t) = (s.s0[t] + hyper.a_rho) / (n + tau_m * hyper.a_rho);
    }
    out.rho /= out.rho.sum();  // exact unit sum

    for (int t = 0; t < tau_m; ++t) {
        auto& c = out.components[t];

        c.gamma_g = (s.s3[t] + hyper.a_g * hyper.sigma_g_mat) / (s.s0[t] + hyper.a_g);
        c.gamma_g = 0.5 * (c.gamma_g + c.gamma_g.transpose()).eval();

        Eigen::VectorXd alpha = prev.components[t].alpha;
        double sigma2 = prev.components[t].sigma2;
        const double denom = s.s0[t] * pixel_count + hyper.a_p;

        const int max_inner = hyper.sigma_fixed ? 1 : 100;
        for (int it = 0; it < max_inner; ++it) {
            const Eigen::MatrixXd lhs = s.s2[t] + sigma2 * hyper.sigma_p_inv;
            const Eigen::VectorXd rhs = s.s1[t] + sigma2 * (hyper.sigma_p_inv * hyper.mu_p);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
            if (ldlt.info() != Eigen::Success) {
                throw InversionFailure("m_step: photometric system is singular");
            }
            const Eigen::VectorXd alpha_new = ldlt.solve(rhs);
            if (!alpha_new.allFinite()) {
                throw InversionFailure("m_step: photometric solve produced non-finite values");
            }

            if (hyper.sigma_fixed) {
                alpha = alpha_new;
                break;
            }
            const double quad =
                s.s4[t] + alpha_new.dot(s.s2[t] * alpha_new) - 2.0 * alpha_new.dot(s.s1[t]);
            const double sigma2_new = (quad + hyper.a_p * hyper.sigma0_2) / denom;
            if (!(sigma2_new > 0.0) || !std::isfinite(sigma2_new)) {
                throw NonPositiveVariance("m_step: sigma2 update left (0, inf)");
            }
            const double da = (alpha_new - alpha).norm() / (1.0 + alpha.norm());
            const double ds = std::abs(sigma2_new - sigma2) / (1.0 + sigma2);
            alpha = alpha_new;
            sigma2 = sigma2_new;
            if (da < 1e-8 && ds < 1e-8) break;
        }
        c.alpha = alpha;
        c.sigma2 = sigma2;
    }
    return out;
}

double log_posterior_penalty(const ModelParams& eta, const Hyperparams& hyper) {
    double pen = 0.0;
    for (int t = 0; t < eta.count(); ++t) {
        const auto& c = eta.components[t];
        const Eigen::VectorXd d = c.alpha - hyper.mu_p;
        pen += -0.5 * d.dot(hyper.sigma_p_inv * d);
        pen += -hyper.a_p * hyper.sigma0_2 / (2.0 * c.sigma2) -
               0.5 * hyper.a_p * std::log(c.sigma2);
        const auto llt = factor_spd(c.gamma_g, "log_posterior_penalty");
        pen += -0.5 * hyper.a_g * llt.solve(hyper.sigma_g_mat).trace() -
               0.5 * hyper.a_g * logdet_llt(llt);
    }
    pen += hyper.a_rho * eta.rho.array().log().sum();
    return pen;
}

double StatBounds::b1() const { return std::sqrt(n * pixel_count * k_p) * std::sqrt(y_norm2); }

double StatBounds::b2() const { return n * pixel_count * k_p; }

StatBounds StatBounds::from(const Dataset& data, int k_p) {
    StatBounds b;
    b.n = static_cast<double>(data.size());
    b.pixel_count = data.grid.size();
    b.k_p = k_p;
    for (const auto& y : data.images) b.y_norm2 += y.squaredNorm();
    return b;
}

bool in_absorbing_set(const SufficientStats& s, const StatBounds& bounds, double slack) {
    const double b1 = std::max(bounds.b1(), 1e-12);
    const double b2 = std::max(bounds.b2(), 1e-12);
    const double b4 = std::max(bounds.b4(), 1e-12);
    for (int t = 0; t < s.count(); ++t) {
        if (s.s0[t] < -slack * bounds.n || s.s0[t] > bounds.n * (1.0 + slack)) return false;
        if (s.s1[t].norm() > b1 * (1.0 + slack)) return false;
        if (s.s2[t].norm() > b2 * (1.0 + slack)) return false;
        if (s.s4[t] < -slack * b4 || s.s4[t] > b4 * (1.0 + slack)) return false;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.s3[t], Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) return false;
        const double scale = std::max(1.0, s.s3[t].norm());
        if (es.eigenvalues().minCoeff() < -slack * scale) return false;
    }
    return true;
}

}  // namespace dtmix
