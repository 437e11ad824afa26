#include "dtmix/saem.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <ostream>

namespace dtmix {

void SaemConfig::validate() const {
    if (k_max < 0) throw Error("k_max must be non-negative");
    if (k_heat < 0) throw Error("k_heat must be non-negative");
    if (!(step_exponent > 0.5 && step_exponent <= 1.0)) {
        throw Error("step_exponent must lie in (0.5, 1]");
    }
    if (j0 < 1) throw Error("J must be >= 1");
    if (compact_radius0 < 0) throw Error("compact_radius0 must be non-negative");
    if (!(compact_growth > 1.0)) throw Error("compact_growth must exceed 1");
    if (threads < 0) throw Error("threads must be >= 0");
    if (kappa_ceiling < 1) throw Error("kappa_ceiling must be >= 1");
}

double step_size(int k, const SaemConfig& config) {
    if (k < 1) throw Error("step_size: iterations start at 1");
    if (k <= config.k_heat) return 1.0;
    return std::pow(double(k - config.k_heat), -config.step_exponent);
}

int sweeps_at(int k, const SaemConfig& config) {
    if (!config.j_growth) return config.j0;
    return config.j0 * static_cast<int>(std::ceil(std::sqrt(double(k < 1 ? 1 : k))));
}

StatNorm::StatNorm(const StatBounds& bounds, const Eigen::MatrixXd& sigma_g_mat)
    : bounds_(bounds), b3_(bounds.n * std::max(1.0, sigma_g_mat.norm())) {}

double StatNorm::operator()(const SufficientStats& s) const {
    const double n = std::max(bounds_.n, 1e-12);
    const double b1 = std::max(bounds_.b1(), 1e-12);
    const double b2 = std::max(bounds_.b2(), 1e-12);
    const double b3 = std::max(b3_, 1e-12);
    const double b4 = std::max(bounds_.b4(), 1e-12);
    double acc = 0.0;
    for (int t = 0; t < s.count(); ++t) {
        const double a0 = s.s0[t] / n;
        const double a1 = s.s1[t].norm() / b1;
        const double a2 = s.s2[t].norm() / b2;
        const double a3 = s.s3[t].norm() / b3;
        const double a4 = s.s4[t] / b4;
        acc += a0 * a0 + a1 * a1 + a2 * a2 + a3 * a3 + a4 * a4;
    }
    return std::sqrt(acc);
}

double StatNorm::distance(const SufficientStats& a, const SufficientStats& b) const {
    SufficientStats diff = a;
    for (int t = 0; t < a.count(); ++t) {
        diff.s0[t] -= b.s0[t];
        diff.s1[t] -= b.s1[t];
        diff.s2[t] -= b.s2[t];
        diff.s3[t] -= b.s3[t];
        diff.s4[t] -= b.s4[t];
    }
    return (*this)(diff);
}

bool compact_set_contains(const SufficientStats& s, int kappa, const SaemConfig& config,
                          const StatNorm& norm) {
    const double r0 = config.compact_radius0 > 0 ? config.compact_radius0
                                                 : 10.0 * 5.0 * s.count();
    const double radius = r0 * std::pow(config.compact_growth, double(kappa));
    return norm(s) <= radius;  // closed ball
}

SaemEngine::SaemEngine(const Dataset& data, const Hyperparams& hyper, const SaemConfig& config,
                       const Geometry& geom)
    : data_(data), hyper_(hyper), config_(config), geom_(geom),
      bounds_(StatBounds::from(data, geom.k_p())),
      norm_(bounds_, hyper.sigma_g_mat) {
    if (data.size() == 0) throw EmptyDataset("training requires a nonempty dataset");
    config_.validate();
    hyper_.sigma_fixed = hyper.sigma_fixed || config.sigma_fixed;
    hyper_.validate(geom.k_p(), geom.k_g());
}

SaemState SaemEngine::init(const ModelParams* eta0) const {
    const int n = data_.size();
    const int tau_m = hyper_.tau_m;

    SaemState state;

    if (eta0) {
        if (eta0->count() != tau_m) throw DimensionMismatch("init: eta0 component mismatch");
        state.eta = *eta0;
    } else {
        // Template start: ridge fit of the mean training image.
        Eigen::VectorXd mean_image = Eigen::VectorXd::Zero(geom_.pixel_count());
        for (const auto& y : data_.images) mean_image += y;
        mean_image /= double(n);
        const Eigen::MatrixXd& k0 = geom_.design0();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(k0.transpose() * k0 + hyper_.sigma_p_inv);
        if (ldlt.info() != Eigen::Success) {
            throw InversionFailure("init: template ridge system is singular");
        }
        const Eigen::VectorXd alpha0 =
            ldlt.solve(k0.transpose() * mean_image + hyper_.sigma_p_inv * hyper_.mu_p);

        state.eta.components.resize(tau_m);
        for (auto& c : state.eta.components) {
            c.alpha = alpha0;
            c.sigma2 = 1.0;
            c.gamma_g = hyper_.sigma_g_mat;
        }
        state.eta.rho = Eigen::VectorXd::Constant(tau_m, 1.0 / tau_m);
    }

    state.hidden.beta.assign(n, Eigen::VectorXd::Zero(geom_.beta_dim()));
    state.hidden.tau.resize(n);
    for (int i = 0; i < n; ++i) {
        const Substream rng(config_.seed, 0, static_cast<std::uint32_t>(i),
                            RngPurpose::InitLabels, 0);
        const double u = rng.uniform(0, 0, 0);
        int t = static_cast<int>(u * tau_m);
        if (t >= tau_m) t = tau_m - 1;
        state.hidden.tau[i] = t;
    }

    state.s = sufficient_stats(data_, state.hidden, tau_m, geom_);
    state.kappa = 0;
    state.k = 0;
    return state;
}

TraceRow SaemEngine::iterate(SaemState& state) const {
    const int k = state.k + 1;
    const double delta = step_size(k, config_);
    const int J = sweeps_at(k, config_);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(geom_.beta_dim());

    SampleHiddenResult sampled =
        sample_hidden(data_, state.eta, J, zero, zero, geom_, config_.seed,
                      static_cast<std::uint32_t>(k), config_.threads);

    const SufficientStats stats = sufficient_stats(data_, sampled.hidden, hyper_.tau_m, geom_);
    const SufficientStats s_bar = sa_update(state.s, stats, delta);
    const SufficientStats s_prev = state.s;

    if (compact_set_contains(s_bar, state.kappa, config_, norm_) &&
        in_absorbing_set(s_bar, bounds_)) {
        state.s = s_bar;
        state.hidden = std::move(sampled.hidden);
    } else {
        // Reprojection: zero deformations with the sampled labels kept.
        state.kappa += 1;
        if (state.kappa > config_.kappa_ceiling) {
            throw ChainDiverged("truncation count exceeded its ceiling");
        }
        HiddenState reset;
        reset.beta.assign(data_.size(), zero);
        reset.tau = sampled.hidden.tau;
        state.s = sufficient_stats(data_, reset, hyper_.tau_m, geom_);
        state.hidden = std::move(reset);
    }

    state.eta = m_step(state.s, hyper_, state.eta, geom_.pixel_count());
    state.k = k;

    TraceRow row;
    row.k = k;
    row.kappa = state.kappa;
    row.logpost = complete_loglik(data_, state.hidden, state.eta, geom_) +
                  log_posterior_penalty(state.eta, hyper_);
    row.ds_norm = norm_.distance(state.s, s_prev);
    row.accept_rate = sampled.accept.rate();
    double v = 0.0;
    for (const auto& b : state.hidden.beta) v += 1.0 + b.squaredNorm();
    row.mean_drift = v / double(data_.size());
    row.sigma2.resize(hyper_.tau_m);
    for (int t = 0; t < hyper_.tau_m; ++t) row.sigma2(t) = state.eta.components[t].sigma2;
    row.rho = state.eta.rho;
    return row;
}

void Trace::write_tsv(std::ostream& os) const {
    if (rows.empty()) {
        os << "k\tlogpost\tkappa\tds_norm\taccept_rate\tmean_drift\n";
        return;
    }
    const int tau_m = static_cast<int>(rows.front().sigma2.size());
    os << "k\tlogpost\tkappa\tds_norm\taccept_rate\tmean_drift";
    for (int t = 0; t < tau_m; ++t) os << "\tsigma2_" << t;
    for (int t = 0; t < tau_m; ++t) os << "\trho_" << t;
    os << "\n";

    char buf[64];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        os << buf;
    };
    for (const auto& r : rows) {
        os << r.k << "\t";
        num(r.logpost);
        os << "\t" << r.kappa << "\t";
        num(r.ds_norm);
        os << "\t";
        num(r.accept_rate);
        os << "\t";
        num(r.mean_drift);
        for (int t = 0; t < tau_m; ++t) {
            os << "\t";
            num(r.sigma2(t));
        }
        for (int t = 0; t < tau_m; ++t) {
            os << "\t";
            num(r.rho(t));
        }
        os << "\n";
    }
}

std::pair<ModelParams, Trace> train(const Dataset& data, const Hyperparams& hyper,
                                    const SaemConfig& config, const Geometry& geom,
                                    const SaemObserver& observer, const ModelParams* eta0) {
    SaemEngine engine(data, hyper, config, geom);
    SaemState state = engine.init(eta0);
    Trace trace;
    trace.rows.reserve(config.k_max);
    for (int k = 1; k <= config.k_max; ++k) {
        TraceRow row = engine.iterate(state);
        trace.rows.push_back(row);
        if (observer) observer(state, row);
    }
    // The template-norm bound is diagnostic only; it never binds in practice.
    for (int t = 0; t < state.eta.count(); ++t) {
        if (state.eta.components[t].alpha.norm() >= engine.hyper().R) {
            std::cerr << "warning: component " << t
                      << " template norm reached the validation bound R\n";
        }
    }
    return {state.eta, std::move(trace)};
}

}  // namespace dtmix
