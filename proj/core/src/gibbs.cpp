#include "dtmix/gibbs.hpp"

#include <cmath>
#include <limits>

#include "dtmix/dataset.hpp"
#include "dtmix/parallel.hpp"

namespace dtmix {

Eigen::MatrixXd precision_of(const Eigen::MatrixXd& gamma) {
    Eigen::LLT<Eigen::MatrixXd> llt(gamma);
    if (llt.info() != Eigen::Success) {
        throw SingularCovariance("precision_of: covariance is not positive definite");
    }
    return llt.solve(Eigen::MatrixXd::Identity(gamma.rows(), gamma.cols()));
}

GaussianConditional conditional_from_precision(const Eigen::VectorXd& xi, int j,
                                               const Eigen::MatrixXd& precision) {
    if (j < 0 || j >= xi.size()) throw DimensionMismatch("conditional: coordinate out of range");
    const double pjj = precision(j, j);
    if (!(pjj > 0.0)) {
        throw SingularCovariance("conditional: non-positive diagonal precision");
    }
    const double cross = precision.row(j).dot(xi) - pjj * xi(j);
    GaussianConditional c;
    c.mean = -cross / pjj;
    c.variance = 1.0 / pjj;
    return c;
}

GaussianConditional conditional_prior(const Eigen::VectorXd& xi, int j,
                                      const Eigen::MatrixXd& gamma) {
    return conditional_from_precision(xi, j, precision_of(gamma));
}

CoordinateGibbs::CoordinateGibbs(const Geometry& geom, const Eigen::VectorXd& y,
                                 const ComponentParams& comp)
    : geom_(geom), y_(y), comp_(comp), precision_(precision_of(comp.gamma_g)) {}

CoordinateGibbs::State CoordinateGibbs::init(const Eigen::VectorXd& xi0) const {
    State s;
    s.xi = xi0;
    s.loglik = image_loglik(y_, xi0, comp_, geom_);
    return s;
}

void CoordinateGibbs::step(State& state, int j, const Substream& rng, std::uint32_t sweep,
                           AcceptStats* accept) const {
    const GaussianConditional cond = conditional_from_precision(state.xi, j, precision_);
    const double z = rng.normal(sweep, static_cast<std::uint32_t>(j), 0);
    const double b = cond.mean + std::sqrt(cond.variance) * z;

    const double old = state.xi(j);
    state.xi(j) = b;
    const double prop_loglik = image_loglik(y_, state.xi, comp_, geom_);
    const double log_ratio = prop_loglik - state.loglik;

    const double u = rng.uniform(sweep, static_cast<std::uint32_t>(j), 1);
    const bool accepted = std::log(u) < log_ratio;
    if (accepted) {
        state.loglik = prop_loglik;
    } else {
        state.xi(j) = old;
    }
    if (accept) {
        ++accept->proposals;
        if (accepted) ++accept->accepts;
    }
}

void CoordinateGibbs::sweep(State& state, const Substream& rng, std::uint32_t sweep,
                            AcceptStats* accept) const {
    for (int j = 0; j < state.xi.size(); ++j) step(state, j, rng, sweep, accept);
}

Eigen::VectorXd mh_coordinate_step(const Eigen::VectorXd& xi, int j, const Eigen::VectorXd& y,
                                   const ComponentParams& comp, const Geometry& geom,
                                   const Substream& rng, std::uint32_t sweep,
                                   AcceptStats* accept) {
    CoordinateGibbs cg(geom, y, comp);
    CoordinateGibbs::State s = cg.init(xi);
    cg.step(s, j, rng, sweep, accept);
    return s.xi;
}

Eigen::VectorXd gibbs_sweep(const Eigen::VectorXd& xi, const Eigen::VectorXd& y,
                            const ComponentParams& comp, const Geometry& geom,
                            const Substream& rng, std::uint32_t sweep, AcceptStats* accept) {
    CoordinateGibbs cg(geom, y, comp);
    CoordinateGibbs::State s = cg.init(xi);
    cg.sweep(s, rng, sweep, accept);
    return s.xi;
}

Eigen::VectorXd label_weights_row(const AuxChains& chains, const Eigen::VectorXd& y,
                                  const ModelParams& eta, const Geometry& geom) {
    const int tau_m = eta.count();
    if (chains.components() != tau_m) {
        throw DimensionMismatch("label_weights_row: chain/component mismatch");
    }
    const int J = chains.length();
    if (J < 1) throw Error("label_weights_row: J must be >= 1");

    // Each Monte-Carlo summand is 1 / (q(y|xi,t,eta) * rho_t); averaging and
    // inverting in log space keeps the (2*pi*sigma^2)^{|pixels|/2} factors
    // from overflowing.
    Eigen::VectorXd log_w(tau_m);
    std::vector<double> terms(J);
    for (int t = 0; t < tau_m; ++t) {
        const auto& comp = eta.components[t];
        const double log_rho = std::log(eta.rho(t));
        double max_term = -std::numeric_limits<double>::infinity();
        for (int l = 0; l < J; ++l) {
            terms[l] = -(image_loglik(y, chains.states[t][l], comp, geom) + log_rho);
            if (terms[l] > max_term) max_term = terms[l];
        }
        if (std::isnan(max_term)) {
            throw DegenerateWeights("label_weights_row: non-finite chain likelihood");
        }
        double acc = 0.0;
        for (int l = 0; l < J; ++l) acc += std::exp(terms[l] - max_term);
        // log of (1/J) sum of 1/(q*rho), then negate.
        log_w(t) = -(max_term + std::log(acc) - std::log(double(J)));
    }

    const double m = log_w.maxCoeff();
    if (!std::isfinite(m)) {
        throw DegenerateWeights("label_weights_row: all label weights collapsed");
    }
    Eigen::VectorXd p = (log_w.array() - m).exp();
    p /= p.sum();
    return p;
}

SampleHiddenResult sample_hidden(const Dataset& data, const ModelParams& eta, int J,
                                 const Eigen::VectorXd& xi0, const Eigen::VectorXd& beta0,
                                 const Geometry& geom, std::uint64_t seed,
                                 std::uint32_t iteration, int threads) {
    if (J < 1) throw Error("sample_hidden: J must be >= 1");
    const int n = data.size();
    const int tau_m = eta.count();

    SampleHiddenResult out;
    out.hidden.beta.resize(n);
    out.hidden.tau.resize(n);
    out.chains.resize(n);
    out.weights.p.resize(n, tau_m);
    std::vector<AcceptStats> accept(n);

    parallel_for(n, threads, [&](int i) {
        const Eigen::VectorXd& y = data.images[i];
        AuxChains& chains = out.chains[i];
        chains.states.assign(tau_m, std::vector<Eigen::VectorXd>(J));

        for (int t = 0; t < tau_m; ++t) {
            CoordinateGibbs cg(geom, y, eta.components[t]);
            CoordinateGibbs::State st = cg.init(xi0);
            const Substream rng(seed, iteration, static_cast<std::uint32_t>(i),
                                RngPurpose::AuxChain, static_cast<std::uint32_t>(t));
            for (int l = 1; l <= J; ++l) {
                cg.sweep(st, rng, static_cast<std::uint32_t>(l), &accept[i]);
                chains.states[t][l - 1] = st.xi;
            }
        }

        const Eigen::VectorXd w = label_weights_row(chains, y, eta, geom);
        out.weights.p.row(i) = w.transpose();

        const Substream label_rng(seed, iteration, static_cast<std::uint32_t>(i),
                                  RngPurpose::Label, 0);
        const double u = label_rng.uniform(0, 0, 0);
        int tau = tau_m - 1;
        double cum = 0.0;
        for (int t = 0; t < tau_m; ++t) {
            cum += w(t);
            if (u < cum) {
                tau = t;
                break;
            }
        }
        out.hidden.tau[i] = tau;

        CoordinateGibbs cg(geom, y, eta.components[tau]);
        CoordinateGibbs::State st = cg.init(beta0);
        const Substream rng(seed, iteration, static_cast<std::uint32_t>(i),
                            RngPurpose::FinalChain, 0);
        for (int l = 1; l <= J; ++l) {
            cg.sweep(st, rng, static_cast<std::uint32_t>(l), &accept[i]);
        }
        out.hidden.beta[i] = st.xi;
    });

    for (const auto& a : accept) out.accept += a;
    return out;
}

}  // namespace dtmix
