#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dtmix/geometry.hpp"
#include "dtmix/model.hpp"
#include "dtmix/rng.hpp"

namespace dtmix {

struct Dataset;

// Auxiliary chains for one image: states[t][l] is the state of the
// component-t chain after sweep l+1. All chains start from the shared
// initial point and have length exactly J.
struct AuxChains {
    std::vector<std::vector<Eigen::VectorXd>> states;

    int components() const { return static_cast<int>(states.size()); }
    int length() const { return states.empty() ? 0 : static_cast<int>(states[0].size()); }
};

// Per-image label posteriors; rows are non-negative and sum to one.
struct LabelWeights {
    Eigen::MatrixXd p;  // n x tau_m
};

struct GaussianConditional {
    double mean = 0.0;
    double variance = 1.0;
};

// Inverse of an SPD covariance; throws SingularCovariance.
Eigen::MatrixXd precision_of(const Eigen::MatrixXd& gamma);

// Conditional law of coordinate j given the others under N(0, gamma),
// evaluated at xi. With precision P: mean = -(1/P_jj) sum_{m!=j} P_jm xi_m,
// variance = 1/P_jj.
GaussianConditional conditional_prior(const Eigen::VectorXd& xi, int j,
                                      const Eigen::MatrixXd& gamma);
GaussianConditional conditional_from_precision(const Eigen::VectorXd& xi, int j,
                                               const Eigen::MatrixXd& precision);

struct AcceptStats {
    std::uint64_t proposals = 0;
    std::uint64_t accepts = 0;

    double rate() const { return proposals ? double(accepts) / double(proposals) : 0.0; }
    AcceptStats& operator+=(const AcceptStats& o) {
        proposals += o.proposals;
        accepts += o.accepts;
        return *this;
    }
};

// Coordinate-wise Metropolis-Hastings machinery for one (image, component)
// pair. The proposal is the prior conditional, so the acceptance ratio
// reduces to the image-likelihood ratio. The current log-likelihood is
// carried through the chain; it always equals a fresh image_loglik
// evaluation of the current state.
class CoordinateGibbs {
public:
    CoordinateGibbs(const Geometry& geom, const Eigen::VectorXd& y, const ComponentParams& comp);

    struct State {
        Eigen::VectorXd xi;
        double loglik = 0.0;
    };

    State init(const Eigen::VectorXd& xi0) const;

    // One Metropolis-Hastings update of coordinate j at sweep index `sweep`.
    void step(State& state, int j, const Substream& rng, std::uint32_t sweep,
              AcceptStats* accept) const;

    // One full pass j = 0 .. 2k_g-1.
    void sweep(State& state, const Substream& rng, std::uint32_t sweep,
               AcceptStats* accept) const;

    const Eigen::MatrixXd& precision() const { return precision_; }

private:
    const Geometry& geom_;
    const Eigen::VectorXd& y_;
    const ComponentParams& comp_;
    Eigen::MatrixXd precision_;
};

// Single-call forms of the two operations above, for callers that do not
// carry chain state.
Eigen::VectorXd mh_coordinate_step(const Eigen::VectorXd& xi, int j, const Eigen::VectorXd& y,
                                   const ComponentParams& comp, const Geometry& geom,
                                   const Substream& rng, std::uint32_t sweep,
                                   AcceptStats* accept = nullptr);
Eigen::VectorXd gibbs_sweep(const Eigen::VectorXd& xi, const Eigen::VectorXd& y,
                            const ComponentParams& comp, const Geometry& geom,
                            const Substream& rng, std::uint32_t sweep,
                            AcceptStats* accept = nullptr);

// Monte-Carlo label posterior for one image from its auxiliary chains,
// computed in log space. Throws DegenerateWeights when every component's
// weight collapses.
Eigen::VectorXd label_weights_row(const AuxChains& chains, const Eigen::VectorXd& y,
                                  const ModelParams& eta, const Geometry& geom);

struct SampleHiddenResult {
    HiddenState hidden;
    std::vector<AuxChains> chains;  // per image
    LabelWeights weights;
    AcceptStats accept;
};

// One transition of the hidden-variable kernel: per image, runs tau_m
// auxiliary chains of length J from xi0, draws the label from the
// Monte-Carlo weights, then runs J sweeps from beta0 under the drawn
// component. Independent across images; `threads` only changes the
// schedule, never the result.
SampleHiddenResult sample_hidden(const Dataset& data, const ModelParams& eta, int J,
                                 const Eigen::VectorXd& xi0, const Eigen::VectorXd& beta0,
                                 const Geometry& geom, std::uint64_t seed,
                                 std::uint32_t iteration, int threads = 1);

}  // namespace dtmix
