#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "kalikow/model.hpp"

namespace kalikow {

// ---- Markov ---------------------------------------------------------------

/// Two-state chain with P(X_0 = 1 | x_{-1} = 1) = p1 and P(X_0 = 1 | x_{-1} = 0) = p0.
/// Single neuron 1. Throws ModelError("degenerate Markov decomposition") when
/// the decomposition weight lambda(empty) is 0 or 1.
KalikowModel markov_model(double p1, double p0);

// ---- infinite order -------------------------------------------------------

inline constexpr double kDefaultTailTolerance = 1e-10;
inline constexpr std::size_t kMaxRange = 1u << 16;

/// lambda(range l) for l >= 0; index 0 is the empty neighborhood. The list is
/// cut where the remaining mass drops below tail_tolerance.
std::vector<double> geometric_range_weights(double p, double tail_tolerance = kDefaultTailTolerance);
std::vector<double> poisson_range_weights(double rate, double tail_tolerance = kDefaultTailTolerance);

/// Kernel on the range {-l,...,-1}: mean of the l past bits.
Kernel range_average_kernel(std::size_t range);

/// Atoms are the nested ranges {-l,...,-1}; kernels[l-1] acts on range l.
/// Missing mass up to tail_tolerance is folded into the last atom and recorded.
KalikowModel infinite_order_model(std::vector<double> range_weights, double p_empty, std::vector<Kernel> kernels,
                                  double tail_tolerance = kDefaultTailTolerance);
/// Same, with range_average_kernel on every range.
KalikowModel infinite_order_model(std::vector<double> range_weights, double p_empty,
                                  double tail_tolerance = kDefaultTailTolerance);

// ---- discrete Hawkes ------------------------------------------------------

struct HawkesInteraction {
    NeuronId source;
    NeuronId target;
    std::int64_t lag = 1;
    double weight = 0.0;

    friend bool operator==(const HawkesInteraction&, const HawkesInteraction&) = default;
};

struct HawkesSpec {
    std::map<NeuronId, double> nu;
    std::vector<HawkesInteraction> h;

    friend bool operator==(const HawkesSpec&, const HawkesSpec&) = default;
};

/// Translation-invariant network on the integers: neuron i receives
/// weight h(offset, lag) from neuron i + offset.
struct HomogeneousHawkesSpec {
    double nu = 0.0;
    struct Term {
        std::int64_t offset = 0;
        std::int64_t lag = 1;
        double weight = 0.0;
    };
    std::vector<Term> h;
};

/// Excitatory and inhibitory strength of one target.
struct Strength {
    double plus = 0.0;
    double minus = 0.0;
};
Strength hawkes_strength(const HawkesSpec& spec, NeuronId target);

KalikowModel hawkes_model(const HawkesSpec& spec);
KalikowModel hawkes_model(const HomogeneousHawkesSpec& spec);

/// psi_i(x) = nu_i + sum h_{j->i}(l) x_{j,-l}, clipped to [0,1].
double hawkes_transition(const HawkesSpec& spec, NeuronId i, const PastReader& past);

/// g(l) = (1 - r) r^{l-1}, l >= 1, cut where the neglected mass is below tolerance.
std::vector<double> geometric_lag_profile(double r, double tolerance = kDefaultTailTolerance);

// ---- linear GL ------------------------------------------------------------

struct GLLinearSpec {
    std::map<NeuronId, double> nu;
    /// (source j, target i) -> W_{j->i}; W_{j->j} must be 0.
    std::map<std::pair<NeuronId, NeuronId>, double> W;
    /// g_j(l) for l = 1, 2, ...; entries must be positive.
    std::map<NeuronId, std::vector<double>> g;

    friend bool operator==(const GLLinearSpec&, const GLLinearSpec&) = default;
};

/// Lags beyond lag_cutoff are dropped; the dropped |W| g mass is recorded in
/// metadata["truncated_mass"].
KalikowModel gl_linear_model(const GLLinearSpec& spec, std::size_t lag_cutoff);

/// Variable-length-memory transition with phi_i(u) = nu_i + u. Looks back at
/// most max_lag steps (the longest g).
double gl_linear_transition(const GLLinearSpec& spec, NeuronId i, const PastReader& past);

/// sup_i sum_l [ l |W_ii| g_i(l) + sum_{j != i} (l+1) |W_ji| g_j(l) ]
double gl_linear_mean_size(const GLLinearSpec& spec);

struct NonlinearBound {
    double value = 0.0;
    double threshold = 0.0;  // 1 / gamma
    bool satisfied = false;
};

/// Sufficient sparsity condition for a nonlinear GL network with Lipschitz
/// rate gamma. growth[i][l-1] lists J_i(l); the last set is reused for larger l.
/// Throws ModelError when the series does not converge.
NonlinearBound gl_nonlinear_bound(const std::map<std::pair<NeuronId, NeuronId>, double>& W,
                                  const std::map<NeuronId, std::vector<double>>& g, double gamma,
                                  const std::map<NeuronId, std::vector<std::vector<NeuronId>>>& growth);

}  // namespace kalikow
