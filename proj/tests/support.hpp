#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kalikow/dictionary.hpp"
#include "kalikow/models.hpp"
#include "kalikow/rng.hpp"
#include "kalikow/simulator.hpp"

namespace kt {

using namespace kalikow;

inline std::vector<NeuronId> ids(std::initializer_list<std::int64_t> v) {
    std::vector<NeuronId> out;
    for (auto x : v) out.emplace_back(x);
    return out;
}

/// Fills a window with independent Bernoulli(p) bits.
inline SpikeSample coin_sample(std::vector<NeuronId> F, std::int64_t m, std::int64_t T, std::uint64_t seed,
                               double p = 0.5) {
    SpikeSample s(std::move(F), m, T, seed);
    CounterRng rng(seed, 17);
    for (std::int64_t t = s.first_time(); t <= T; ++t)
        for (std::size_t c = 0; c < s.width(); ++c) s.set(c, t, rng.bernoulli(p));
    return s;
}

struct DictSpec {
    std::string kind;
    std::vector<NeuronId> F;
    std::int64_t m = 1;
    std::int64_t eta = 1;
    std::int64_t L = 1;
};

/// Feature vector at time t, written straight from the family definitions.
inline std::vector<double> naive_features(const DictSpec& d, const SpikeSample& s, std::int64_t t) {
    std::vector<double> out;
    const bool spont = d.kind.ends_with("_spont");
    if (spont) out.push_back(1.0);
    const auto base = spont ? d.kind.substr(0, d.kind.size() - 6) : d.kind;
    for (auto j : d.F) {
        if (base == "short_memory") {
            double any = 0.0;
            for (std::int64_t lag = 1; lag <= d.m; ++lag)
                if (s.at(j, t - lag)) any = 1.0;
            out.push_back(any);
        } else if (base == "cumulative") {
            for (std::int64_t l = 1; l <= d.L; ++l) {
                double c = 0.0;
                for (std::int64_t lag = d.eta * (l - 1) + 1; lag <= d.eta * l; ++lag) c += s.at(j, t - lag);
                out.push_back(c);
            }
        } else {
            for (std::int64_t lag = 1; lag <= d.m; ++lag) out.push_back(s.at(j, t - lag));
        }
    }
    return out;
}

inline Dictionary build(const DictSpec& d) { return make_dictionary(d.kind, d.F, d.m, d.eta, d.L); }

struct NaiveGram {
    Eigen::MatrixXd G;
    Eigen::VectorXd b;
};

inline NaiveGram naive_gram(const DictSpec& d, const SpikeSample& s, NeuronId i) {
    const auto n = static_cast<Eigen::Index>(naive_features(d, s, 1).size());
    NaiveGram out{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
    for (Eigen::Index p = 0; p < n; ++p) {
        for (Eigen::Index q = 0; q < n; ++q) {
            double acc = 0.0;
            for (std::int64_t t = 1; t <= s.T(); ++t) {
                const auto f = naive_features(d, s, t);
                acc += f[p] * f[q];
            }
            out.G(p, q) = acc / static_cast<double>(s.T());
        }
        double acc = 0.0;
        for (std::int64_t t = 1; t <= s.T(); ++t) acc += naive_features(d, s, t)[p] * s.at(i, t);
        out.b[p] = acc / static_cast<double>(s.T());
    }
    return out;
}

/// Random symmetric PSD matrix A^T A / k + ridge I.
inline Eigen::MatrixXd random_psd(std::size_t n, std::uint64_t seed, double ridge = 0.05) {
    CounterRng rng(seed, 3);
    const auto k = static_cast<Eigen::Index>(n + 2);
    Eigen::MatrixXd A(k, static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < A.rows(); ++r)
        for (Eigen::Index c = 0; c < A.cols(); ++c) A(r, c) = 2.0 * rng.uniform() - 1.0;
    Eigen::MatrixXd G = A.transpose() * A / static_cast<double>(k);
    G += ridge * Eigen::MatrixXd::Identity(G.rows(), G.cols());
    return 0.5 * (G + G.transpose());
}

inline Eigen::VectorXd random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    CounterRng rng(seed, 5);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

/// Accelerated proximal gradient on -2a'b + a'Ga + pen |a|_1, run long.
inline Eigen::VectorXd prox_gradient_oracle(const Eigen::MatrixXd& G, const Eigen::VectorXd& b, double pen,
                                            int iters = 200000) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    const double step = 1.0 / (2.0 * es.eigenvalues().maxCoeff());
    Eigen::VectorXd a = Eigen::VectorXd::Zero(b.size()), y = a, prev = a;
    double tk = 1.0;
    for (int it = 0; it < iters; ++it) {
        const Eigen::VectorXd z = y - step * 2.0 * (G * y - b);
        for (Eigen::Index k = 0; k < a.size(); ++k) {
            const double mag = std::abs(z[k]) - step * pen;
            a[k] = mag > 0.0 ? std::copysign(mag, z[k]) : 0.0;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        y = a + ((tk - 1.0) / tn) * (a - prev);
        prev = a;
        tk = tn;
    }
    return a;
}

inline double lasso_value(const Eigen::MatrixXd& G, const Eigen::VectorXd& b, double pen, const Eigen::VectorXd& a) {
    return -2.0 * a.dot(b) + a.dot(G * a) + pen * a.lpNorm<1>();
}

struct IdentityCheck {
    double max_error = 0.0;
    std::size_t bits = 0;
    std::size_t configurations = 0;
    /// Closed-form reads of sites no atom covers.
    std::size_t outside_reads = 0;
};

/// Mixture vs closed form on every configuration of neuron i's dependency window.
inline IdentityCheck exhaustive_identity(const KalikowModel& model, NeuronId i) {
    const auto deps = dependency_sites(model.dynamics(i));
    IdentityCheck out;
    out.bits = deps.size();
    std::map<Site, int> x;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << deps.size()); ++mask) {
        for (std::size_t k = 0; k < deps.size(); ++k) x[model.resolve(i, 0, deps[k])] = (mask >> k) & 1U;
        const double mix = mixture_probability(model, i, 0, [&](const Site& s) { return x.at(s); });
        const double closed = model.closed_form()(i, [&](NeuronId j, std::int64_t lag) {
            auto it = x.find(Site{j, -lag});
            if (it == x.end()) {
                ++out.outside_reads;
                return 0;
            }
            return it->second;
        });
        out.max_error = std::max(out.max_error, std::abs(mix - closed));
        ++out.configurations;
    }
    return out;
}

/// Binomial standard error.
inline double binom_sigma(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

}  // namespace kt
