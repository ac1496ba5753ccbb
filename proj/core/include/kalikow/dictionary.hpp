#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kalikow/simulator.hpp"
#include "kalikow/types.hpp"

namespace kalikow {

enum class DictFamily { short_memory, cumulative, hawkes };

/// Ordered family of cylindrical functions on F x {-m,...,-1}.
/// Order: the constant (when present), then neuron order, then lag/bin order.
class Dictionary {
public:
    DictFamily family() const { return family_; }
    const std::vector<NeuronId>& neurons() const { return F_; }
    std::int64_t m() const { return m_; }
    /// Bin width and bin count; (1, m) for the Hawkes dictionary.
    std::int64_t eta() const { return eta_; }
    std::int64_t bins() const { return L_; }
    bool spontaneous() const { return spontaneous_; }
    std::size_t size() const;
    double sup_norm() const;
    std::vector<std::string> names() const;
    /// Canonical text descriptor, e.g. "hawkes_spont(F=1,2;m=3)".
    std::string fingerprint() const;
    /// Name understood by the config layer ("short_memory", "cumulative_spont", ...).
    std::string kind() const;

    /// window[(lag - 1) * |F| + f] = x_{F[f], -lag} for lag = 1..m.
    void evaluate_window(std::span<const std::uint8_t> window, std::span<double> out) const;

    /// (phi(X_{F, t-m : t-1}))_phi. Throws ContractViolation on window underrun.
    void evaluate(const SpikeSample& sample, std::int64_t t, std::span<double> out) const;
    std::vector<double> evaluate(const SpikeSample& sample, std::int64_t t) const;

    /// Rows t = t_begin..t_end-1 of the design matrix, via running counts.
    Eigen::MatrixXd design(const SpikeSample& sample, std::int64_t t_begin, std::int64_t t_end) const;
    /// Rows t = 1..T.
    Eigen::MatrixXd design(const SpikeSample& sample) const;

    friend bool operator==(const Dictionary& a, const Dictionary& b) { return a.fingerprint() == b.fingerprint(); }

private:
    friend Dictionary short_memory(std::vector<NeuronId> F, std::int64_t m);
    friend Dictionary cumulative(std::vector<NeuronId> F, std::int64_t eta, std::int64_t L);
    friend Dictionary with_spontaneous(const Dictionary& base);
    friend Dictionary hawkes_dict(std::vector<NeuronId> F, std::int64_t m, bool spontaneous);

    std::vector<std::size_t> columns(const SpikeSample& sample) const;
    void check_window(const SpikeSample& sample, std::int64_t t) const;

    DictFamily family_ = DictFamily::hawkes;
    std::vector<NeuronId> F_;
    std::int64_t m_ = 1;
    std::int64_t eta_ = 1;
    std::int64_t L_ = 1;
    bool spontaneous_ = false;
};

/// phi_j = 1 if j spiked somewhere in the last m steps.
Dictionary short_memory(std::vector<NeuronId> F, std::int64_t m);
/// phi_{j,l} = spike count of j over lags eta(l-1)+1 .. eta l; m = eta L.
Dictionary cumulative(std::vector<NeuronId> F, std::int64_t eta, std::int64_t L);
/// Prepends the constant function 1.
Dictionary with_spontaneous(const Dictionary& base);
/// phi_{j,s} = x_{j,s}.
Dictionary hawkes_dict(std::vector<NeuronId> F, std::int64_t m, bool spontaneous);

inline std::vector<double> evaluate(const Dictionary& d, const SpikeSample& s, std::int64_t t) {
    return d.evaluate(s, t);
}

/// Builds a dictionary from its config name: short_memory, cumulative,
/// cumulative_spont, hawkes, hawkes_spont. Throws ConfigError.
Dictionary make_dictionary(const std::string& kind, std::vector<NeuronId> F, std::int64_t m, std::int64_t eta,
                           std::int64_t L);

}  // namespace kalikow
