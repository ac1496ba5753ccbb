#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "kalikow/types.hpp"

namespace kalikow {

/// Finite set of relative sites (time <= -1), kept in canonical sorted order.
/// Kernels index their argument bits by this order.
class Neighborhood {
public:
    Neighborhood() = default;
    /// Throws ContractViolation on duplicates or non-negative times.
    explicit Neighborhood(std::vector<Site> sites);

    std::span<const Site> sites() const { return sites_; }
    std::size_t cardinality() const { return sites_.size(); }
    bool empty() const { return sites_.empty(); }
    /// T(v) = max(-time); 0 for the empty set.
    std::int64_t time_depth() const { return depth_; }
    /// Position of `site` in canonical order, or nullopt.
    std::optional<std::size_t> index_of(const Site& site) const;

    friend bool operator==(const Neighborhood&, const Neighborhood&) = default;

private:
    std::vector<Site> sites_;
    std::int64_t depth_ = 0;
};

struct Atom {
    Neighborhood neighborhood;
    double weight = 0.0;

    friend bool operator==(const Atom&, const Atom&) = default;
};

/// lambda_i: weight of the empty neighborhood plus an ordered atom list.
/// The atom order defines the CDF used by sample_atom.
///
/// Weights must be finite and non-negative. The total is NOT forced to one:
/// validate() reports normalization residuals rather than rejecting them.
class NeighborhoodDistribution {
public:
    static constexpr double kNormalizationTolerance = 1e-12;

    NeighborhoodDistribution() : NeighborhoodDistribution(1.0, {}) {}
    NeighborhoodDistribution(double empty_weight, std::vector<Atom> atoms, double truncated_mass = 0.0);

    double empty_weight() const { return empty_weight_; }
    std::span<const Atom> atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }
    /// Mass folded into the last atom when an infinite atom list was cut.
    double truncated_mass() const { return truncated_mass_; }
    /// empty_weight + sum(atom weights) - 1.
    double weight_sum_residual() const;

    /// CDF inversion: nullopt for the empty neighborhood, else the atom index.
    /// Throws ContractViolation when u is outside [0, 1].
    std::optional<std::size_t> sample_atom(double u) const;

    friend bool operator==(const NeighborhoodDistribution& a, const NeighborhoodDistribution& b) {
        return a.empty_weight_ == b.empty_weight_ && a.atoms_ == b.atoms_;
    }

private:
    double empty_weight_;
    std::vector<Atom> atoms_;
    std::vector<double> cdf_;  // cdf_[n] = F(n + 1)
    double truncated_mass_;
};

/// Mean neighborhood size: sum |v| lambda(v).
double mean_size(const NeighborhoodDistribution& dist);

/// phi(theta) = sum |v| exp(theta T(v)) lambda(v). Throws ModelError on
/// overflow ("theta too large for this distribution").
double phi(const NeighborhoodDistribution& dist, double theta);

/// Returns the sampled neighborhood (empty neighborhood for the empty atom).
const Neighborhood& sample_neighborhood(const NeighborhoodDistribution& dist, double u);

}  // namespace kalikow
