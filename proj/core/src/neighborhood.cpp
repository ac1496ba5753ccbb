#include "kalikow/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kalikow {

Neighborhood::Neighborhood(std::vector<Site> sites) : sites_(std::move(sites)) {
    std::sort(sites_.begin(), sites_.end());
    if (std::adjacent_find(sites_.begin(), sites_.end()) != sites_.end()) {
        throw ContractViolation("neighborhood contains duplicate sites");
    }
    for (const auto& s : sites_) {
        if (s.time > -1) {
            throw ContractViolation("neighborhood site time must be <= -1, got " + std::to_string(s.time));
        }
        depth_ = std::max(depth_, -s.time);
    }
}

std::optional<std::size_t> Neighborhood::index_of(const Site& site) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), site);
    if (it == sites_.end() || *it != site) return std::nullopt;
    return static_cast<std::size_t>(it - sites_.begin());
}

NeighborhoodDistribution::NeighborhoodDistribution(double empty_weight, std::vector<Atom> atoms,
                                                   double truncated_mass)
    : empty_weight_(empty_weight), atoms_(std::move(atoms)), truncated_mass_(truncated_mass) {
    if (!std::isfinite(empty_weight_) || empty_weight_ < 0.0) {
        throw ContractViolation("empty-neighborhood weight must be finite and non-negative");
    }
    cdf_.reserve(atoms_.size());
    double acc = empty_weight_;
    for (const auto& a : atoms_) {
        if (!std::isfinite(a.weight) || a.weight < 0.0) {
            throw ContractViolation("atom weight must be finite and non-negative");
        }
        acc += a.weight;
        cdf_.push_back(acc);
    }
}

double NeighborhoodDistribution::weight_sum_residual() const {
    const double total = cdf_.empty() ? empty_weight_ : cdf_.back();
    return total - 1.0;
}

std::optional<std::size_t> NeighborhoodDistribution::sample_atom(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) {
        throw ContractViolation("sample_atom: uniform variate outside [0,1]");
    }
    if (u <= empty_weight_ || atoms_.empty()) return std::nullopt;
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;  // rounding: total may sit a hair below u
    return static_cast<std::size_t>(it - cdf_.begin());
}

double mean_size(const NeighborhoodDistribution& dist) {
    double m = 0.0;
    for (const auto& a : dist.atoms()) m += static_cast<double>(a.neighborhood.cardinality()) * a.weight;
    return m;
}

double phi(const NeighborhoodDistribution& dist, double theta) {
    if (!(theta > 0.0)) throw ContractViolation("phi: theta must be positive");
    double total = 0.0;
    for (const auto& a : dist.atoms()) {
        if (a.weight == 0.0 || a.neighborhood.empty()) continue;
        const double term = static_cast<double>(a.neighborhood.cardinality()) *
                            std::exp(theta * static_cast<double>(a.neighborhood.time_depth())) * a.weight;
        total += term;
        if (!std::isfinite(total)) throw ModelError("theta too large for this distribution");
    }
    return total;
}

const Neighborhood& sample_neighborhood(const NeighborhoodDistribution& dist, double u) {
    static const Neighborhood kEmpty;
    const auto idx = dist.sample_atom(u);
    return idx ? dist.atoms()[*idx].neighborhood : kEmpty;
}

}  // namespace kalikow
