#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kalikow/kernel.hpp"
#include "kalikow/neighborhood.hpp"
#include "kalikow/types.hpp"

namespace kalikow {

/// Space-time decomposition of one neuron's transition probability.
struct NeuronDynamics {
    NeighborhoodDistribution lambda;
    double p_empty = 0.0;
    std::vector<Kernel> kernels;  // parallel to lambda.atoms()

    friend bool operator==(const NeuronDynamics&, const NeuronDynamics&) = default;
};

/// Reads past spikes for a closed-form transition: past(j, lag) = x_{j,-lag}.
using PastReader = std::function<int(NeuronId, std::int64_t)>;
/// Family-specific closed form of p_i(x), independent of the decomposition.
using ClosedForm = std::function<double(NeuronId, const PastReader&)>;

/// Immutable Kalikow model: lambda_i, p_i^v and p_i^emptyset for every neuron.
///
/// A finite model stores one NeuronDynamics per neuron. A homogeneous model
/// stores a single prototype for neuron 0 whose site neurons are offsets, so
/// neuron j's neighborhood is the prototype translated by j. That covers
/// translation-invariant networks on the integers without materializing them.
class KalikowModel {
public:
    static KalikowModel finite(std::map<NeuronId, NeuronDynamics> neurons, std::string family = "explicit");
    static KalikowModel homogeneous(NeuronDynamics prototype, std::string family = "explicit");

    bool is_homogeneous() const { return impl_->homogeneous; }
    const std::string& family() const { return impl_->family; }

    bool contains(NeuronId i) const;
    /// Throws ModelError for a neuron outside a finite model.
    const NeuronDynamics& dynamics(NeuronId i) const;
    /// Neurons with stored dynamics (the prototype neuron 0 when homogeneous).
    std::vector<NeuronId> representatives() const;

    /// Absolute site of relative site `rel` in the neighborhood of (i, t).
    Site resolve(NeuronId i, std::int64_t t, const Site& rel) const {
        const NeuronId n = impl_->homogeneous ? NeuronId{i.value + rel.neuron.value} : rel.neuron;
        return Site{n, t + rel.time};
    }

    const ClosedForm& closed_form() const { return impl_->closed_form; }
    bool has_closed_form() const { return static_cast<bool>(impl_->closed_form); }
    const std::map<std::string, std::string>& metadata() const { return impl_->metadata; }

    /// Copy with a closed form / metadata attached (adapters use these).
    KalikowModel with_closed_form(ClosedForm f) const;
    KalikowModel with_metadata(std::string key, std::string value) const;

private:
    struct Impl {
        bool homogeneous = false;
        std::string family;
        std::map<NeuronId, NeuronDynamics> neurons;
        ClosedForm closed_form;
        std::map<std::string, std::string> metadata;
    };
    explicit KalikowModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<const Impl> impl_;
};

/// Relative sites any kernel of `d` may read (union of atom neighborhoods).
std::vector<Site> dependency_sites(const NeuronDynamics& d);

/// p_i(x) = lambda(empty) p^empty + sum_v lambda(v) p^v(x_v) at absolute time t,
/// reading x through `read(Site)`.
template <class Reader>
double mixture_probability(const KalikowModel& model, NeuronId i, std::int64_t t, Reader&& read) {
    const auto& d = model.dynamics(i);
    double p = d.lambda.empty_weight() * d.p_empty;
    const auto atoms = d.lambda.atoms();
    std::vector<std::uint8_t> bits;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const auto sites = atoms[k].neighborhood.sites();
        bits.resize(sites.size());
        for (std::size_t q = 0; q < sites.size(); ++q) {
            bits[q] = static_cast<std::uint8_t>(read(model.resolve(i, t, sites[q])) != 0);
        }
        p += atoms[k].weight * d.kernels[k](bits);
    }
    return p;
}

// Sparsity summaries (sup over represented neurons).
double sup_mean_size(const KalikowModel& model);
double sup_phi(const KalikowModel& model, double theta);
double sup_empty_weight(const KalikowModel& model);
/// sup_i lambda_i(empty) / (1 - phi(theta)); throws ModelError if phi >= 1.
double laplace_bound(const KalikowModel& model, double theta);

struct ValidationOptions {
    /// Dependency windows up to this many bits are enumerated exhaustively.
    std::size_t max_exhaustive_bits = 16;
    /// Otherwise this many random configurations are checked.
    std::size_t random_configs = 4096;
    std::uint64_t seed = 0x5eedULL;
};

struct NeuronValidation {
    NeuronId neuron;
    double weight_residual = 0.0;
    bool normalized = true;
    double truncated_mass = 0.0;
    double mean_size = 0.0;
    double phi = 0.0;
    bool kernels_in_range = true;
    double p_min = 1.0;  // min of the mixture p_i over checked configurations
    double p_max = 0.0;
    bool exhaustive = true;
};

struct ValidationReport {
    double theta = 0.0;
    double mu = 0.0;
    double sup_mean_size = 0.0;
    bool mean_size_ok = true;   // sup m_i < 1
    double sup_phi = 0.0;
    bool phi_ok = true;         // sup phi_i(theta) < 1
    bool normalization_ok = true;
    bool kernels_ok = true;     // every p^v in [0,1]
    bool mu_ok = true;          // mu <= p_i(x) <= 1 - mu
    std::vector<NeuronValidation> neurons;
    std::vector<std::string> failures;

    bool all_passed() const { return failures.empty(); }
};

/// Checks the standing assumptions. Failures are recorded, never thrown.
ValidationReport validate(const KalikowModel& model, double theta, double mu, const ValidationOptions& opts = {});

}  // namespace kalikow
