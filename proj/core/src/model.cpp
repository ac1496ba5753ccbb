#include "kalikow/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "kalikow/rng.hpp"

namespace kalikow {

KalikowModel KalikowModel::finite(std::map<NeuronId, NeuronDynamics> neurons, std::string family) {
    for (const auto& [id, d] : neurons) {
        if (d.kernels.size() != d.lambda.size()) {
            throw ContractViolation("neuron " + std::to_string(id.value) + ": kernel count != atom count");
        }
    }
    auto impl = std::make_shared<Impl>();
    impl->homogeneous = false;
    impl->family = std::move(family);
    impl->neurons = std::move(neurons);
    return KalikowModel(std::move(impl));
}

KalikowModel KalikowModel::homogeneous(NeuronDynamics prototype, std::string family) {
    if (prototype.kernels.size() != prototype.lambda.size()) {
        throw ContractViolation("prototype: kernel count != atom count");
    }
    auto impl = std::make_shared<Impl>();
    impl->homogeneous = true;
    impl->family = std::move(family);
    impl->neurons.emplace(NeuronId{0}, std::move(prototype));
    return KalikowModel(std::move(impl));
}

bool KalikowModel::contains(NeuronId i) const {
    return impl_->homogeneous || impl_->neurons.contains(i);
}

const NeuronDynamics& KalikowModel::dynamics(NeuronId i) const {
    if (impl_->homogeneous) return impl_->neurons.begin()->second;
    auto it = impl_->neurons.find(i);
    if (it == impl_->neurons.end()) {
        throw ModelError("neuron " + std::to_string(i.value) + " is not part of the model");
    }
    return it->second;
}

std::vector<NeuronId> KalikowModel::representatives() const {
    std::vector<NeuronId> out;
    out.reserve(impl_->neurons.size());
    for (const auto& [id, _] : impl_->neurons) out.push_back(id);
    return out;
}

KalikowModel KalikowModel::with_closed_form(ClosedForm f) const {
    auto impl = std::make_shared<Impl>(*impl_);
    impl->closed_form = std::move(f);
    return KalikowModel(std::move(impl));
}

KalikowModel KalikowModel::with_metadata(std::string key, std::string value) const {
    auto impl = std::make_shared<Impl>(*impl_);
    impl->metadata[std::move(key)] = std::move(value);
    return KalikowModel(std::move(impl));
}

std::vector<Site> dependency_sites(const NeuronDynamics& d) {
    std::vector<Site> out;
    for (const auto& a : d.lambda.atoms()) {
        out.insert(out.end(), a.neighborhood.sites().begin(), a.neighborhood.sites().end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double sup_mean_size(const KalikowModel& model) {
    double s = 0.0;
    for (auto id : model.representatives()) s = std::max(s, mean_size(model.dynamics(id).lambda));
    return s;
}

double sup_phi(const KalikowModel& model, double theta) {
    double s = 0.0;
    for (auto id : model.representatives()) s = std::max(s, phi(model.dynamics(id).lambda, theta));
    return s;
}

double sup_empty_weight(const KalikowModel& model) {
    double s = 0.0;
    for (auto id : model.representatives()) s = std::max(s, model.dynamics(id).lambda.empty_weight());
    return s;
}

double laplace_bound(const KalikowModel& model, double theta) {
    const double ph = sup_phi(model, theta);
    if (!(ph < 1.0)) {
        std::ostringstream os;
        os << "phi(theta) = " << ph << " >= 1: no Laplace bound at theta = " << theta;
        throw ModelError(os.str());
    }
    return sup_empty_weight(model) / (1.0 - ph);
}

namespace {

void check_configuration(const NeuronDynamics& d,
                         const std::unordered_map<Site, std::uint8_t, SiteHash>& config, NeuronValidation& nv) {
    // Kernels evaluated on the same configuration; the mixture p_i follows.
    double p = d.lambda.empty_weight() * d.p_empty;
    std::vector<std::uint8_t> bits;
    const auto atoms = d.lambda.atoms();
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const auto sites = atoms[k].neighborhood.sites();
        bits.resize(sites.size());
        for (std::size_t q = 0; q < sites.size(); ++q) bits[q] = config.at(sites[q]);
        const double pv = d.kernels[k](bits);
        if (!(pv >= 0.0 && pv <= 1.0)) nv.kernels_in_range = false;
        p += atoms[k].weight * pv;
    }
    nv.p_min = std::min(nv.p_min, p);
    nv.p_max = std::max(nv.p_max, p);
}

}  // namespace

ValidationReport validate(const KalikowModel& model, double theta, double mu, const ValidationOptions& opts) {
    ValidationReport rep;
    rep.theta = theta;
    rep.mu = mu;
    for (auto id : model.representatives()) {
        const auto& d = model.dynamics(id);
        NeuronValidation nv;
        nv.neuron = id;
        nv.weight_residual = d.lambda.weight_sum_residual();
        nv.normalized = std::abs(nv.weight_residual) <= NeighborhoodDistribution::kNormalizationTolerance;
        nv.truncated_mass = d.lambda.truncated_mass();
        nv.mean_size = mean_size(d.lambda);
        try {
            nv.phi = phi(d.lambda, theta);
        } catch (const ModelError&) {
            nv.phi = std::numeric_limits<double>::infinity();
        }
        if (!(d.p_empty >= 0.0 && d.p_empty <= 1.0)) nv.kernels_in_range = false;

        const auto deps = dependency_sites(d);
        std::unordered_map<Site, std::uint8_t, SiteHash> config;
        for (const auto& s : deps) config[s] = 0;
        if (deps.size() <= opts.max_exhaustive_bits) {
            const std::uint64_t n_cfg = std::uint64_t{1} << deps.size();
            for (std::uint64_t c = 0; c < n_cfg; ++c) {
                for (std::size_t q = 0; q < deps.size(); ++q) config[deps[q]] = static_cast<std::uint8_t>((c >> q) & 1U);
                check_configuration(d, config, nv);
            }
        } else {
            nv.exhaustive = false;
            CounterRng rng(opts.seed, id.value);
            for (std::size_t r = 0; r < opts.random_configs; ++r) {
                for (const auto& s : deps) config[s] = static_cast<std::uint8_t>(rng.bernoulli(0.5));
                check_configuration(d, config, nv);
            }
        }

        rep.sup_mean_size = std::max(rep.sup_mean_size, nv.mean_size);
        rep.sup_phi = std::max(rep.sup_phi, nv.phi);
        rep.normalization_ok = rep.normalization_ok && nv.normalized;
        rep.kernels_ok = rep.kernels_ok && nv.kernels_in_range;
        // Tolerance absorbs rounding in the mixture sum.
        constexpr double eps = 1e-12;
        if (nv.p_min < mu - eps || nv.p_max > 1.0 - mu + eps) rep.mu_ok = false;
        rep.neurons.push_back(nv);
    }
    rep.mean_size_ok = rep.sup_mean_size < 1.0;
    rep.phi_ok = rep.sup_phi < 1.0;

    auto fail = [&](std::string msg) { rep.failures.push_back(std::move(msg)); };
    std::ostringstream os;
    if (!rep.normalization_ok) {
        for (const auto& nv : rep.neurons) {
            if (!nv.normalized) {
                os.str("");
                os << "neuron " << nv.neuron.value << ": weights sum to 1" << (nv.weight_residual >= 0 ? "+" : "")
                   << nv.weight_residual;
                fail(os.str());
            }
        }
    }
    if (!rep.mean_size_ok) {
        os.str("");
        os << "sup mean neighborhood size " << rep.sup_mean_size << " >= 1";
        fail(os.str());
    }
    if (!rep.phi_ok) {
        os.str("");
        os << "sup phi(" << theta << ") = " << rep.sup_phi << " >= 1";
        fail(os.str());
    }
    if (!rep.kernels_ok) fail("some kernel value lies outside [0,1]");
    if (!rep.mu_ok) {
        os.str("");
        os << "transition probability leaves [" << mu << ", " << 1.0 - mu << "]";
        fail(os.str());
    }
    return rep;
}

}  // namespace kalikow
