#include "kalikow/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

namespace kalikow {

namespace {

constexpr NeuronId kSingleNeuron{1};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string neuron_name(NeuronId i) { return "neuron " + std::to_string(i.value); }

// Shared tail of the Hawkes and GL adapters: lambda(empty) and p^empty from
// the excitatory/inhibitory strengths, with the sign conditions checked.
std::pair<double, double> empty_part(NeuronId i, double nu, Strength s) {
    if (!(nu >= 0.0 && nu <= 1.0)) throw ModelError(neuron_name(i) + ": spontaneous rate outside [0,1]");
    const double total = s.plus + s.minus;
    if (total >= 1.0) {
        throw ModelError(neuron_name(i) + ": total interaction mass " + fmt(total) +
                         " >= 1, lambda(empty) would be <= 0");
    }
    if (nu - s.minus < 0.0) throw ModelError(neuron_name(i) + ": nu - Sigma^- < 0");
    if (nu + s.plus > 1.0) throw ModelError(neuron_name(i) + ": nu + Sigma^+ > 1");
    const double lam = 1.0 - total;
    return {lam, (nu - s.minus) / lam};
}

double clip01(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

// ---- Markov ---------------------------------------------------------------

KalikowModel markov_model(double p1, double p0) {
    if (!(p1 >= 0.0 && p1 <= 1.0 && p0 >= 0.0 && p0 <= 1.0)) {
        throw ContractViolation("markov_model: p1, p0 must be probabilities");
    }
    const double p = std::min(p1, p0);
    const double q = std::min(1.0 - p1, 1.0 - p0);
    const double mu = p + q;
    if (!(mu > 0.0 && mu < 1.0)) throw ModelError("degenerate Markov decomposition (mu = " + fmt(mu) + ")");

    const double w = 1.0 - mu;
    const double at1 = (p1 - p) / w;
    const double at0 = (p0 - p) / w;
    NeuronDynamics d{
        NeighborhoodDistribution(mu, {Atom{Neighborhood({Site{kSingleNeuron, -1}}), w}}),
        p / mu,
        {LinearKernel{at0, {at1 - at0}}},
    };
    std::map<NeuronId, NeuronDynamics> neurons;
    neurons.emplace(kSingleNeuron, std::move(d));
    return KalikowModel::finite(std::move(neurons), "markov")
        .with_closed_form([p1, p0](NeuronId, const PastReader& past) {
            return past(kSingleNeuron, 1) != 0 ? p1 : p0;
        })
        .with_metadata("p1", fmt(p1))
        .with_metadata("p0", fmt(p0));
}

// ---- infinite order -------------------------------------------------------

std::vector<double> geometric_range_weights(double p, double tail_tolerance) {
    if (!(p > 0.0 && p <= 1.0)) throw ContractViolation("geometric range law needs 0 < p <= 1");
    std::vector<double> w;
    double r = 1.0;  // (1 - p)^l, also the mass of ranges >= l
    for (std::size_t l = 0; l <= kMaxRange; ++l) {
        w.push_back(r * p);
        r *= 1.0 - p;
        if (r < tail_tolerance) break;
    }
    return w;
}

std::vector<double> poisson_range_weights(double rate, double tail_tolerance) {
    if (!(rate > 0.0)) throw ContractViolation("Poisson range law needs a positive rate");
    std::vector<double> w;
    double term = std::exp(-rate);
    double acc = 0.0;
    for (std::size_t l = 0; l <= kMaxRange; ++l) {
        w.push_back(term);
        acc += term;
        if (static_cast<double>(l) > rate && 1.0 - acc < tail_tolerance) break;
        term *= rate / static_cast<double>(l + 1);
    }
    return w;
}

Kernel range_average_kernel(std::size_t range) {
    return LinearKernel{0.0, std::vector<double>(range, 1.0 / static_cast<double>(range))};
}

KalikowModel infinite_order_model(std::vector<double> range_weights, double p_empty, std::vector<Kernel> kernels,
                                  double tail_tolerance) {
    if (range_weights.empty()) throw ContractViolation("infinite_order_model: no weights");
    if (range_weights.size() - 1 > kMaxRange) throw ContractViolation("infinite_order_model: range above maximum");
    if (kernels.size() + 1 < range_weights.size()) {
        throw ContractViolation("infinite_order_model: need one kernel per nonempty range");
    }
    double total = 0.0;
    for (double w : range_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ContractViolation("infinite_order_model: bad weight");
        total += w;
    }
    if (total < 1.0 - tail_tolerance) {
        throw ModelError("truncation error: range weights sum to " + fmt(total) + " at maximum range " +
                         std::to_string(range_weights.size() - 1));
    }
    if (total > 1.0 + tail_tolerance) throw ModelError("range weights sum to " + fmt(total) + " > 1");

    std::vector<Atom> atoms;
    std::vector<Kernel> used;
    for (std::size_t l = 1; l < range_weights.size(); ++l) {
        if (range_weights[l] == 0.0) continue;
        std::vector<Site> sites;
        for (std::size_t k = 1; k <= l; ++k) sites.push_back(Site{kSingleNeuron, -static_cast<std::int64_t>(k)});
        atoms.push_back(Atom{Neighborhood(std::move(sites)), range_weights[l]});
        used.push_back(kernels[l - 1]);
    }
    double empty = range_weights[0];
    const double residual = 1.0 - total;
    double folded = 0.0;
    if (residual > 0.0) {
        folded = residual;
        if (atoms.empty()) {
            empty += residual;
        } else {
            atoms.back().weight += residual;
        }
    }
    NeuronDynamics d{NeighborhoodDistribution(empty, std::move(atoms), folded), p_empty, std::move(used)};
    std::map<NeuronId, NeuronDynamics> neurons;
    neurons.emplace(kSingleNeuron, std::move(d));
    return KalikowModel::finite(std::move(neurons), "infinite_order").with_metadata("truncated_mass", fmt(folded));
}

KalikowModel infinite_order_model(std::vector<double> range_weights, double p_empty, double tail_tolerance) {
    std::vector<Kernel> kernels;
    for (std::size_t l = 1; l < range_weights.size(); ++l) kernels.push_back(range_average_kernel(l));
    auto model = infinite_order_model(std::move(range_weights), p_empty, std::move(kernels), tail_tolerance);

    // p(x) = lambda(empty) p^empty + sum_k x_{-k} sum_{l >= k} lambda(l) / l
    const auto& d = model.dynamics(kSingleNeuron);
    std::vector<double> coef;
    for (const auto& a : d.lambda.atoms()) {
        const auto l = static_cast<std::size_t>(a.neighborhood.time_depth());
        if (coef.size() < l) coef.resize(l, 0.0);
        for (std::size_t k = 0; k < l; ++k) coef[k] += a.weight / static_cast<double>(l);
    }
    const double base = d.lambda.empty_weight() * d.p_empty;
    return model.with_closed_form([coef, base](NeuronId, const PastReader& past) {
        double p = base;
        for (std::size_t k = 0; k < coef.size(); ++k) {
            if (past(kSingleNeuron, static_cast<std::int64_t>(k + 1)) != 0) p += coef[k];
        }
        return p;
    });
}

// ---- discrete Hawkes ------------------------------------------------------

namespace {

struct Term {
    NeuronId source;
    std::int64_t lag;
    double weight;
};

std::map<NeuronId, std::vector<Term>> hawkes_terms(const HawkesSpec& spec) {
    std::map<NeuronId, std::vector<Term>> out;
    std::set<std::tuple<NeuronId, NeuronId, std::int64_t>> seen;
    for (const auto& e : spec.h) {
        if (e.lag < 1) throw ContractViolation("Hawkes interaction lag must be >= 1");
        if (!spec.nu.contains(e.source) || !spec.nu.contains(e.target)) {
            throw ContractViolation("Hawkes interaction references a neuron without a spontaneous rate");
        }
        if (!std::isfinite(e.weight)) throw ContractViolation("Hawkes interaction weight must be finite");
        if (!seen.insert({e.source, e.target, e.lag}).second) {
            throw ContractViolation("duplicate Hawkes interaction " + std::to_string(e.source.value) + "->" +
                                    std::to_string(e.target.value) + " at lag " + std::to_string(e.lag));
        }
        if (e.weight != 0.0) out[e.target].push_back(Term{e.source, e.lag, e.weight});
    }
    for (auto& [_, terms] : out) {
        std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
            return std::tie(a.source, a.lag) < std::tie(b.source, b.lag);
        });
    }
    return out;
}

NeuronDynamics hawkes_dynamics(NeuronId i, double nu, const std::vector<Term>& terms) {
    Strength s;
    std::vector<Atom> atoms;
    std::vector<Kernel> kernels;
    for (const auto& t : terms) {
        (t.weight > 0 ? s.plus : s.minus) += std::abs(t.weight);
        atoms.push_back(Atom{Neighborhood({Site{t.source, -t.lag}}), std::abs(t.weight)});
        kernels.push_back(t.weight > 0 ? LinearKernel{0.0, {1.0}} : LinearKernel{1.0, {-1.0}});
    }
    const auto [lam, pe] = empty_part(i, nu, s);
    return NeuronDynamics{NeighborhoodDistribution(lam, std::move(atoms)), pe, std::move(kernels)};
}

}  // namespace

Strength hawkes_strength(const HawkesSpec& spec, NeuronId target) {
    Strength s;
    for (const auto& e : spec.h) {
        if (e.target != target) continue;
        (e.weight > 0 ? s.plus : s.minus) += std::abs(e.weight);
    }
    return s;
}

KalikowModel hawkes_model(const HawkesSpec& spec) {
    auto terms = hawkes_terms(spec);
    std::map<NeuronId, NeuronDynamics> neurons;
    for (const auto& [i, nu] : spec.nu) {
        static const std::vector<Term> kNone;
        auto it = terms.find(i);
        neurons.emplace(i, hawkes_dynamics(i, nu, it == terms.end() ? kNone : it->second));
    }
    auto nus = spec.nu;
    return KalikowModel::finite(std::move(neurons), "hawkes")
        .with_closed_form([terms = std::move(terms), nus = std::move(nus)](NeuronId i, const PastReader& past) {
            double p = nus.at(i);
            if (auto it = terms.find(i); it != terms.end()) {
                for (const auto& t : it->second) p += t.weight * past(t.source, t.lag);
            }
            return clip01(p);
        });
}

KalikowModel hawkes_model(const HomogeneousHawkesSpec& spec) {
    std::vector<Term> terms;
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    for (const auto& e : spec.h) {
        if (e.lag < 1) throw ContractViolation("Hawkes interaction lag must be >= 1");
        if (!seen.insert({e.offset, e.lag}).second) throw ContractViolation("duplicate Hawkes interaction");
        if (e.weight != 0.0) terms.push_back(Term{NeuronId{e.offset}, e.lag, e.weight});
    }
    std::sort(terms.begin(), terms.end(),
              [](const Term& a, const Term& b) { return std::tie(a.source, a.lag) < std::tie(b.source, b.lag); });
    auto model = KalikowModel::homogeneous(hawkes_dynamics(NeuronId{0}, spec.nu, terms), "hawkes");
    return model.with_closed_form([terms, nu = spec.nu](NeuronId i, const PastReader& past) {
        double p = nu;
        for (const auto& t : terms) p += t.weight * past(NeuronId{i.value + t.source.value}, t.lag);
        return clip01(p);
    });
}

double hawkes_transition(const HawkesSpec& spec, NeuronId i, const PastReader& past) {
    auto it = spec.nu.find(i);
    if (it == spec.nu.end()) throw ContractViolation("hawkes_transition: unknown " + neuron_name(i));
    double p = it->second;
    for (const auto& e : spec.h) {
        if (e.target == i && e.weight != 0.0) p += e.weight * past(e.source, e.lag);
    }
    return clip01(p);
}

std::vector<double> geometric_lag_profile(double r, double tolerance) {
    if (!(r >= 0.0 && r < 1.0)) throw ContractViolation("geometric lag profile needs 0 <= r < 1");
    std::vector<double> g;
    double rest = 1.0;
    double term = 1.0 - r;
    while (rest >= tolerance && g.size() < kMaxRange) {
        g.push_back(term);
        rest -= term;
        term *= r;
        if (term == 0.0) break;
    }
    return g;
}

// ---- linear GL ------------------------------------------------------------

namespace {

struct GLTerm {
    NeuronId source;
    double w;
};

std::map<NeuronId, std::vector<GLTerm>> gl_inputs(const GLLinearSpec& spec) {
    std::map<NeuronId, std::vector<GLTerm>> out;
    for (const auto& [edge, w] : spec.W) {
        const auto [j, i] = edge;
        if (j == i && w != 0.0) throw ContractViolation("GL self-weight W_{j->j} must be 0 (" + neuron_name(j) + ")");
        if (w == 0.0) continue;
        if (!spec.nu.contains(i) || !spec.nu.contains(j)) {
            throw ContractViolation("GL weight references a neuron without a spontaneous rate");
        }
        auto g = spec.g.find(j);
        if (g == spec.g.end() || g->second.empty()) {
            throw ContractViolation("GL: no lag profile g for source " + neuron_name(j));
        }
        for (double v : g->second) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ContractViolation("GL: g entries must be positive");
        }
        out[i].push_back(GLTerm{j, w});
    }
    return out;
}

}  // namespace

KalikowModel gl_linear_model(const GLLinearSpec& spec, std::size_t lag_cutoff) {
    if (lag_cutoff < 1) throw ContractViolation("gl_linear_model: lag_cutoff must be >= 1");
    const auto inputs = gl_inputs(spec);
    GLLinearSpec kept = spec;
    std::map<NeuronId, double> dropped;
    for (auto& [j, g] : kept.g) {
        if (g.size() <= lag_cutoff) continue;
        double tail = 0.0;
        for (std::size_t l = lag_cutoff; l < g.size(); ++l) tail += g[l];
        for (const auto& [edge, w] : spec.W) {
            if (edge.first == j) dropped[edge.second] += std::abs(w) * tail;
        }
        g.resize(lag_cutoff);
    }
    double truncated = 0.0;
    for (const auto& [_, v] : dropped) truncated = std::max(truncated, v);

    std::map<NeuronId, NeuronDynamics> neurons;
    for (const auto& [i, nu] : spec.nu) {
        Strength s;
        std::vector<Atom> atoms;
        std::vector<Kernel> kernels;
        if (auto it = inputs.find(i); it != inputs.end()) {
            for (const auto& [j, w] : it->second) {
                const auto& g = kept.g.at(j);
                for (std::size_t l = 1; l <= g.size(); ++l) {
                    const auto lag = static_cast<std::int64_t>(l);
                    std::vector<Site> sites{Site{j, -lag}};
                    for (std::int64_t k = 1; k <= lag; ++k) sites.push_back(Site{i, -k});
                    Neighborhood v(std::move(sites));
                    const auto src = *v.index_of(Site{j, -lag});
                    const double weight = std::abs(w) * g[l - 1];
                    (w > 0 ? s.plus : s.minus) += weight;
                    atoms.push_back(Atom{std::move(v), weight});
                    kernels.push_back(GatedKernel{src, w < 0});
                }
            }
        }
        const auto [lam, pe] = empty_part(i, nu, s);
        neurons.emplace(i, NeuronDynamics{NeighborhoodDistribution(lam, std::move(atoms)), pe, std::move(kernels)});
    }
    return KalikowModel::finite(std::move(neurons), "gl_linear")
        .with_closed_form([kept](NeuronId i, const PastReader& past) { return gl_linear_transition(kept, i, past); })
        .with_metadata("lag_cutoff", std::to_string(lag_cutoff))
        .with_metadata("truncated_mass", fmt(truncated));
}

double gl_linear_transition(const GLLinearSpec& spec, NeuronId i, const PastReader& past) {
    auto it = spec.nu.find(i);
    if (it == spec.nu.end()) throw ContractViolation("gl_linear_transition: unknown " + neuron_name(i));
    std::vector<GLTerm> inputs;
    std::size_t depth = 0;
    for (const auto& [edge, w] : spec.W) {
        if (edge.second != i || w == 0.0) continue;
        inputs.push_back(GLTerm{edge.first, w});
        depth = std::max(depth, spec.g.at(edge.first).size());
    }
    // Lags strictly after the last spike of i: s = -1, ..., L + 1.
    std::size_t open = depth;
    for (std::size_t l = 1; l <= depth; ++l) {
        if (past(i, static_cast<std::int64_t>(l)) != 0) {
            open = l - 1;
            break;
        }
    }
    double u = 0.0;
    for (const auto& [j, w] : inputs) {
        const auto& g = spec.g.at(j);
        const std::size_t lmax = std::min(open, g.size());
        for (std::size_t l = 1; l <= lmax; ++l) u += w * g[l - 1] * past(j, static_cast<std::int64_t>(l));
    }
    return clip01(it->second + u);
}

double gl_linear_mean_size(const GLLinearSpec& spec) {
    std::map<NeuronId, double> per_target;
    for (const auto& [edge, w] : spec.W) {
        if (w == 0.0) continue;
        const auto [j, i] = edge;
        const auto& g = spec.g.at(j);
        for (std::size_t l = 1; l <= g.size(); ++l) {
            const double card = j == i ? static_cast<double>(l) : static_cast<double>(l + 1);
            per_target[i] += card * std::abs(w) * g[l - 1];
        }
    }
    double s = 0.0;
    for (const auto& [_, v] : per_target) s = std::max(s, v);
    return s;
}

NonlinearBound gl_nonlinear_bound(const std::map<std::pair<NeuronId, NeuronId>, double>& W,
                                  const std::map<NeuronId, std::vector<double>>& g, double gamma,
                                  const std::map<NeuronId, std::vector<std::vector<NeuronId>>>& growth) {
    if (!(gamma > 0.0)) throw ContractViolation("gl_nonlinear_bound: gamma must be positive");
    // tails[j][l-1] = sum_{s >= l} g_j(s)
    std::map<NeuronId, std::vector<double>> tails;
    std::size_t gmax = 0;
    for (const auto& [j, seq] : g) {
        std::vector<double> t(seq.size() + 1, 0.0);
        for (std::size_t l = seq.size(); l-- > 0;) t[l] = t[l + 1] + seq[l];
        tails[j] = std::move(t);
        gmax = std::max(gmax, seq.size());
    }
    auto tail = [&](NeuronId j, std::size_t l) {
        const auto& t = tails.at(j);
        return l - 1 < t.size() ? t[l - 1] : 0.0;
    };

    std::map<NeuronId, std::vector<std::pair<NeuronId, double>>> in;
    for (const auto& [edge, w] : W) {
        if (w == 0.0) continue;
        if (!tails.contains(edge.first)) throw ContractViolation("gl_nonlinear_bound: missing g for a source");
        if (!std::isfinite(tail(edge.first, 1))) throw ModelError("divergent sum: g is not summable");
        in[edge.second].emplace_back(edge.first, std::abs(w));
    }

    NonlinearBound out;
    out.threshold = 1.0 / gamma;
    for (const auto& [i, sources] : in) {
        auto gi = growth.find(i);
        if (gi == growth.end() || gi->second.empty()) {
            throw ContractViolation("gl_nonlinear_bound: no neighborhood growth for " + neuron_name(i));
        }
        const auto& sets = gi->second;
        const std::size_t horizon = std::max(sets.size(), gmax);
        double total = 0.0;
        for (std::size_t l = 1; l <= horizon; ++l) {
            const auto& J = sets[std::min(l, sets.size()) - 1];
            double inner = 0.0;
            for (const auto& [j, w] : sources) {
                const bool inside = std::find(J.begin(), J.end(), j) != J.end();
                inner += w * (inside ? tail(j, l) : tail(j, 1));
            }
            total += static_cast<double>(l) * static_cast<double>(l * J.size()) * inner;
        }
        // Beyond the horizon every in-set tail vanishes; anything outside
        // J stays constant and the series diverges.
        const auto& last = sets.back();
        for (const auto& [j, w] : sources) {
            if (std::find(last.begin(), last.end(), j) == last.end()) {
                throw ModelError("divergent sum: source " + std::to_string(j.value) + " never enters J_" +
                                 std::to_string(i.value) + "(l)");
            }
        }
        if (!std::isfinite(total)) throw ModelError("divergent sum in gl_nonlinear_bound");
        out.value = std::max(out.value, total);
    }
    out.satisfied = out.value < out.threshold;
    return out;
}

}  // namespace kalikow
