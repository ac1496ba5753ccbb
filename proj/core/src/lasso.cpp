#include "kalikow/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace kalikow {

using Eigen::Index;
using Eigen::VectorXd;

double d_delta(double sup_norm, std::size_t dict_size, double delta, std::int64_t T) {
    if (!(delta > 0.0 && delta < 1.0)) throw ContractViolation("d_delta: delta must lie in (0, 1)");
    if (T < 1 || dict_size == 0) throw ContractViolation("d_delta: T and |Phi| must be positive");
    return std::sqrt(sup_norm * sup_norm * (std::log(static_cast<double>(dict_size)) + std::log(2.0 / delta)) /
                     (2.0 * static_cast<double>(T)));
}

double lasso_objective(const GramSystem& g, double gamma, double d, const VectorXd& a) {
    return -2.0 * a.dot(g.b) + a.dot(g.G * a) + gamma * d * a.lpNorm<1>();
}

double kkt_residual(const GramSystem& g, double gamma, double d, const VectorXd& a) {
    const VectorXd grad = 2.0 * (g.G * a - g.b);
    const double pen = gamma * d;
    double r = 0.0;
    for (Index k = 0; k < a.size(); ++k) {
        const double v = a[k] != 0.0 ? std::abs(grad[k] + pen * (a[k] > 0.0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(grad[k]) - pen);
        r = std::max(r, v);
    }
    return r;
}

LassoSolution solve(const GramSystem& g, double gamma, double d, const LassoConfig& config,
                    const std::optional<VectorXd>& warm) {
    const Index n = g.G.rows();
    if (g.G.cols() != n || g.b.size() != n) throw ContractViolation("solve: inconsistent Gram system");
    if (!(gamma > 0.0) || !(d >= 0.0)) throw ContractViolation("solve: need gamma > 0 and d >= 0");
    if (n > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.G, Eigen::EigenvaluesOnly);
        const double scale = std::max(1.0, g.G.cwiseAbs().maxCoeff());
        if (es.eigenvalues()[0] < -config.psd_tol * scale) {
            throw ContractViolation("solve: G is not positive semidefinite (lambda_min = " +
                                    std::to_string(es.eigenvalues()[0]) + ")");
        }
    }
    LassoSolution s;
    s.a_hat = warm ? *warm : VectorXd::Zero(n);
    if (s.a_hat.size() != n) throw ContractViolation("solve: warm start has the wrong size");
    const double half_pen = gamma * d / 2.0;
    for (Index k = 0; k < n; ++k) {
        if (g.G(k, k) <= 0.0) {
            s.degenerate.push_back(static_cast<std::size_t>(k));
            s.a_hat[k] = 0.0;
        }
    }
    // Ga kept up to date across coordinate moves.
    VectorXd Ga = g.G * s.a_hat;
    for (s.iterations = 0; s.iterations < config.max_iter;) {
        double change = 0.0;
        for (Index k = 0; k < n; ++k) {
            const double gkk = g.G(k, k);
            if (gkk <= 0.0) continue;
            const double old = s.a_hat[k];
            const double r = g.b[k] - (Ga[k] - gkk * old);
            const double mag = std::abs(r) - half_pen;
            const double next = mag > 0.0 ? std::copysign(mag, r) / gkk : 0.0;
            if (next != old) {
                Ga += g.G.col(k) * (next - old);
                s.a_hat[k] = next;
                change = std::max(change, std::abs(next - old));
            }
        }
        ++s.iterations;
        s.history.push_back(lasso_objective(g, gamma, d, s.a_hat));
        if (change < config.tol) {
            s.converged = true;
            break;
        }
    }
    s.objective = lasso_objective(g, gamma, d, s.a_hat);
    s.kkt_residual = kkt_residual(g, gamma, d, s.a_hat);
    s.convergence_warning = !s.converged && s.kkt_residual > 10.0 * config.tol;
    for (Index k = 0; k < n; ++k) {
        if (s.a_hat[k] != 0.0) s.active_set.push_back(static_cast<std::size_t>(k));
    }
    return s;
}

std::vector<double> predictions(const Dictionary& dict, const SpikeSample& sample, const VectorXd& a) {
    if (a.size() != static_cast<Index>(dict.size())) throw ContractViolation("coefficient vector has the wrong size");
    const VectorXd f = dict.design(sample) * a;
    return {f.data(), f.data() + f.size()};
}

double empirical_norm_sq(const Dictionary& dict, const SpikeSample& sample, const VectorXd& a,
                         const NormReference& reference, NeuronId i) {
    const auto f = predictions(dict, sample, a);
    std::vector<double> ref;
    if (const auto* model = std::get_if<const KalikowModel*>(&reference)) {
        ref = target_intensity(sample, **model, i);
    } else {
        ref = predictions(dict, sample, std::get<VectorXd>(reference));
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < f.size(); ++t) sum += (f[t] - ref[t]) * (f[t] - ref[t]);
    return sum / static_cast<double>(sample.T());
}

double oracle_bound(const Dictionary& dict, const SpikeSample& sample, const KalikowModel& model, NeuronId i,
                    const VectorXd& a_candidate, double kappa, double gamma, double d) {
    if (!(kappa > 0.0)) throw ContractViolation("oracle_bound: kappa must be positive");
    const double approx = empirical_norm_sq(dict, sample, a_candidate, &model, i);
    const auto support = static_cast<double>((a_candidate.array() != 0.0).count());
    return approx + support * d * d * (gamma + 2.0) * (gamma + 2.0) / (4.0 * kappa);
}

std::optional<VectorXd> exact_coefficients(const KalikowModel& model, const Dictionary& dict, NeuronId i) {
    if (dict.family() != DictFamily::hawkes || !model.contains(i)) return std::nullopt;
    const auto& dyn = model.dynamics(i);
    const auto& F = dict.neurons();
    const Index off = dict.spontaneous() ? 1 : 0;
    VectorXd a = VectorXd::Zero(static_cast<Index>(dict.size()));
    double constant = dyn.lambda.empty_weight() * dyn.p_empty;
    const auto atoms = dyn.lambda.atoms();
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const auto* lin = std::get_if<LinearKernel>(&dyn.kernels[k].variant());
        if (!lin) return std::nullopt;
        const double w = atoms[k].weight;
        constant += w * lin->intercept;
        const auto sites = atoms[k].neighborhood.sites();
        for (std::size_t q = 0; q < sites.size(); ++q) {
            const double slope = q < lin->slopes.size() ? lin->slopes[q] : 0.0;
            if (slope == 0.0) continue;
            const Site abs = model.resolve(i, 0, sites[q]);
            const std::int64_t lag = -abs.time;
            const auto it = std::find(F.begin(), F.end(), abs.neuron);
            if (it == F.end() || lag < 1 || lag > dict.m()) return std::nullopt;
            a[off + static_cast<Index>(it - F.begin()) * dict.m() + lag - 1] += w * slope;
        }
    }
    if (off) {
        a[0] = constant;
    } else if (std::abs(constant) > 1e-15) {
        return std::nullopt;
    }
    return a;
}

std::vector<double> clip_predictions(std::span<const double> values) {
    std::vector<double> out(values.begin(), values.end());
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

void write_solution_json(const SolutionRecord& r, std::ostream& out) {
    const auto& s = r.solution;
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "lasso_solution";
    j["dict_fingerprint"] = r.dict_fingerprint;
    j["target"] = r.target.value;
    j["T"] = r.T;
    j["seed"] = r.seed;
    j["gamma"] = r.gamma;
    j["d"] = r.d;
    j["delta"] = r.delta ? nlohmann::ordered_json(*r.delta) : nlohmann::ordered_json(nullptr);
    j["names"] = r.names;
    j["coefficients"] = std::vector<double>(s.a_hat.data(), s.a_hat.data() + s.a_hat.size());
    j["active_set"] = s.active_set;
    j["objective"] = s.objective;
    j["kkt_residual"] = s.kkt_residual;
    j["iterations"] = s.iterations;
    j["converged"] = s.converged;
    j["convergence_warning"] = s.convergence_warning;
    j["degenerate"] = s.degenerate;
    out << j.dump(2) << '\n';
}

SolutionRecord read_solution_json(std::istream& in) {
    try {
        nlohmann::json j;
        in >> j;
        if (j.at("kind").get<std::string>() != "lasso_solution") throw ConfigError("not a lasso solution file");
        SolutionRecord r;
        r.dict_fingerprint = j.at("dict_fingerprint").get<std::string>();
        r.target = NeuronId{j.at("target").get<std::int64_t>()};
        r.T = j.at("T").get<std::int64_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.gamma = j.at("gamma").get<double>();
        r.d = j.at("d").get<double>();
        if (!j.at("delta").is_null()) r.delta = j["delta"].get<double>();
        r.names = j.at("names").get<std::vector<std::string>>();
        const auto a = j.at("coefficients").get<std::vector<double>>();
        r.solution.a_hat = Eigen::Map<const VectorXd>(a.data(), static_cast<Index>(a.size()));
        r.solution.active_set = j.at("active_set").get<std::vector<std::size_t>>();
        r.solution.objective = j.at("objective").get<double>();
        r.solution.kkt_residual = j.at("kkt_residual").get<double>();
        r.solution.iterations = j.at("iterations").get<std::int64_t>();
        r.solution.converged = j.at("converged").get<bool>();
        r.solution.convergence_warning = j.at("convergence_warning").get<bool>();
        r.solution.degenerate = j.at("degenerate").get<std::vector<std::size_t>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("solution file: ") + e.what());
    }
}

}  // namespace kalikow
