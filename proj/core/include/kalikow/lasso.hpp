#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kalikow/dictionary.hpp"
#include "kalikow/gram.hpp"
#include "kalikow/model.hpp"

namespace kalikow {

struct LassoConfig {
    double gamma = 2.0;
    /// Explicit threshold; when empty d = d_delta(delta).
    std::optional<double> d;
    std::optional<double> delta;
    std::int64_t max_iter = 100'000;
    double tol = 1e-10;
    /// Negative eigenvalues of G below -psd_tol are rejected.
    double psd_tol = 1e-9;
};

struct LassoSolution {
    Eigen::VectorXd a_hat;
    std::vector<std::size_t> active_set;
    double objective = 0.0;
    double kkt_residual = 0.0;
    std::int64_t iterations = 0;
    bool converged = false;
    /// max_iter reached with kkt_residual > 10 tol.
    bool convergence_warning = false;
    /// Coordinates with G_phi,phi = 0 (feature never active).
    std::vector<std::size_t> degenerate;
    /// Objective after each full sweep.
    std::vector<double> history;
};

/// sqrt(sup_norm^2 (ln |Phi| + ln(2/delta)) / (2T)).
double d_delta(double sup_norm, std::size_t dict_size, double delta, std::int64_t T);

/// -2 a^T b + a^T G a + gamma d |a|_1.
double lasso_objective(const GramSystem& g, double gamma, double d, const Eigen::VectorXd& a);

/// Cyclic coordinate descent in dictionary order, optionally warm-started.
LassoSolution solve(const GramSystem& g, double gamma, double d, const LassoConfig& config = {},
                    const std::optional<Eigen::VectorXd>& warm = std::nullopt);

double kkt_residual(const GramSystem& g, double gamma, double d, const Eigen::VectorXd& a);

/// Reference p_i of a model, or the function f_{a_ref} of a coefficient vector.
using NormReference = std::variant<const KalikowModel*, Eigen::VectorXd>;

/// (1/T) sum_t (f_a(X_{F,t-m:t-1}) - ref_t)^2.
double empirical_norm_sq(const Dictionary& dict, const SpikeSample& sample, const Eigen::VectorXd& a,
                         const NormReference& reference, NeuronId i);

/// ||f_a - p_i||_T^2 + |S(a)| d^2 (gamma + 2)^2 / (4 kappa).
double oracle_bound(const Dictionary& dict, const SpikeSample& sample, const KalikowModel& model, NeuronId i,
                    const Eigen::VectorXd& a_candidate, double kappa, double gamma, double d);

/// Coefficients a with f_a = p_i exactly, when every atom of neuron i is a
/// linear kernel on sites the dictionary covers (Hawkes dictionaries only).
std::optional<Eigen::VectorXd> exact_coefficients(const KalikowModel& model, const Dictionary& dict, NeuronId i);

std::vector<double> clip_predictions(std::span<const double> values);

/// f_a(X_{F,t-m:t-1}) for t = 1..T.
std::vector<double> predictions(const Dictionary& dict, const SpikeSample& sample, const Eigen::VectorXd& a);

struct SolutionRecord {
    LassoSolution solution;
    std::string dict_fingerprint;
    std::vector<std::string> names;
    NeuronId target;
    std::int64_t T = 0;
    double gamma = 0.0;
    double d = 0.0;
    std::optional<double> delta;
    std::uint64_t seed = 0;
};

void write_solution_json(const SolutionRecord& r, std::ostream& out);
SolutionRecord read_solution_json(std::istream& in);

}  // namespace kalikow
