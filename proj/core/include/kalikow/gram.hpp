#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kalikow/dictionary.hpp"
#include "kalikow/model.hpp"
#include "kalikow/simulator.hpp"

namespace kalikow {

/// G = (1/T) sum_t phi phi^T, b = (1/T) sum_t phi X_{i,t}, optional compensator.
struct GramSystem {
    Eigen::MatrixXd G;
    Eigen::VectorXd b;
    std::optional<Eigen::VectorXd> b_bar;
    NeuronId target;
    std::int64_t T = 0;
    std::string dict_fingerprint;

    std::size_t size() const { return static_cast<std::size_t>(b.size()); }
};

/// Parallel over fixed t-chunks, reduced in chunk order (bit-stable).
GramSystem assemble(const Dictionary& dict, const SpikeSample& sample, NeuronId i);

/// b_bar_phi = (1/T) sum_t phi(X_{F,t-m:t-1}) p_i(X_{-inf:t-1}). Uses the
/// intensities recorded in the sample when present, otherwise evaluates p_i
/// (closed form, else mixture) on the sample itself. Throws UnsupportedModel
/// when p_i needs sites the sample does not contain.
Eigen::VectorXd compensator(const Dictionary& dict, const SpikeSample& sample, const KalikowModel& model, NeuronId i);

/// p_i(X_{-inf:t-1}) for t = 1..T as used by compensator().
std::vector<double> target_intensity(const SpikeSample& sample, const KalikowModel& model, NeuronId i);

struct ExpectedGram {
    Eigen::MatrixXd G;
    /// All eigenvalues of the closed form, ascending.
    std::vector<double> eigenvalues;
    double lambda_min = 0.0;
};

/// E(G) when every X_{j,t} is an independent fair coin.
ExpectedGram expected_gram_bernoulli(const Dictionary& dict);

enum class KappaFamily { short_memory, cumulative, cumulative_spont };

/// Lower bound on the smallest eigenvalue of E(G) under the true model.
/// Throws ContractViolation for mu outside (0, 1/2].
double kappa_prime(KappaFamily family, double mu, std::int64_t m, std::size_t F_size, std::int64_t eta = 1,
                   std::int64_t K = 1);

struct InvResult {
    double lambda_min = 0.0;
    std::map<double, bool> satisfies;
    bool holds(double kappa) const { return lambda_min >= kappa; }
};

/// Smallest eigenvalue of symmetric G; throws ContractViolation when G is not
/// symmetric within 1e-10.
InvResult inv_check(const Eigen::MatrixXd& G, const std::vector<double>& kappas = {});

enum class REMode { exact, certified };

inline constexpr std::size_t kExactREMaxSize = 14;

struct REResult {
    REMode mode = REMode::certified;
    /// exact: smallest a^T G a / |a_J|^2 found over the cone (multi-start
    /// projected descent); certified: the entrywise lower bound.
    double value = 0.0;
    /// exact: Lagrangian lower bound, min over supports; certified: = value.
    double lower = 0.0;
    std::vector<std::size_t> worst_support;
    /// certified mode only: max |G - G_ref|.
    double R = 0.0;
};

/// RE(kappa, c, s) check. Exact mode needs |Phi| <= 14. Certified mode bounds
/// a^T G a from the diagonal/off-diagonal ranges of `reference` (default G)
/// widened by R = max|G - reference|.
REResult re_check(const Eigen::MatrixXd& G, double c, std::size_t s, REMode mode,
                  const std::optional<Eigen::MatrixXd>& reference = std::nullopt);

/// mu - mu^2 - ((1 - 2 mu) + R_T)(1 + c) s, as stated for the Hawkes dictionary.
double re_kappa_hawkes(double mu, double c, std::size_t s, double R_T);

struct DeviationBound {
    double level = 0.0;
    double tail = 0.0;
    double sigma = 0.0;
    std::int64_t B = 0;
    std::int64_t k = 0;
    double c_prime = 0.0;
};

/// Spectral-norm level sqrt(8 k sigma^2 x) + sqrt(8 (k+1) sigma^2 x) with
/// sigma = 2 |Phi| B M^2 / T; tail c'/T + 4 |Phi| e^{-x}. M bounds |phi|.
DeviationBound matrix_deviation_bound(std::size_t F_size, std::int64_t m, std::int64_t T, double theta, double M,
                                      std::size_t dict_size, double x, double psi_bound);

/// Entrywise deviation level for the Hawkes dictionary: the two-term scalar
/// level with M = 1 and x = ln(4 |Phi|^2 / delta).
double hawkes_entry_deviation(std::size_t F_size, std::int64_t m, std::int64_t T, double theta,
                              std::size_t dict_size, double delta);

void write_gram_json(const GramSystem& g, std::ostream& out);
GramSystem read_gram_json(std::istream& in);

}  // namespace kalikow
