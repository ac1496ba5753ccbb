#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "kalikow/dictionary.hpp"
#include "kalikow/model.hpp"
#include "kalikow/simulator.hpp"

namespace kalikow {

struct ScalarBound {
    double level = 0.0;
    double tail = 0.0;
    std::int64_t B = 0;
    std::int64_t k = 0;
    double c_prime = 0.0;
};

/// Level sqrt(k B^2 M^2 x / (2T^2)) + sqrt((k+1) B^2 M^2 x / (2T^2)) and tail
/// c'/T + 2 n_functions e^{-x}, with B, k, c' from block_partition.
ScalarBound scalar_bound(double M, std::int64_t m, std::int64_t T, std::size_t F_size, double theta, double x,
                         double psi_bound, std::size_t n_functions = 1);

/// Bounded function of the window X_{F, t-m : t-1}.
struct WindowFunction {
    std::string name;
    std::vector<NeuronId> F;
    std::int64_t m = 1;
    /// sup |f|
    double M = 1.0;
    std::function<double(const SpikeSample&, std::int64_t)> eval;
};

WindowFunction constant_function(double c, std::vector<NeuronId> F);
/// x_{j, -lag}
WindowFunction spike_at(NeuronId j, std::int64_t lag);
/// prod over sites of 1{x_site = pattern}; sites carry negative lags.
WindowFunction cylinder_indicator(std::vector<Site> sites, std::vector<int> pattern);

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict v);

struct ConcentrationReport {
    std::string mode;
    std::string subject;
    std::int64_t T = 0;
    double x = 0.0;
    double theta = 0.0;
    double bound_level = 0.0;
    double tail_mass = 0.0;
    std::int64_t B = 0;
    std::int64_t k = 0;
    double c_prime = 0.0;
    std::size_t n_replicas = 0;
    std::size_t n_violations = 0;
    double empirical_rate = 0.0;
    /// Binomial standard error at the tail mass.
    double sigma = 0.0;
    double pilot_mean = 0.0;
    double pilot_se = 0.0;
    double max_deviation = 0.0;
    Verdict verdict = Verdict::pass;
    /// Matrix mode: replicas whose spectral norm exceeded the Frobenius norm.
    std::size_t norm_inconsistencies = 0;
    std::vector<double> deviations;
};

struct ConcentrationOptions {
    std::int64_t T = 10'000;
    double x = 3.0;
    double theta = 0.5;
    std::uint64_t seed = 1;
    /// Pilot horizon = pilot_factor * T.
    std::int64_t pilot_factor = 10;
    std::size_t pilot_batches = 20;
    SamplerOptions sampler;
};

/// |Z(f)| against the pilot mean, replica r on seed replica_seed(seed, r).
ConcentrationReport scalar_test(const KalikowModel& model, const WindowFunction& f, std::size_t replicas,
                                const ConcentrationOptions& opts);

/// Spectral norm of G - G_pilot against matrix_deviation_bound with M = sup |phi|.
ConcentrationReport matrix_test(const KalikowModel& model, const Dictionary& dict, std::size_t replicas,
                                const ConcentrationOptions& opts);

void write_report_json(const ConcentrationReport& r, std::ostream& out);

}  // namespace kalikow
