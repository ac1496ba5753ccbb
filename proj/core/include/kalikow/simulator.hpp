#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kalikow/model.hpp"

namespace kalikow {

struct SamplerOptions {
    /// Hard cap on sites visited while resolving one genealogy.
    std::size_t max_visited = 1'000'000;
};

struct GenealogyRecord {
    /// A^1, ..., A^{N-1}: disjoint sets of absolute sites, sorted.
    std::vector<std::vector<Site>> generations;
    /// N = first n with A^n empty.
    std::int64_t n_generations = 1;
    /// t - min time over the genealogy; 0 when it is empty.
    std::int64_t time_length = 0;

    std::size_t size() const;
};

/// Backward pass driven by the genealogy field of `seed`.
GenealogyRecord build_genealogy(const KalikowModel& model, const Site& site, std::uint64_t seed,
                                const SamplerOptions& opts = {});

/// Only (N, T) of the genealogy; no generation lists are kept.
struct GenealogySummary {
    std::int64_t n_generations = 1;
    std::int64_t time_length = 0;
    std::size_t visited = 0;
};

/// Reusable workspace for repeated genealogy summaries.
class GenealogyWalker {
public:
    explicit GenealogyWalker(const KalikowModel& model, SamplerOptions opts = {});
    GenealogySummary walk(const Site& site, std::uint64_t seed);

private:
    KalikowModel model_;
    SamplerOptions opts_;
    std::unordered_map<Site, std::uint8_t, SiteHash> seen_;
    std::vector<Site> frontier_;
    std::vector<Site> next_;
};

/// One realization of the stationary chain, sampled lazily site by site.
/// Each site's value is memoized, so overlapping genealogies agree and
/// repeated queries return the same bit. Not thread-safe; use one per worker.
class PerfectSampler {
public:
    PerfectSampler(KalikowModel model, std::uint64_t seed, SamplerOptions opts = {});

    /// X at an absolute site: genealogy, then forward resolution. Throws RunawayGenealogy past the cap.
    int sample(const Site& site);

    /// p_i(X_{-inf:t-1}) on this realization: the model's closed form when it
    /// has one, else the mixture.
    double intensity(NeuronId i, std::int64_t t);

    const KalikowModel& model() const { return model_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t memo_size() const { return values_.size(); }

private:
    struct Frame {
        Site site;
        const NeuronDynamics* dyn;
        std::optional<std::size_t> atom;
        std::size_t next = 0;
    };
    Frame open(const Site& s) const;
    int finish(const Frame& f);

    KalikowModel model_;
    std::uint64_t seed_;
    SamplerOptions opts_;
    std::unordered_map<Site, std::uint8_t, SiteHash> values_;
    std::vector<Frame> stack_;
    std::vector<std::uint8_t> bits_;
};

/// Single-site convenience wrapper.
int perfect_sample(const KalikowModel& model, const Site& site, std::uint64_t seed, const SamplerOptions& opts = {});

/// X_{F, -(m-1):T}, stored time-major.
class SpikeSample {
public:
    SpikeSample() = default;
    SpikeSample(std::vector<NeuronId> neurons, std::int64_t m, std::int64_t T, std::uint64_t seed);

    const std::vector<NeuronId>& neurons() const { return neurons_; }
    std::size_t width() const { return neurons_.size(); }
    std::int64_t m() const { return m_; }
    std::int64_t T() const { return T_; }
    std::int64_t first_time() const { return 1 - m_; }
    std::uint64_t seed() const { return seed_; }

    /// Column of neuron j; throws ContractViolation when j is not observed.
    std::size_t column(NeuronId j) const;
    std::optional<std::size_t> find_column(NeuronId j) const;

    int at(std::size_t col, std::int64_t t) const { return bits_[offset(col, t)]; }
    int at(NeuronId j, std::int64_t t) const { return at(column(j), t); }
    void set(std::size_t col, std::int64_t t, int v) { bits_[offset(col, t)] = static_cast<std::uint8_t>(v != 0); }
    bool contains_time(std::int64_t t) const { return t >= first_time() && t <= T_; }

    /// Row of time t: one byte per observed neuron.
    std::span<const std::uint8_t> row(std::int64_t t) const {
        return std::span<const std::uint8_t>(bits_).subspan(offset(0, t), width());
    }
    std::span<const std::uint8_t> bits() const { return bits_; }

    /// p_i(X_{-inf:t-1}) for t = 1..T, recorded while simulating.
    const std::map<NeuronId, std::vector<double>>& intensities() const { return intensities_; }
    void set_intensity(NeuronId i, std::vector<double> values);

    friend bool operator==(const SpikeSample& a, const SpikeSample& b) {
        return a.neurons_ == b.neurons_ && a.m_ == b.m_ && a.T_ == b.T_ && a.seed_ == b.seed_ && a.bits_ == b.bits_;
    }

private:
    std::size_t offset(std::size_t col, std::int64_t t) const {
        return static_cast<std::size_t>(t - first_time()) * neurons_.size() + col;
    }

    std::vector<NeuronId> neurons_;
    std::int64_t m_ = 1;
    std::int64_t T_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<std::uint8_t> bits_;
    std::map<NeuronId, std::vector<double>> intensities_;
};

struct WindowOptions {
    SamplerOptions sampler;
    /// Neurons whose intensities p_i are recorded for t = 1..T.
    std::vector<NeuronId> record_intensity;
};

/// Perfect sample of F x {-(m-1),...,T} from one realization of the chain.
SpikeSample sample_window(const KalikowModel& model, std::vector<NeuronId> F, std::int64_t m, std::int64_t T,
                          std::uint64_t seed, const WindowOptions& opts = {});

// CSV: "time,<id>,<id>,..." then one row per time. A leading "# seed=..."
// line carries the seed. Binary: see README.
void write_csv(const SpikeSample& s, std::ostream& out);
SpikeSample read_csv(std::istream& in);
void write_binary(const SpikeSample& s, std::ostream& out);
SpikeSample read_binary(std::istream& in);
void save_sample(const SpikeSample& s, const std::string& path);  // by extension: .csv or binary
SpikeSample load_sample(const std::string& path);

// ---- genealogy statistics -------------------------------------------------

struct TailRow {
    std::int64_t ell = 0;
    double empirical = 0.0;  // fraction of replicas with N > ell
    double bound = 0.0;      // mbar^ell
    double sigma = 0.0;      // binomial standard error at the bound
    /// P(Bin(replicas, bound) >= observed count).
    double p_value = 1.0;
    /// empirical > bound + 3 sigma and p_value below the one-sided 3 sigma
    /// level; the exact tail decides rows with only a few expected events.
    bool violation = false;
};

/// One-sided Gaussian tail beyond 3 standard deviations.
inline constexpr double kThreeSigmaTail = 0.0013498980316301;

struct TailStats {
    double mean_size = 0.0;
    std::size_t replicas = 0;
    std::vector<TailRow> rows;
    bool any_violation() const;
};

/// Replica r uses seed replica_seed(seed, r) and the site (neuron, 0).
TailStats genealogy_tail_stats(const KalikowModel& model, NeuronId neuron, std::size_t replicas, std::int64_t ell_max,
                               std::uint64_t seed, const SamplerOptions& opts = {});

struct LaplaceEstimate {
    double theta = 0.0;
    double psi_hat = 0.0;
    double psi_bound = 0.0;
    double sigma = 0.0;  // standard error of psi_hat
    bool violation = false;
};

/// Throws ModelError when phi(theta) >= 1.
LaplaceEstimate empirical_laplace(const KalikowModel& model, NeuronId neuron, double theta, std::size_t replicas,
                                  std::uint64_t seed, const SamplerOptions& opts = {});

// ---- coupling grid --------------------------------------------------------

struct BlockGrid {
    std::int64_t B = 0;
    std::int64_t k = 0;
    /// [first, last] time of I_1, ..., I_{2k+1}.
    std::vector<std::pair<std::int64_t, std::int64_t>> blocks;
    /// Probability bound of the bad coupling event.
    double p_bad = 0.0;
    /// T * p_bad: explicit constant with p_bad = c_prime / T.
    double c_prime = 0.0;
};

/// B = m + ceil((2 ln T + ln |F|) / theta), k = floor(T / 2B). Throws
/// HorizonError("horizon too short for coupling grid") when B > floor(T/2).
BlockGrid block_partition(std::int64_t T, std::int64_t m, double theta, std::size_t F_size, double psi_bound);

}  // namespace kalikow
