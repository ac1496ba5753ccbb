#include "kalikow/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <boost/math/special_functions/beta.hpp>

#include "kalikow/parallel.hpp"
#include "kalikow/rng.hpp"

namespace kalikow {

namespace {

[[noreturn]] void runaway(std::size_t cap) {
    throw RunawayGenealogy("runaway genealogy: more than " + std::to_string(cap) +
                           " sites visited (cap max_visited = " + std::to_string(cap) + ")");
}

}  // namespace

// ---- genealogy ------------------------------------------------------------

std::size_t GenealogyRecord::size() const {
    std::size_t n = 0;
    for (const auto& g : generations) n += g.size();
    return n;
}

GenealogyRecord build_genealogy(const KalikowModel& model, const Site& site, std::uint64_t seed,
                                const SamplerOptions& opts) {
    GenealogyRecord rec;
    std::unordered_set<Site, SiteHash> seen;
    std::vector<Site> frontier{site};
    std::int64_t min_time = site.time;
    std::size_t visited = 0;
    while (true) {
        std::vector<Site> next;
        for (const auto& s : frontier) {
            const auto& d = model.dynamics(s.neuron);
            const auto& v = sample_neighborhood(d.lambda, site_uniform(seed, Stream::genealogy, s));
            for (const auto& rel : v.sites()) {
                const Site abs = model.resolve(s.neuron, s.time, rel);
                if (seen.insert(abs).second) {
                    next.push_back(abs);
                    min_time = std::min(min_time, abs.time);
                    if (++visited > opts.max_visited) runaway(opts.max_visited);
                }
            }
        }
        if (next.empty()) break;
        std::sort(next.begin(), next.end());
        rec.generations.push_back(next);
        frontier = std::move(next);
    }
    rec.n_generations = static_cast<std::int64_t>(rec.generations.size()) + 1;
    rec.time_length = site.time - min_time;
    return rec;
}

GenealogyWalker::GenealogyWalker(const KalikowModel& model, SamplerOptions opts)
    : model_(model), opts_(opts) {}

GenealogySummary GenealogyWalker::walk(const Site& site, std::uint64_t seed) {
    GenealogySummary out;
    seen_.clear();
    frontier_.assign(1, site);
    std::int64_t min_time = site.time;
    while (true) {
        next_.clear();
        for (const auto& s : frontier_) {
            const auto& d = model_.dynamics(s.neuron);
            const auto atom = d.lambda.sample_atom(site_uniform(seed, Stream::genealogy, s));
            if (!atom) continue;
            for (const auto& rel : d.lambda.atoms()[*atom].neighborhood.sites()) {
                const Site abs = model_.resolve(s.neuron, s.time, rel);
                if (seen_.try_emplace(abs, 1).second) {
                    next_.push_back(abs);
                    min_time = std::min(min_time, abs.time);
                    if (++out.visited > opts_.max_visited) runaway(opts_.max_visited);
                }
            }
        }
        if (next_.empty()) break;
        ++out.n_generations;
        std::swap(frontier_, next_);
    }
    out.time_length = site.time - min_time;
    return out;
}

// ---- forward sampling -----------------------------------------------------

PerfectSampler::PerfectSampler(KalikowModel model, std::uint64_t seed, SamplerOptions opts)
    : model_(std::move(model)), seed_(seed), opts_(opts) {}

PerfectSampler::Frame PerfectSampler::open(const Site& s) const {
    const auto& d = model_.dynamics(s.neuron);
    return Frame{s, &d, d.lambda.sample_atom(site_uniform(seed_, Stream::genealogy, s)), 0};
}

int PerfectSampler::finish(const Frame& f) {
    double p;
    if (!f.atom) {
        p = f.dyn->p_empty;
    } else {
        const auto sites = f.dyn->lambda.atoms()[*f.atom].neighborhood.sites();
        bits_.resize(sites.size());
        for (std::size_t q = 0; q < sites.size(); ++q) {
            bits_[q] = values_.at(model_.resolve(f.site.neuron, f.site.time, sites[q]));
        }
        p = f.dyn->kernels[*f.atom](bits_);
    }
    const int x = site_uniform(seed_, Stream::forward, f.site) <= p ? 1 : 0;
    values_.emplace(f.site, static_cast<std::uint8_t>(x));
    return x;
}

int PerfectSampler::sample(const Site& site) {
    if (auto it = values_.find(site); it != values_.end()) return it->second;
    // Neighborhoods point strictly into the past, so the DFS stack never
    // holds a site twice.
    std::size_t visited = 1;
    stack_.clear();
    stack_.push_back(open(site));
    int result = 0;
    while (!stack_.empty()) {
        const std::size_t top = stack_.size() - 1;
        bool descended = false;
        if (stack_[top].atom) {
            const auto sites = stack_[top].dyn->lambda.atoms()[*stack_[top].atom].neighborhood.sites();
            while (stack_[top].next < sites.size()) {
                const Site child = model_.resolve(stack_[top].site.neuron, stack_[top].site.time,
                                                  sites[stack_[top].next]);
                ++stack_[top].next;
                if (!values_.contains(child)) {
                    if (++visited > opts_.max_visited) runaway(opts_.max_visited);
                    stack_.push_back(open(child));
                    descended = true;
                    break;
                }
            }
        }
        if (descended) continue;
        result = finish(stack_[top]);
        stack_.pop_back();
    }
    return result;
}

double PerfectSampler::intensity(NeuronId i, std::int64_t t) {
    if (model_.has_closed_form()) {
        const PastReader past = [&](NeuronId j, std::int64_t lag) { return sample(Site{j, t - lag}); };
        return model_.closed_form()(i, past);
    }
    return mixture_probability(model_, i, t, [&](const Site& s) { return sample(s); });
}

int perfect_sample(const KalikowModel& model, const Site& site, std::uint64_t seed, const SamplerOptions& opts) {
    PerfectSampler sampler(model, seed, opts);
    return sampler.sample(site);
}

// ---- SpikeSample ----------------------------------------------------------

SpikeSample::SpikeSample(std::vector<NeuronId> neurons, std::int64_t m, std::int64_t T, std::uint64_t seed)
    : neurons_(std::move(neurons)), m_(m), T_(T), seed_(seed) {
    if (neurons_.empty()) throw ContractViolation("SpikeSample: empty neuron set");
    if (m_ < 1) throw ContractViolation("SpikeSample: m must be >= 1");
    if (T_ < 0) throw ContractViolation("SpikeSample: T must be >= 0");
    auto sorted = neurons_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ContractViolation("SpikeSample: duplicate neuron");
    }
    bits_.assign(static_cast<std::size_t>(T_ + m_) * neurons_.size(), 0);
}

std::optional<std::size_t> SpikeSample::find_column(NeuronId j) const {
    auto it = std::find(neurons_.begin(), neurons_.end(), j);
    if (it == neurons_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - neurons_.begin());
}

std::size_t SpikeSample::column(NeuronId j) const {
    if (auto c = find_column(j)) return *c;
    throw ContractViolation("neuron " + std::to_string(j.value) + " is not observed in the sample");
}

void SpikeSample::set_intensity(NeuronId i, std::vector<double> values) {
    if (values.size() != static_cast<std::size_t>(T_)) throw ContractViolation("intensity length must equal T");
    intensities_[i] = std::move(values);
}

SpikeSample sample_window(const KalikowModel& model, std::vector<NeuronId> F, std::int64_t m, std::int64_t T,
                          std::uint64_t seed, const WindowOptions& opts) {
    if (m < 1) throw ContractViolation("sample_window: m must be >= 1");
    if (T <= m) throw ContractViolation("sample_window: T must exceed m");
    for (auto j : F) {
        if (!model.contains(j)) throw ModelError("neuron " + std::to_string(j.value) + " is not part of the model");
    }
    SpikeSample out(std::move(F), m, T, seed);
    PerfectSampler sampler(model, seed, opts.sampler);
    for (std::int64_t t = out.first_time(); t <= T; ++t) {
        for (std::size_t c = 0; c < out.width(); ++c) out.set(c, t, sampler.sample(Site{out.neurons()[c], t}));
    }
    for (auto i : opts.record_intensity) {
        std::vector<double> p(static_cast<std::size_t>(T));
        for (std::int64_t t = 1; t <= T; ++t) p[static_cast<std::size_t>(t - 1)] = sampler.intensity(i, t);
        out.set_intensity(i, std::move(p));
    }
    return out;
}

// ---- sample IO ------------------------------------------------------------

void write_csv(const SpikeSample& s, std::ostream& out) {
    out << "# seed=" << s.seed() << "\n";
    out << "time";
    for (auto j : s.neurons()) out << ',' << j.value;
    out << '\n';
    for (std::int64_t t = s.first_time(); t <= s.T(); ++t) {
        out << t;
        for (auto b : s.row(t)) out << ',' << static_cast<int>(b);
        out << '\n';
    }
}

SpikeSample read_csv(std::istream& in) {
    std::string line;
    std::uint64_t seed = 0;
    std::vector<NeuronId> ids;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (auto p = line.find("seed="); p != std::string::npos) seed = std::stoull(line.substr(p + 5));
            continue;
        }
        const auto cells = split(line);
        if (cells.empty() || cells[0] != "time") throw ConfigError("spike CSV: header must start with 'time'");
        for (std::size_t c = 1; c < cells.size(); ++c) ids.emplace_back(std::stoll(cells[c]));
        break;
    }
    if (ids.empty()) throw ConfigError("spike CSV: missing header or neuron columns");

    std::vector<std::int64_t> times;
    std::vector<std::uint8_t> bits;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line);
        if (cells.size() != ids.size() + 1) throw ConfigError("spike CSV: ragged row '" + line + "'");
        times.push_back(std::stoll(cells[0]));
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c] != "0" && cells[c] != "1") throw ConfigError("spike CSV: non-binary entry '" + cells[c] + "'");
            bits.push_back(cells[c] == "1" ? 1 : 0);
        }
    }
    if (times.empty()) throw ConfigError("spike CSV: no rows");
    for (std::size_t r = 1; r < times.size(); ++r) {
        if (times[r] != times[r - 1] + 1) throw ConfigError("spike CSV: times must be consecutive");
    }
    const std::int64_t m = 1 - times.front();
    const std::int64_t T = times.back();
    if (m < 1) throw ConfigError("spike CSV: first time must be <= 0");
    SpikeSample s(std::move(ids), m, T, seed);
    std::size_t k = 0;
    for (std::int64_t t = s.first_time(); t <= T; ++t) {
        for (std::size_t c = 0; c < s.width(); ++c) s.set(c, t, bits[k++]);
    }
    return s;
}

namespace {

constexpr char kMagic[4] = {'K', 'S', 'P', 'K'};
constexpr std::uint32_t kBinaryVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "binary format is little-endian");
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ConfigError("spike binary: truncated file");
    return v;
}

}  // namespace

void write_binary(const SpikeSample& s, std::ostream& out) {
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kBinaryVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.width()));
    put<std::int64_t>(out, s.m());
    put<std::int64_t>(out, s.T());
    put<std::uint64_t>(out, s.seed());
    for (auto j : s.neurons()) put<std::int64_t>(out, j.value);
    const auto bits = s.bits();
    std::vector<char> packed((bits.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < bits.size(); ++k) {
        if (bits[k]) packed[k / 8] = static_cast<char>(packed[k / 8] | (1 << (k % 8)));
    }
    out.write(packed.data(), static_cast<std::streamsize>(packed.size()));
}

SpikeSample read_binary(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ConfigError("spike binary: bad magic");
    if (get<std::uint32_t>(in) != kBinaryVersion) throw ConfigError("spike binary: unsupported version");
    const auto width = get<std::uint32_t>(in);
    const auto m = get<std::int64_t>(in);
    const auto T = get<std::int64_t>(in);
    const auto seed = get<std::uint64_t>(in);
    std::vector<NeuronId> ids;
    for (std::uint32_t c = 0; c < width; ++c) ids.emplace_back(get<std::int64_t>(in));
    SpikeSample s(std::move(ids), m, T, seed);
    const std::size_t n = s.bits().size();
    std::vector<char> packed((n + 7) / 8);
    in.read(packed.data(), static_cast<std::streamsize>(packed.size()));
    if (!in) throw ConfigError("spike binary: truncated bit block");
    std::size_t k = 0;
    for (std::int64_t t = s.first_time(); t <= T; ++t) {
        for (std::size_t c = 0; c < s.width(); ++c, ++k) s.set(c, t, (packed[k / 8] >> (k % 8)) & 1);
    }
    return s;
}

void save_sample(const SpikeSample& s, const std::string& path) {
    const bool csv = path.size() >= 4 && path.substr(path.size() - 4) == ".csv";
    std::ofstream out(path, csv ? std::ios::out : std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    csv ? write_csv(s, out) : write_binary(s, out);
}

SpikeSample load_sample(const std::string& path) {
    const bool csv = path.size() >= 4 && path.substr(path.size() - 4) == ".csv";
    std::ifstream in(path, csv ? std::ios::in : std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return csv ? read_csv(in) : read_binary(in);
}

// ---- genealogy statistics -------------------------------------------------

bool TailStats::any_violation() const {
    return std::any_of(rows.begin(), rows.end(), [](const TailRow& r) { return r.violation; });
}

namespace {
constexpr std::size_t kChunks = 64;
}

TailStats genealogy_tail_stats(const KalikowModel& model, NeuronId neuron, std::size_t replicas, std::int64_t ell_max,
                               std::uint64_t seed, const SamplerOptions& opts) {
    if (replicas < 1) throw ContractViolation("genealogy_tail_stats: replicas must be >= 1");
    if (ell_max < 1) throw ContractViolation("genealogy_tail_stats: ell_max must be >= 1");
    const auto L = static_cast<std::size_t>(ell_max);
    std::vector<std::vector<std::size_t>> counts(kChunks, std::vector<std::size_t>(L + 1, 0));
    parallel_chunks(replicas, kChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
        GenealogyWalker walker(model, opts);
        for (std::size_t r = b; r < e; ++r) {
            const auto g = walker.walk(Site{neuron, 0}, replica_seed(seed, r));
            const auto n = static_cast<std::size_t>(std::min<std::int64_t>(g.n_generations - 1, ell_max));
            for (std::size_t l = 1; l <= n; ++l) ++counts[c][l];  // N > l
        }
    });
    TailStats out;
    out.replicas = replicas;
    out.mean_size = mean_size(model.dynamics(neuron).lambda);
    const double n = static_cast<double>(replicas);
    for (std::size_t l = 1; l <= L; ++l) {
        std::size_t total = 0;
        for (const auto& c : counts) total += c[l];
        TailRow row;
        row.ell = static_cast<std::int64_t>(l);
        row.empirical = static_cast<double>(total) / n;
        row.bound = std::pow(sup_mean_size(model), static_cast<double>(l));
        const double pb = std::min(row.bound, 1.0);
        row.sigma = std::sqrt(pb * (1.0 - pb) / n);
        row.p_value = 1.0;
        if (total > 0 && pb < 1.0) {
            row.p_value = boost::math::ibeta(static_cast<double>(total), n - static_cast<double>(total) + 1.0, pb);
        }
        row.violation = row.empirical > row.bound + 3.0 * row.sigma && row.p_value < kThreeSigmaTail;
        out.rows.push_back(row);
    }
    return out;
}

LaplaceEstimate empirical_laplace(const KalikowModel& model, NeuronId neuron, double theta, std::size_t replicas,
                                  std::uint64_t seed, const SamplerOptions& opts) {
    if (replicas < 1) throw ContractViolation("empirical_laplace: replicas must be >= 1");
    LaplaceEstimate out;
    out.theta = theta;
    out.psi_bound = laplace_bound(model, theta);
    std::vector<double> sum(kChunks, 0.0), sum2(kChunks, 0.0);
    parallel_chunks(replicas, kChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
        GenealogyWalker walker(model, opts);
        for (std::size_t r = b; r < e; ++r) {
            const auto g = walker.walk(Site{neuron, 0}, replica_seed(seed, r));
            const double v = std::exp(theta * static_cast<double>(g.time_length));
            sum[c] += v;
            sum2[c] += v * v;
        }
    });
    double s = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < kChunks; ++c) {
        s += sum[c];
        s2 += sum2[c];
    }
    const double n = static_cast<double>(replicas);
    out.psi_hat = s / n;
    const double var = std::max(0.0, s2 / n - out.psi_hat * out.psi_hat);
    out.sigma = std::sqrt(var / n);
    out.violation = out.psi_hat > out.psi_bound + 3.0 * out.sigma;
    return out;
}

// ---- coupling grid --------------------------------------------------------

BlockGrid block_partition(std::int64_t T, std::int64_t m, double theta, std::size_t F_size, double psi_bound) {
    if (!(theta > 0.0)) throw ContractViolation("block_partition: theta must be positive");
    if (m < 1 || T < 2 || F_size < 1) throw ContractViolation("block_partition: need m >= 1, T >= 2, |F| >= 1");
    const double lead = (2.0 * std::log(static_cast<double>(T)) + std::log(static_cast<double>(F_size))) / theta;
    if (lead > static_cast<double>(T)) throw HorizonError("horizon too short for coupling grid");
    BlockGrid g;
    g.B = m + static_cast<std::int64_t>(std::ceil(lead));
    if (g.B > T / 2) {
        throw HorizonError("horizon too short for coupling grid: B = " + std::to_string(g.B) + " > floor(T/2) = " +
                           std::to_string(T / 2));
    }
    g.k = T / (2 * g.B);
    for (std::int64_t n = 1; n <= 2 * g.k; ++n) g.blocks.emplace_back((n - 1) * g.B + 1 - m, n * g.B);
    g.blocks.emplace_back(2 * g.k * g.B + 1 - m, T);
    g.p_bad = static_cast<double>(F_size) * static_cast<double>(2 * g.k + 1) * psi_bound *
              std::exp(-theta * static_cast<double>(g.B + 1 - m)) / (1.0 - std::exp(-theta));
    g.c_prime = static_cast<double>(T) * g.p_bad;
    return g;
}

}  // namespace kalikow
