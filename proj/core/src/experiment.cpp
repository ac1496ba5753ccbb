#include "kalikow/experiment.hpp"

#include <algorithm>
#include <array>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kalikow/concentration.hpp"
#include "kalikow/dictionary.hpp"
#include "kalikow/gram.hpp"
#include "kalikow/lasso.hpp"
#include "kalikow/parallel.hpp"
#include "kalikow/simulator.hpp"
#include "kalikow/text.hpp"

namespace kalikow {

namespace pt = boost::property_tree;
using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kStages{"simulate", "assemble", "estimate", "diagnose"};
const std::set<std::string> kModelFamilies{"markov", "infinite_order", "hawkes", "gl_linear", "explicit"};

// Key reader that rejects anything it was not asked for.
class Section {
public:
    Section(const pt::ptree& tree, std::string name) : name_(std::move(name)) {
        if (auto sec = tree.get_child_optional(name_)) {
            for (const auto& [k, v] : *sec) values_[k] = v.get_value<std::string>();
        }
    }

    std::optional<std::string> take(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        auto v = it->second;
        values_.erase(it);
        return v;
    }

    std::string need(const std::string& key) {
        auto v = take(key);
        if (!v) throw ConfigError("[" + name_ + "] missing key '" + key + "'");
        return *v;
    }

    void done() const {
        if (!values_.empty()) throw ConfigError("[" + name_ + "] unknown key '" + values_.begin()->first + "'");
    }

private:
    std::string name_;
    std::map<std::string, std::string> values_;
};

std::vector<NeuronId> parse_ids(const std::string& s) {
    std::vector<NeuronId> out;
    for (const auto& p : split_list(s, ',')) out.emplace_back(parse_int(p));
    return out;
}

std::string ids_text(const std::vector<NeuronId>& ids) {
    std::string s;
    for (std::size_t q = 0; q < ids.size(); ++q) s += (q ? ", " : "") + std::to_string(ids[q].value);
    return s;
}

std::optional<double> parse_optional_double(const std::string& s) {
    if (trim(s) == "none") return std::nullopt;
    return parse_double(s);
}

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : "none"; }

std::uint64_t parse_seed(const std::string& s) {
    const auto v = parse_int(s);
    if (v < 0) throw ConfigError("seed must be nonnegative, got '" + s + "'");
    return static_cast<std::uint64_t>(v);
}

// FNV-1a, 64 bit.
std::string digest(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::int64_t dict_m(const ExperimentConfig& c) { return c.dictionary.m ? c.dictionary.m : c.simulation.m; }

std::int64_t dict_L(const ExperimentConfig& c) {
    if (c.dictionary.L) return c.dictionary.L;
    return c.dictionary.eta > 0 ? dict_m(c) / c.dictionary.eta : 0;
}

std::vector<NeuronId> dict_F(const ExperimentConfig& c) {
    return c.dictionary.F.empty() ? c.simulation.F : c.dictionary.F;
}

NeuronId target_of(const ExperimentConfig& c) {
    return c.estimator.target ? *c.estimator.target : c.simulation.F.front();
}

Dictionary build_dictionary(const ExperimentConfig& c) {
    return make_dictionary(c.dictionary.kind, dict_F(c), dict_m(c), c.dictionary.eta, dict_L(c));
}

KalikowModel build_experiment_model(const ExperimentConfig& c) { return build_model(c.model); }

}  // namespace

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return serialize_experiment_config(a) == serialize_experiment_config(b);
}

ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    pt::ptree tree;
    try {
        std::istringstream is(text);
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;

    static const std::set<std::string> sections{"model", "simulation", "dictionary", "estimator", "diagnostics", "output"};
    for (const auto& [name, sub] : tree) {
        if (!sections.contains(name) && !kModelFamilies.contains(name)) {
            throw ConfigError("config: unknown section [" + name + "]");
        }
    }

    Section model(tree, "model");
    auto file = model.take("file");
    auto family = model.take("family");
    model.done();
    if (file && family) throw ConfigError("[model] give either 'file' or 'family', not both");
    if (file) {
        cfg.model_file = trim(*file);
        std::filesystem::path p(cfg.model_file);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        cfg.model = load_model_config(p);
    } else {
        std::istringstream is(text);
        cfg.model = parse_model_config(is, base_dir);
    }

    Section sim(tree, "simulation");
    cfg.simulation.F = parse_ids(sim.need("F"));
    if (auto v = sim.take("m")) cfg.simulation.m = parse_int(*v);
    if (auto v = sim.take("T")) cfg.simulation.T = parse_int(*v);
    if (auto v = sim.take("seed")) cfg.simulation.seed = parse_seed(*v);
    sim.done();

    Section dict(tree, "dictionary");
    if (auto v = dict.take("kind")) cfg.dictionary.kind = trim(*v);
    if (auto v = dict.take("F")) cfg.dictionary.F = parse_ids(*v);
    if (auto v = dict.take("m")) cfg.dictionary.m = parse_int(*v);
    if (auto v = dict.take("eta")) cfg.dictionary.eta = parse_int(*v);
    if (auto v = dict.take("L")) cfg.dictionary.L = parse_int(*v);
    dict.done();

    Section est(tree, "estimator");
    if (auto v = est.take("target")) {
        if (trim(*v) != "none") cfg.estimator.target = NeuronId{parse_int(*v)};
    }
    if (auto v = est.take("gamma")) cfg.estimator.gamma = parse_double(*v);
    if (auto v = est.take("delta")) cfg.estimator.delta = parse_optional_double(*v);
    if (auto v = est.take("d")) cfg.estimator.d = parse_optional_double(*v);
    if (auto v = est.take("tol")) cfg.estimator.tol = parse_double(*v);
    if (auto v = est.take("max_iter")) cfg.estimator.max_iter = parse_int(*v);
    est.done();

    Section diag(tree, "diagnostics");
    if (auto v = diag.take("kappa")) {
        for (const auto& p : split_list(*v, ',')) cfg.diagnostics.kappa.push_back(parse_double(p));
    }
    if (auto v = diag.take("re_c")) cfg.diagnostics.re_c = parse_double(*v);
    if (auto v = diag.take("re_s")) cfg.diagnostics.re_s = parse_int(*v);
    if (auto v = diag.take("re_mode")) cfg.diagnostics.re_mode = trim(*v);
    if (auto v = diag.take("mu")) cfg.diagnostics.mu = parse_optional_double(*v);
    if (auto v = diag.take("theta")) cfg.diagnostics.theta = parse_double(*v);
    if (auto v = diag.take("concentration")) cfg.diagnostics.concentration = trim(*v);
    if (auto v = diag.take("x")) cfg.diagnostics.x = parse_double(*v);
    if (auto v = diag.take("replicas")) cfg.diagnostics.replicas = parse_int(*v);
    diag.done();

    Section out(tree, "output");
    if (auto v = out.take("dir")) cfg.output.dir = trim(*v);
    if (auto v = out.take("prefix")) cfg.output.prefix = trim(*v);
    if (auto v = out.take("sample_format")) cfg.output.sample_format = trim(*v);
    if (auto v = out.take("stages")) cfg.output.stages = split_list(*v, ',');
    out.done();

    check_consistency(cfg);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse_experiment_config(in, path.parent_path());
}

void write_experiment_config(const ExperimentConfig& c, std::ostream& out) {
    if (!c.model_file.empty()) {
        out << "[model]\nfile = " << c.model_file << "\n";
    } else {
        write_model_config(c.model, out);
    }
    out << "\n[simulation]\n"
        << "F = " << ids_text(c.simulation.F) << "\n"
        << "m = " << c.simulation.m << "\n"
        << "T = " << c.simulation.T << "\n"
        << "seed = " << c.simulation.seed << "\n";
    out << "\n[dictionary]\n"
        << "kind = " << c.dictionary.kind << "\n";
    if (!c.dictionary.F.empty()) out << "F = " << ids_text(c.dictionary.F) << "\n";
    out << "m = " << c.dictionary.m << "\n"
        << "eta = " << c.dictionary.eta << "\n"
        << "L = " << c.dictionary.L << "\n";
    out << "\n[estimator]\n"
        << "target = " << (c.estimator.target ? std::to_string(c.estimator.target->value) : "none") << "\n"
        << "gamma = " << format_double(c.estimator.gamma) << "\n"
        << "delta = " << optional_text(c.estimator.delta) << "\n"
        << "d = " << optional_text(c.estimator.d) << "\n"
        << "tol = " << format_double(c.estimator.tol) << "\n"
        << "max_iter = " << c.estimator.max_iter << "\n";
    out << "\n[diagnostics]\nkappa = ";
    for (std::size_t q = 0; q < c.diagnostics.kappa.size(); ++q) {
        out << (q ? ", " : "") << format_double(c.diagnostics.kappa[q]);
    }
    out << "\n"
        << "re_c = " << format_double(c.diagnostics.re_c) << "\n"
        << "re_s = " << c.diagnostics.re_s << "\n"
        << "re_mode = " << c.diagnostics.re_mode << "\n"
        << "mu = " << optional_text(c.diagnostics.mu) << "\n"
        << "theta = " << format_double(c.diagnostics.theta) << "\n"
        << "concentration = " << c.diagnostics.concentration << "\n"
        << "x = " << format_double(c.diagnostics.x) << "\n"
        << "replicas = " << c.diagnostics.replicas << "\n";
    out << "\n[output]\n"
        << "dir = " << c.output.dir << "\n"
        << "prefix = " << c.output.prefix << "\n"
        << "sample_format = " << c.output.sample_format << "\n"
        << "stages = ";
    for (std::size_t q = 0; q < c.output.stages.size(); ++q) out << (q ? ", " : "") << c.output.stages[q];
    out << "\n";
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    write_experiment_config(cfg, os);
    return os.str();
}

std::string config_fingerprint(const ExperimentConfig& cfg) { return digest(serialize_experiment_config(cfg)); }

std::string explain_experiment_config() {
    std::string s = R"(# Experiment configuration. Lines starting with '#' are comments.
# The model is either inline ([model] family = ... plus the family section,
# see below) or loaded from a file:
# [model]
# file = model.ini

[simulation]
# observed neurons, required
F = 1, 2
# retained past depth; the window covers times 1-m .. T
m = 3
T = 1000
seed = 1

[dictionary]
# short_memory | short_memory_spont | cumulative | cumulative_spont | hawkes | hawkes_spont
kind = hawkes_spont
# neurons of the dictionary (default: simulation F)
# F = 1, 2
# depth (0: simulation m); must not exceed simulation m
m = 0
# bin width and bin count for cumulative dictionaries; eta * L = m (L = 0: m / eta)
eta = 1
L = 0

[estimator]
# target neuron (none: first simulation neuron)
target = none
gamma = 2
# threshold d = d_delta(delta) unless d is given; none disables either
delta = 0.1
d = none
tol = 1e-10
max_iter = 100000

[diagnostics]
# Inv(kappa) targets, comma separated
kappa =
# RE(kappa, c, s) check on G
re_c = 1
re_s = 1
# exact (at most 14 dictionary functions) | certified
re_mode = certified
# lower bound of p_i for kappa' and the Hawkes RE constant (none: skip)
mu = none
theta = 0.5
# none | scalar | matrix concentration test on the model
concentration = none
x = 3
replicas = 0

[output]
dir = .
prefix = run
# csv | binary
sample_format = csv
# a prefix of: simulate, assemble, estimate, diagnose
stages = simulate, assemble, estimate, diagnose

# ---- model sections ----
)";
    return s + explain_model_config();
}

void check_consistency(const ExperimentConfig& c) {
    const auto& F = c.simulation.F;
    if (F.empty()) throw ConfigError("[simulation] F must list at least one neuron");
    auto sorted = F;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("[simulation] F lists a neuron twice");
    }
    if (c.simulation.m < 1) throw ConfigError("[simulation] m must be >= 1");
    if (c.simulation.T <= c.simulation.m) throw ConfigError("[simulation] T must exceed m");
    if (dict_m(c) < 1) throw ConfigError("[dictionary] m must be >= 1");
    if (dict_m(c) > c.simulation.m) {
        throw ConfigError("[dictionary] m = " + std::to_string(dict_m(c)) + " exceeds simulation m = " +
                          std::to_string(c.simulation.m));
    }
    for (auto j : dict_F(c)) {
        if (!std::binary_search(sorted.begin(), sorted.end(), j)) {
            throw ConfigError("[dictionary] neuron " + std::to_string(j.value) + " is not simulated");
        }
    }
    if (!std::binary_search(sorted.begin(), sorted.end(), target_of(c))) {
        throw ConfigError("[estimator] target neuron " + std::to_string(target_of(c).value) + " is not in F");
    }
    if (c.dictionary.kind.starts_with("cumulative") && c.dictionary.eta * dict_L(c) != dict_m(c)) {
        throw ConfigError("[dictionary] eta * L must equal m for cumulative dictionaries");
    }
    (void)build_dictionary(c);
    if (!(c.estimator.gamma > 0.0)) throw ConfigError("[estimator] gamma must be positive");
    if (c.estimator.d && !(*c.estimator.d > 0.0)) throw ConfigError("[estimator] d must be positive");
    if (c.estimator.delta && !(*c.estimator.delta > 0.0 && *c.estimator.delta < 1.0)) {
        throw ConfigError("[estimator] delta must lie in (0, 1)");
    }
    if (!c.estimator.d && !c.estimator.delta) throw ConfigError("[estimator] need delta or d");
    if (!(c.estimator.tol > 0.0) || c.estimator.max_iter < 1) throw ConfigError("[estimator] bad tol or max_iter");
    if (c.diagnostics.re_mode != "exact" && c.diagnostics.re_mode != "certified") {
        throw ConfigError("[diagnostics] re_mode must be exact or certified");
    }
    if (c.diagnostics.re_s < 1 || !(c.diagnostics.re_c >= 0.0)) throw ConfigError("[diagnostics] bad re_c or re_s");
    if (c.diagnostics.mu && !(*c.diagnostics.mu > 0.0 && *c.diagnostics.mu < 1.0)) {
        throw ConfigError("[diagnostics] mu must lie in (0, 1)");
    }
    if (!(c.diagnostics.theta > 0.0)) throw ConfigError("[diagnostics] theta must be positive");
    const auto& conc = c.diagnostics.concentration;
    if (conc != "none" && conc != "scalar" && conc != "matrix") {
        throw ConfigError("[diagnostics] concentration must be none, scalar or matrix");
    }
    if (c.diagnostics.replicas < 0) throw ConfigError("[diagnostics] replicas must be >= 0");
    if (c.output.sample_format != "csv" && c.output.sample_format != "binary") {
        throw ConfigError("[output] sample_format must be csv or binary");
    }
    const auto& st = c.output.stages;
    if (st.empty() || st.size() > kStages.size() || !std::equal(st.begin(), st.end(), kStages.begin())) {
        throw ConfigError("[output] stages must be a prefix of: simulate, assemble, estimate, diagnose");
    }
    if (c.output.prefix.empty()) throw ConfigError("[output] prefix must not be empty");
}

bool ExperimentReport::checks_passed() const {
    return std::none_of(checks.begin(), checks.end(), [](const auto& kv) { return kv.second == "fail"; });
}

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string pass_fail(bool ok) { return ok ? "pass" : "fail"; }

std::optional<KappaFamily> kappa_family(const Dictionary& d) {
    switch (d.family()) {
        case DictFamily::short_memory:
            if (d.spontaneous()) return std::nullopt;
            return KappaFamily::short_memory;
        case DictFamily::cumulative:
        case DictFamily::hawkes:
            return d.spontaneous() ? KappaFamily::cumulative_spont : KappaFamily::cumulative;
    }
    return std::nullopt;
}

class PartialMarker {
public:
    PartialMarker(std::filesystem::path path, bool active) : path_(std::move(path)), active_(active) {
        if (active_) std::ofstream(path_) << "running\n";
    }
    void fail(const std::string& stage, const std::string& what) {
        if (active_) std::ofstream(path_) << "failed stage: " << stage << "\nerror: " << what << "\n";
        active_ = false;
    }
    void clear() {
        if (active_) std::filesystem::remove(path_);
        active_ = false;
    }

private:
    std::filesystem::path path_;
    bool active_;
};

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    try {
        check_consistency(cfg);
    } catch (const ConfigError& e) {
        throw StageError("config", 2, e.what());
    }
    const bool files = opts.write_files;
    std::filesystem::path dir = cfg.output.dir;
    if (dir.is_relative() && !cfg.base_dir.empty()) dir = cfg.base_dir / dir;
    if (files) std::filesystem::create_directories(dir);
    auto artifact = [&](const std::string& suffix) { return dir / (cfg.output.prefix + suffix); };
    PartialMarker marker(artifact(".partial"), files);

    const auto& stages = cfg.output.stages;
    auto wants = [&](const std::string& s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
    const NeuronId target = target_of(cfg);

    ExperimentReport rep;
    json j;
    j["schema_version"] = 1;
    j["kind"] = "experiment_report";
    j["config_fingerprint"] = config_fingerprint(cfg);
    j["seed"] = cfg.simulation.seed;
    j["stages"] = stages;

    std::string stage = "model";
    try {
        const KalikowModel model = build_experiment_model(cfg);
        j["model"] = {{"family", model.family()}, {"sup_mean_size", sup_mean_size(model)}};

        stage = "simulate";
        WindowOptions wo;
        wo.record_intensity = {target};
        const auto sample =
            sample_window(model, cfg.simulation.F, cfg.simulation.m, cfg.simulation.T, cfg.simulation.seed, wo);
        json rates = json::object();
        for (std::size_t c = 0; c < sample.width(); ++c) {
            double n = 0.0;
            for (std::int64_t t = 1; t <= sample.T(); ++t) n += sample.at(c, t);
            const double rate = n / static_cast<double>(sample.T());
            rates[std::to_string(sample.neurons()[c].value)] = rate;
            rep.metrics["spike_rate[" + std::to_string(sample.neurons()[c].value) + "]"] = rate;
        }
        j["simulation"] = {{"F", ids_text(cfg.simulation.F)},
                           {"m", cfg.simulation.m},
                           {"T", cfg.simulation.T},
                           {"spike_rates", rates}};
        if (files) {
            const auto path = artifact(cfg.output.sample_format == "csv" ? ".sample.csv" : ".sample.bin");
            save_sample(sample, path.string());
            rep.artifacts.push_back(path);
        }

        if (wants("assemble")) {
            stage = "assemble";
            const auto dict = build_dictionary(cfg);
            auto gram = assemble(dict, sample, target);
            gram.b_bar = compensator(dict, sample, model, target);
            const double dev = (gram.b - *gram.b_bar).lpNorm<Eigen::Infinity>();
            rep.metrics["max_abs_b_minus_b_bar"] = dev;
            j["dictionary"] = {{"fingerprint", dict.fingerprint()},
                               {"names", dict.names()},
                               {"size", dict.size()},
                               {"sup_norm", dict.sup_norm()}};
            j["gram"] = {{"max_abs_b_minus_b_bar", dev}};
            if (files) {
                const auto path = artifact(".gram.json");
                std::ofstream out(path);
                write_gram_json(gram, out);
                rep.artifacts.push_back(path);
            }

            if (wants("estimate")) {
                stage = "estimate";
                const double d = cfg.estimator.d ? *cfg.estimator.d
                                                 : d_delta(dict.sup_norm(), dict.size(), *cfg.estimator.delta,
                                                           cfg.simulation.T);
                LassoConfig lc;
                lc.gamma = cfg.estimator.gamma;
                lc.d = d;
                lc.delta = cfg.estimator.delta;
                lc.tol = cfg.estimator.tol;
                lc.max_iter = cfg.estimator.max_iter;
                const auto sol = solve(gram, cfg.estimator.gamma, d, lc);
                rep.convergence_failure = sol.convergence_warning;
                rep.metrics["objective"] = sol.objective;
                rep.metrics["kkt_residual"] = sol.kkt_residual;
                rep.metrics["active_size"] = static_cast<double>(sol.active_set.size());
                j["estimator"] = {{"gamma", cfg.estimator.gamma},
                                  {"d", d},
                                  {"delta", cfg.estimator.delta ? json(*cfg.estimator.delta) : json(nullptr)},
                                  {"coefficients", vec_json(sol.a_hat)},
                                  {"active_set", sol.active_set},
                                  {"objective", sol.objective},
                                  {"kkt_residual", sol.kkt_residual},
                                  {"iterations", sol.iterations},
                                  {"converged", sol.converged},
                                  {"convergence_warning", sol.convergence_warning},
                                  {"degenerate", sol.degenerate}};
                if (files) {
                    SolutionRecord rec{sol, dict.fingerprint(), dict.names(), target, cfg.simulation.T,
                                       cfg.estimator.gamma, d, cfg.estimator.delta, cfg.simulation.seed};
                    const auto path = artifact(".solution.json");
                    std::ofstream out(path);
                    write_solution_json(rec, out);
                    rep.artifacts.push_back(path);
                }
                rep.checks["kkt"] = sol.converged ? pass_fail(sol.kkt_residual <= 10.0 * cfg.estimator.tol)
                                                  : "not_applicable";
                rep.checks["objective_monotone"] = pass_fail(std::adjacent_find(
                    sol.history.begin(), sol.history.end(),
                    [](double a, double b) { return b > a + 1e-12 * std::max(1.0, std::abs(a)); }) ==
                                                             sol.history.end());

                if (wants("diagnose")) {
                    stage = "diagnose";
                    json dj;
                    const auto inv = inv_check(gram.G, cfg.diagnostics.kappa);
                    json invj = json::object();
                    for (const auto& [k, ok] : inv.satisfies) invj[format_double(k)] = ok;
                    dj["lambda_min"] = inv.lambda_min;
                    dj["inv"] = invj;
                    rep.metrics["lambda_min"] = inv.lambda_min;

                    const auto mode = cfg.diagnostics.re_mode == "exact" ? REMode::exact : REMode::certified;
                    if (mode == REMode::exact && dict.size() > kExactREMaxSize) {
                        dj["re"] = {{"mode", "exact"}, {"skipped", "dictionary larger than exact-mode cap"}};
                    } else {
                        const auto re = re_check(gram.G, cfg.diagnostics.re_c,
                                                 static_cast<std::size_t>(cfg.diagnostics.re_s), mode);
                        dj["re"] = {{"mode", cfg.diagnostics.re_mode},
                                    {"c", cfg.diagnostics.re_c},
                                    {"s", cfg.diagnostics.re_s},
                                    {"value", re.value},
                                    {"lower", re.lower}};
                        rep.metrics["re_value"] = re.value;
                    }

                    const auto exact = exact_coefficients(model, dict, target);
                    const Eigen::VectorXd candidate =
                        exact ? *exact : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dict.size()));
                    const auto s_cand = static_cast<std::size_t>((candidate.array() != 0.0).count());
                    const double gamma = cfg.estimator.gamma;
                    double kappa = inv.lambda_min;
                    std::string kappa_source = "lambda_min(G)";
                    if (gamma > 2.0) {
                        const double c = (gamma + 2.0) / (gamma - 2.0);
                        kappa = re_check(gram.G, c, std::max<std::size_t>(1, s_cand), REMode::certified).value;
                        kappa_source = "certified RE(c(gamma), |S(a)|)";
                    }
                    const auto pred = predictions(dict, sample, sol.a_hat);
                    const auto p = target_intensity(sample, model, target);
                    const auto clipped = clip_predictions(pred);
                    double norm_sq = 0.0, clipped_sq = 0.0;
                    for (std::size_t t = 0; t < p.size(); ++t) {
                        norm_sq += (pred[t] - p[t]) * (pred[t] - p[t]);
                        clipped_sq += (clipped[t] - p[t]) * (clipped[t] - p[t]);
                    }
                    norm_sq /= static_cast<double>(p.size());
                    clipped_sq /= static_cast<double>(p.size());
                    const bool event = dev <= d;
                    dj["norm_sq"] = norm_sq;
                    dj["clipped_norm_sq"] = clipped_sq;
                    dj["compensator_event"] = event;
                    dj["candidate"] = exact ? "exact representation" : "zero";
                    dj["kappa_oracle"] = kappa;
                    dj["kappa_source"] = kappa_source;
                    rep.metrics["norm_sq"] = norm_sq;
                    rep.metrics["compensator_event"] = event ? 1.0 : 0.0;
                    rep.checks["clipping"] = pass_fail(clipped_sq <= norm_sq + 1e-15);
                    if (kappa > 0.0) {
                        const double bound = oracle_bound(dict, sample, model, target, candidate, kappa, gamma, d);
                        dj["oracle_bound"] = bound;
                        rep.metrics["oracle_bound"] = bound;
                        rep.checks["oracle_inequality"] = event ? pass_fail(norm_sq <= bound) : "not_applicable";
                    } else {
                        dj["oracle_bound"] = nullptr;
                        rep.checks["oracle_inequality"] = "not_applicable";
                    }
                    if (exact) {
                        bool covered = true;
                        for (Eigen::Index k = 0; k < candidate.size(); ++k) {
                            if (candidate[k] != 0.0 && sol.a_hat[k] == 0.0) covered = false;
                        }
                        dj["support_recovered"] = covered;
                        rep.metrics["support_recovered"] = covered ? 1.0 : 0.0;
                    }

                    if (cfg.diagnostics.mu) {
                        const double mu = *cfg.diagnostics.mu;
                        const auto val = validate(model, cfg.diagnostics.theta, mu);
                        dj["validation"] = {{"passed", val.all_passed()}, {"failures", val.failures}};
                        const auto fam = kappa_family(dict);
                        if (fam && mu <= 0.5) {
                            const double kp = kappa_prime(*fam, mu, dict.m(), dict.neurons().size(), dict.eta(),
                                                          dict.bins());
                            dj["kappa_prime"] = kp;
                            rep.metrics["kappa_prime"] = kp;
                        }
                        if (dict.family() == DictFamily::hawkes && mu <= 0.5) {
                            try {
                                const double R = hawkes_entry_deviation(
                                    dict.neurons().size(), dict.m(), cfg.simulation.T, cfg.diagnostics.theta,
                                    dict.size(), cfg.estimator.delta.value_or(0.1));
                                dj["re_kappa_hawkes"] = {
                                    {"R_T", R},
                                    {"label", "proof-explicit"},
                                    {"kappa", re_kappa_hawkes(mu, cfg.diagnostics.re_c,
                                                              static_cast<std::size_t>(cfg.diagnostics.re_s), R)}};
                            } catch (const HorizonError& e) {
                                dj["re_kappa_hawkes"] = {{"skipped", e.what()}};
                            }
                        }
                    }

                    if (cfg.diagnostics.concentration != "none" && cfg.diagnostics.replicas > 0) {
                        ConcentrationOptions co;
                        co.T = cfg.simulation.T;
                        co.x = cfg.diagnostics.x;
                        co.theta = cfg.diagnostics.theta;
                        co.seed = cfg.simulation.seed;
                        const auto n = static_cast<std::size_t>(cfg.diagnostics.replicas);
                        const auto r = cfg.diagnostics.concentration == "scalar"
                                           ? scalar_test(model, spike_at(target, 1), n, co)
                                           : matrix_test(model, dict, n, co);
                        dj["concentration"] = {{"mode", r.mode},
                                               {"bound_level", r.bound_level},
                                               {"tail_mass", r.tail_mass},
                                               {"n_replicas", r.n_replicas},
                                               {"n_violations", r.n_violations},
                                               {"empirical_rate", r.empirical_rate},
                                               {"verdict", to_string(r.verdict)}};
                        rep.checks["concentration"] =
                            r.verdict == Verdict::inconclusive ? "not_applicable" : to_string(r.verdict);
                    }
                    j["diagnostics"] = dj;
                }
            }
        }

        json checks = json::object();
        for (const auto& [k, v] : rep.checks) checks[k] = v;
        j["checks"] = checks;
        json arts = json::array();
        for (const auto& a : rep.artifacts) arts.push_back(a.filename().string());
        j["artifacts"] = arts;
        rep.json = j.dump(2) + "\n";
        if (files) {
            const auto path = artifact(".report.json");
            std::ofstream(path) << rep.json;
            rep.artifacts.push_back(path);
        }
        marker.clear();
        return rep;
    } catch (const ConfigError& e) {
        marker.fail(stage, e.what());
        throw StageError(stage, 2, e.what());
    } catch (const ContractViolation& e) {
        marker.fail(stage, e.what());
        throw StageError(stage, 2, e.what());
    } catch (const HorizonError& e) {
        marker.fail(stage, e.what());
        throw StageError(stage, 2, e.what());
    } catch (const ModelError& e) {
        marker.fail(stage, e.what());
        throw StageError(stage, 3, e.what());
    } catch (const RunawayGenealogy& e) {
        marker.fail(stage, e.what());
        throw StageError(stage, 3, e.what());
    } catch (const UnsupportedModel& e) {
        marker.fail(stage, e.what());
        throw StageError(stage, 3, e.what());
    } catch (const std::exception& e) {
        marker.fail(stage, e.what());
        throw StageError(stage, 1, e.what());
    }
}

bool ReplicateSummary::ok() const {
    return std::none_of(checks.begin(), checks.end(), [](const auto& kv) { return kv.second == "fail"; });
}

ReplicateSummary replicate(const ExperimentConfig& cfg, std::size_t n, std::uint64_t base_seed) {
    if (n < 1) throw ConfigError("replicate: n must be >= 1");
    std::vector<std::optional<ExperimentReport>> reports(n);
    std::vector<std::string> errors(n);
    parallel_chunks(n, n, [&](std::size_t r, std::size_t, std::size_t) {
        auto c = cfg;
        c.simulation.seed = base_seed + r;
        try {
            reports[r] = run_experiment(c, RunOptions{false});
        } catch (const std::exception& e) {
            errors[r] = e.what();
        }
    });

    ReplicateSummary s;
    s.n = n;
    json j;
    j["schema_version"] = 1;
    j["kind"] = "replicate_summary";
    j["config_fingerprint"] = config_fingerprint(cfg);
    j["base_seed"] = base_seed;
    j["n"] = n;
    json failures = json::array();
    std::map<std::string, std::array<std::size_t, 3>> counts;
    std::map<std::string, std::vector<double>> values;
    for (std::size_t r = 0; r < n; ++r) {
        if (!reports[r]) {
            ++s.failures;
            failures.push_back({{"seed", base_seed + r}, {"error", errors[r]}});
            continue;
        }
        for (const auto& [k, v] : reports[r]->checks) {
            auto& c = counts[k];
            ++c[v == "pass" ? 0 : v == "fail" ? 1 : 2];
        }
        for (const auto& [k, v] : reports[r]->metrics) values[k].push_back(v);
    }
    j["failures"] = failures;

    json checks = json::object();
    for (const auto& [k, c] : counts) {
        checks[k] = {{"pass", c[0]}, {"fail", c[1]}, {"not_applicable", c[2]}};
        s.checks[k] = c[1] ? "fail" : c[0] ? "pass" : "not_applicable";
    }
    if (cfg.estimator.delta && !cfg.estimator.d && values.contains("compensator_event")) {
        const auto& ev = values["compensator_event"];
        const double rate = std::accumulate(ev.begin(), ev.end(), 0.0) / static_cast<double>(ev.size());
        const double delta = *cfg.estimator.delta;
        const double sigma = std::sqrt(delta * (1.0 - delta) / static_cast<double>(ev.size()));
        const bool ok = rate >= 1.0 - delta - 3.0 * sigma;
        checks["compensator_coverage"] = {{"rate", rate}, {"required", 1.0 - delta - 3.0 * sigma}};
        s.checks["compensator_coverage"] = pass_fail(ok);
    }
    j["checks"] = checks;
    json verdicts = json::object();
    for (const auto& [k, v] : s.checks) verdicts[k] = v;
    j["verdicts"] = verdicts;

    json metrics = json::object();
    for (auto& [k, v] : values) {
        std::sort(v.begin(), v.end());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
        auto q = [&](double p) {
            const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) ;
            return v[std::min(v.size() - 1, idx == 0 ? 0 : idx - 1)];
        };
        metrics[k] = {{"count", v.size()}, {"mean", mean}, {"sd", std::sqrt(var)},
                      {"q05", q(0.05)},    {"q50", q(0.5)},  {"q95", q(0.95)}};
    }
    j["metrics"] = metrics;
    if (n == 1 && reports[0]) j["report"] = json::parse(reports[0]->json);
    s.json = j.dump(2) + "\n";
    return s;
}

}  // namespace kalikow
