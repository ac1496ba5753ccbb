#include "kalikow/model_io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kalikow/text.hpp"

namespace kalikow {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kFamilyKeys{
    {"markov", {"p1", "p0"}},
    {"infinite_order", {"law", "p", "rate", "weights", "p_empty", "tail_tolerance"}},
    {"hawkes", {"homogeneous", "nu", "h", "h_csv"}},
    {"gl_linear", {"nu", "W", "g", "g_geometric", "lag_cutoff"}},
    {"explicit", {"atoms"}},
};

const std::string& need(const ModelConfig& cfg, const std::string& key) {
    auto it = cfg.params.find(key);
    if (it == cfg.params.end()) throw ConfigError("[" + cfg.family + "] missing key '" + key + "'");
    return it->second;
}

std::string get_or(const ModelConfig& cfg, const std::string& key, const std::string& fallback) {
    auto it = cfg.params.find(key);
    return it == cfg.params.end() ? fallback : it->second;
}

std::filesystem::path resolve_path(const ModelConfig& cfg, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || cfg.base_dir.empty() ? path : cfg.base_dir / path;
}

// "1:0.5, 2:0.4"
std::map<NeuronId, double> parse_rates(const std::string& s) {
    std::map<NeuronId, double> out;
    for (const auto& item : split_list(s, ',')) {
        const auto kv = split_list(item, ':');
        if (kv.size() != 2) throw ConfigError("expected neuron:rate, got '" + item + "'");
        if (!out.emplace(NeuronId{parse_int(kv[0])}, parse_double(kv[1])).second) {
            throw ConfigError("duplicate neuron in rate list '" + s + "'");
        }
    }
    return out;
}

KalikowModel build_hawkes(const ModelConfig& cfg) {
    if (parse_bool(get_or(cfg, "homogeneous", "false"))) {
        HomogeneousHawkesSpec spec;
        spec.nu = parse_double(need(cfg, "nu"));
        for (const auto& row : split_list(get_or(cfg, "h", ""), ';')) {
            const auto f = split_list(row, ',');
            if (f.size() != 3) throw ConfigError("homogeneous hawkes term must be offset,lag,weight: '" + row + "'");
            spec.h.push_back({parse_int(f[0]), parse_int(f[1]), parse_double(f[2])});
        }
        return hawkes_model(spec);
    }
    HawkesSpec spec;
    spec.nu = parse_rates(need(cfg, "nu"));
    for (const auto& row : split_list(get_or(cfg, "h", ""), ';')) {
        const auto f = split_list(row, ',');
        if (f.size() != 4) throw ConfigError("hawkes term must be j,i,lag,weight: '" + row + "'");
        spec.h.push_back({NeuronId{parse_int(f[0])}, NeuronId{parse_int(f[1])}, parse_int(f[2]), parse_double(f[3])});
    }
    if (auto it = cfg.params.find("h_csv"); it != cfg.params.end()) {
        std::ifstream in(resolve_path(cfg, it->second));
        if (!in) throw ConfigError("cannot open Hawkes CSV '" + it->second + "'");
        auto rows = read_hawkes_csv(in);
        spec.h.insert(spec.h.end(), rows.begin(), rows.end());
    }
    return hawkes_model(spec);
}

KalikowModel build_gl(const ModelConfig& cfg) {
    GLLinearSpec spec;
    spec.nu = parse_rates(need(cfg, "nu"));
    for (const auto& row : split_list(get_or(cfg, "W", ""), ';')) {
        const auto f = split_list(row, ',');
        if (f.size() != 3) throw ConfigError("GL weight must be j,i,w: '" + row + "'");
        spec.W[{NeuronId{parse_int(f[0])}, NeuronId{parse_int(f[1])}}] = parse_double(f[2]);
    }
    for (const auto& row : split_list(get_or(cfg, "g", ""), ';')) {
        const auto kv = split_list(row, ':');
        if (kv.size() != 2) throw ConfigError("GL lag profile must be j: g1 g2 ...: '" + row + "'");
        std::vector<double> g;
        for (const auto& v : split_ws(kv[1])) g.push_back(parse_double(v));
        spec.g[NeuronId{parse_int(kv[0])}] = std::move(g);
    }
    if (auto it = cfg.params.find("g_geometric"); it != cfg.params.end()) {
        const auto profile = geometric_lag_profile(parse_double(it->second));
        for (const auto& [j, _] : spec.nu) spec.g.try_emplace(j, profile);
    }
    const auto cutoff = parse_int(get_or(cfg, "lag_cutoff", "1024"));
    if (cutoff < 1) throw ConfigError("lag_cutoff must be >= 1");
    return gl_linear_model(spec, static_cast<std::size_t>(cutoff));
}

KalikowModel build_infinite_order(const ModelConfig& cfg) {
    const double tol = parse_double(get_or(cfg, "tail_tolerance", "1e-10"));
    const double p_empty = parse_double(get_or(cfg, "p_empty", "0.5"));
    const auto law = get_or(cfg, "law", "geometric");
    std::vector<double> w;
    if (law == "geometric") {
        w = geometric_range_weights(parse_double(need(cfg, "p")), tol);
    } else if (law == "poisson") {
        w = poisson_range_weights(parse_double(need(cfg, "rate")), tol);
    } else if (law == "weights") {
        for (const auto& v : split_ws(need(cfg, "weights"))) w.push_back(parse_double(v));
    } else {
        throw ConfigError("[infinite_order] law must be geometric, poisson or weights");
    }
    return infinite_order_model(std::move(w), p_empty, tol);
}

// ---- atom list --------------------------------------------------------------

std::string kernel_text(const Kernel& k) {
    return std::visit(
        [](const auto& v) -> std::string {
            using K = std::decay_t<decltype(v)>;
            std::string s;
            if constexpr (std::is_same_v<K, LinearKernel>) {
                s = "linear{" + format_double(v.intercept) + ";";
                for (double b : v.slopes) s += " " + format_double(b);
                return s + "}";
            } else if constexpr (std::is_same_v<K, GatedKernel>) {
                return "gated{" + std::to_string(v.source) + ", " + (v.inhibitory ? "inh" : "exc") + "}";
            } else if constexpr (std::is_same_v<K, TableKernel>) {
                s = "table{";
                for (std::size_t q = 0; q < v.values.size(); ++q) s += (q ? " " : "") + format_double(v.values[q]);
                return s + "}";
            } else {
                throw ContractViolation("kernel '" + v.name + "' is a function and cannot be serialized");
            }
        },
        k.variant());
}

Kernel parse_kernel(const std::string& text, std::size_t arity) {
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        throw ConfigError("bad kernel '" + text + "'");
    }
    const auto kind = trim(text.substr(0, open));
    const auto body = text.substr(open + 1, close - open - 1);
    if (kind == "table") {
        TableKernel k;
        for (const auto& v : split_ws(body)) k.values.push_back(parse_double(v));
        if (k.values.size() != (std::size_t{1} << arity)) {
            throw ConfigError("table kernel needs 2^|v| entries: '" + text + "'");
        }
        return k;
    }
    if (kind == "linear") {
        const auto semi = body.find(';');
        if (semi == std::string::npos) throw ConfigError("linear kernel must read linear{a; b1 ...}");
        LinearKernel k;
        k.intercept = parse_double(body.substr(0, semi));
        for (const auto& v : split_ws(body.substr(semi + 1))) k.slopes.push_back(parse_double(v));
        if (k.slopes.size() != arity) throw ConfigError("linear kernel needs |v| slopes: '" + text + "'");
        return k;
    }
    if (kind == "gated") {
        const auto f = split_list(body, ',');
        if (f.size() != 2 || (f[1] != "exc" && f[1] != "inh")) throw ConfigError("gated kernel: gated{k, exc|inh}");
        const auto src = parse_int(f[0]);
        if (src < 0 || static_cast<std::size_t>(src) >= arity) throw ConfigError("gated kernel source out of range");
        return GatedKernel{static_cast<std::size_t>(src), f[1] == "inh"};
    }
    throw ConfigError("unknown kernel kind '" + kind + "'");
}

}  // namespace

ModelConfig parse_model_config(std::istream& in, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("model file: ") + e.what());
    }
    ModelConfig cfg;
    cfg.base_dir = base_dir;
    cfg.family = tree.get<std::string>("model.family", "");
    if (cfg.family.empty()) throw ConfigError("model file: missing [model] family");
    auto keys = kFamilyKeys.find(cfg.family);
    if (keys == kFamilyKeys.end()) throw ConfigError("model file: unknown family '" + cfg.family + "'");
    if (auto sec = tree.get_child_optional(cfg.family)) {
        for (const auto& [k, v] : *sec) {
            if (!keys->second.contains(k)) throw ConfigError("[" + cfg.family + "] unknown key '" + k + "'");
            cfg.params[k] = v.get_value<std::string>();
        }
    }
    return cfg;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file '" + path.string() + "'");
    return parse_model_config(in, path.parent_path());
}

void write_model_config(const ModelConfig& cfg, std::ostream& out) {
    out << "[model]\nfamily = " << cfg.family << "\n";
    if (!cfg.params.empty()) {
        out << "\n[" << cfg.family << "]\n";
        for (const auto& [k, v] : cfg.params) out << k << " = " << v << "\n";
    }
}

KalikowModel build_model(const ModelConfig& cfg) {
    if (cfg.family == "markov") {
        return markov_model(parse_double(need(cfg, "p1")), parse_double(need(cfg, "p0")));
    }
    if (cfg.family == "infinite_order") return build_infinite_order(cfg);
    if (cfg.family == "hawkes") return build_hawkes(cfg);
    if (cfg.family == "gl_linear") return build_gl(cfg);
    if (cfg.family == "explicit") {
        const auto path = resolve_path(cfg, need(cfg, "atoms"));
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open atom list '" + path.string() + "'");
        return parse_atom_list(in);
    }
    throw ConfigError("unknown model family '" + cfg.family + "'");
}

KalikowModel load_model(const std::filesystem::path& path) {
    if (path.extension() == ".atoms") {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open atom list '" + path.string() + "'");
        return parse_atom_list(in);
    }
    return build_model(load_model_config(path));
}

std::string serialize_atom_list(const KalikowModel& model) {
    std::ostringstream os;
    if (model.is_homogeneous()) os << "homogeneous\n";
    os << "# neuron, weight, [(j,s),...], kernel\n";
    for (auto id : model.representatives()) {
        const auto& d = model.dynamics(id);
        os << id.value << ", " << format_double(d.lambda.empty_weight()) << ", [], table{"
           << format_double(d.p_empty) << "}\n";
        const auto atoms = d.lambda.atoms();
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            os << id.value << ", " << format_double(atoms[k].weight) << ", [";
            const auto sites = atoms[k].neighborhood.sites();
            for (std::size_t q = 0; q < sites.size(); ++q) {
                os << (q ? ", " : "") << "(" << sites[q].neuron.value << "," << sites[q].time << ")";
            }
            os << "], " << kernel_text(d.kernels[k]) << "\n";
        }
    }
    return os.str();
}

KalikowModel parse_atom_list(std::istream& in) {
    struct Partial {
        bool have_empty = false;
        double empty_weight = 0.0;
        double p_empty = 0.0;
        std::vector<Atom> atoms;
        std::vector<Kernel> kernels;
    };
    std::map<NeuronId, Partial> parts;
    bool homogeneous = false;
    bool first = true;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (first && t == "homogeneous") {
            homogeneous = true;
            first = false;
            continue;
        }
        first = false;
        const auto where = " (line " + std::to_string(lineno) + ")";
        const auto lb = t.find('[');
        const auto rb = t.find(']');
        if (lb == std::string::npos || rb == std::string::npos || rb < lb) {
            throw ConfigError("atom list: missing [...] site list" + where);
        }
        const auto head = split_list(t.substr(0, lb), ',');
        if (head.size() != 2) throw ConfigError("atom list: expected 'neuron, weight, [...]'" + where);
        const NeuronId i{parse_int(head[0])};
        const double w = parse_double(head[1]);

        std::vector<Site> sites;
        const auto inner = t.substr(lb + 1, rb - lb - 1);
        std::size_t pos = 0;
        while ((pos = inner.find('(', pos)) != std::string::npos) {
            const auto end = inner.find(')', pos);
            if (end == std::string::npos) throw ConfigError("atom list: unbalanced '('" + where);
            const auto f = split_list(inner.substr(pos + 1, end - pos - 1), ',');
            if (f.size() != 2) throw ConfigError("atom list: site must be (j,s)" + where);
            sites.push_back(Site{NeuronId{parse_int(f[0])}, parse_int(f[1])});
            pos = end + 1;
        }
        auto rest = trim(t.substr(rb + 1));
        if (rest.empty() || rest[0] != ',') throw ConfigError("atom list: missing kernel" + where);
        rest = trim(rest.substr(1));

        auto& part = parts[i];
        try {
            if (sites.empty()) {
                if (part.have_empty) throw ConfigError("atom list: two empty-neighborhood lines for one neuron");
                const auto k = parse_kernel(rest, 0);
                const auto* table = std::get_if<TableKernel>(&k.variant());
                if (!table) throw ConfigError("atom list: the empty neighborhood needs table{p}");
                part.have_empty = true;
                part.empty_weight = w;
                part.p_empty = table->values[0];
            } else {
                Neighborhood v(std::move(sites));
                part.kernels.push_back(parse_kernel(rest, v.cardinality()));
                part.atoms.push_back(Atom{std::move(v), w});
            }
        } catch (const ConfigError& e) {
            throw ConfigError(e.what() + where);
        } catch (const ContractViolation& e) {
            throw ConfigError(e.what() + where);
        }
    }
    if (parts.empty()) throw ConfigError("atom list: no atoms");
    std::map<NeuronId, NeuronDynamics> neurons;
    for (auto& [i, p] : parts) {
        try {
            neurons.emplace(i, NeuronDynamics{NeighborhoodDistribution(p.empty_weight, std::move(p.atoms)), p.p_empty,
                                              std::move(p.kernels)});
        } catch (const ContractViolation& e) {
            throw ConfigError("atom list, neuron " + std::to_string(i.value) + ": " + e.what());
        }
    }
    if (homogeneous) {
        if (neurons.size() != 1) throw ConfigError("atom list: a homogeneous model has exactly one prototype neuron");
        return KalikowModel::homogeneous(std::move(neurons.begin()->second));
    }
    return KalikowModel::finite(std::move(neurons));
}

std::vector<HawkesInteraction> read_hawkes_csv(std::istream& in) {
    std::vector<HawkesInteraction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto f = split_list(t, ',');
        if (f.size() != 4) throw ConfigError("Hawkes CSV line " + std::to_string(lineno) + ": expected j,i,lag,weight");
        if (lineno == 1 && f[0] == "j") continue;
        out.push_back({NeuronId{parse_int(f[0])}, NeuronId{parse_int(f[1])}, parse_int(f[2]), parse_double(f[3])});
    }
    return out;
}

void write_hawkes_csv(const std::vector<HawkesInteraction>& h, std::ostream& out) {
    out << "j,i,lag,weight\n";
    for (const auto& e : h) {
        out << e.source.value << "," << e.target.value << "," << e.lag << "," << format_double(e.weight) << "\n";
    }
}

std::string explain_model_config() {
    return R"([model]
# markov | infinite_order | hawkes | gl_linear | explicit
family = hawkes

[markov]
# single neuron 1; P(X_t = 1 | X_{t-1} = 1) and P(X_t = 1 | X_{t-1} = 0), both required
p1 = 0.3
p0 = 0.6

[infinite_order]
# single neuron 1; the kernel of range l averages the last l bits
# law: geometric (lambda(l) = (1-p)^l p) | poisson (e^-rate rate^l / l!) | weights (explicit list)
law = geometric
p = 0.75
rate = 0.5
# weights = lambda(empty) lambda(1) lambda(2) ...
p_empty = 0.5
tail_tolerance = 1e-10

[hawkes]
homogeneous = false
# spontaneous rate per neuron (homogeneous: a single number)
nu = 1:0.5, 2:0.5
# interactions j,i,lag,weight separated by ';' (homogeneous: offset,lag,weight)
h = 1,2,1,0.2; 2,1,2,-0.1
# optional CSV file with rows j,i,lag,weight
# h_csv = interactions.csv

[gl_linear]
nu = 1:0.3, 2:0.3
# synaptic weights j,i,w; W_{j->j} must be 0
W = 1,2,0.2; 2,1,0.3
# lag profile per source neuron: j: g(1) g(2) ...
# g = 1: 0.5 0.25; 2: 0.5 0.25
# default profile g(l) = (1-r) r^(l-1) for neurons without an explicit g
g_geometric = 0.5
lag_cutoff = 1024

[explicit]
# atom-list file: lines "neuron, weight, [(j,s),...], kernel"
atoms = model.atoms
)";
}

}  // namespace kalikow
