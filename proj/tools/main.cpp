#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kalikow/concentration.hpp"
#include "kalikow/dictionary.hpp"
#include "kalikow/experiment.hpp"
#include "kalikow/gram.hpp"
#include "kalikow/lasso.hpp"
#include "kalikow/model_io.hpp"
#include "kalikow/simulator.hpp"
#include "kalikow/text.hpp"

namespace {

using namespace kalikow;
using json = nlohmann::ordered_json;

enum Exit : int { ok = 0, config = 2, model_invalid = 3, convergence = 4, acceptance = 5 };

std::vector<NeuronId> ids(const std::string& s) {
    std::vector<NeuronId> out;
    for (const auto& p : split_list(s, ',')) out.emplace_back(parse_int(p));
    if (out.empty()) throw ConfigError("empty neuron list");
    return out;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

struct DictArgs {
    std::string kind = "hawkes_spont";
    std::string F;
    std::int64_t m = 0;
    std::int64_t eta = 1;
    std::int64_t L = 0;

    void add(CLI::App* app) {
        app->add_option("--dict", kind, "short_memory | short_memory_spont | cumulative | cumulative_spont | hawkes | hawkes_spont");
        app->add_option("--dict-F", F, "dictionary neurons (default: all sample neurons)");
        app->add_option("--dict-m", m, "dictionary depth (default: sample depth)");
        app->add_option("--eta", eta, "bin width (cumulative)");
        app->add_option("--L", L, "bin count (cumulative; default m / eta)");
    }

    Dictionary build(const std::vector<NeuronId>& fallback_F, std::int64_t fallback_m) const {
        const auto FF = F.empty() ? fallback_F : ids(F);
        const auto mm = m ? m : fallback_m;
        return make_dictionary(kind, FF, mm, eta, L ? L : mm / std::max<std::int64_t>(1, eta));
    }
};

json validation_json(const ValidationReport& r) {
    json n = json::array();
    for (const auto& v : r.neurons) {
        n.push_back({{"neuron", v.neuron.value},
                     {"weight_residual", v.weight_residual},
                     {"truncated_mass", v.truncated_mass},
                     {"mean_size", v.mean_size},
                     {"phi", v.phi},
                     {"p_min", v.p_min},
                     {"p_max", v.p_max},
                     {"exhaustive", v.exhaustive}});
    }
    return {{"schema_version", 1},
            {"kind", "model_validation"},
            {"theta", r.theta},
            {"mu", r.mu},
            {"sup_mean_size", r.sup_mean_size},
            {"sup_phi", r.sup_phi},
            {"mean_size_ok", r.mean_size_ok},
            {"phi_ok", r.phi_ok},
            {"normalization_ok", r.normalization_ok},
            {"kernels_ok", r.kernels_ok},
            {"mu_ok", r.mu_ok},
            {"neurons", n},
            {"failures", r.failures},
            {"passed", r.all_passed()}};
}

std::optional<std::pair<double, std::int64_t>> parse_re(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double c = 1.0;
    std::int64_t sz = 1;
    for (const auto& kv : split_list(s, ',')) {
        const auto p = split_list(kv, '=');
        if (p.size() != 2) throw ConfigError("--re expects c=<float>,s=<int>");
        if (p[0] == "c") {
            c = parse_double(p[1]);
        } else if (p[0] == "s") {
            sz = parse_int(p[1]);
        } else {
            throw ConfigError("--re: unknown field '" + p[0] + "'");
        }
    }
    return std::pair{c, sz};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kalikow-decomposition spike-train toolkit"};
    app.require_subcommand(0, 1);
    bool explain = false;
    app.add_flag("--explain-config", explain, "print every config key with its default");

    // simulate
    auto* sim = app.add_subcommand("simulate", "perfect simulation of a window of a model");
    std::string sim_model, sim_F, sim_out, sim_config;
    std::int64_t sim_m = 1, sim_T = 1000;
    std::uint64_t sim_seed = 1;
    sim->add_option("--model", sim_model, "model file (INI or .atoms)");
    sim->add_option("--config", sim_config, "experiment config; runs the simulate stage only");
    sim->add_option("--F", sim_F, "observed neurons, comma separated");
    sim->add_option("--m", sim_m, "retained past depth");
    sim->add_option("--T", sim_T, "horizon");
    sim->add_option("--seed", sim_seed, "seed");
    sim->add_option("--out", sim_out, "output sample (.csv or binary)");

    // run
    auto* run = app.add_subcommand("run", "run the pipeline described by an experiment config");
    std::string run_config;
    run->add_option("--config", run_config, "experiment config")->required();

    // estimate
    auto* est = app.add_subcommand("estimate", "Lasso estimate of one neuron's transition probability");
    std::string est_sample, est_out, est_gram_out, est_model;
    std::int64_t est_target = 0;
    double est_gamma = 2.0, est_tol = 1e-10;
    std::optional<double> est_delta, est_d;
    std::int64_t est_max_iter = 100000;
    DictArgs est_dict;
    est->add_option("--sample", est_sample, "sample file")->required();
    est->add_option("--target", est_target, "target neuron")->required();
    est_dict.add(est);
    est->add_option("--gamma", est_gamma, "penalty factor");
    auto* o_delta = est->add_option("--delta", est_delta, "confidence level for d = d_delta");
    est->add_option("--d", est_d, "explicit threshold d")->excludes(o_delta);
    est->add_option("--tol", est_tol, "coefficient-change tolerance");
    est->add_option("--max-iter", est_max_iter, "maximum sweeps");
    est->add_option("--model", est_model, "model file; adds the compensator to the gram output");
    est->add_option("--gram-out", est_gram_out, "also write the Gram system");
    est->add_option("--out", est_out, "solution JSON (default stdout)");

    // gram-check
    auto* gc = app.add_subcommand("gram-check", "Inv and RE checks on an assembled Gram matrix");
    std::string gc_in, gc_re, gc_mode = "certified", gc_reference, gc_out;
    std::vector<double> gc_kappa;
    bool gc_require = false;
    gc->add_option("--in", gc_in, "gram JSON")->required();
    gc->add_option("--kappa", gc_kappa, "Inv(kappa) targets");
    gc->add_option("--re", gc_re, "RE parameters c=<float>,s=<int>");
    gc->add_option("--mode", gc_mode, "exact | certified")->check(CLI::IsMember({"exact", "certified"}));
    gc->add_option("--reference", gc_reference, "reference gram JSON for the certified bound");
    gc->add_flag("--require", gc_require, "exit 5 unless every requested check holds");
    gc->add_option("--out", gc_out, "report JSON (default stdout)");

    // concentration
    auto* conc = app.add_subcommand("concentration", "Monte Carlo check of the concentration bounds");
    std::string cc_model, cc_mode = "scalar", cc_F, cc_out;
    std::int64_t cc_T = 10000, cc_target = 0, cc_lag = 1;
    double cc_x = 3.0, cc_theta = 0.5;
    std::size_t cc_replicas = 100;
    std::uint64_t cc_seed = 1;
    DictArgs cc_dict;
    conc->add_option("--model", cc_model, "model file")->required();
    conc->add_option("--mode", cc_mode, "scalar | matrix")->check(CLI::IsMember({"scalar", "matrix"}));
    cc_dict.add(conc);
    conc->add_option("--F", cc_F, "neurons (matrix mode)");
    conc->add_option("--target", cc_target, "neuron j of f = x_{j,-lag} (scalar mode)");
    conc->add_option("--lag", cc_lag, "lag of f (scalar mode)");
    conc->add_option("--T", cc_T, "horizon");
    conc->add_option("--x", cc_x, "deviation parameter");
    conc->add_option("--theta", cc_theta, "Laplace parameter theta");
    conc->add_option("--replicas", cc_replicas, "replicas");
    conc->add_option("--seed", cc_seed, "seed");
    conc->add_option("--out", cc_out, "report JSON (default stdout)");

    // oracle-eval
    auto* oe = app.add_subcommand("oracle-eval", "empirical error of a solution against the oracle bound");
    std::string oe_sample, oe_model, oe_solution, oe_out;
    double oe_kappa = 0.0;
    DictArgs oe_dict;
    oe->add_option("--sample", oe_sample, "sample file")->required();
    oe->add_option("--model", oe_model, "model file")->required();
    oe->add_option("--solution", oe_solution, "solution JSON")->required();
    oe_dict.add(oe);
    oe->add_option("--kappa", oe_kappa, "RE/Inv constant (default: lambda_min of G)");
    oe->add_option("--out", oe_out, "report JSON (default stdout)");

    // replicate
    auto* rp = app.add_subcommand("replicate", "run a config over consecutive seeds and aggregate");
    std::string rp_config, rp_out;
    std::size_t rp_n = 10;
    std::optional<std::uint64_t> rp_seed;
    rp->add_option("--config", rp_config, "experiment config")->required();
    rp->add_option("--n", rp_n, "number of seeds");
    rp->add_option("--base-seed", rp_seed, "first seed (default: the config seed)");
    rp->add_option("--out", rp_out, "summary JSON (default stdout)");

    // validate-model
    auto* vm = app.add_subcommand("validate-model", "check the standing assumptions of a model");
    std::string vm_model, vm_out;
    double vm_theta = 0.5, vm_mu = 0.0;
    vm->add_option("--model", vm_model, "model file")->required();
    vm->add_option("--theta", vm_theta, "Laplace parameter theta");
    vm->add_option("--mu", vm_mu, "required lower bound mu <= p_i <= 1 - mu");
    vm->add_option("--out", vm_out, "report JSON (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return Exit::config;
    }

    try {
        if (explain) {
            std::cout << explain_experiment_config();
            return Exit::ok;
        }
        if (*sim) {
            if (!sim_config.empty()) {
                auto cfg = load_experiment_config(sim_config);
                cfg.output.stages = {"simulate"};
                run_experiment(cfg);
                return Exit::ok;
            }
            if (sim_model.empty() || sim_F.empty() || sim_out.empty()) {
                throw ConfigError("simulate needs --config, or --model, --F and --out");
            }
            const auto model = load_model(sim_model);
            const auto s = sample_window(model, ids(sim_F), sim_m, sim_T, sim_seed);
            save_sample(s, sim_out);
            return Exit::ok;
        }
        if (*run) {
            const auto rep = run_experiment(load_experiment_config(run_config));
            std::cout << rep.json;
            if (rep.convergence_failure) return Exit::convergence;
            return rep.checks_passed() ? Exit::ok : Exit::acceptance;
        }
        if (*est) {
            const auto s = load_sample(est_sample);
            const auto dict = est_dict.build(s.neurons(), s.m());
            auto g = assemble(dict, s, NeuronId{est_target});
            if (!est_model.empty()) g.b_bar = compensator(dict, s, load_model(est_model), NeuronId{est_target});
            const double d = est_d ? *est_d : d_delta(dict.sup_norm(), dict.size(), est_delta.value_or(0.1), s.T());
            LassoConfig lc;
            lc.gamma = est_gamma;
            lc.d = d;
            lc.delta = est_d ? std::nullopt : std::optional<double>(est_delta.value_or(0.1));
            lc.tol = est_tol;
            lc.max_iter = est_max_iter;
            const auto sol = solve(g, est_gamma, d, lc);
            if (!est_gram_out.empty()) {
                std::ofstream out(est_gram_out);
                write_gram_json(g, out);
            }
            std::ostringstream os;
            write_solution_json({sol, dict.fingerprint(), dict.names(), NeuronId{est_target}, s.T(), est_gamma, d,
                                 lc.delta, s.seed()},
                                os);
            emit(os.str(), est_out);
            return sol.convergence_warning ? Exit::convergence : Exit::ok;
        }
        if (*gc) {
            std::ifstream in(gc_in);
            if (!in) throw ConfigError("cannot open '" + gc_in + "'");
            const auto g = read_gram_json(in);
            const auto inv = inv_check(g.G, gc_kappa);
            json j;
            j["schema_version"] = 1;
            j["kind"] = "gram_check";
            j["dict_fingerprint"] = g.dict_fingerprint;
            j["lambda_min"] = inv.lambda_min;
            bool all = true;
            json invj = json::object();
            for (const auto& [k, holds] : inv.satisfies) {
                invj[format_double(k)] = holds;
                all = all && holds;
            }
            j["inv"] = invj;
            if (const auto re = parse_re(gc_re)) {
                std::optional<Eigen::MatrixXd> ref;
                if (!gc_reference.empty()) {
                    std::ifstream rin(gc_reference);
                    if (!rin) throw ConfigError("cannot open '" + gc_reference + "'");
                    ref = read_gram_json(rin).G;
                }
                const auto mode = gc_mode == "exact" ? REMode::exact : REMode::certified;
                const auto r = re_check(g.G, re->first, static_cast<std::size_t>(re->second), mode, ref);
                j["re"] = {{"mode", gc_mode}, {"c", re->first}, {"s", re->second}, {"value", r.value},
                           {"lower", r.lower}, {"R", r.R},     {"worst_support", r.worst_support}};
                all = all && r.lower > 0.0;
            }
            j["passed"] = all;
            emit(j.dump(2) + "\n", gc_out);
            return gc_require && !all ? Exit::acceptance : Exit::ok;
        }
        if (*conc) {
            const auto model = load_model(cc_model);
            ConcentrationOptions co;
            co.T = cc_T;
            co.x = cc_x;
            co.theta = cc_theta;
            co.seed = cc_seed;
            ConcentrationReport r;
            if (cc_mode == "scalar") {
                r = scalar_test(model, spike_at(NeuronId{cc_target}, cc_lag), cc_replicas, co);
            } else {
                if (cc_F.empty()) throw ConfigError("matrix mode needs --F");
                const auto F = ids(cc_F);
                const auto dict = cc_dict.build(F, cc_dict.m ? cc_dict.m : 1);
                r = matrix_test(model, dict, cc_replicas, co);
            }
            std::ostringstream os;
            write_report_json(r, os);
            emit(os.str(), cc_out);
            return r.verdict == Verdict::fail ? Exit::acceptance : Exit::ok;
        }
        if (*oe) {
            const auto s = load_sample(oe_sample);
            const auto model = load_model(oe_model);
            std::ifstream in(oe_solution);
            if (!in) throw ConfigError("cannot open '" + oe_solution + "'");
            const auto rec = read_solution_json(in);
            const auto dict = oe_dict.build(s.neurons(), s.m());
            if (dict.fingerprint() != rec.dict_fingerprint) {
                throw ConfigError("solution was fitted with " + rec.dict_fingerprint + ", not " + dict.fingerprint());
            }
            const auto g = assemble(dict, s, rec.target);
            const auto bbar = compensator(dict, s, model, rec.target);
            const double kappa = oe_kappa > 0.0 ? oe_kappa : inv_check(g.G).lambda_min;
            const auto exact = exact_coefficients(model, dict, rec.target);
            const Eigen::VectorXd cand = exact ? *exact : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dict.size()));
            const double norm_sq = empirical_norm_sq(dict, s, rec.solution.a_hat, &model, rec.target);
            const double dev = (g.b - bbar).lpNorm<Eigen::Infinity>();
            json j;
            j["schema_version"] = 1;
            j["kind"] = "oracle_eval";
            j["dict_fingerprint"] = dict.fingerprint();
            j["norm_sq"] = norm_sq;
            j["max_abs_b_minus_b_bar"] = dev;
            j["compensator_event"] = dev <= rec.d;
            j["kappa"] = kappa;
            j["candidate"] = exact ? "exact representation" : "zero";
            bool holds = true;
            if (kappa > 0.0) {
                const double bound = oracle_bound(dict, s, model, rec.target, cand, kappa, rec.gamma, rec.d);
                j["oracle_bound"] = bound;
                holds = dev > rec.d || norm_sq <= bound;
            } else {
                j["oracle_bound"] = nullptr;
            }
            j["holds"] = holds;
            emit(j.dump(2) + "\n", oe_out);
            return holds ? Exit::ok : Exit::acceptance;
        }
        if (*rp) {
            const auto cfg = load_experiment_config(rp_config);
            const auto sum = replicate(cfg, rp_n, rp_seed.value_or(cfg.simulation.seed));
            emit(sum.json, rp_out);
            return sum.ok() ? Exit::ok : Exit::acceptance;
        }
        if (*vm) {
            const auto model = load_model(vm_model);
            const auto r = validate(model, vm_theta, vm_mu);
            emit(validation_json(r).dump(2) + "\n", vm_out);
            return r.all_passed() ? Exit::ok : Exit::model_invalid;
        }
        std::cout << app.help();
        return Exit::ok;
    } catch (const StageError& e) {
        std::cerr << "error in stage " << e.what() << "\n";
        return e.code;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return Exit::config;
    } catch (const ContractViolation& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return Exit::config;
    } catch (const HorizonError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return Exit::config;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return Exit::model_invalid;
    } catch (const RunawayGenealogy& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return Exit::model_invalid;
    } catch (const UnsupportedModel& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return Exit::model_invalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
