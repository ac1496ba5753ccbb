#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kalikow/concentration.hpp"
#include "kalikow/gram.hpp"
#include "kalikow/lasso.hpp"
#include "kalikow/models.hpp"
#include "support.hpp"

using namespace kalikow;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using kt::ids;
namespace fs = std::filesystem;

namespace {

const NeuronId n1{1}, n2{2}, n3{3}, n4{4};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double binom_sigma(double p, double n) { return std::sqrt(std::clamp(p, 0.0, 1.0) * (1.0 - std::clamp(p, 0.0, 1.0)) / n); }

HawkesSpec zoo_hawkes() {
    return HawkesSpec{{{n1, 0.3}, {n2, 0.4}, {n3, 0.4}},
                      {{n2, n1, 1, 0.25}, {n3, n1, 2, -0.15}, {n1, n2, 1, 0.2}, {n1, n3, 3, 0.1}}};
}

GLLinearSpec zoo_gl() {
    GLLinearSpec s;
    s.nu = {{n1, 0.4}, {n2, 0.5}};
    s.W = {{{n2, n1}, 0.3}, {{n1, n2}, -0.2}};
    s.g = {{n1, {0.5, 0.3, 0.2}}, {n2, {0.6, 0.25, 0.15}}};
    return s;
}

HomogeneousHawkesSpec zoo_homogeneous() {
    HomogeneousHawkesSpec s;
    s.nu = 0.3;
    s.h = {{-1, 1, 0.2}, {1, 2, -0.1}};
    return s;
}

/// Every p_i stays in [0.3, 0.7].
HawkesSpec balanced_hawkes() {
    return HawkesSpec{{{n1, 0.5}, {n2, 0.5}, {n3, 0.5}},
                      {{n2, n1, 1, 0.15}, {n3, n1, 2, -0.05}, {n1, n2, 1, 0.1}, {n3, n2, 3, -0.1}, {n1, n3, 2, 0.2}}};
}

// 1 ------------------------------------------------------------------------

Outcome markov_stationarity() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = markov_model(0.3, 0.6);
    const std::size_t n = 100'000;
    std::size_t ones = 0;
    for (std::size_t r = 0; r < n; ++r) ones += perfect_sample(model, Site{n1, 0}, replica_seed(11, r));
    const double elapsed = seconds_since(t0);
    const double p = static_cast<double>(ones) / static_cast<double>(n);
    const double err = std::abs(p - 6.0 / 13.0);
    return {err <= 0.01 && elapsed < 10.0, fmt("P(X=1)=%.5f |err|=%.5f tol=0.01, %.2fs (limit 10s)", p, err, elapsed)};
}

// 2, 3 ---------------------------------------------------------------------

struct ZooEntry {
    std::string name;
    KalikowModel model;
    NeuronId neuron;
};

std::vector<ZooEntry> zoo() {
    return {
        {"markov", markov_model(0.3, 0.6), n1},
        {"geometric(0.75)", infinite_order_model(geometric_range_weights(0.75), 0.5), n1},
        {"poisson(0.5)", infinite_order_model(poisson_range_weights(0.5), 0.5), n1},
        {"hawkes", hawkes_model(zoo_hawkes()), n1},
        {"gl_linear", gl_linear_model(zoo_gl(), 8), n1},
        {"homogeneous_hawkes", hawkes_model(zoo_homogeneous()), NeuronId{0}},
    };
}

Outcome genealogy_tails() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (const auto& z : zoo()) {
        const auto stats = genealogy_tail_stats(z.model, z.neuron, 1'000'000, 15, 21);
        double worst = -1e9, p_min = 1.0;
        for (const auto& row : stats.rows) {
            ok = ok && !row.violation;
            worst = std::max(worst, (row.empirical - row.bound) / std::max(row.sigma, 1e-300));
            p_min = std::min(p_min, row.p_value);
        }
        detail += fmt("%s mbar=%.3f max z=%.2f min p=%.3g; ", z.name.c_str(), sup_mean_size(z.model), worst, p_min);
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 60.0;
    return {ok, detail + fmt("%.1fs (limit 60s)", elapsed)};
}

Outcome laplace_bounds() {
    struct Case {
        std::string name;
        KalikowModel model;
        NeuronId neuron;
        double theta;
    };
    const std::vector<Case> cases{
        {"markov", markov_model(0.3, 0.6), n1, 0.5},
        {"geometric(0.75)", infinite_order_model(geometric_range_weights(0.75), 0.5), n1, 0.3},
        {"hawkes", hawkes_model(zoo_hawkes()), n1, 0.5},
    };
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        const double phi_max = sup_phi(c.model, c.theta);
        const auto est = empirical_laplace(c.model, c.neuron, c.theta, 100'000, 31);
        const bool fine = phi_max < 0.9 && est.psi_hat <= est.psi_bound + 3.0 * est.sigma;
        ok = ok && fine;
        detail += fmt("%s theta=%.2f phi=%.3f psi=%.4f bound=%.4f; ", c.name.c_str(), c.theta, phi_max, est.psi_hat,
                      est.psi_bound);
    }
    return {ok, detail};
}

// 4 ------------------------------------------------------------------------

Outcome decomposition_identity() {
    struct Case {
        std::string name;
        KalikowModel model;
    };
    const std::vector<Case> cases{
        {"markov", markov_model(0.3, 0.6)},
        {"hawkes", hawkes_model(zoo_hawkes())},
        {"gl_linear", gl_linear_model(zoo_gl(), 8)},
    };
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        for (const auto i : c.model.representatives()) {
            const auto id = kt::exhaustive_identity(c.model, i);
            ok = ok && id.bits <= 12 && id.max_error <= 1e-12 && id.outside_reads == 0;
            detail += fmt("%s[%lld] bits=%zu err=%.1e; ", c.name.c_str(), static_cast<long long>(i.value), id.bits,
                          id.max_error);
        }
    }
    return {ok, detail};
}

// 5 ------------------------------------------------------------------------

Outcome gram_oracle() {
    const std::vector<std::string> kinds{"short_memory", "short_memory_spont", "cumulative", "cumulative_spont",
                                         "hawkes",       "hawkes_spont"};
    const auto model = hawkes_model(zoo_hawkes());
    CounterRng rng(51);
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        kt::DictSpec d;
        d.kind = kinds[static_cast<std::size_t>(rng.uniform() * kinds.size())];
        d.F = rng.bernoulli(0.5) ? ids({1, 2, 3}) : ids({2, 3});
        if (d.kind.starts_with("cumulative")) {
            d.eta = 1 + static_cast<std::int64_t>(rng.uniform() * 3);
            d.L = 1 + static_cast<std::int64_t>(rng.uniform() * 3);
            d.m = d.eta * d.L;
        } else {
            d.m = 1 + static_cast<std::int64_t>(rng.uniform() * 5);
        }
        const std::int64_t T = 50 + static_cast<std::int64_t>(rng.uniform() * 2000);
        const auto seed = rng.next_bits();
        const auto s = rng.bernoulli(0.5) ? kt::coin_sample(ids({1, 2, 3}), d.m, T, seed, 0.2 + 0.6 * rng.uniform())
                                          : sample_window(model, ids({1, 2, 3}), d.m, T, seed);
        const auto target = NeuronId{1 + static_cast<std::int64_t>(rng.uniform() * 3)};
        const auto fast = assemble(kt::build(d), s, target);
        const auto slow = kt::naive_gram(d, s, target);
        worst = std::max({worst, (fast.G - slow.G).cwiseAbs().maxCoeff(), (fast.b - slow.b).cwiseAbs().maxCoeff()});
    }
    return {worst <= 1e-12, fmt("max |assemble - naive| = %.2e over 50 instances, tol 1e-12", worst)};
}

// 6 ------------------------------------------------------------------------

Outcome expected_gram() {
    const std::int64_t T = 100'000;
    const auto F = ids({1, 2, 3});
    const std::int64_t m = 2;
    const double p = 1.0 - std::pow(0.5, static_cast<double>(m));
    const auto s = kt::coin_sample(F, 4, T, 61);
    const auto sm = assemble(short_memory(F, m), s, n1);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sm.G);
    const auto& ev = es.eigenvalues();
    const double small = p - p * p, big = p + (static_cast<double>(F.size()) - 1.0) * p * p;
    double err_sm = std::abs(ev[ev.size() - 1] - big);
    for (Eigen::Index k = 0; k + 1 < ev.size(); ++k) err_sm = std::max(err_sm, std::abs(ev[k] - small));
    // Top eigenvector is the constant direction.
    const VectorXd top = es.eigenvectors().col(ev.size() - 1);
    const double align = std::abs(top.sum()) / std::sqrt(static_cast<double>(F.size()));

    const std::int64_t eta = 2;
    const auto cu = assemble(cumulative(ids({1, 2}), eta, 2), s, n1);
    const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(cu.G).eigenvalues()[0];
    const double err_cu = std::abs(lmin - static_cast<double>(eta) / 4.0);
    return {err_sm <= 0.01 && err_cu <= 0.01 && align >= 0.99,
            fmt("short-memory eigen err=%.4f (p-p^2=%.4f, p+(|F|-1)p^2=%.4f, alignment %.4f); "
                "cumulative eta=2 lambda_min=%.4f vs %.2f err=%.4f; tol 0.01",
                err_sm, small, big, align, lmin, eta / 4.0, err_cu)};
}

// 7 ------------------------------------------------------------------------

Outcome sandwich() {
    const double mu = 0.3;
    const auto model = hawkes_model(balanced_hawkes());
    const auto report = validate(model, 0.5, mu);
    if (!report.mu_ok) return {false, "model does not satisfy mu = 0.3"};
    const auto F = ids({1, 2, 3});
    const std::int64_t m = 4, T = 200'000, batches = 50;
    const auto s = sample_window(model, F, m, T, 71);
    CounterRng rng(72);
    bool ok = true;
    std::size_t n_below = 0, n_above = 0;
    double min_slack = 1e9;
    for (int f = 0; f < 20; ++f) {
        const std::size_t size = 1 + static_cast<std::size_t>(rng.uniform() * 4);
        std::vector<Site> sites;
        while (sites.size() < size) {
            const Site st{F[static_cast<std::size_t>(rng.uniform() * F.size())],
                          -1 - static_cast<std::int64_t>(rng.uniform() * m)};
            if (std::find(sites.begin(), sites.end(), st) == sites.end()) sites.push_back(st);
        }
        std::vector<int> pattern;
        for (std::size_t k = 0; k < size; ++k) pattern.push_back(rng.bernoulli(0.5));
        const auto cyl = cylinder_indicator(sites, pattern);
        std::vector<double> batch(batches, 0.0);
        const std::int64_t per = T / batches;
        for (std::int64_t t = 1; t <= per * batches; ++t) batch[static_cast<std::size_t>((t - 1) / per)] += cyl.eval(s, t);
        double mean = 0.0;
        for (auto& b : batch) mean += (b /= static_cast<double>(per));
        mean /= static_cast<double>(batches);
        double var = 0.0;
        for (auto b : batch) var += (b - mean) * (b - mean);
        const double sigma = std::sqrt(var / static_cast<double>(batches - 1) / static_cast<double>(batches));
        const double e_b = std::pow(0.5, static_cast<double>(size));
        const double lower = std::pow(2.0 * mu, static_cast<double>(size)) * e_b;
        const double upper = std::pow(2.0 * (1.0 - mu), static_cast<double>(size)) * e_b;
        const bool lo = lower - 3.0 * sigma <= mean, hi = mean <= upper + 3.0 * sigma;
        n_below += !lo;
        n_above += !hi;
        ok = ok && lo && hi;
        min_slack = std::min({min_slack, mean - lower, upper - mean});
    }
    return {ok, fmt("20 cylinders, %zu below lower, %zu above upper, min slack %.4f (T=2e5, 50 batches)", n_below,
                    n_above, min_slack)};
}

// 8, 10 --------------------------------------------------------------------

struct RunStats {
    double max_dev = 0.0;
    double d = 0.0;
};

RunStats compensator_deviation(const KalikowModel& model, const Dictionary& dict, const SpikeSample& s, NeuronId i,
                               double delta, GramSystem& g) {
    g = assemble(dict, s, i);
    const VectorXd bbar = compensator(dict, s, model, i);
    return {(g.b - bbar).cwiseAbs().maxCoeff(), d_delta(dict.sup_norm(), dict.size(), delta, s.T())};
}

Outcome threshold_coverage() {
    const auto model = hawkes_model(zoo_hawkes());
    const auto F = ids({1, 2, 3});
    const auto dict = hawkes_dict(F, 3, true);
    const std::size_t runs = 1000;
    const std::int64_t T = 10'000;
    WindowOptions wo;
    wo.record_intensity = {n1};
    std::size_t hits = 0;
    double worst_ratio = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
        const auto s = sample_window(model, F, 3, T, replica_seed(81, r), wo);
        GramSystem g;
        const auto st = compensator_deviation(model, dict, s, n1, 0.1, g);
        hits += st.max_dev > st.d;
        worst_ratio = std::max(worst_ratio, st.max_dev / st.d);
    }
    const double rate = static_cast<double>(hits) / static_cast<double>(runs);
    const double limit = 0.1 + 3.0 * binom_sigma(0.1, static_cast<double>(runs));
    return {rate <= limit, fmt("violation rate %.4f <= %.4f (delta=0.1, %zu runs, T=1e4, max |b-bbar|/d = %.3f)", rate,
                               limit, runs, worst_ratio)};
}

Outcome lasso_correctness() {
    double soft_err = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const VectorXd b = kt::random_vector(10, 900 + seed);
        VectorXd diag = kt::random_vector(10, 950 + seed).cwiseAbs().array() + 0.1;
        GramSystem g;
        g.G = diag.asDiagonal();
        g.b = b;
        g.T = 1;
        const double d = 0.05 * static_cast<double>(seed % 7);
        const auto sol = solve(g, 2.0, d);
        for (Eigen::Index k = 0; k < b.size(); ++k) {
            const double t = 2.0 * d / 2.0;
            const double want = std::copysign(std::max(std::abs(b[k]) - t, 0.0), b[k]) / diag[k];
            soft_err = std::max(soft_err, std::abs(sol.a_hat[k] - want));
        }
    }
    double obj_err = 0.0, kkt = 0.0;
    std::size_t converged = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto n = 4 + seed % 9;
        const MatrixXd G = kt::random_psd(n, 1000 + seed, 0.02 + 0.01 * static_cast<double>(seed % 4));
        const VectorXd b = kt::random_vector(n, 1100 + seed, 0.5);
        GramSystem g;
        g.G = G;
        g.b = b;
        g.T = 1;
        const double d = 0.02 + 0.01 * static_cast<double>(seed % 5);
        const auto sol = solve(g, 2.0, d);
        const VectorXd ref = kt::prox_gradient_oracle(G, b, 2.0 * d);
        obj_err = std::max(obj_err, std::abs(sol.objective - kt::lasso_value(G, b, 2.0 * d, ref)));
        if (sol.converged) {
            ++converged;
            kkt = std::max(kkt, sol.kkt_residual);
        }
    }
    return {soft_err <= 1e-12 && obj_err <= 1e-8 && kkt <= 1e-9,
            fmt("(a) soft-threshold err %.1e tol 1e-12; (b) objective gap %.1e tol 1e-8; (c) KKT %.1e tol 1e-9 on "
                "%zu/20 converged",
                soft_err, obj_err, kkt, converged)};
}

Outcome oracle_inequality() {
    const HawkesSpec spec{{{n1, 0.3}, {n2, 0.35}, {n3, 0.4}, {n4, 0.3}}, {{n2, n1, 1, 0.25}, {n3, n1, 2, -0.15}}};
    const auto model = hawkes_model(spec);
    const auto F = ids({1, 2, 3, 4});
    const std::int64_t m = 2, T = 10'000;
    const auto dict = hawkes_dict(F, m, true);
    const auto exact = exact_coefficients(model, dict, n1);
    if (!exact) return {false, "model is not representable on the dictionary"};
    std::vector<std::size_t> truth;
    for (Eigen::Index k = 0; k < exact->size(); ++k)
        if ((*exact)[k] != 0.0) truth.push_back(static_cast<std::size_t>(k));
    WindowOptions wo;
    wo.record_intensity = {n1};
    const std::size_t runs = 200;
    std::size_t gated = 0, holds = 0, recovered = 0, certified_positive = 0;
    double worst_ratio = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
        const auto s = sample_window(model, F, m, T, replica_seed(101, r), wo);
        GramSystem g;
        const auto st = compensator_deviation(model, dict, s, n1, 0.1, g);
        const auto sol = solve(g, 2.0, st.d);
        const double kappa = inv_check(g.G).lambda_min;
        certified_positive += re_check(g.G, 1.0, truth.size(), REMode::certified).value > 0.0;
        bool covers = true;
        for (auto k : truth) covers = covers && sol.a_hat[static_cast<Eigen::Index>(k)] != 0.0;
        recovered += covers;
        if (st.max_dev > st.d || !(kappa > 0.0)) continue;
        ++gated;
        const double err = empirical_norm_sq(dict, s, sol.a_hat, &model, n1);
        const double bound = oracle_bound(dict, s, model, n1, *exact, kappa, 2.0, st.d);
        holds += err <= bound;
        worst_ratio = std::max(worst_ratio, err / bound);
    }
    const double recovery = static_cast<double>(recovered) / static_cast<double>(runs);
    return {gated > 0 && holds == gated,
            fmt("inequality held on %zu/%zu gated runs (max error/bound %.3f); support recovery %.1f%% (reported, "
                "target 80%%); certified RE > 0 on %zu runs",
                holds, gated, worst_ratio, 100.0 * recovery, certified_positive)};
}

// 11 -----------------------------------------------------------------------

Outcome concentration_tails() {
    ConcentrationOptions opts;
    opts.T = 10'000;
    opts.seed = 111;
    const auto sc = scalar_test(markov_model(0.3, 0.6), spike_at(n1, 1), 500, opts);
    const double sc_limit = std::min(sc.tail_mass, 1.0) + 3.0 * sc.sigma;
    const auto model = hawkes_model(HawkesSpec{{{n1, 0.3}, {n2, 0.4}}, {{n2, n1, 1, 0.2}, {n1, n2, 2, -0.1}}});
    opts.seed = 112;
    opts.x = 6.0;
    const auto mx = matrix_test(model, hawkes_dict(ids({1, 2}), 3, false), 200, opts);
    const double mx_limit = std::min(mx.tail_mass, 1.0) + 3.0 * mx.sigma;
    return {sc.empirical_rate <= sc_limit && mx.empirical_rate <= mx_limit && mx.norm_inconsistencies == 0,
            fmt("scalar rate %.4f <= %.4f (tail %.3g, max dev %.4f vs level %.4f); matrix rate %.4f <= %.4f (tail "
                "%.3g, max dev %.4f vs level %.4f)",
                sc.empirical_rate, sc_limit, sc.tail_mass, sc.max_deviation, sc.bound_level, mx.empirical_rate,
                mx_limit, mx.tail_mass, mx.max_deviation, mx.bound_level)};
}

// 12 -----------------------------------------------------------------------

Outcome re_consistency() {
    std::vector<MatrixXd> instances;
    for (std::uint64_t seed = 0; seed < 12; ++seed) instances.push_back(kt::random_psd(3 + seed % 8, 1200 + seed));
    const auto model = hawkes_model(zoo_hawkes());
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto s = sample_window(model, ids({1, 2, 3}), 3, 2000, 1300 + seed);
        instances.push_back(assemble(hawkes_dict(ids({1, 2, 3}), 3, seed % 2 == 0), s, n1).G);
    }
    std::size_t checked = 0, bad = 0;
    for (const auto& G : instances) {
        for (double c : {0.5, 1.0, 3.0}) {
            for (std::size_t sz : {1u, 2u, 3u}) {
                const auto ex = re_check(G, c, sz, REMode::exact);
                const auto ce = re_check(G, c, sz, REMode::certified);
                ++checked;
                bad += ex.value < ce.value - 1e-12;
            }
        }
    }
    double worst = 0.0;
    for (double c : {0.1, 1.0, 3.0, 10.0})
        for (std::size_t sz : {1u, 2u, 5u, 20u}) worst = std::max(worst, std::abs(re_kappa_hawkes(0.5, c, sz, 0.0) - 0.25));
    return {bad == 0 && worst <= 1e-15,
            fmt("exact >= certified on %zu/%zu; |re_kappa_hawkes(0.5, c, s, 0) - 0.25| <= %.1e", checked - bad, checked,
                worst)};
}

// 13 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() != ".ini" && e.path().extension() != ".log")
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

Outcome cli_determinism() {
#ifndef KALIKOW_CLI_PATH
    return {false, "CLI binary not built"};
#else
    const fs::path cli = KALIKOW_CLI_PATH;
    const auto dir = fs::temp_directory_path() / "kalikow_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream(dir / "model.ini") << "[model]\nfamily = hawkes\n\n[hawkes]\nnu = 1:0.3, 2:0.4, 3:0.4\n"
                                            "h = 2,1,1,0.25; 3,1,2,-0.15; 1,2,1,0.2\n";
        std::ofstream(dir / "exp.ini") << "[model]\nfamily = hawkes\n\n[hawkes]\nnu = 1:0.3, 2:0.4, 3:0.4\n"
                                          "h = 2,1,1,0.25; 3,1,2,-0.15; 1,2,1,0.2\n\n[simulation]\nF = 1, 2, 3\nm = 2\n"
                                          "T = 3000\nseed = 9\n\n[dictionary]\nkind = hawkes_spont\n\n[estimator]\n"
                                          "target = 1\ngamma = 2\ndelta = 0.1\n\n[output]\ndir = out\n";
    }
    const std::vector<std::string> steps{
        "validate-model --model model.ini --theta 0.5 --out validate.json",
        "simulate --model model.ini --F 1,2,3 --m 3 --T 3000 --seed 7 --out sample.csv",
        "simulate --config exp.ini",
        "estimate --sample sample.csv --target 1 --dict hawkes_spont --delta 0.1 --model model.ini --gram-out "
        "gram.json --out solution.json",
        "gram-check --in gram.json --kappa 0.01 --re c=1,s=2 --mode exact --out gram_check.json",
        "concentration --model model.ini --mode scalar --target 1 --lag 1 --T 2000 --replicas 20 --seed 3 --out "
        "scalar.json",
        "concentration --model model.ini --mode matrix --F 1,2 --T 2000 --replicas 10 --seed 4 --out matrix.json",
        "oracle-eval --sample sample.csv --model model.ini --solution solution.json --out oracle.json",
        "replicate --config exp.ini --n 3 --out replicate.json",
        "run --config exp.ini",
    };
    std::map<std::string, std::string> first;
    std::size_t failures = 0, differing = 0;
    std::string detail;
    for (int round = 0; round < 2; ++round) {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() != ".ini") fs::remove_all(e.path());
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const auto cmd = "cd \"" + dir.string() + "\" && \"" + cli.string() + "\" " + steps[k] + " > stdout_" +
                             std::to_string(k) + ".txt 2> stderr_" + std::to_string(k) + ".log";
            const int rc = std::system(cmd.c_str());
            if (rc != 0) {
                ++failures;
                detail += "exit " + std::to_string(rc) + " from '" + steps[k].substr(0, steps[k].find(' ')) + "'; ";
            }
        }
        const auto snap = snapshot(dir);
        if (round == 0) {
            first = snap;
        } else {
            for (const auto& [name, bytes] : first) {
                const auto it = snap.find(name);
                if (it == snap.end() || it->second != bytes) {
                    ++differing;
                    detail += name + " differs; ";
                }
            }
            differing += snap.size() != first.size();
        }
    }
    return {failures == 0 && differing == 0 && !first.empty(),
            detail + fmt("%zu subcommand runs x 2, %zu output files compared, %zu differ", steps.size(), first.size(),
                         differing)};
#endif
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"markov stationarity", markov_stationarity},
        {"genealogy tail", genealogy_tails},
        {"laplace bound", laplace_bounds},
        {"decomposition identity", decomposition_identity},
        {"gram assembly oracle", gram_oracle},
        {"expected gram closed forms", expected_gram},
        {"change-of-measure sandwich", sandwich},
        {"threshold coverage", threshold_coverage},
        {"lasso correctness", lasso_correctness},
        {"oracle inequality", oracle_inequality},
        {"concentration tails", concentration_tails},
        {"RE consistency", re_consistency},
        {"CLI determinism", cli_determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << k + 1 << " " << criteria[k].first << ": "
                  << o.detail << fmt(" [%.1fs]", seconds_since(t0)) << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
