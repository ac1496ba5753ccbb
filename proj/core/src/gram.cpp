#include "kalikow/gram.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "json.hpp"
#include "kalikow/parallel.hpp"

namespace kalikow {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr std::int64_t kAssemblyChunk = 4096;

std::size_t chunk_count(std::int64_t T) {
    return static_cast<std::size_t>(std::max<std::int64_t>(1, (T + kAssemblyChunk - 1) / kAssemblyChunk));
}

void check_target(const SpikeSample& sample, const Dictionary& dict, NeuronId i) {
    if (!sample.find_column(i)) throw ContractViolation("target neuron " + std::to_string(i.value) + " not in sample");
    for (auto j : dict.neurons()) {
        if (!sample.find_column(j)) {
            throw ContractViolation("dictionary neuron " + std::to_string(j.value) + " not in sample");
        }
    }
    if (sample.T() < 1) throw ContractViolation("empty sample");
}

// Weighted column sums (1/T) sum_t phi(t) y(t) over fixed chunks.
VectorXd weighted_means(const Dictionary& dict, const SpikeSample& sample, const std::vector<double>& y) {
    const std::int64_t T = sample.T();
    const std::size_t chunks = chunk_count(T);
    std::vector<VectorXd> part(chunks, VectorXd::Zero(static_cast<Index>(dict.size())));
    parallel_chunks(static_cast<std::size_t>(T), chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
        const auto t0 = static_cast<std::int64_t>(b) + 1;
        const MatrixXd X = dict.design(sample, t0, static_cast<std::int64_t>(e) + 1);
        const Eigen::Map<const VectorXd> yc(y.data() + b, static_cast<Index>(e - b));
        part[c] = X.transpose() * yc;
    });
    VectorXd out = VectorXd::Zero(static_cast<Index>(dict.size()));
    for (const auto& p : part) out += p;
    return out / static_cast<double>(T);
}

}  // namespace

GramSystem assemble(const Dictionary& dict, const SpikeSample& sample, NeuronId i) {
    check_target(sample, dict, i);
    const std::int64_t T = sample.T();
    const auto n = static_cast<Index>(dict.size());
    const std::size_t col = sample.column(i);
    const std::size_t chunks = chunk_count(T);
    std::vector<MatrixXd> gpart(chunks);
    std::vector<VectorXd> bpart(chunks);
    parallel_chunks(static_cast<std::size_t>(T), chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
        const auto t0 = static_cast<std::int64_t>(b) + 1;
        const MatrixXd X = dict.design(sample, t0, static_cast<std::int64_t>(e) + 1);
        VectorXd y(X.rows());
        for (Index r = 0; r < X.rows(); ++r) y[r] = sample.at(col, t0 + r);
        gpart[c] = X.transpose() * X;
        bpart[c] = X.transpose() * y;
    });
    GramSystem g;
    g.G = MatrixXd::Zero(n, n);
    g.b = VectorXd::Zero(n);
    for (std::size_t c = 0; c < chunks; ++c) {
        g.G += gpart[c];
        g.b += bpart[c];
    }
    g.G /= static_cast<double>(T);
    g.b /= static_cast<double>(T);
    g.G = 0.5 * (g.G + g.G.transpose()).eval();
    g.target = i;
    g.T = T;
    g.dict_fingerprint = dict.fingerprint();
    return g;
}

std::vector<double> target_intensity(const SpikeSample& sample, const KalikowModel& model, NeuronId i) {
    const std::int64_t T = sample.T();
    if (auto it = sample.intensities().find(i); it != sample.intensities().end()) {
        if (static_cast<std::int64_t>(it->second.size()) != T) {
            throw ContractViolation("recorded intensity length does not match the sample horizon");
        }
        return it->second;
    }
    auto read = [&](NeuronId j, std::int64_t time) {
        const auto col = sample.find_column(j);
        if (!col || !sample.contains_time(time)) {
            throw UnsupportedModel("p_" + std::to_string(i.value) + " needs site (" + std::to_string(j.value) + ", " +
                                   std::to_string(time) + ") outside the sample; record intensities while simulating");
        }
        return sample.at(*col, time);
    };
    std::vector<double> p(static_cast<std::size_t>(T));
    if (model.has_closed_form()) {
        for (std::int64_t t = 1; t <= T; ++t) {
            const PastReader past = [&](NeuronId j, std::int64_t lag) { return read(j, t - lag); };
            p[static_cast<std::size_t>(t - 1)] = model.closed_form()(i, past);
        }
        return p;
    }
    if (!model.contains(i)) throw UnsupportedModel("model has no dynamics for neuron " + std::to_string(i.value));
    for (std::int64_t t = 1; t <= T; ++t) {
        p[static_cast<std::size_t>(t - 1)] =
            mixture_probability(model, i, t, [&](const Site& s) { return read(s.neuron, s.time); });
    }
    return p;
}

VectorXd compensator(const Dictionary& dict, const SpikeSample& sample, const KalikowModel& model, NeuronId i) {
    for (auto j : dict.neurons()) {
        if (!sample.find_column(j)) {
            throw ContractViolation("dictionary neuron " + std::to_string(j.value) + " not in sample");
        }
    }
    return weighted_means(dict, sample, target_intensity(sample, model, i));
}

ExpectedGram expected_gram_bernoulli(const Dictionary& dict) {
    const auto n = static_cast<Index>(dict.size());
    const Index off = dict.spontaneous() ? 1 : 0;
    double diag = 0.0, cross = 0.0, mean = 0.0;
    switch (dict.family()) {
        case DictFamily::short_memory: {
            const double p = 1.0 - std::pow(0.5, static_cast<double>(dict.m()));
            diag = p;
            cross = p * p;
            mean = p;
            break;
        }
        case DictFamily::cumulative: {
            const auto eta = static_cast<double>(dict.eta());
            diag = eta / 4.0 + eta * eta / 4.0;
            cross = eta * eta / 4.0;
            mean = eta / 2.0;
            break;
        }
        case DictFamily::hawkes:
            diag = 0.5;
            cross = 0.25;
            mean = 0.5;
            break;
    }
    ExpectedGram out;
    out.G = MatrixXd::Constant(n, n, cross);
    for (Index k = off; k < n; ++k) out.G(k, k) = diag;
    if (off) {
        out.G(0, 0) = 1.0;
        for (Index k = 1; k < n; ++k) out.G(0, k) = out.G(k, 0) = mean;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.G, Eigen::EigenvaluesOnly);
    out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
    out.lambda_min = out.eigenvalues.front();
    return out;
}

double kappa_prime(KappaFamily family, double mu, std::int64_t m, std::size_t F_size, std::int64_t eta,
                   std::int64_t K) {
    if (!(mu > 0.0 && mu <= 0.5)) throw ContractViolation("kappa_prime: mu must lie in (0, 1/2]");
    if (m < 1 || eta < 1 || K < 1 || F_size == 0) throw ContractViolation("kappa_prime: bad parameters");
    const auto F = static_cast<double>(F_size);
    const auto e = static_cast<double>(eta);
    const auto k = static_cast<double>(K);
    switch (family) {
        case KappaFamily::short_memory: {
            const double h = std::pow(0.5, static_cast<double>(m));
            return std::pow(2.0 * mu, static_cast<double>(m) * F) * h * (1.0 - h);
        }
        case KappaFamily::cumulative:
            return e / 4.0 * std::pow(2.0 * mu, e * k * F);
        case KappaFamily::cumulative_spont:
            return std::pow(2.0 * mu, e * k * F) * std::min(1.0 / (1.0 + 2.0 * e * k * F), e / 8.0);
    }
    return 0.0;
}

InvResult inv_check(const MatrixXd& G, const std::vector<double>& kappas) {
    if (G.rows() != G.cols()) throw ContractViolation("inv_check: matrix is not square");
    if (G.size() == 0) throw ContractViolation("inv_check: empty matrix");
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw ContractViolation("inv_check: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(G, Eigen::EigenvaluesOnly);
    InvResult r;
    r.lambda_min = es.eigenvalues()[0];
    for (double k : kappas) r.satisfies[k] = r.holds(k);
    return r;
}

namespace {

// Euclidean projection onto {w : |w|_1 <= r}.
void project_l1(VectorXd& w, double r) {
    if (r <= 0.0) {
        w.setZero();
        return;
    }
    if (w.lpNorm<1>() <= r) return;
    std::vector<double> u(static_cast<std::size_t>(w.size()));
    for (Index k = 0; k < w.size(); ++k) u[static_cast<std::size_t>(k)] = std::abs(w[k]);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, tau = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - r) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) tau = t;
    }
    for (Index k = 0; k < w.size(); ++k) {
        const double a = std::abs(w[k]) - tau;
        w[k] = a > 0.0 ? std::copysign(a, w[k]) : 0.0;
    }
}

struct SupportBlocks {
    MatrixXd JJ, JC, CC;
};

SupportBlocks split(const MatrixXd& G, const std::vector<Index>& J, const std::vector<Index>& C) {
    SupportBlocks s;
    const auto nj = static_cast<Index>(J.size());
    const auto nc = static_cast<Index>(C.size());
    s.JJ.resize(nj, nj);
    s.JC.resize(nj, nc);
    s.CC.resize(nc, nc);
    for (Index a = 0; a < nj; ++a) {
        for (Index b = 0; b < nj; ++b) s.JJ(a, b) = G(J[a], J[b]);
        for (Index b = 0; b < nc; ++b) s.JC(a, b) = G(J[a], C[b]);
    }
    for (Index a = 0; a < nc; ++a) {
        for (Index b = 0; b < nc; ++b) s.CC(a, b) = G(C[a], C[b]);
    }
    return s;
}

double largest_eigenvalue(const MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[M.rows() - 1];
}

class ConeMinimizer {
public:
    ConeMinimizer(const SupportBlocks& s, double c) : s_(s), c_(c) {
        Lw_ = std::max(2.0 * largest_eigenvalue(s.CC), 1e-12);
        Lu_ = std::max(2.0 * largest_eigenvalue(s.JJ), 1e-12);
    }

    double objective(const VectorXd& u, const VectorXd& w) const {
        double v = u.dot(s_.JJ * u);
        if (w.size()) v += 2.0 * u.dot(s_.JC * w) + w.dot(s_.CC * w);
        return v;
    }

    // argmin over the l1 ball of radius c|u|_1, warm-started at w.
    void inner(const VectorXd& u, VectorXd& w) const {
        if (w.size() == 0) return;
        const double r = c_ * u.lpNorm<1>();
        project_l1(w, r);
        const VectorXd lin = s_.JC.transpose() * u;
        VectorXd y = w, prev = w;
        double tk = 1.0;
        for (int it = 0; it < 300; ++it) {
            VectorXd next = y - (2.0 * (s_.CC * y + lin)) / Lw_;
            project_l1(next, r);
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            y = next + ((tk - 1.0) / tn) * (next - prev);
            const double step = (next - prev).lpNorm<Eigen::Infinity>();
            prev = std::move(next);
            tk = tn;
            if (step < 1e-13) break;
        }
        w = prev;
    }

    double run(VectorXd u) const {
        u.normalize();
        VectorXd w = VectorXd::Zero(s_.CC.rows());
        inner(u, w);
        double best = objective(u, w);
        double step = 1.0 / Lu_;
        for (int it = 0; it < 400 && step > 1e-14; ++it) {
            VectorXd g = 2.0 * (s_.JJ * u);
            if (w.size()) g += 2.0 * (s_.JC * w);
            g -= g.dot(u) * u;
            if (g.norm() < 1e-13) break;
            VectorXd un = (u - step * g).normalized();
            VectorXd wn = w;
            inner(un, wn);
            const double v = objective(un, wn);
            if (v < best - 1e-15) {
                best = v;
                u = std::move(un);
                w = std::move(wn);
                step *= 1.5;
            } else {
                step *= 0.5;
            }
        }
        return best;
    }

private:
    const SupportBlocks& s_;
    double c_;
    double Lw_ = 1.0;
    double Lu_ = 1.0;
};

// max over t >= 0 of lambda_min(G_JJ - t c^2 |J| I - G_JC (G_CC + t I)^{-1} G_CJ).
double lagrangian_bound(const SupportBlocks& s, double c) {
    const auto nj = s.JJ.rows();
    const auto nc = s.CC.rows();
    const double scale = c * c * static_cast<double>(nj);
    auto value = [&](double t) {
        MatrixXd S = s.JJ - t * scale * MatrixXd::Identity(nj, nj);
        if (nc) {
            MatrixXd M = s.CC + t * MatrixXd::Identity(nc, nc);
            Eigen::LDLT<MatrixXd> ldlt(M);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-300) {
                return -std::numeric_limits<double>::infinity();
            }
            Eigen::SelfAdjointEigenSolver<MatrixXd> check(M, Eigen::EigenvaluesOnly);
            if (check.eigenvalues()[0] <= 1e-14 * std::max(1.0, check.eigenvalues()[nc - 1])) {
                return -std::numeric_limits<double>::infinity();
            }
            S -= s.JC * ldlt.solve(s.JC.transpose());
        }
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
        return es.eigenvalues()[0];
    };
    double best = value(0.0);
    if (scale <= 0.0) return best;
    const double hi = std::max(largest_eigenvalue(s.JJ), 1e-12) / scale;
    double a = 0.0, b = hi;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = value(x1), f2 = value(x2);
    for (int it = 0; it < 120; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = value(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = value(x1);
        }
    }
    return std::max({best, f1, f2});
}

void for_each_support(Index n, std::size_t s, const std::function<void(const std::vector<Index>&)>& fn) {
    std::vector<Index> J;
    std::function<void(Index)> rec = [&](Index start) {
        if (!J.empty()) fn(J);
        if (J.size() == s) return;
        for (Index k = start; k < n; ++k) {
            J.push_back(k);
            rec(k + 1);
            J.pop_back();
        }
    };
    rec(0);
}

REResult re_exact(const MatrixXd& G, double c, std::size_t s) {
    const Index n = G.rows();
    REResult out;
    out.mode = REMode::exact;
    out.value = std::numeric_limits<double>::infinity();
    out.lower = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    for_each_support(n, std::min<std::size_t>(s, static_cast<std::size_t>(n)), [&](const std::vector<Index>& J) {
        std::vector<Index> C;
        for (Index k = 0, q = 0; k < n; ++k) {
            if (q < static_cast<Index>(J.size()) && J[q] == k) {
                ++q;
            } else {
                C.push_back(k);
            }
        }
        const auto blocks = split(G, J, C);
        ConeMinimizer cm(blocks, c);
        const auto nj = static_cast<Index>(J.size());
        std::vector<VectorXd> starts;
        for (Index k = 0; k < nj; ++k) starts.push_back(VectorXd::Unit(nj, k));
        if (nj > 1) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(blocks.JJ);
            for (Index k = 0; k < nj; ++k) starts.push_back(es.eigenvectors().col(k));
            VectorXd ones = VectorXd::Ones(nj);
            starts.push_back(ones);
            for (Index k = 0; k < nj; ++k) {
                VectorXd alt = ones;
                alt[k] = -1.0;
                starts.push_back(alt);
            }
        }
        for (int r = 0; r < 4; ++r) {
            VectorXd v(nj);
            for (Index k = 0; k < nj; ++k) v[k] = normal(rng);
            if (v.norm() > 0.0) starts.push_back(v);
        }
        double best = std::numeric_limits<double>::infinity();
        for (const auto& u : starts) best = std::min(best, cm.run(u));
        const double low = std::min(lagrangian_bound(blocks, c), best);
        if (best < out.value) {
            out.value = best;
            out.worst_support.assign(J.begin(), J.end());
        }
        out.lower = std::min(out.lower, low);
    });
    return out;
}

REResult re_certified(const MatrixXd& G, double c, std::size_t s, const MatrixXd& ref) {
    const Index n = G.rows();
    REResult out;
    out.mode = REMode::certified;
    out.R = (G - ref).cwiseAbs().maxCoeff();
    double d_lo = std::numeric_limits<double>::infinity();
    double o_lo = std::numeric_limits<double>::infinity();
    double o_hi = -std::numeric_limits<double>::infinity();
    for (Index a = 0; a < n; ++a) {
        d_lo = std::min(d_lo, ref(a, a));
        for (Index b = 0; b < n; ++b) {
            if (a == b) continue;
            o_lo = std::min(o_lo, ref(a, b));
            o_hi = std::max(o_hi, ref(a, b));
        }
    }
    if (n == 1) o_lo = o_hi = 0.0;
    // a^T G a >= A |a|^2 - B |a|_1^2 and |a|_1^2 <= (1 + c)^2 s |a_J|^2 on the cone.
    const double A = d_lo - o_lo;
    const double B = (o_hi - o_lo) - std::min(o_lo, 0.0) + out.R;
    const double cone = (1.0 + c) * (1.0 + c) * static_cast<double>(s);
    out.value = A >= 0.0 ? A - B * cone : (A - B) * cone;
    out.lower = out.value;
    return out;
}

}  // namespace

REResult re_check(const MatrixXd& G, double c, std::size_t s, REMode mode, const std::optional<MatrixXd>& reference) {
    if (G.rows() != G.cols() || G.size() == 0) throw ContractViolation("re_check: matrix must be square and nonempty");
    if (!(c >= 0.0) || !std::isfinite(c)) throw ContractViolation("re_check: c must be finite and >= 0");
    if (s < 1) throw ContractViolation("re_check: s must be >= 1");
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw ContractViolation("re_check: matrix is not symmetric");
    if (mode == REMode::exact) {
        if (static_cast<std::size_t>(G.rows()) > kExactREMaxSize) {
            throw ContractViolation("exact RE check supports at most " + std::to_string(kExactREMaxSize) +
                                    " dictionary functions; use --mode certified");
        }
        return re_exact(G, c, s);
    }
    if (reference && (reference->rows() != G.rows() || reference->cols() != G.cols())) {
        throw ContractViolation("re_check: reference has the wrong shape");
    }
    return re_certified(G, c, s, reference ? *reference : G);
}

double re_kappa_hawkes(double mu, double c, std::size_t s, double R_T) {
    return mu - mu * mu - ((1.0 - 2.0 * mu) + R_T) * (1.0 + c) * static_cast<double>(s);
}

DeviationBound matrix_deviation_bound(std::size_t F_size, std::int64_t m, std::int64_t T, double theta, double M,
                                      std::size_t dict_size, double x, double psi_bound) {
    const auto grid = block_partition(T, m, theta, F_size, psi_bound);
    DeviationBound d;
    d.B = grid.B;
    d.k = grid.k;
    d.c_prime = grid.c_prime;
    const auto k = static_cast<double>(grid.k);
    d.sigma = 2.0 * static_cast<double>(dict_size) * static_cast<double>(grid.B) * M * M / static_cast<double>(T);
    d.level = std::sqrt(8.0 * k * d.sigma * d.sigma * x) + std::sqrt(8.0 * (k + 1.0) * d.sigma * d.sigma * x);
    d.tail = grid.c_prime / static_cast<double>(T) + 4.0 * static_cast<double>(dict_size) * std::exp(-x);
    return d;
}

double hawkes_entry_deviation(std::size_t F_size, std::int64_t m, std::int64_t T, double theta,
                              std::size_t dict_size, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw ContractViolation("delta must lie in (0, 1)");
    const auto grid = block_partition(T, m, theta, F_size, 1.0);
    const double n = static_cast<double>(dict_size);
    const double x = std::log(4.0 * n * n / delta);
    const auto B = static_cast<double>(grid.B);
    const auto k = static_cast<double>(grid.k);
    const auto TT = static_cast<double>(T);
    return std::sqrt(k * B * B * x / (2.0 * TT * TT)) + std::sqrt((k + 1.0) * B * B * x / (2.0 * TT * TT));
}

void write_gram_json(const GramSystem& g, std::ostream& out) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "gram";
    j["dict_fingerprint"] = g.dict_fingerprint;
    j["T"] = g.T;
    j["target"] = g.target.value;
    j["size"] = g.size();
    std::vector<double> G;
    for (Index a = 0; a < g.G.rows(); ++a) {
        for (Index b = 0; b < g.G.cols(); ++b) G.push_back(g.G(a, b));
    }
    j["G"] = G;
    j["b"] = std::vector<double>(g.b.data(), g.b.data() + g.b.size());
    if (g.b_bar) {
        j["b_bar"] = std::vector<double>(g.b_bar->data(), g.b_bar->data() + g.b_bar->size());
    } else {
        j["b_bar"] = nullptr;
    }
    out << j.dump(2) << '\n';
}

GramSystem read_gram_json(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
        GramSystem g;
        if (j.at("kind").get<std::string>() != "gram") throw ConfigError("not a gram file");
        g.dict_fingerprint = j.at("dict_fingerprint").get<std::string>();
        g.T = j.at("T").get<std::int64_t>();
        g.target = NeuronId{j.at("target").get<std::int64_t>()};
        const auto n = j.at("size").get<Index>();
        const auto G = j.at("G").get<std::vector<double>>();
        const auto b = j.at("b").get<std::vector<double>>();
        if (static_cast<Index>(G.size()) != n * n || static_cast<Index>(b.size()) != n) {
            throw ConfigError("gram file: inconsistent sizes");
        }
        g.G.resize(n, n);
        for (Index a = 0; a < n; ++a) {
            for (Index c = 0; c < n; ++c) g.G(a, c) = G[static_cast<std::size_t>(a * n + c)];
        }
        g.b = Eigen::Map<const VectorXd>(b.data(), n);
        if (j.contains("b_bar") && !j["b_bar"].is_null()) {
            const auto bb = j["b_bar"].get<std::vector<double>>();
            if (static_cast<Index>(bb.size()) != n) throw ConfigError("gram file: inconsistent b_bar size");
            g.b_bar = Eigen::Map<const VectorXd>(bb.data(), n);
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("gram file: ") + e.what());
    }
}

}  // namespace kalikow
