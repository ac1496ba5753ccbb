#include "kalikow/dictionary.hpp"

#include <algorithm>
#include <sstream>

namespace kalikow {

namespace {

void check_neurons(const std::vector<NeuronId>& F) {
    if (F.empty()) throw ContractViolation("dictionary: empty neuron set");
    auto sorted = F;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ContractViolation("dictionary: duplicate neuron");
    }
}

}  // namespace

Dictionary short_memory(std::vector<NeuronId> F, std::int64_t m) {
    check_neurons(F);
    if (m < 1) throw ContractViolation("short_memory: m must be >= 1");
    Dictionary d;
    d.family_ = DictFamily::short_memory;
    d.F_ = std::move(F);
    d.m_ = m;
    d.eta_ = m;
    d.L_ = 1;
    return d;
}

Dictionary cumulative(std::vector<NeuronId> F, std::int64_t eta, std::int64_t L) {
    check_neurons(F);
    if (eta < 1 || L < 1) throw ContractViolation("cumulative: eta and L must be >= 1");
    Dictionary d;
    d.family_ = DictFamily::cumulative;
    d.F_ = std::move(F);
    d.eta_ = eta;
    d.L_ = L;
    d.m_ = eta * L;
    return d;
}

Dictionary with_spontaneous(const Dictionary& base) {
    Dictionary d = base;
    d.spontaneous_ = true;
    return d;
}

Dictionary hawkes_dict(std::vector<NeuronId> F, std::int64_t m, bool spontaneous) {
    check_neurons(F);
    if (m < 1) throw ContractViolation("hawkes_dict: m must be >= 1");
    Dictionary d;
    d.family_ = DictFamily::hawkes;
    d.F_ = std::move(F);
    d.m_ = m;
    d.eta_ = 1;
    d.L_ = m;
    d.spontaneous_ = spontaneous;
    return d;
}

std::size_t Dictionary::size() const {
    const std::size_t per = family_ == DictFamily::short_memory ? 1 : static_cast<std::size_t>(L_);
    return F_.size() * per + (spontaneous_ ? 1 : 0);
}

double Dictionary::sup_norm() const {
    const double base = family_ == DictFamily::cumulative ? static_cast<double>(eta_) : 1.0;
    return spontaneous_ ? std::max(1.0, base) : base;
}

std::vector<std::string> Dictionary::names() const {
    std::vector<std::string> out;
    if (spontaneous_) out.emplace_back("1");
    for (auto j : F_) {
        const auto id = std::to_string(j.value);
        switch (family_) {
            case DictFamily::short_memory:
                out.push_back("any[" + id + "]");
                break;
            case DictFamily::cumulative:
                for (std::int64_t l = 1; l <= L_; ++l) out.push_back("count[" + id + ",bin " + std::to_string(l) + "]");
                break;
            case DictFamily::hawkes:
                for (std::int64_t l = 1; l <= L_; ++l) out.push_back("x[" + id + "," + std::to_string(-l) + "]");
                break;
        }
    }
    return out;
}

std::string Dictionary::kind() const {
    std::string k = family_ == DictFamily::short_memory ? "short_memory"
                    : family_ == DictFamily::cumulative ? "cumulative"
                                                        : "hawkes";
    return spontaneous_ ? k + "_spont" : k;
}

std::string Dictionary::fingerprint() const {
    std::ostringstream os;
    os << kind() << "(F=";
    for (std::size_t q = 0; q < F_.size(); ++q) os << (q ? "," : "") << F_[q].value;
    os << ";m=" << m_;
    if (family_ == DictFamily::cumulative) os << ";eta=" << eta_ << ";L=" << L_;
    os << ")";
    return os.str();
}

void Dictionary::evaluate_window(std::span<const std::uint8_t> window, std::span<double> out) const {
    const std::size_t W = F_.size();
    if (window.size() != static_cast<std::size_t>(m_) * W) throw ContractViolation("evaluate_window: size mismatch");
    if (out.size() != size()) throw ContractViolation("evaluate_window: output size mismatch");
    std::size_t k = 0;
    if (spontaneous_) out[k++] = 1.0;
    for (std::size_t f = 0; f < W; ++f) {
        auto x = [&](std::int64_t lag) { return window[static_cast<std::size_t>(lag - 1) * W + f]; };
        if (family_ == DictFamily::short_memory) {
            double any = 0.0;
            for (std::int64_t lag = 1; lag <= m_; ++lag) {
                if (x(lag)) any = 1.0;
            }
            out[k++] = any;
            continue;
        }
        for (std::int64_t l = 1; l <= L_; ++l) {
            double c = 0.0;
            for (std::int64_t lag = eta_ * (l - 1) + 1; lag <= eta_ * l; ++lag) c += x(lag);
            out[k++] = c;
        }
    }
}

std::vector<std::size_t> Dictionary::columns(const SpikeSample& sample) const {
    std::vector<std::size_t> cols;
    cols.reserve(F_.size());
    for (auto j : F_) cols.push_back(sample.column(j));
    return cols;
}

void Dictionary::check_window(const SpikeSample& sample, std::int64_t t) const {
    if (sample.m() < m_) {
        throw ContractViolation("dictionary depth m = " + std::to_string(m_) + " exceeds sample depth " +
                                std::to_string(sample.m()));
    }
    if (t - m_ < sample.first_time() || t > sample.T() || t < 1) {
        throw ContractViolation("window underrun at t = " + std::to_string(t));
    }
}

void Dictionary::evaluate(const SpikeSample& sample, std::int64_t t, std::span<double> out) const {
    check_window(sample, t);
    const auto cols = columns(sample);
    const std::size_t W = F_.size();
    std::vector<std::uint8_t> window(static_cast<std::size_t>(m_) * W);
    for (std::int64_t lag = 1; lag <= m_; ++lag) {
        for (std::size_t f = 0; f < W; ++f) {
            window[static_cast<std::size_t>(lag - 1) * W + f] = static_cast<std::uint8_t>(sample.at(cols[f], t - lag));
        }
    }
    evaluate_window(window, out);
}

std::vector<double> Dictionary::evaluate(const SpikeSample& sample, std::int64_t t) const {
    std::vector<double> out(size());
    evaluate(sample, t, out);
    return out;
}

Eigen::MatrixXd Dictionary::design(const SpikeSample& sample, std::int64_t t_begin, std::int64_t t_end) const {
    if (t_end <= t_begin) return Eigen::MatrixXd(0, static_cast<Eigen::Index>(size()));
    check_window(sample, t_begin);
    check_window(sample, t_end - 1);
    const auto cols = columns(sample);
    const auto rows = static_cast<Eigen::Index>(t_end - t_begin);
    Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(size()));
    // prefix[u] = spikes of one neuron over times t_begin - m .. t_begin - m + u - 1
    const std::int64_t t0 = t_begin - m_;
    std::vector<std::int32_t> prefix(static_cast<std::size_t>(t_end - t0) + 1);
    Eigen::Index k = 0;
    if (spontaneous_) X.col(k++).setOnes();
    for (std::size_t f = 0; f < F_.size(); ++f) {
        prefix[0] = 0;
        for (std::int64_t u = t0; u < t_end; ++u) {
            const auto q = static_cast<std::size_t>(u - t0);
            prefix[q + 1] = prefix[q] + sample.at(cols[f], u);
        }
        // spikes over times [a, b]
        auto count = [&](std::int64_t a, std::int64_t b) {
            return prefix[static_cast<std::size_t>(b + 1 - t0)] - prefix[static_cast<std::size_t>(a - t0)];
        };
        if (family_ == DictFamily::short_memory) {
            for (Eigen::Index r = 0; r < rows; ++r) {
                const std::int64_t t = t_begin + r;
                X(r, k) = count(t - m_, t - 1) > 0 ? 1.0 : 0.0;
            }
            ++k;
            continue;
        }
        for (std::int64_t l = 1; l <= L_; ++l, ++k) {
            for (Eigen::Index r = 0; r < rows; ++r) {
                const std::int64_t t = t_begin + r;
                X(r, k) = count(t - eta_ * l, t - eta_ * (l - 1) - 1);
            }
        }
    }
    return X;
}

Eigen::MatrixXd Dictionary::design(const SpikeSample& sample) const { return design(sample, 1, sample.T() + 1); }

Dictionary make_dictionary(const std::string& kind, std::vector<NeuronId> F, std::int64_t m, std::int64_t eta,
                           std::int64_t L) {
    try {
        if (kind == "short_memory") return short_memory(std::move(F), m);
        if (kind == "short_memory_spont") return with_spontaneous(short_memory(std::move(F), m));
        if (kind == "hawkes") return hawkes_dict(std::move(F), m, false);
        if (kind == "hawkes_spont") return hawkes_dict(std::move(F), m, true);
        if (kind == "cumulative" || kind == "cumulative_spont") {
            if (eta * L != m) {
                throw ConfigError("cumulative dictionary: eta * L = " + std::to_string(eta * L) +
                                  " does not match m = " + std::to_string(m));
            }
            auto d = cumulative(std::move(F), eta, L);
            return kind == "cumulative" ? d : with_spontaneous(d);
        }
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("dictionary: ") + e.what());
    }
    throw ConfigError("unknown dictionary '" + kind + "'");
}

}  // namespace kalikow
