#include <doctest.h>

#include "kalikow/dictionary.hpp"
#include "support.hpp"

using namespace kalikow;
using kt::ids;

namespace {

SpikeSample zeros(std::vector<NeuronId> F, std::int64_t m, std::int64_t T) { return SpikeSample(std::move(F), m, T, 0); }

const std::vector<kt::DictSpec> kSpecs{
    {"short_memory", ids({1, 2, 3}), 3},
    {"short_memory_spont", ids({2, 3}), 2},
    {"cumulative", ids({1, 3}), 6, 2, 3},
    {"cumulative_spont", ids({1, 2, 3}), 4, 4, 1},
    {"hawkes", ids({1, 2}), 3},
    {"hawkes_spont", ids({3, 1}), 4},
};

}  // namespace

TEST_CASE("dictionary sizes and sup norms") {
    CHECK(short_memory(ids({1, 2, 3}), 4).size() == 3);
    CHECK(short_memory(ids({1, 2, 3}), 4).sup_norm() == 1.0);
    CHECK(cumulative(ids({1, 2}), 3, 2).size() == 4);
    CHECK(cumulative(ids({1, 2}), 3, 2).sup_norm() == 3.0);
    const auto base = cumulative(ids({1, 2}), 3, 2);
    CHECK(with_spontaneous(base).size() == base.size() + 1);
    CHECK(with_spontaneous(base).sup_norm() == 3.0);
    CHECK(with_spontaneous(short_memory(ids({1}), 1)).sup_norm() == 1.0);
    CHECK(hawkes_dict(ids({1, 2, 3}), 4, false).size() == 12);
    CHECK(hawkes_dict(ids({1, 2, 3}), 4, true).size() == 13);
    CHECK(hawkes_dict(ids({1, 2}), 3, true).names().size() == 7);
    CHECK_THROWS(short_memory({}, 2));
    CHECK_THROWS_AS(make_dictionary("cumulative", ids({1}), 5, 2, 2), ConfigError);
    CHECK_THROWS_AS(make_dictionary("fourier", ids({1}), 5, 1, 5), ConfigError);
}

TEST_CASE("zero windows") {
    for (const auto& d : kSpecs) {
        const auto dict = kt::build(d);
        const auto s = zeros(d.F, d.m, 5);
        const auto v = dict.evaluate(s, 1);
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double expected = (dict.spontaneous() && k == 0) ? 1.0 : 0.0;
            CHECK(v[k] == expected);
        }
    }
}

TEST_CASE("single spikes land in the right function") {
    SUBCASE("short memory") {
        auto s = zeros(ids({1, 2}), 3, 5);
        s.set(1, 3 - 3, 1);  // x_{2,-3} seen from t = 3
        const auto v = short_memory(ids({1, 2}), 3).evaluate(s, 3);
        CHECK(v == std::vector<double>{0.0, 1.0});
    }
    SUBCASE("cumulative bins") {
        auto s = zeros(ids({1}), 6, 10);
        s.set(0, 5 - 3, 1);
        const auto v = cumulative(ids({1}), 2, 3).evaluate(s, 5);
        CHECK(v == std::vector<double>{0.0, 1.0, 0.0});
    }
    SUBCASE("hawkes shifts with t") {
        auto s = zeros(ids({1, 2}), 3, 10);
        s.set(0, 4, 1);
        const auto d = hawkes_dict(ids({1, 2}), 3, false);
        CHECK(d.evaluate(s, 6) == std::vector<double>{0, 1, 0, 0, 0, 0});
        CHECK(d.evaluate(s, 7) == std::vector<double>{0, 0, 1, 0, 0, 0});
        CHECK(d.evaluate(s, 5) == std::vector<double>{1, 0, 0, 0, 0, 0});
    }
    SUBCASE("full bins") {
        auto s = zeros(ids({1, 2}), 6, 10);
        for (std::int64_t t = -5; t <= 10; ++t) s.set(0, t, 1), s.set(1, t, 1);
        for (double x : cumulative(ids({1, 2}), 3, 2).evaluate(s, 7)) CHECK(x == 3.0);
    }
}

TEST_CASE("evaluate matches the definitions") {
    for (const auto& d : kSpecs) {
        const auto dict = kt::build(d);
        const auto s = kt::coin_sample(d.F, d.m, 200, 41, 0.35);
        const auto X = dict.design(s);
        for (std::int64_t t = 1; t <= s.T(); ++t) {
            const auto ref = kt::naive_features(d, s, t);
            const auto v = dict.evaluate(s, t);
            CHECK(v == ref);
            CHECK(dict.evaluate(s, t) == v);
            for (std::size_t k = 0; k < ref.size(); ++k) CHECK(X(t - 1, static_cast<Eigen::Index>(k)) == ref[k]);
            for (double x : v) CHECK(std::abs(x) <= dict.sup_norm());
        }
        CHECK_THROWS_AS(dict.evaluate(s, 0 - d.m + 1), ContractViolation);
    }
}

TEST_CASE("counting identities") {
    const auto s = kt::coin_sample(ids({1, 2}), 6, 100, 3);
    const auto cum = cumulative(ids({1, 2}), 2, 3);
    const auto hk = hawkes_dict(ids({1, 2}), 6, false);
    for (std::int64_t t = 1; t <= s.T(); ++t) {
        const auto c = cum.evaluate(s, t);
        const auto h = hk.evaluate(s, t);
        double spikes = 0.0, support = 0.0;
        for (double x : h) {
            spikes += x;
            support += x != 0.0;
            CHECK((x == 0.0 || x == 1.0));
        }
        CHECK(support == spikes);
        CHECK(c[0] + c[1] + c[2] + c[3] + c[4] + c[5] == spikes);
    }
}

TEST_CASE("flipping bits outside the window changes nothing") {
    CounterRng rng(77);
    for (const auto& d : kSpecs) {
        const auto dict = kt::build(d);
        const std::int64_t T = 40;
        auto s = kt::coin_sample(d.F, d.m + 2, T, 9);
        for (int trial = 0; trial < 50; ++trial) {
            const auto t = static_cast<std::int64_t>(1 + rng.uniform() * (T - 1));
            const auto before = dict.evaluate(s, t);
            auto flipped = s;
            for (std::int64_t u = flipped.first_time(); u <= T; ++u) {
                if (u >= t - d.m && u <= t - 1) continue;
                for (std::size_t c = 0; c < flipped.width(); ++c) flipped.set(c, u, 1 - flipped.at(c, u));
            }
            CHECK(dict.evaluate(flipped, t) == before);
        }
    }
}

TEST_CASE("sup norm is attained on small windows") {
    for (const auto& d : kSpecs) {
        const auto dict = kt::build(d);
        const auto bits = d.F.size() * static_cast<std::size_t>(d.m);
        if (bits > 14) continue;
        std::vector<std::uint8_t> w(bits);
        std::vector<double> out(dict.size());
        double best = 0.0;
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) {
            for (std::size_t k = 0; k < bits; ++k) w[k] = (mask >> k) & 1U;
            dict.evaluate_window(w, out);
            for (double x : out) best = std::max(best, std::abs(x));
        }
        CHECK(best == dict.sup_norm());
    }
}

TEST_CASE("fingerprints are canonical") {
    CHECK(hawkes_dict(ids({1, 2}), 3, true).fingerprint() == "hawkes_spont(F=1,2;m=3)");
    CHECK(hawkes_dict(ids({1, 2}), 3, true) == make_dictionary("hawkes_spont", ids({1, 2}), 3, 1, 3));
    CHECK_FALSE(hawkes_dict(ids({1, 2}), 3, true) == hawkes_dict(ids({1, 2}), 2, true));
    CHECK(make_dictionary("cumulative_spont", ids({1}), 4, 2, 2).kind() == "cumulative_spont");
}
