#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kalikow/model_io.hpp"
#include "kalikow/models.hpp"
#include "support.hpp"

using namespace kalikow;
using kt::ids;

namespace {

const NeuronId n1{1}, n2{2}, n3{3};

HawkesSpec three_neurons() {
    return HawkesSpec{{{n1, 0.3}, {n2, 0.4}, {n3, 0.5}},
                      {{n2, n1, 1, 0.2}, {n3, n1, 3, -0.1}, {n1, n2, 2, 0.3}, {n1, n3, 1, -0.25}, {n2, n3, 2, 0.1}}};
}

GLLinearSpec two_neuron_gl() {
    GLLinearSpec s;
    s.nu = {{n1, 0.4}, {n2, 0.5}};
    s.W = {{{n2, n1}, 0.3}, {{n1, n2}, -0.2}};
    s.g = {{n1, {0.5, 0.3, 0.2}}, {n2, {0.6, 0.25, 0.15}}};
    return s;
}

}  // namespace

TEST_CASE("markov decomposition") {
    const auto model = markov_model(0.3, 0.6);
    const auto& d = model.dynamics(n1);
    CHECK(d.lambda.empty_weight() == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(d.p_empty == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
    REQUIRE(d.lambda.size() == 1);
    CHECK(d.lambda.atoms()[0].weight == doctest::Approx(0.3).epsilon(1e-15));
    const std::uint8_t one = 1, zero = 0;
    CHECK(d.kernels[0](std::span(&one, 1)) == doctest::Approx(0.0));
    CHECK(d.kernels[0](std::span(&zero, 1)) == doctest::Approx(1.0));
    for (int x : {0, 1}) {
        const double p = mixture_probability(model, n1, 0, [&](const Site&) { return x; });
        CHECK(std::abs(p - (x ? 0.3 : 0.6)) <= 1e-15);
    }
    CHECK_THROWS_AS(markov_model(0.5, 0.5), ModelError);
    CHECK(kt::exhaustive_identity(model, n1).max_error <= 1e-12);
}

TEST_CASE("infinite order presets") {
    const auto w = geometric_range_weights(0.75);
    for (std::size_t l = 0; l < 10; ++l) CHECK(w[l] == doctest::Approx(std::pow(0.25, l) * 0.75).epsilon(1e-13));
    const auto geo = infinite_order_model(w, 0.5);
    CHECK(mean_size(geo.dynamics(n1).lambda) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

    const auto trivial = infinite_order_model({1.0}, 0.25);
    CHECK(trivial.dynamics(n1).lambda.size() == 0);

    const auto pois = infinite_order_model(poisson_range_weights(0.5), 0.5);
    double direct = 0.0, fact = 1.0;
    for (int l = 1; l < 40; ++l) {
        fact *= l;
        direct += l * std::exp(0.1 * l) * std::exp(-0.5) * std::pow(0.5, l) / fact;
    }
    CHECK(phi(pois.dynamics(n1).lambda, 0.1) == doctest::Approx(direct).epsilon(1e-8));
    CHECK(phi(pois.dynamics(n1).lambda, 0.1) < 1.0);

    const auto id = kt::exhaustive_identity(infinite_order_model(geometric_range_weights(0.9, 1e-12), 0.3), n1);
    CHECK(id.bits <= 16);
    CHECK(id.max_error <= 1e-12);
}

TEST_CASE("hawkes decomposition") {
    const auto one = hawkes_model(HawkesSpec{{{n1, 0.5}, {n2, 0.5}}, {{n2, n1, 1, 0.2}}});
    const auto& d = one.dynamics(n1);
    CHECK(d.lambda.empty_weight() == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(d.p_empty == doctest::Approx(0.625).epsilon(1e-15));
    REQUIRE(d.lambda.size() == 1);
    CHECK(d.lambda.atoms()[0].neighborhood.sites()[0] == Site{n2, -1});

    const auto free = hawkes_model(HawkesSpec{{{n1, 0.35}}, {}});
    CHECK(free.dynamics(n1).lambda.empty_weight() == 1.0);
    CHECK(free.dynamics(n1).p_empty == doctest::Approx(0.35));

    CHECK(hawkes_transition(HawkesSpec{{{n1, 0.5}, {n2, 0.5}}, {{n2, n1, 1, 0.2}}}, n1,
                            [](NeuronId, std::int64_t) { return 0; }) == doctest::Approx(0.5));
    CHECK(hawkes_transition(HawkesSpec{{{n1, 0.5}, {n2, 0.5}}, {{n2, n1, 1, 0.2}}}, n1,
                            [](NeuronId j, std::int64_t l) { return j == NeuronId{2} && l == 1; }) ==
          doctest::Approx(0.7));

    const auto spec = three_neurons();
    const auto model = hawkes_model(spec);
    for (auto i : ids({1, 2, 3})) {
        const auto s = hawkes_strength(spec, i);
        CHECK(mean_size(model.dynamics(i).lambda) == doctest::Approx(s.plus + s.minus).epsilon(1e-14));
        for (const auto& a : model.dynamics(i).lambda.atoms()) CHECK(a.neighborhood.cardinality() <= 1);
        CHECK(kt::exhaustive_identity(model, i).max_error <= 1e-12);
    }

    CounterRng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        std::map<Site, int> x;
        for (auto j : ids({1, 2, 3}))
            for (std::int64_t s = -4; s <= -1; ++s) x[{j, s}] = rng.bernoulli(0.5);
        const auto i = NeuronId{1 + trial % 3};
        const double mix = mixture_probability(model, i, 0, [&](const Site& s) { return x.at(s); });
        const double direct = hawkes_transition(spec, i, [&](NeuronId j, std::int64_t l) { return x.at({j, -l}); });
        CHECK(std::abs(mix - direct) <= 1e-12);
    }

    CHECK_THROWS(hawkes_model(HawkesSpec{{{n1, 0.5}, {n2, 0.5}}, {{n2, n1, 1, 0.6}, {n2, n1, 2, -0.45}}}));
}

TEST_CASE("homogeneous hawkes") {
    HomogeneousHawkesSpec spec;
    spec.nu = 0.3;
    spec.h = {{-1, 1, 0.2}, {1, 2, -0.1}};
    const auto model = hawkes_model(spec);
    CHECK(model.is_homogeneous());
    const auto& d = model.dynamics(NeuronId{40});
    CHECK(mean_size(d.lambda) == doctest::Approx(0.3));
    CHECK(model.resolve(NeuronId{40}, 10, d.lambda.atoms()[0].neighborhood.sites()[0]) == Site{NeuronId{39}, 9});
    CHECK(kt::exhaustive_identity(model, NeuronId{40}).max_error <= 1e-12);
}

TEST_CASE("linear GL decomposition") {
    GLLinearSpec quiet;
    quiet.nu = {{n1, 0.4}};
    CHECK(gl_linear_model(quiet, 5).dynamics(n1).lambda.empty_weight() == 1.0);

    GLLinearSpec pair;
    pair.nu = {{n1, 0.4}, {n2, 0.4}};
    pair.W = {{{n2, n1}, 0.3}};
    pair.g = {{n2, {1.0}}};
    const auto pm = gl_linear_model(pair, 5);
    REQUIRE(pm.dynamics(n1).lambda.size() == 1);
    const auto& v = pm.dynamics(n1).lambda.atoms()[0].neighborhood;
    CHECK(v.cardinality() == 2);
    CHECK(v.index_of({n2, -1}).has_value());
    CHECK(v.index_of({n1, -1}).has_value());

    const auto spec = two_neuron_gl();
    const auto model = gl_linear_model(spec, 8);
    for (auto i : ids({1, 2})) {
        for (const auto& a : model.dynamics(i).lambda.atoms()) {
            const auto s = a.neighborhood.time_depth();
            const auto c = static_cast<std::int64_t>(a.neighborhood.cardinality());
            CHECK((c == s || c == s + 1));
        }
        const auto id = kt::exhaustive_identity(model, i);
        CHECK(id.bits <= 12);
        CHECK(id.max_error <= 1e-12);
    }
    CHECK(sup_mean_size(model) == doctest::Approx(gl_linear_mean_size(spec)).epsilon(1e-14));

    auto self = spec;
    self.W[{n1, n1}] = 0.1;
    CHECK_THROWS(gl_linear_model(self, 8));
}

TEST_CASE("linear GL truncation is recorded") {
    GLLinearSpec s;
    s.nu = {{n1, 0.4}, {n2, 0.4}};
    s.W = {{{n2, n1}, 0.3}};
    s.g = {{n2, {0.5, 0.25, 0.125, 0.125}}};
    const auto model = gl_linear_model(s, 2);
    CHECK(std::stod(model.metadata().at("truncated_mass")) == doctest::Approx(0.3 * 0.25));
}

TEST_CASE("sparsity bounds for GL networks") {
    std::vector<double> g;
    for (int l = 1; l <= 80; ++l) g.push_back(std::pow(0.5, l) / 3.0);
    GLLinearSpec s;
    s.nu = {{n1, 0.45}, {n2, 0.45}, {n3, 0.45}};
    s.W = {{{n2, n1}, 0.5}, {{n3, n1}, -0.4}, {{n1, n2}, 0.9}};
    s.g = {{n1, g}, {n2, g}, {n3, g}};
    CHECK(gl_linear_mean_size(s) == doctest::Approx(0.9).epsilon(1e-12));

    const auto zero = gl_nonlinear_bound({}, {}, 2.0, {});
    CHECK(zero.value == 0.0);
    CHECK(zero.satisfied);
    CHECK(zero.threshold == 0.5);

    std::map<NeuronId, std::vector<std::vector<NeuronId>>> growth{{n1, {{n1}}}};
    CHECK_THROWS_AS(gl_nonlinear_bound({{{n2, n1}, 0.2}}, {{n2, {0.5, 0.5}}}, 1.0, growth), ModelError);
    growth[n1] = {{n1}, {n1, n2}};
    const auto ok = gl_nonlinear_bound({{{n2, n1}, 0.2}}, {{n2, {0.5, 0.5}}}, 1.0, growth);
    CHECK(ok.value > 0.0);
    CHECK(ok.value < gl_nonlinear_bound({{{n2, n1}, 0.4}}, {{n2, {0.5, 0.5}}}, 1.0, growth).value);
}

TEST_CASE("atom list round trip") {
    for (const auto& model :
         {markov_model(0.3, 0.6), hawkes_model(three_neurons()), gl_linear_model(two_neuron_gl(), 6),
          infinite_order_model(geometric_range_weights(0.8, 1e-6), 0.4, 1e-6)}) {
        const auto text = serialize_atom_list(model);
        std::istringstream in(text);
        const auto back = parse_atom_list(in);
        CHECK(serialize_atom_list(back) == text);
        for (auto i : back.representatives()) CHECK(back.dynamics(i) == model.dynamics(i));
    }
    HomogeneousHawkesSpec h;
    h.nu = 0.3;
    h.h = {{-1, 1, 0.2}};
    const auto text = serialize_atom_list(hawkes_model(h));
    std::istringstream in(text);
    CHECK(parse_atom_list(in).is_homogeneous());
}

TEST_CASE("model config files") {
    std::istringstream ok(
        "[model]\nfamily = hawkes\n[hawkes]\nnu = 1:0.3, 2:0.4\nh = 2,1,1,0.2; 1,2,2,-0.1\n");
    const auto cfg = parse_model_config(ok);
    std::ostringstream out;
    write_model_config(cfg, out);
    std::istringstream again(out.str());
    CHECK(parse_model_config(again) == cfg);
    const auto model = build_model(cfg);
    CHECK(mean_size(model.dynamics(n1).lambda) == doctest::Approx(0.2));

    std::istringstream bad_key("[model]\nfamily = markov\n[markov]\np1 = 0.3\np0 = 0.6\nq = 1\n");
    CHECK_THROWS_AS(build_model(parse_model_config(bad_key)), ConfigError);
    std::istringstream bad_family("[model]\nfamily = poisson\n");
    CHECK_THROWS_AS(build_model(parse_model_config(bad_family)), ConfigError);

    std::istringstream csv("j,i,lag,weight\n2,1,1,0.2\n3,1,2,-0.05\n");
    const auto h = read_hawkes_csv(csv);
    REQUIRE(h.size() == 2);
    CHECK(h[1] == HawkesInteraction{n3, n1, 2, -0.05});
    std::ostringstream w;
    write_hawkes_csv(h, w);
    std::istringstream r(w.str());
    CHECK(read_hawkes_csv(r) == h);
}
