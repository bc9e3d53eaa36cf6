#include <catch_amalgamated.hpp>

#include <cmath>

#include "hexmarket/refiner.hpp"

using namespace hexmarket;
using agent::CriticNet;
using agent::NetConfig;
using hexgrid::GridMap;
using refiner::RefinerParams;

namespace {

struct Toy {
    GridMap map;
    NetConfig cfg;
    CriticNet critic;
    Tensor s;
    std::vector<Tensor> mem;

    explicit Toy(int radius, std::uint64_t seed = 1)
        : map(GridMap::hexagon(radius)), cfg(make_cfg(map)), critic(make_critic(seed)),
          s({cfg.obs_channels, cfg.rows, cfg.cols}) {
        for (std::size_t l = 0; l < cfg.memory_len; ++l) mem.emplace_back(Tensor({cfg.mem_channels, cfg.rows, cfg.cols}));
    }

    static NetConfig make_cfg(const GridMap& map) {
        NetConfig cfg;
        cfg.rows = map.rows();
        cfg.cols = map.cols();
        cfg.cells = map.size();
        cfg.memory_len = 2;
        cfg.conv_channels = 2;
        cfg.dense1 = 8;
        cfg.dense2 = 6;
        return cfg;
    }

    CriticNet make_critic(std::uint64_t seed) {
        Rng rng(seed);
        return CriticNet(cfg, map.mask(), rng);
    }

    void zero_critic() {
        for (auto& e : critic.params().entries) e.value.fill(0.0);
    }

    // Q = sum_i a_i via the ReLU trunk.
    void sum_critic() {
        zero_critic();
        const std::size_t action_offset = (cfg.conv_channels + cfg.obs_channels) * cfg.rows * cfg.cols;
        Tensor& fc1 = critic.params().at("fc1.w");
        for (std::size_t i = 0; i < cfg.cells; ++i) fc1.v[(action_offset + i) * cfg.dense1 + 0] = 1.0;
        critic.params().at("fc2.w").v[0] = 1.0;
        critic.params().at("head.w").v[0] = 1.0;
    }
};

}  // namespace

TEST_CASE("affine_clip identity, upper clip, lower clip") {
    const std::vector<double> a{0.4, 0.9, 0.1};
    SECTION("identity parameters reproduce the action") {
        REQUIRE(refiner::affine_clip(a, RefinerParams::identity(3)) == a);
    }
    SECTION("upper clip") {
        RefinerParams p = RefinerParams::identity(3);
        p.w.assign(3, 2.0);
        p.b.assign(3, 0.5);
        const auto out = refiner::affine_clip(a, p);
        REQUIRE(out[0] == 1.0);  // clip(1.3)
        REQUIRE(out[1] == 1.0);
        REQUIRE(out[2] == 0.7);
    }
    SECTION("lower clip") {
        RefinerParams p = RefinerParams::identity(3);
        p.w.assign(3, 0.0);
        p.b.assign(3, -1.0);
        REQUIRE(refiner::affine_clip(a, p) == std::vector<double>{0.0, 0.0, 0.0});
    }
    SECTION("dimension mismatch") {
        REQUIRE_THROWS_AS(refiner::affine_clip(a, RefinerParams::identity(2)), ShapeError);
    }
}

TEST_CASE("refine with K = 0 returns the input bitwise") {
    Toy toy(1, 7);
    std::vector<double> a0(toy.map.size());
    Rng rng(5);
    for (double& x : a0) x = rng.uniform01();
    const auto res = refiner::refine(a0, toy.s, toy.mem, toy.critic, 0, 0.1);
    REQUIRE(res.action == a0);
    REQUIRE(res.q_after == res.q_before);
    REQUIRE(res.k_used == 0);
}

TEST_CASE("hand example: Q = a, eta = 0.1, K = 1, a0 = 0.5 gives 0.625") {
    Toy toy(0, 9);  // single cell
    toy.sum_critic();
    const auto res = refiner::refine({0.5}, toy.s, toy.mem, toy.critic, 1, 0.1);
    REQUIRE(std::abs(res.action[0] - 0.625) < 1e-12);
    REQUIRE(std::abs(res.q_before - 0.5) < 1e-12);
    REQUIRE(std::abs(res.q_after - 0.625) < 1e-12);
}

TEST_CASE("saturated components freeze for the remaining steps") {
    Toy toy(0, 11);
    toy.sum_critic();
    // eta = 2: after step 1, w = 2 and b = 2, so w*a+b = 3 >= 1 saturates.
    const auto res1 = refiner::refine({0.5}, toy.s, toy.mem, toy.critic, 1, 2.0);
    const auto res5 = refiner::refine({0.5}, toy.s, toy.mem, toy.critic, 5, 2.0);
    REQUIRE(res1.action[0] == 1.0);
    REQUIRE(res5.action[0] == res1.action[0]);  // no further movement
    REQUIRE(res5.q_after == res1.q_after);
}

TEST_CASE("boundary components never move (clip-mask zero-gradient)") {
    Toy toy(1, 13);
    toy.sum_critic();  // gradient 1 in every component
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a0(toy.map.size());
        for (std::size_t i = 0; i < a0.size(); ++i) {
            const double u = rng.uniform01();
            a0[i] = u < 0.3 ? 0.0 : (u < 0.6 ? 1.0 : 0.2 + 0.6 * rng.uniform01());
        }
        const auto res = refiner::refine(a0, toy.s, toy.mem, toy.critic, 3, 0.05);
        for (std::size_t i = 0; i < a0.size(); ++i) {
            if (a0[i] == 0.0 || a0[i] == 1.0) {
                REQUIRE(res.action[i] == a0[i]);  // pre-clip value on the boundary: frozen
            } else {
                REQUIRE(res.action[i] >= a0[i]);  // positive gradient moves interior up
            }
        }
    }
}

TEST_CASE("constant critic returns a0 exactly") {
    Toy toy(1, 19);
    toy.zero_critic();
    std::vector<double> a0(toy.map.size());
    Rng rng(21);
    for (double& x : a0) x = rng.uniform01();
    const auto res = refiner::refine(a0, toy.s, toy.mem, toy.critic, 10, 0.1);
    REQUIRE(res.action == a0);
    REQUIRE(res.q_after == res.q_before);
}

TEST_CASE("refine never mutates the critic and stays in [0,1]") {
    Toy toy(1, 23);
    const auto before = neural::clone_values(toy.critic.params());
    Rng rng(25);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a0(toy.map.size());
        for (double& x : a0) x = rng.uniform01();
        Tensor s = toy.s;
        for (std::size_t c = 0; c < toy.cfg.obs_channels; ++c)
            for (std::size_t p = 0; p < toy.map.mask().numel(); ++p)
                s.v[c * toy.map.mask().numel() + p] = toy.map.mask().v[p] * rng.uniform01();
        const auto res = refiner::refine(a0, s, toy.mem, toy.critic, 5, 0.2);
        for (double x : res.action) {
            REQUIRE(x >= 0.0);
            REQUIRE(x <= 1.0);
        }
    }
    REQUIRE(toy.critic.params().values_equal(before));
}

TEST_CASE("linear critic: Q strictly increases per step until saturation") {
    Toy toy(0, 27);
    toy.sum_critic();
    double prev_q = toy.critic.q_value(toy.s, toy.mem, {0.3});
    for (int k = 1; k <= 8; ++k) {
        const auto res = refiner::refine({0.3}, toy.s, toy.mem, toy.critic, k, 0.05);
        if (res.action[0] < 1.0) {
            REQUIRE(res.q_after > prev_q);
            prev_q = res.q_after;
        } else {
            REQUIRE(res.q_after >= prev_q);
        }
    }
}

TEST_CASE("fallback flag restores a0 when a fixed-step overshoot lowers Q") {
    // Tent critic Q = min(a, 1 - a): fc1 computes [a, relu(a - 0.5)], fc2
    // combines them as a - 2*relu(a - 0.5).
    Toy toy(0, 29);
    toy.zero_critic();
    const std::size_t aoff = (toy.cfg.conv_channels + toy.cfg.obs_channels) * toy.cfg.rows * toy.cfg.cols;
    Tensor& fc1 = toy.critic.params().at("fc1.w");
    fc1.v[aoff * toy.cfg.dense1 + 0] = 1.0;
    fc1.v[aoff * toy.cfg.dense1 + 1] = 1.0;
    toy.critic.params().at("fc1.b").v[1] = -0.5;
    Tensor& fc2 = toy.critic.params().at("fc2.w");
    fc2.v[0 * toy.cfg.dense2 + 0] = 1.0;
    fc2.v[1 * toy.cfg.dense2 + 0] = -2.0;
    toy.critic.params().at("head.w").v[0] = 1.0;

    REQUIRE(std::abs(toy.critic.q_value(toy.s, toy.mem, {0.45}) - 0.45) < 1e-12);
    REQUIRE(std::abs(toy.critic.q_value(toy.s, toy.mem, {0.8}) - 0.2) < 1e-12);

    // One eta = 0.2 step from a0 = 0.45 jumps across the peak: a' = 0.6905,
    // Q drops from 0.45 to 0.3095.
    const auto no_fb = refiner::refine({0.45}, toy.s, toy.mem, toy.critic, 1, 0.2, false);
    REQUIRE(std::abs(no_fb.action[0] - 0.6905) < 1e-12);
    REQUIRE(no_fb.q_after < no_fb.q_before);

    const auto fb = refiner::refine({0.45}, toy.s, toy.mem, toy.critic, 1, 0.2, true);
    REQUIRE(fb.fell_back);
    REQUIRE(fb.action == std::vector<double>{0.45});
    REQUIRE(fb.q_after == fb.q_before);
}

TEST_CASE("refinement_schedule") {
    REQUIRE(refiner::refinement_schedule(1, 10) == 1);
    REQUIRE(refiner::refinement_schedule(50, 10) == 10);
    REQUIRE(refiner::refinement_schedule(0, 10) == 0);
    REQUIRE(refiner::refinement_schedule(7, 7) == 7);
    REQUIRE_THROWS_AS(refiner::refinement_schedule(-1, 10), DomainError);
}
