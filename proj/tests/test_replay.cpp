#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "hexmarket/replay.hpp"

using namespace hexmarket;
using replay::PerBuffer;
using replay::Transition;

namespace {

Transition mk_tr(double reward) {
    Transition t;
    t.s = Tensor({2}, {reward, 0.0});
    t.next_s = t.s;
    t.action = {0.5};
    t.reward = reward;
    return t;
}

}  // namespace

TEST_CASE("insert: fresh rank, FIFO eviction, recency ties") {
    SECTION("first insert gets rank 1") {
        PerBuffer buf(8, 0.7, 0.5, 1);
        buf.insert(mk_tr(1.0));
        REQUIRE(buf.rank(0) == 1);
    }
    SECTION("eviction is strictly FIFO at capacity") {
        PerBuffer buf(3, 0.7, 0.5, 1);
        for (int i = 0; i < 4; ++i) buf.insert(mk_tr(static_cast<double>(i)));
        REQUIRE(buf.size() == 3);
        std::vector<double> rewards;
        for (std::size_t s = 0; s < buf.size(); ++s) rewards.push_back(buf.transition(s).reward);
        std::sort(rewards.begin(), rewards.end());
        REQUIRE(rewards == std::vector<double>{1.0, 2.0, 3.0});  // reward 0 evicted
    }
    SECTION("fresh items precede trained ones, newest first") {
        PerBuffer buf(8, 0.7, 0.5, 1);
        buf.insert(mk_tr(0.0));  // slot 0
        buf.insert(mk_tr(1.0));  // slot 1
        buf.update_priorities({0, 1}, {5.0, 9.0});
        buf.insert(mk_tr(2.0));  // slot 2, fresh
        buf.insert(mk_tr(3.0));  // slot 3, fresh
        REQUIRE(buf.rank(3) == 1);
        REQUIRE(buf.rank(2) == 2);
        REQUIRE(buf.rank(1) == 3);  // |td| 9 beats 5
        REQUIRE(buf.rank(0) == 4);
    }
}

TEST_CASE("probability closed forms") {
    SECTION("alpha = 0 is uniform") {
        PerBuffer buf(8, 0.0, 0.5, 1);
        for (int i = 0; i < 5; ++i) buf.insert(mk_tr(static_cast<double>(i)));
        for (std::size_t s = 0; s < 5; ++s) REQUIRE(std::abs(buf.probability(s) - 0.2) < 1e-12);
    }
    SECTION("three trained items with alpha = 1: P = (6/11, 3/11, 2/11)") {
        PerBuffer buf(8, 1.0, 0.5, 1);
        for (int i = 0; i < 3; ++i) buf.insert(mk_tr(static_cast<double>(i)));
        buf.update_priorities({0, 1, 2}, {30.0, 20.0, 10.0});
        REQUIRE(std::abs(buf.probability(0) - 6.0 / 11.0) < 1e-12);
        REQUIRE(std::abs(buf.probability(1) - 3.0 / 11.0) < 1e-12);
        REQUIRE(std::abs(buf.probability(2) - 2.0 / 11.0) < 1e-12);
    }
    SECTION("single item has probability 1") {
        PerBuffer buf(8, 0.7, 0.5, 1);
        buf.insert(mk_tr(0.0));
        REQUIRE(buf.probability(0) == 1.0);
    }
    SECTION("probabilities sum to 1 and decrease in rank") {
        PerBuffer buf(64, 0.7, 0.5, 1);
        Rng rng(9);
        for (int i = 0; i < 40; ++i) buf.insert(mk_tr(rng.uniform01()));
        std::vector<std::size_t> slots;
        std::vector<double> tds;
        for (std::size_t s = 0; s < buf.size(); ++s) {
            slots.push_back(s);
            tds.push_back(rng.uniform01() * 10.0);
        }
        buf.update_priorities(slots, tds);
        double sum = 0.0;
        for (std::size_t s = 0; s < buf.size(); ++s) sum += buf.probability(s);
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
        for (std::size_t s = 0; s < buf.size(); ++s)
            for (std::size_t r = 0; r < buf.size(); ++r)
                if (buf.rank(s) < buf.rank(r)) REQUIRE(buf.probability(s) > buf.probability(r));
    }
}

TEST_CASE("sample weights closed forms") {
    SECTION("beta = 0 gives all-ones weights") {
        PerBuffer buf(16, 0.7, 0.0, 3);
        for (int i = 0; i < 10; ++i) buf.insert(mk_tr(static_cast<double>(i)));
        const auto res = buf.sample(8);
        for (double w : res.weights) REQUIRE(w == 1.0);
    }
    SECTION("alpha = 0, beta = 1: raw weights are exactly 1") {
        PerBuffer buf(16, 0.0, 1.0, 3);
        for (int i = 0; i < 10; ++i) buf.insert(mk_tr(static_cast<double>(i)));
        const auto res = buf.sample(10);
        for (double w : res.weights) REQUIRE(std::abs(w - 1.0) < 1e-12);
    }
    SECTION("weights lie in (0,1] with max exactly 1") {
        PerBuffer buf(32, 1.0, 0.5, 3);
        for (int i = 0; i < 20; ++i) buf.insert(mk_tr(static_cast<double>(i)));
        std::vector<std::size_t> slots;
        std::vector<double> tds;
        Rng rng(10);
        for (std::size_t s = 0; s < buf.size(); ++s) {
            slots.push_back(s);
            tds.push_back(rng.uniform01());
        }
        buf.update_priorities(slots, tds);
        const auto res = buf.sample(16);
        double max_w = 0.0;
        for (double w : res.weights) {
            REQUIRE(w > 0.0);
            REQUIRE(w <= 1.0);
            max_w = std::max(max_w, w);
        }
        REQUIRE(max_w == 1.0);
    }
    SECTION("empty buffer cannot be sampled") {
        PerBuffer buf(4, 0.7, 0.5, 3);
        REQUIRE_THROWS_AS(buf.sample(4), StateError);
    }
    SECTION("N = min(stored, requested)") {
        PerBuffer buf(16, 0.7, 0.5, 3);
        for (int i = 0; i < 5; ++i) buf.insert(mk_tr(static_cast<double>(i)));
        REQUIRE(buf.sample(128).batch.size() == 5);
    }
    SECTION("sampling with a fixed seed is reproducible") {
        const auto draw = [] {
            PerBuffer buf(16, 0.7, 0.5, 99);
            for (int i = 0; i < 12; ++i) buf.insert(mk_tr(static_cast<double>(i)));
            std::vector<std::size_t> out;
            for (int k = 0; k < 5; ++k) {
                const auto res = buf.sample(4);
                out.insert(out.end(), res.indices.begin(), res.indices.end());
            }
            return out;
        };
        REQUIRE(draw() == draw());
    }
}

TEST_CASE("prioritized sampling matches Eq.-(12) frequencies (chi-square)") {
    PerBuffer buf(16, 1.0, 0.5, 0x515eed);
    for (int i = 0; i < 16; ++i) buf.insert(mk_tr(static_cast<double>(i)));
    std::vector<std::size_t> slots;
    std::vector<double> tds;
    for (std::size_t s = 0; s < 16; ++s) {
        slots.push_back(s);
        tds.push_back(static_cast<double>(100 - s));  // distinct, slot s gets rank s+1
    }
    buf.update_priorities(slots, tds);

    const int draws = 100000;
    std::vector<long> counts(16, 0);
    int drawn = 0;
    while (drawn < draws) {
        const auto res = buf.sample(16);
        for (std::size_t k = 0; k < res.indices.size() && drawn < draws; ++k, ++drawn) ++counts[res.indices[k]];
    }
    double chi2 = 0.0;
    for (std::size_t s = 0; s < 16; ++s) {
        const double expect = buf.probability(s) * draws;
        const double d = static_cast<double>(counts[s]) - expect;
        chi2 += d * d / expect;
    }
    REQUIRE(chi2 < 30.5779);  // chi-square 0.99 quantile, 15 dof
}

TEST_CASE("update_priorities rank maintenance") {
    PerBuffer buf(16, 0.7, 0.5, 5);
    for (int i = 0; i < 8; ++i) buf.insert(mk_tr(static_cast<double>(i)));

    SECTION("raising one item above all others makes it rank 1") {
        std::vector<std::size_t> slots{0, 1, 2, 3, 4, 5, 6, 7};
        std::vector<double> tds{1, 2, 3, 4, 5, 6, 7, 100};
        buf.update_priorities(slots, tds);
        REQUIRE(buf.rank(7) == 1);
        buf.update_priorities({2}, {500.0});
        REQUIRE(buf.rank(2) == 1);
    }
    SECTION("all equal errors rank by recency, newest first") {
        buf.update_priorities({0, 1, 2, 3, 4, 5, 6, 7}, std::vector<double>(8, 3.0));
        for (std::size_t s = 0; s < 8; ++s) REQUIRE(buf.rank(s) == 8 - s);
    }
    SECTION("rank permutation equals stable argsort-descending of |td|") {
        Rng rng(6);
        std::vector<std::size_t> slots;
        std::vector<double> tds;
        for (std::size_t s = 0; s < 8; ++s) {
            slots.push_back(s);
            tds.push_back(std::floor(rng.uniform01() * 5.0));  // force ties
        }
        buf.update_priorities(slots, tds);
        // Oracle: stable sort of (slot, |td|) pairs by |td| desc with newer
        // (larger slot = larger seq here) first on ties.
        std::vector<std::size_t> order(8);
        for (std::size_t s = 0; s < 8; ++s) order[s] = s;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (tds[a] != tds[b]) return tds[a] > tds[b];
            return a > b;
        });
        for (std::size_t pos = 0; pos < 8; ++pos) REQUIRE(buf.rank(order[pos]) == pos + 1);
    }
    SECTION("negative errors are rejected") {
        REQUIRE_THROWS_AS(buf.update_priorities({0}, {-1.0}), DomainError);
    }
}

TEST_CASE("buffer snapshot round-trips through the checkpoint container") {
    PerBuffer buf(8, 0.7, 0.5, 7);
    for (int i = 0; i < 5; ++i) {
        Transition t = mk_tr(static_cast<double>(i));
        t.memory = {Tensor({2}, {1.0 * i, 2.0})};
        t.next_memory = {Tensor({2}, {3.0, 4.0 * i})};
        t.terminal = (i == 4);
        buf.insert(std::move(t));
    }
    buf.update_priorities({0, 2}, {4.0, 9.0});
    const auto path = std::filesystem::temp_directory_path() / "hexmarket_buf_test.ckpt";
    buf.save_snapshot(path.string());
    const PerBuffer back = PerBuffer::load_snapshot(path.string(), 7);
    REQUIRE(back.size() == buf.size());
    for (std::size_t s = 0; s < buf.size(); ++s) {
        REQUIRE(back.transition(s).reward == buf.transition(s).reward);
        REQUIRE(back.transition(s).s == buf.transition(s).s);
        REQUIRE(back.transition(s).memory == buf.transition(s).memory);
        REQUIRE(back.transition(s).terminal == buf.transition(s).terminal);
        REQUIRE(back.rank(s) == buf.rank(s));
        REQUIRE(back.is_fresh(s) == buf.is_fresh(s));
    }
    std::filesystem::remove(path);
}
