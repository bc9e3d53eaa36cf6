#pragma once

#include <array>
#include <optional>
#include <set>
#include <vector>

#include "hexmarket/common.hpp"
#include "hexmarket/hexgrid.hpp"
#include "hexmarket/profile.hpp"
#include "hexmarket/rng.hpp"

namespace hexmarket::market {

using hexgrid::GridMap;
using hexgrid::Snapshot;

struct Order {
    int id = 0;
    int type = 1;  // 1 = Discount-only, 2 = Express-only, 3 = either
    std::size_t origin = 0;
    std::size_t destination = 0;
    int created_step = 0;
};

struct Driver {
    int id = 0;
    int platform = 0;
    std::size_t cell = 0;
    bool accepts_discount = false;
    bool online = true;
};

struct MatchRecord {
    int driver_id = 0;
    int order_id = 0;
    std::size_t grid = 0;  // order origin cell
    bool served_as_discount = false;
    double fee = 0.0;
    int order_type = 0;
    std::size_t destination = 0;
    int platform = 0;
};

// Eq.-(1) observation: own driver counts by acceptance class plus the global
// order pool by type. Counts are stored as reals for direct encoding.
struct Observation {
    std::vector<double> accept;
    std::vector<double> reject;
    std::array<std::vector<double>, 3> demand;

    static Observation zeros(std::size_t cells) {
        Observation o;
        o.accept.assign(cells, 0.0);
        o.reject.assign(cells, 0.0);
        for (auto& d : o.demand) d.assign(cells, 0.0);
        return o;
    }
};

// Ground truth of the simulated market. Drivers are indexed by id and are
// never destroyed; offline drivers stay with online = false. One seedable
// generator drives every stochastic phase; the draw order is documented on
// each phase function.
struct MarketState {
    int t = 0;
    std::vector<Driver> drivers;
    std::vector<Order> open_orders;  // current interval only, ascending id
    Rng rng;
    int next_order_id = 0;
    // Conservation diagnostics: initial placement counts as onlining.
    std::vector<long> onlined;
    std::vector<long> offlined;

    MarketState(std::uint64_t seed, int platforms)
        : rng(seed), onlined(static_cast<std::size_t>(platforms), 0), offlined(static_cast<std::size_t>(platforms), 0) {}

    long online_count(int platform) const {
        long n = 0;
        for (const auto& d : drivers)
            if (d.online && d.platform == platform) ++n;
        return n;
    }
};

// Draw order: platforms ascending; per platform the driver count, then per
// driver its cell, then (competitors only) the acceptance flag.
inline MarketState reset(const ScenarioProfile& profile, std::uint64_t seed) {
    profile_io::validate(profile);
    MarketState state(seed, profile.platforms);
    const std::size_t cells = profile.map.size();
    for (int m = 0; m < profile.platforms; ++m) {
        const long count = state.rng.poisson(profile.supply_mean(m, 0));
        for (long k = 0; k < count; ++k) {
            Driver d;
            d.id = static_cast<int>(state.drivers.size());
            d.platform = m;
            d.cell = state.rng.uniform_int(cells);
            d.accepts_discount = (m == profile.controlled_platform) ? false : state.rng.bernoulli(profile.competitor_ratio);
            state.drivers.push_back(d);
            state.onlined[static_cast<std::size_t>(m)] += 1;
        }
    }
    return state;
}

// Poisson arrivals per (cell, type); cell-major then type draw order, one
// destination draw per order. Appends to the (empty) pool and returns them.
inline std::vector<Order> order_arrival(MarketState& state, const ScenarioProfile& profile) {
    if (state.t >= profile.horizon) throw StateError("order_arrival: episode is over");
    std::vector<Order> created;
    const std::size_t cells = profile.map.size();
    for (std::size_t i = 0; i < cells; ++i) {
        // Cumulative destination weights for origin i.
        std::vector<double> cum(cells);
        double acc = 0.0;
        for (std::size_t k = 0; k < cells; ++k) {
            acc += profile.dest_weights[i][k];
            cum[k] = acc;
        }
        for (int jt = 0; jt < kOrderTypes; ++jt) {
            const long count = state.rng.poisson(profile.demand_mean(state.t, i, jt));
            for (long k = 0; k < count; ++k) {
                Order o;
                o.id = state.next_order_id++;
                o.type = jt + 1;
                o.origin = i;
                o.destination = state.rng.categorical(cum);
                o.created_step = state.t;
                created.push_back(o);
            }
        }
    }
    state.open_orders.insert(state.open_orders.end(), created.begin(), created.end());
    return created;
}

inline double online_rate(const ScenarioProfile& profile, int platform, int t) {
    return std::max(0.0, profile.supply_mean(platform, t + 1) - profile.supply_mean(platform, t));
}

inline double offline_probability(const ScenarioProfile& profile, int platform, int t) {
    const double now = profile.supply_mean(platform, t);
    if (now <= 0.0) return 0.0;
    return std::max(0.0, (now - profile.supply_mean(platform, t + 1)) / now);
}

// Onlining first (platforms ascending: count, then per driver cell and
// competitor flag), then offlining over all online drivers ascending id.
inline void driver_online_offline(MarketState& state, const ScenarioProfile& profile) {
    if (state.t >= profile.horizon) throw StateError("driver_online_offline: episode is over");
    const std::size_t cells = profile.map.size();
    for (int m = 0; m < profile.platforms; ++m) {
        const long count = state.rng.poisson(online_rate(profile, m, state.t));
        for (long k = 0; k < count; ++k) {
            Driver d;
            d.id = static_cast<int>(state.drivers.size());
            d.platform = m;
            d.cell = state.rng.uniform_int(cells);
            d.accepts_discount = (m == profile.controlled_platform) ? false : state.rng.bernoulli(profile.competitor_ratio);
            state.drivers.push_back(d);
            state.onlined[static_cast<std::size_t>(m)] += 1;
        }
    }
    std::vector<double> p_off(static_cast<std::size_t>(profile.platforms));
    for (int m = 0; m < profile.platforms; ++m) p_off[static_cast<std::size_t>(m)] = offline_probability(profile, m, state.t);
    for (auto& d : state.drivers) {
        if (!d.online) continue;
        const double p = p_off[static_cast<std::size_t>(d.platform)];
        if (p > 0.0 && state.rng.bernoulli(p)) {
            d.online = false;
            state.offlined[static_cast<std::size_t>(d.platform)] += 1;
        }
    }
}

inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

// Sets exactly round_half_up(a_i * n_i) of the platform's online drivers in
// each cell to accepting, chosen uniformly at random (partial Fisher-Yates
// over the cell's drivers in ascending-id order); the rest are reset.
inline void apply_action(MarketState& state, const ScenarioProfile& profile, int platform,
                         const std::vector<double>& action) {
    const std::size_t cells = profile.map.size();
    if (action.size() != cells) throw ShapeError("apply_action: action must have one component per cell");
    for (double a : action)
        if (!(a >= 0.0 && a <= 1.0)) throw DomainError("apply_action: components must lie in [0, 1]");
    std::vector<std::vector<int>> per_cell(cells);
    for (const auto& d : state.drivers)
        if (d.online && d.platform == platform) per_cell[d.cell].push_back(d.id);
    for (std::size_t i = 0; i < cells; ++i) {
        auto& ids = per_cell[i];  // ascending id by construction
        const long n = static_cast<long>(ids.size());
        if (n == 0) continue;
        const long k = std::min<long>(n, round_half_up(action[i] * static_cast<double>(n)));
        for (long j = 0; j < k; ++j) {
            const std::size_t pick = static_cast<std::size_t>(j) + state.rng.uniform_int(static_cast<std::uint64_t>(n - j));
            std::swap(ids[static_cast<std::size_t>(j)], ids[pick]);
        }
        for (long j = 0; j < n; ++j) state.drivers[static_cast<std::size_t>(ids[static_cast<std::size_t>(j)])].accepts_discount = j < k;
    }
}

// Platform-private observation: own online drivers only, global order pool.
inline Observation get_state(const MarketState& state, const ScenarioProfile& profile, int platform) {
    Observation o = Observation::zeros(profile.map.size());
    for (const auto& d : state.drivers) {
        if (!d.online || d.platform != platform) continue;
        (d.accepts_discount ? o.accept : o.reject)[d.cell] += 1.0;
    }
    for (const auto& ord : state.open_orders) o.demand[static_cast<std::size_t>(ord.type - 1)][ord.origin] += 1.0;
    return o;
}

inline double base_fee(const GridMap& map, std::size_t origin, std::size_t destination) {
    return std::max(1, hexgrid::hex_distance(map.cell(origin), map.cell(destination)));
}

// Centralized priority matching. Pairing steps run in this order:
//   1. Type 2 -> non-accepting drivers
//   2. Type 1 -> accepting drivers
//   3. residual Type 2 -> accepting drivers
//   4. Type 3 -> non-accepting drivers
//   5. residual Type 3 -> accepting drivers
// Within a step, orders go in ascending id; each order takes the lowest-id
// driver in its own cell, else the first nonempty adjacent cell in canonical
// order. Tiers: Type 1 pays the discount fee, Type 2 the Express fee, and
// Type 3 follows the serving driver's class. Drivers of all platforms are
// pooled identically.
inline std::vector<MatchRecord> order_matching(const MarketState& state, const ScenarioProfile& profile) {
    const GridMap& map = profile.map;
    const std::size_t cells = map.size();

    // Per-cell available driver ids, non-accepting pool [0] / accepting pool [1].
    std::vector<std::array<std::set<int>, 2>> pools(cells);
    for (const auto& d : state.drivers)
        if (d.online) pools[d.cell][d.accepts_discount ? 1 : 0].insert(d.id);

    std::vector<std::vector<std::size_t>> ring(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        ring[i].push_back(i);
        for (const auto& nb : hexgrid::neighbors(map.cell(i), map)) ring[i].push_back(map.index(nb));
    }

    std::vector<MatchRecord> out;
    std::vector<bool> matched(state.open_orders.size(), false);

    const auto run_pairing = [&](int order_type, int pool_class) {
        for (std::size_t oi = 0; oi < state.open_orders.size(); ++oi) {
            if (matched[oi]) continue;
            const Order& ord = state.open_orders[oi];
            if (ord.type != order_type) continue;
            for (std::size_t cell : ring[ord.origin]) {
                auto& pool = pools[cell][static_cast<std::size_t>(pool_class)];
                if (pool.empty()) continue;
                const int driver_id = *pool.begin();
                pool.erase(pool.begin());
                matched[oi] = true;
                MatchRecord rec;
                rec.driver_id = driver_id;
                rec.order_id = ord.id;
                rec.grid = ord.origin;
                rec.order_type = ord.type;
                rec.destination = ord.destination;
                rec.platform = state.drivers[static_cast<std::size_t>(driver_id)].platform;
                rec.served_as_discount = (ord.type == 1) || (ord.type == 3 && pool_class == 1);
                rec.fee = base_fee(map, ord.origin, ord.destination) * (rec.served_as_discount ? profile.discount_ratio : 1.0);
                out.push_back(rec);
                break;
            }
        }
    };

    run_pairing(2, 0);
    run_pairing(1, 1);
    run_pairing(2, 1);
    run_pairing(3, 0);
    run_pairing(3, 1);
    return out;
}

// Matched drivers move to their order's destination; everyone else stays.
inline void driver_transition(MarketState& state, const std::vector<MatchRecord>& matches) {
    for (const auto& rec : matches) {
        if (rec.driver_id < 0 || static_cast<std::size_t>(rec.driver_id) >= state.drivers.size())
            throw InternalError("driver_transition: unknown driver id");
        state.drivers[static_cast<std::size_t>(rec.driver_id)].cell = rec.destination;
    }
}

struct StepResult {
    std::vector<Observation> observations;  // per platform, pre-matching
    std::vector<double> rewards;            // per platform, total fees this step
    std::vector<MatchRecord> matches;
    bool done = false;
};

// One interval: order_arrival -> driver_online_offline -> get_state ->
// apply_action -> order_matching -> driver_transition; unmatched orders
// expire at step end and the clock advances.
inline StepResult step(MarketState& state, const ScenarioProfile& profile,
                       const std::vector<std::optional<std::vector<double>>>& actions) {
    if (state.t >= profile.horizon) throw StateError("step: called after the episode finished");
    if (actions.size() != static_cast<std::size_t>(profile.platforms))
        throw ShapeError("step: need one (optional) action per platform");

    order_arrival(state, profile);
    driver_online_offline(state, profile);

    StepResult result;
    result.observations.reserve(static_cast<std::size_t>(profile.platforms));
    for (int m = 0; m < profile.platforms; ++m) result.observations.push_back(get_state(state, profile, m));

    for (int m = 0; m < profile.platforms; ++m)
        if (actions[static_cast<std::size_t>(m)]) apply_action(state, profile, m, *actions[static_cast<std::size_t>(m)]);

    result.matches = order_matching(state, profile);
    result.rewards.assign(static_cast<std::size_t>(profile.platforms), 0.0);
    for (const auto& rec : result.matches) result.rewards[static_cast<std::size_t>(rec.platform)] += rec.fee;

    driver_transition(state, result.matches);
    state.open_orders.clear();
    state.t += 1;
    result.done = (state.t == profile.horizon);
    return result;
}

// Stateful episode wrapper: owns the MarketState and keeps the rolling
// per-platform snapshot history (the last memory_len intervals) that feeds
// the ConvLSTM memory.
class Sim {
public:
    Sim(ScenarioProfile profile, std::uint64_t seed, std::size_t memory_len)
        : profile_(std::move(profile)), memory_len_(memory_len), state_(reset(profile_, seed)) {
        histories_.assign(static_cast<std::size_t>(profile_.platforms), {});
    }

    const ScenarioProfile& profile() const { return profile_; }
    const MarketState& state() const { return state_; }
    MarketState& mutable_state() { return state_; }
    bool done() const { return state_.t >= profile_.horizon; }
    int t() const { return state_.t; }

    Observation observe(int platform) const { return get_state(state_, profile_, platform); }

    const std::vector<Snapshot>& history(int platform) const {
        return histories_[static_cast<std::size_t>(platform)];
    }

    StepResult step(const std::vector<std::optional<std::vector<double>>>& actions) {
        StepResult result = market::step(state_, profile_, actions);
        const std::size_t cells = profile_.map.size();
        for (int m = 0; m < profile_.platforms; ++m) {
            Snapshot snap = Snapshot::zeros(cells);
            const Observation& obs = result.observations[static_cast<std::size_t>(m)];
            snap.drivers_accept = obs.accept;
            snap.drivers_reject = obs.reject;
            snap.demand = obs.demand;
            if (actions[static_cast<std::size_t>(m)]) snap.action = *actions[static_cast<std::size_t>(m)];
            for (const auto& rec : result.matches)
                if (rec.platform == m) snap.fulfilled[static_cast<std::size_t>(rec.order_type - 1)][rec.grid] += 1.0;
            auto& hist = histories_[static_cast<std::size_t>(m)];
            hist.push_back(std::move(snap));
            if (hist.size() > memory_len_) hist.erase(hist.begin());
        }
        return result;
    }

private:
    ScenarioProfile profile_;
    std::size_t memory_len_;
    MarketState state_;
    std::vector<std::vector<Snapshot>> histories_;
};

}  // namespace hexmarket::market
