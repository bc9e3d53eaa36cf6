#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hexmarket/agent.hpp"
#include "hexmarket/market.hpp"
#include "hexmarket/profile.hpp"
#include "hexmarket/refiner.hpp"
#include "hexmarket/replay.hpp"

namespace hexmarket::trainer {

struct TrainConfig {
    int episodes = 100;
    std::size_t memory_len = 4;  // L
    double gamma = 0.99;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double tau = 0.005;
    double sigma0 = 0.1;
    std::size_t batch = 128;  // minibatch cap: N = min(stored, batch)
    double per_alpha = 0.7;
    double per_beta = 0.5;
    std::size_t buffer_capacity = 50000;
    int k_max = 10;
    double eta = 0.1;
    std::uint64_t seed = 0;
    bool refine_fallback = false;
    std::size_t conv_channels = 8;
    std::size_t dense1 = 128;
    std::size_t dense2 = 64;

    void validate() const {
        if (episodes < 1) throw ConfigError("train: episodes must be >= 1");
        if (memory_len < 1) throw ConfigError("train: memory_len must be >= 1");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must lie in [0, 1]");
        if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("train: learning rates must be positive");
        if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("train: tau must lie in (0, 1]");
        if (sigma0 < 0.0) throw ConfigError("train: sigma0 must be nonnegative");
        if (batch < 1) throw ConfigError("train: batch must be >= 1");
        if (per_alpha < 0.0 || per_beta < 0.0) throw ConfigError("train: PER exponents must be nonnegative");
        if (buffer_capacity < 1) throw ConfigError("train: buffer capacity must be >= 1");
        if (k_max < 0) throw ConfigError("train: K_max must be nonnegative");
        if (!(eta > 0.0)) throw ConfigError("train: eta must be positive");
        if (conv_channels < 1 || dense1 < 1 || dense2 < 1) throw ConfigError("train: network sizes must be >= 1");
    }
};

struct RefinerCall {
    int episode = 0;
    int step = 0;
    int k_refine = 0;
    double q_before = 0.0;
    double q_after = 0.0;
};

struct EpisodeMetrics {
    int episode = 0;
    double total_reward = 0.0;
    std::vector<double> step_rewards;
    double critic_loss_mean = 0.0;
    double actor_gradnorm_mean = 0.0;
    double refiner_q_gain_median = 0.0;
    double sigma = 0.0;
    double wall_ms = 0.0;
    std::vector<RefinerCall> refiner_calls;
};

inline double median(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// sigma(ep) = sigma0 * (1 - (ep - 1)/episodes); episode 1 gets sigma0.
inline double noise_schedule(int episode_idx, int total_episodes, double sigma0) {
    if (episode_idx < 1 || episode_idx > total_episodes) throw DomainError("noise_schedule: episode index out of range");
    return sigma0 * (1.0 - static_cast<double>(episode_idx - 1) / static_cast<double>(total_episodes));
}

inline agent::NetConfig make_net_config(const ScenarioProfile& profile, const TrainConfig& cfg) {
    agent::NetConfig nc;
    nc.rows = profile.map.rows();
    nc.cols = profile.map.cols();
    nc.cells = profile.map.size();
    nc.memory_len = cfg.memory_len;
    nc.conv_channels = cfg.conv_channels;
    nc.dense1 = cfg.dense1;
    nc.dense2 = cfg.dense2;
    return nc;
}

// One experiment's learner state: the four networks plus the PER buffer and
// the exploration-noise stream, all seeded deterministically from cfg.seed.
struct Learner {
    agent::NetConfig net_cfg;
    agent::ActorNet actor;
    agent::CriticNet critic;
    agent::TargetPair targets;
    replay::PerBuffer buffer;
    Rng noise_rng;

    Learner(const ScenarioProfile& profile, const TrainConfig& cfg)
        : Learner(profile, cfg, Rng(Rng::derive(cfg.seed, 1))) {}

private:
    // Init draw order is fixed: actor first, then critic, one derived stream.
    Learner(const ScenarioProfile& profile, const TrainConfig& cfg, Rng init_rng)
        : net_cfg(make_net_config(profile, cfg)),
          actor(net_cfg, profile.map.mask(), init_rng),
          critic(net_cfg, profile.map.mask(), init_rng),
          targets(actor, critic),
          buffer(cfg.buffer_capacity, cfg.per_alpha, cfg.per_beta, Rng::derive(cfg.seed, 2)),
          noise_rng(Rng::derive(cfg.seed, 3)) {}
};

inline std::uint64_t episode_env_seed(std::uint64_t master, int episode_idx) {
    return Rng::derive(master, 0x10000u + static_cast<std::uint64_t>(episode_idx));
}

namespace detail {

// Shared body of Algorithms 1 and 3; use_refiner selects the Alg. 3 path.
inline EpisodeMetrics run_episode(Learner& L, const ScenarioProfile& profile, const TrainConfig& cfg, int episode_idx,
                                  bool use_refiner) {
    const auto t_start = std::chrono::steady_clock::now();
    const int m = profile.controlled_platform;
    const double sigma = noise_schedule(episode_idx, cfg.episodes, cfg.sigma0);
    const int k_refine = use_refiner ? refiner::refinement_schedule(episode_idx, cfg.k_max) : 0;

    market::Sim env(profile, episode_env_seed(cfg.seed, episode_idx), cfg.memory_len);
    const double norm = profile.encode_norm;
    market::Observation obs = env.observe(m);
    Tensor s = hexgrid::encode_observation(obs.accept, obs.reject, obs.demand, profile.map, norm);
    std::vector<Tensor> mem = hexgrid::encode_memory(env.history(m), profile.map, cfg.memory_len, norm);

    EpisodeMetrics em;
    em.episode = episode_idx;
    em.sigma = sigma;
    std::vector<double> losses, gnorms, qgains;

    while (!env.done()) {
        const int t = env.t();
        std::vector<double> a = L.actor.act(s, mem);
        if (use_refiner) {
            const auto rr = refiner::refine(a, s, mem, L.critic, k_refine, cfg.eta, cfg.refine_fallback);
            a = rr.action;
            em.refiner_calls.push_back({episode_idx, t, k_refine, rr.q_before, rr.q_after});
            qgains.push_back(rr.q_after - rr.q_before);
        }
        // Exploration: i.i.d. Gaussian per component, then clip to [0, 1].
        std::vector<double> a_exec = a;
        if (sigma > 0.0)
            for (double& ai : a_exec) ai = std::clamp(ai + L.noise_rng.normal(0.0, sigma), 0.0, 1.0);

        std::vector<std::optional<std::vector<double>>> actions(static_cast<std::size_t>(profile.platforms));
        actions[static_cast<std::size_t>(m)] = a_exec;
        const market::StepResult sr = env.step(actions);
        const double r = sr.rewards[static_cast<std::size_t>(m)];
        em.step_rewards.push_back(r);
        em.total_reward += r;

        const market::Observation& next_obs = sr.observations[static_cast<std::size_t>(m)];
        Tensor next_s = hexgrid::encode_observation(next_obs.accept, next_obs.reject, next_obs.demand, profile.map, norm);
        std::vector<Tensor> next_mem = hexgrid::encode_memory(env.history(m), profile.map, cfg.memory_len, norm);

        // The stored action is the executed one (refined, noise added, then
        // clipped), matching the algorithm's overwrite-then-store order;
        // fresh transitions enter at max priority.
        replay::Transition tr;
        tr.s = s;
        tr.memory = mem;
        tr.action = a_exec;
        tr.reward = r;
        tr.next_s = next_s;
        tr.next_memory = next_mem;
        tr.terminal = sr.done;
        L.buffer.insert(std::move(tr));

        auto sample = L.buffer.sample(cfg.batch);
        const std::vector<double> y = agent::td_targets(sample.batch, L.actor, L.critic, L.targets, cfg.gamma);
        const std::vector<double> deltas = agent::td_errors(L.critic, sample.batch, y);
        std::vector<double> abs_deltas(deltas.size());
        for (std::size_t j = 0; j < deltas.size(); ++j) abs_deltas[j] = std::abs(deltas[j]);
        L.buffer.update_priorities(sample.indices, abs_deltas);
        losses.push_back(agent::critic_update(L.critic, sample.batch, y, sample.weights, cfg.critic_lr));
        gnorms.push_back(agent::actor_update(L.actor, L.critic, sample.batch, cfg.actor_lr));
        agent::soft_update_targets(L.targets, L.actor, L.critic, cfg.tau);

        s = std::move(next_s);
        mem = std::move(next_mem);
    }

    const auto mean = [](const std::vector<double>& xs) {
        if (xs.empty()) return 0.0;
        double s = 0.0;
        for (double x : xs) s += x;
        return s / static_cast<double>(xs.size());
    };
    em.critic_loss_mean = mean(losses);
    em.actor_gradnorm_mean = mean(gnorms);
    em.refiner_q_gain_median = median(qgains);
    em.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return em;
}

}  // namespace detail

// Algorithm 1.
inline EpisodeMetrics run_episode_ddpg(Learner& L, const ScenarioProfile& profile, const TrainConfig& cfg,
                                       int episode_idx) {
    return detail::run_episode(L, profile, cfg, episode_idx, false);
}

// Algorithm 3: the actor's action is refined (K = min(episode, K_max))
// before exploration noise; otherwise identical to Algorithm 1.
inline EpisodeMetrics run_episode_pi_ddpg(Learner& L, const ScenarioProfile& profile, const TrainConfig& cfg,
                                          int episode_idx) {
    return detail::run_episode(L, profile, cfg, episode_idx, true);
}

enum class Algo { Ddpg, PiDdpg };

// Full training loop; streams per-episode metrics to the sink when given.
inline std::vector<EpisodeMetrics> run_training(Learner& L, const ScenarioProfile& profile, const TrainConfig& cfg,
                                                Algo algo,
                                                const std::function<void(const EpisodeMetrics&)>& sink = {}) {
    cfg.validate();
    std::vector<EpisodeMetrics> out;
    out.reserve(static_cast<std::size_t>(cfg.episodes));
    for (int ep = 1; ep <= cfg.episodes; ++ep) {
        out.push_back(algo == Algo::Ddpg ? run_episode_ddpg(L, profile, cfg, ep)
                                         : run_episode_pi_ddpg(L, profile, cfg, ep));
        if (sink) sink(out.back());
    }
    return out;
}

// ---- Policies and evaluation ----

using Policy = std::function<std::vector<double>(const Tensor& s, const std::vector<Tensor>& memory)>;

inline Policy fixed_ratio_policy(double ratio, std::size_t cells) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("fixed_ratio_policy: ratio must lie in [0, 1]");
    return [ratio, cells](const Tensor&, const std::vector<Tensor>&) { return std::vector<double>(cells, ratio); };
}

inline Policy actor_policy(const agent::ActorNet& actor) {
    return [&actor](const Tensor& s, const std::vector<Tensor>& mem) { return actor.act(s, mem); };
}

inline Policy refined_actor_policy(const agent::ActorNet& actor, const agent::CriticNet& critic, int k_refine,
                                   double eta) {
    return [&actor, &critic, k_refine, eta](const Tensor& s, const std::vector<Tensor>& mem) {
        return refiner::refine(actor.act(s, mem), s, mem, critic, k_refine, eta).action;
    };
}

struct EvalStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> per_episode;
};

// Noise-free, learning-free rollouts, one per seed.
inline EvalStats evaluate(const Policy& policy, const ScenarioProfile& profile, const std::vector<std::uint64_t>& seeds,
                          std::size_t memory_len) {
    if (seeds.empty()) throw DomainError("evaluate: need at least one seed");
    EvalStats stats;
    const int m = profile.controlled_platform;
    const double norm = profile.encode_norm;
    for (std::uint64_t seed : seeds) {
        market::Sim env(profile, seed, memory_len);
        market::Observation obs = env.observe(m);
        Tensor s = hexgrid::encode_observation(obs.accept, obs.reject, obs.demand, profile.map, norm);
        std::vector<Tensor> mem = hexgrid::encode_memory(env.history(m), profile.map, memory_len, norm);
        double total = 0.0;
        while (!env.done()) {
            std::vector<std::optional<std::vector<double>>> actions(static_cast<std::size_t>(profile.platforms));
            actions[static_cast<std::size_t>(m)] = policy(s, mem);
            const market::StepResult sr = env.step(actions);
            total += sr.rewards[static_cast<std::size_t>(m)];
            const market::Observation& next_obs = sr.observations[static_cast<std::size_t>(m)];
            s = hexgrid::encode_observation(next_obs.accept, next_obs.reject, next_obs.demand, profile.map, norm);
            mem = hexgrid::encode_memory(env.history(m), profile.map, memory_len, norm);
        }
        stats.per_episode.push_back(total);
    }
    stats.min = *std::min_element(stats.per_episode.begin(), stats.per_episode.end());
    stats.max = *std::max_element(stats.per_episode.begin(), stats.per_episode.end());
    double sum = 0.0;
    for (double x : stats.per_episode) sum += x;
    stats.mean = sum / static_cast<double>(stats.per_episode.size());
    return stats;
}

// ---- Sensitivity sweeps ----

inline unsigned worker_count() {
    if (const char* env = std::getenv("HEXMARKET_WORKERS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

struct SweepRow {
    std::string param;
    double value = 0.0;
    std::uint64_t seed = 0;
    int episode = 0;
    double total_reward = 0.0;
};

struct SweepQGain {
    double value = 0.0;
    std::uint64_t seed = 0;
    RefinerCall call;
};

struct SweepResult {
    std::vector<SweepRow> rows;       // long format: (param, value, seed, episode, reward)
    std::vector<SweepQGain> q_gains;  // populated for K_max sweeps
};

inline void apply_sweep_value(TrainConfig& cfg, const std::string& param, double value) {
    if (param == "actor_lr")
        cfg.actor_lr = value;
    else if (param == "sigma0")
        cfg.sigma0 = value;
    else if (param == "k_max")
        cfg.k_max = static_cast<int>(value);
    else
        throw ConfigError("sweep: parameter must be one of actor_lr, sigma0, k_max");
}

// Full training per (value, run); runs fan out over worker_count() threads.
// K_max sweeps run pi-DDPG (and collect per-call Q improvements), the other
// parameters sweep the baseline DDPG.
inline SweepResult sweep(const ScenarioProfile& profile, const TrainConfig& base_cfg, const std::string& param,
                         const std::vector<double>& values, int runs_per_value) {
    if (values.empty()) throw ConfigError("sweep: need at least one value");
    if (runs_per_value < 1) throw ConfigError("sweep: runs_per_value must be >= 1");
    {
        TrainConfig probe = base_cfg;
        apply_sweep_value(probe, param, values[0]);  // validates the name
    }
    const Algo algo = (param == "k_max") ? Algo::PiDdpg : Algo::Ddpg;

    struct Task {
        std::size_t vi;
        int run;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t vi = 0; vi < values.size(); ++vi)
        for (int run = 0; run < runs_per_value; ++run)
            tasks.push_back({vi, run, Rng::derive(base_cfg.seed, 0xabc000u + vi * 1000 + static_cast<std::uint64_t>(run))});

    std::vector<std::vector<EpisodeMetrics>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(tasks.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t k = next.fetch_add(1);
                if (k >= tasks.size()) return;
                TrainConfig cfg = base_cfg;
                apply_sweep_value(cfg, param, values[tasks[k].vi]);
                cfg.seed = tasks[k].seed;
                Learner L(profile, cfg);
                results[k] = run_training(L, profile, cfg, algo);
            }
        });
    }
    for (auto& th : pool) th.join();

    SweepResult out;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        for (const auto& em : results[k]) {
            out.rows.push_back({param, values[tasks[k].vi], tasks[k].seed, em.episode, em.total_reward});
            if (algo == Algo::PiDdpg)
                for (const auto& call : em.refiner_calls) out.q_gains.push_back({values[tasks[k].vi], tasks[k].seed, call});
        }
    }
    return out;
}

}  // namespace hexmarket::trainer
