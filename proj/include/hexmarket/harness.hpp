#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hexmarket/common.hpp"
#include "hexmarket/profile.hpp"
#include "hexmarket/trainer.hpp"

namespace hexmarket::harness {

using nlohmann::json;

inline ScenarioProfile load_profile(const std::string& path) { return profile_io::load(path); }

// ---- TrainConfig <-> JSON ----

inline json config_to_json(const trainer::TrainConfig& c) {
    json j;
    j["episodes"] = c.episodes;
    j["memory_len"] = c.memory_len;
    j["gamma"] = c.gamma;
    j["actor_lr"] = c.actor_lr;
    j["critic_lr"] = c.critic_lr;
    j["tau"] = c.tau;
    j["sigma0"] = c.sigma0;
    j["batch"] = c.batch;
    j["per_alpha"] = c.per_alpha;
    j["per_beta"] = c.per_beta;
    j["buffer_capacity"] = c.buffer_capacity;
    j["k_max"] = c.k_max;
    j["eta"] = c.eta;
    j["seed"] = c.seed;
    j["refine_fallback"] = c.refine_fallback;
    j["conv_channels"] = c.conv_channels;
    j["dense1"] = c.dense1;
    j["dense2"] = c.dense2;
    return j;
}

inline trainer::TrainConfig config_from_json(const json& j) {
    trainer::TrainConfig c;
    c.episodes = j.value("episodes", c.episodes);
    c.memory_len = j.value("memory_len", c.memory_len);
    c.gamma = j.value("gamma", c.gamma);
    c.actor_lr = j.value("actor_lr", c.actor_lr);
    c.critic_lr = j.value("critic_lr", c.critic_lr);
    c.tau = j.value("tau", c.tau);
    c.sigma0 = j.value("sigma0", c.sigma0);
    c.batch = j.value("batch", c.batch);
    c.per_alpha = j.value("per_alpha", c.per_alpha);
    c.per_beta = j.value("per_beta", c.per_beta);
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    c.k_max = j.value("k_max", c.k_max);
    c.eta = j.value("eta", c.eta);
    c.seed = j.value("seed", c.seed);
    c.refine_fallback = j.value("refine_fallback", c.refine_fallback);
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    c.dense1 = j.value("dense1", c.dense1);
    c.dense2 = j.value("dense2", c.dense2);
    return c;
}

// ---- SynthSpec <-> JSON ----

inline SynthSpec synth_spec_from_json(const json& j) {
    SynthSpec s;
    s.radius = j.value("radius", s.radius);
    s.horizon = j.value("horizon", s.horizon);
    s.platforms = j.value("platforms", s.platforms);
    s.demand_peak = j.value("demand_peak", s.demand_peak);
    s.supply_demand_ratio = j.value("supply_demand_ratio", s.supply_demand_ratio);
    if (j.contains("type_mix")) {
        const auto mix = j.at("type_mix").get<std::vector<std::vector<double>>>();
        if (mix.size() != 3) throw ConfigError("synth spec: type_mix needs 3 rows");
        for (std::size_t t = 0; t < 3; ++t) {
            if (mix[t].size() != 3) throw ConfigError("synth spec: type_mix rows need [base, morning, evening]");
            for (std::size_t k = 0; k < 3; ++k) s.type_mix[t][k] = mix[t][k];
        }
    }
    s.morning_center_frac = j.value("morning_center_frac", s.morning_center_frac);
    s.evening_center_frac = j.value("evening_center_frac", s.evening_center_frac);
    s.peak_width_frac = j.value("peak_width_frac", s.peak_width_frac);
    s.spatial_decay = j.value("spatial_decay", s.spatial_decay);
    s.spatial_jitter = j.value("spatial_jitter", s.spatial_jitter);
    s.dest_gamma = j.value("dest_gamma", s.dest_gamma);
    s.competitor_ratio = j.value("competitor_ratio", s.competitor_ratio);
    s.controlled_platform = j.value("controlled_platform", s.controlled_platform);
    return s;
}

// ---- Run artifacts ----

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline std::filesystem::path resolve_out_dir(const std::string& out) {
    std::filesystem::path p(out);
    if (p.is_relative()) {
        if (const char* root = std::getenv("HEXMARKET_OUT_ROOT")) p = std::filesystem::path(root) / p;
    }
    return p;
}

inline constexpr const char* kMetricsHeader = "episode,total_reward,critic_loss_mean,actor_gradnorm_mean,refiner_q_gain_median,sigma";

inline std::string metrics_row(const trainer::EpisodeMetrics& em) {
    return std::to_string(em.episode) + "," + format_double(em.total_reward) + "," + format_double(em.critic_loss_mean) +
           "," + format_double(em.actor_gradnorm_mean) + "," + format_double(em.refiner_q_gain_median) + "," +
           format_double(em.sigma);
}

struct RunPaths {
    std::filesystem::path dir;
    std::filesystem::path metrics() const { return dir / "metrics.csv"; }
    std::filesystem::path timings() const { return dir / "timings.csv"; }
    std::filesystem::path manifest() const { return dir / "manifest.json"; }
    std::filesystem::path refiner_log() const { return dir / "refiner_log.csv"; }
    std::filesystem::path checkpoint() const { return dir / "networks.ckpt"; }
};

// Runs `train` for one algorithm ("ddpg", "pi-ddpg", or "fixed:<ratio>") and
// writes metrics.csv, timings.csv, manifest.json, refiner_log.csv (pi only),
// and networks.ckpt (learning algos) under out_dir.
inline int run_train(const std::string& profile_path, trainer::TrainConfig cfg, const std::string& algo,
                     const std::string& out_dir) {
    cfg.validate();
    const ScenarioProfile profile = load_profile(profile_path);
    const std::string digest = profile_io::digest_file(profile_path);
    RunPaths paths{resolve_out_dir(out_dir)};
    std::filesystem::create_directories(paths.dir);

    const std::string started = timestamp_utc();
    std::ofstream metrics(paths.metrics(), std::ios::trunc);
    std::ofstream timings(paths.timings(), std::ios::trunc);
    metrics << kMetricsHeader << "\n";
    timings << "episode,wall_ms\n";

    const bool is_pi = algo == "pi-ddpg";
    const bool is_ddpg = algo == "ddpg";
    std::optional<double> fixed_ratio;
    if (!is_pi && !is_ddpg) {
        if (algo.rfind("fixed:", 0) != 0) throw ConfigError("train: algo must be ddpg, pi-ddpg, or fixed:<ratio>");
        fixed_ratio = std::stod(algo.substr(6));
        if (!(*fixed_ratio >= 0.0 && *fixed_ratio <= 1.0)) throw ConfigError("train: fixed ratio must lie in [0, 1]");
    }

    if (fixed_ratio) {
        // Benchmark curve: deterministic constant policy, no learning, no noise.
        const trainer::Policy policy = trainer::fixed_ratio_policy(*fixed_ratio, profile.map.size());
        for (int ep = 1; ep <= cfg.episodes; ++ep) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto stats =
                trainer::evaluate(policy, profile, {trainer::episode_env_seed(cfg.seed, ep)}, cfg.memory_len);
            trainer::EpisodeMetrics em;
            em.episode = ep;
            em.total_reward = stats.per_episode[0];
            em.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            metrics << metrics_row(em) << "\n";
            timings << em.episode << "," << format_double(em.wall_ms) << "\n";
        }
    } else {
        std::ofstream rlog;
        if (is_pi) {
            rlog.open(paths.refiner_log(), std::ios::trunc);
            rlog << "episode,step,k_refine,q_before,q_after\n";
        }
        trainer::Learner learner(profile, cfg);
        trainer::run_training(learner, profile, cfg, is_pi ? trainer::Algo::PiDdpg : trainer::Algo::Ddpg,
                              [&](const trainer::EpisodeMetrics& em) {
                                  metrics << metrics_row(em) << "\n";
                                  timings << em.episode << "," << format_double(em.wall_ms) << "\n";
                                  if (is_pi)
                                      for (const auto& c : em.refiner_calls)
                                          rlog << c.episode << "," << c.step << "," << c.k_refine << ","
                                               << format_double(c.q_before) << "," << format_double(c.q_after) << "\n";
                              });
        agent::save_networks(paths.checkpoint().string(), learner.actor, learner.critic, learner.targets);
    }

    json manifest;
    manifest["artifact_version"] = kArtifactVersion;
    manifest["algo"] = algo;
    manifest["config"] = config_to_json(cfg);
    manifest["profile_path"] = std::filesystem::absolute(profile_path).string();
    manifest["profile_digest"] = digest;
    manifest["seed"] = cfg.seed;
    manifest["started_at"] = started;
    manifest["finished_at"] = timestamp_utc();
    std::ofstream mf(paths.manifest(), std::ios::trunc);
    mf << manifest.dump(1) << "\n";
    return 0;
}

// Re-runs a training exactly as recorded; the profile digest must match.
inline int run_train_from_manifest(const std::string& manifest_path, const std::string& out_dir) {
    std::ifstream is(manifest_path);
    if (!is) throw ConfigError("train: cannot open manifest " + manifest_path);
    json manifest = json::parse(is);
    const std::string profile_path = manifest.at("profile_path").get<std::string>();
    const std::string digest = profile_io::digest_file(profile_path);
    if (digest != manifest.at("profile_digest").get<std::string>())
        throw ConfigError("train: profile content changed since the manifest was written");
    return run_train(profile_path, config_from_json(manifest.at("config")), manifest.at("algo").get<std::string>(),
                     out_dir);
}

inline int run_evaluate(const std::string& run_dir, int runs, std::uint64_t seed_base, int refine_k, double eta,
                        const std::string& profile_override, std::ostream& os) {
    const std::filesystem::path dir = resolve_out_dir(run_dir);
    std::ifstream is(dir / "manifest.json");
    if (!is) throw ConfigError("evaluate: cannot open manifest in " + run_dir);
    json manifest = json::parse(is);
    const trainer::TrainConfig cfg = config_from_json(manifest.at("config"));
    const std::string profile_path =
        profile_override.empty() ? manifest.at("profile_path").get<std::string>() : profile_override;
    const ScenarioProfile profile = load_profile(profile_path);

    trainer::Learner learner(profile, cfg);
    agent::load_networks((dir / "networks.ckpt").string(), learner.actor, learner.critic, learner.targets);

    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < runs; ++i) seeds.push_back(Rng::derive(seed_base, 0xe7a1u + static_cast<std::uint64_t>(i)));
    const trainer::Policy policy = refine_k > 0
                                       ? trainer::refined_actor_policy(learner.actor, learner.critic, refine_k, eta)
                                       : trainer::actor_policy(learner.actor);
    const auto stats = trainer::evaluate(policy, profile, seeds, cfg.memory_len);
    os << "episodes," << stats.per_episode.size() << "\n";
    os << "mean," << format_double(stats.mean) << "\n";
    os << "min," << format_double(stats.min) << "\n";
    os << "max," << format_double(stats.max) << "\n";
    for (std::size_t i = 0; i < stats.per_episode.size(); ++i)
        os << "episode_reward," << i << "," << format_double(stats.per_episode[i]) << "\n";
    return 0;
}

inline int run_sweep(const std::string& profile_path, trainer::TrainConfig cfg, const std::string& param,
                     const std::vector<double>& values, int runs_per_value, const std::string& out_dir) {
    const ScenarioProfile profile = load_profile(profile_path);
    RunPaths paths{resolve_out_dir(out_dir)};
    std::filesystem::create_directories(paths.dir);
    const auto result = trainer::sweep(profile, cfg, param, values, runs_per_value);
    std::ofstream rows(paths.dir / "sweep.csv", std::ios::trunc);
    rows << "param,value,seed,episode,total_reward\n";
    for (const auto& r : result.rows)
        rows << r.param << "," << format_double(r.value) << "," << r.seed << "," << r.episode << ","
             << format_double(r.total_reward) << "\n";
    if (!result.q_gains.empty()) {
        std::ofstream qs(paths.dir / "qgains.csv", std::ios::trunc);
        qs << "value,seed,episode,step,k_refine,q_before,q_after\n";
        for (const auto& q : result.q_gains)
            qs << format_double(q.value) << "," << q.seed << "," << q.call.episode << "," << q.call.step << ","
               << q.call.k_refine << "," << format_double(q.call.q_before) << "," << format_double(q.call.q_after)
               << "\n";
    }
    return 0;
}

// ---- CLI ----

// Parses a comma-separated list of reals ("1e-2,1e-3,1e-4").
inline std::vector<double> parse_value_list(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        out.push_back(std::stod(text.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

// The `verify` subcommand's check suite is injected by the tool binary (the
// oracles live in test support code); cli() itself stays library-only.
using VerifyFn = std::function<int(bool deep)>;

inline int cli(const std::vector<std::string>& args, const VerifyFn& verify_fn = {}) {
    CLI::App app{"hexmarket: multi-platform ride-hailing market simulator and pi-DDPG trainer"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train a policy (or roll out a fixed-ratio benchmark)");
    std::string algo = "pi-ddpg", profile_path, out_dir = "run", manifest_path;
    trainer::TrainConfig cfg;
    train->add_option("--algo", algo, "ddpg | pi-ddpg | fixed:<ratio>");
    train->add_option("--profile", profile_path, "scenario profile file");
    train->add_option("--manifest", manifest_path, "re-run exactly as recorded in a manifest.json");
    train->add_option("--seed", cfg.seed, "master seed");
    train->add_option("--episodes", cfg.episodes, "training episodes");
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--memory-len", cfg.memory_len, "memory window L");
    train->add_option("--gamma", cfg.gamma, "discount factor");
    train->add_option("--actor-lr", cfg.actor_lr, "actor learning rate");
    train->add_option("--critic-lr", cfg.critic_lr, "critic learning rate");
    train->add_option("--tau", cfg.tau, "soft-update ratio");
    train->add_option("--sigma0", cfg.sigma0, "initial exploration noise");
    train->add_option("--batch", cfg.batch, "minibatch cap");
    train->add_option("--per-alpha", cfg.per_alpha, "PER prioritization exponent");
    train->add_option("--per-beta", cfg.per_beta, "PER correction exponent");
    train->add_option("--buffer-capacity", cfg.buffer_capacity, "replay capacity");
    train->add_option("--k-max", cfg.k_max, "max refinement steps");
    train->add_option("--eta", cfg.eta, "refinement step length");
    train->add_flag("--refine-fallback", cfg.refine_fallback, "fall back to the base action when refinement lowers Q");
    train->add_option("--conv-channels", cfg.conv_channels, "ConvLSTM hidden channels");
    train->add_option("--dense1", cfg.dense1, "first dense width");
    train->add_option("--dense2", cfg.dense2, "second dense width");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Noise-free evaluation of a trained run");
    std::string eval_run, eval_profile;
    int eval_runs = 20, eval_refine = 0;
    double eval_eta = 0.1;
    std::uint64_t eval_seed = 0;
    eval->add_option("--checkpoint", eval_run, "run directory containing manifest.json and networks.ckpt")->required();
    eval->add_option("--runs", eval_runs, "evaluation episodes");
    eval->add_option("--seed", eval_seed, "evaluation seed base");
    eval->add_option("--refine", eval_refine, "refinement steps during evaluation (0 = actor only)");
    eval->add_option("--eta", eval_eta, "refinement step length");
    eval->add_option("--profile", eval_profile, "profile override");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Sensitivity sweep over actor_lr, sigma0, or k_max");
    std::string sw_param, sw_values, sw_profile, sw_out = "sweep";
    int sw_runs = 3;
    trainer::TrainConfig sw_cfg;
    sw->add_option("--param", sw_param, "actor_lr | sigma0 | k_max")->required();
    sw->add_option("--values", sw_values, "comma-separated values")->required();
    sw->add_option("--runs", sw_runs, "runs per value");
    sw->add_option("--profile", sw_profile, "scenario profile file")->required();
    sw->add_option("--seed", sw_cfg.seed, "master seed");
    sw->add_option("--episodes", sw_cfg.episodes, "episodes per run");
    sw->add_option("--batch", sw_cfg.batch, "minibatch cap");
    sw->add_option("--memory-len", sw_cfg.memory_len, "memory window L");
    sw->add_option("--conv-channels", sw_cfg.conv_channels, "ConvLSTM hidden channels");
    sw->add_option("--dense1", sw_cfg.dense1, "first dense width");
    sw->add_option("--dense2", sw_cfg.dense2, "second dense width");
    sw->add_option("--out", sw_out, "output directory");

    // synth-profile
    auto* synth = app.add_subcommand("synth-profile", "Generate a synthetic day-shaped scenario profile");
    std::string synth_spec_path, synth_out = "profile.json";
    std::uint64_t synth_seed = 0;
    synth->add_option("--spec", synth_spec_path, "synth spec JSON (defaults when omitted)");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output profile path");

    // verify
    auto* verify = app.add_subcommand("verify", "Run the invariant/oracle suite");
    bool verify_deep = false;
    verify->add_flag("--deep", verify_deep, "include the slow desk-scale training criteria");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    try {
        if (train->parsed()) {
            if (!manifest_path.empty()) return run_train_from_manifest(manifest_path, out_dir);
            if (profile_path.empty()) throw ConfigError("train: --profile (or --manifest) is required");
            return run_train(profile_path, cfg, algo, out_dir);
        }
        if (eval->parsed()) return run_evaluate(eval_run, eval_runs, eval_seed, eval_refine, eval_eta, eval_profile, std::cout);
        if (sw->parsed()) return run_sweep(sw_profile, sw_cfg, sw_param, parse_value_list(sw_values), sw_runs, sw_out);
        if (synth->parsed()) {
            SynthSpec spec;
            if (!synth_spec_path.empty()) {
                std::ifstream is(synth_spec_path);
                if (!is) throw ConfigError("synth-profile: cannot open " + synth_spec_path);
                spec = synth_spec_from_json(json::parse(is));
            }
            const ScenarioProfile p = synth_profile(spec, synth_seed);
            const auto out_path = resolve_out_dir(synth_out);
            if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
            profile_io::save(p, out_path.string());
            return 0;
        }
        if (verify->parsed()) {
            if (!verify_fn) throw ConfigError("verify: no check suite linked into this binary");
            return verify_fn(verify_deep);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace hexmarket::harness
