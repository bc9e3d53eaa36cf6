#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hexmarket/common.hpp"
#include "hexmarket/hexgrid.hpp"
#include "hexmarket/rng.hpp"

namespace hexmarket {

inline constexpr int kProfileSchemaVersion = 1;
inline constexpr int kOrderTypes = 3;

// Full scenario description: the map, horizon, platform supply curves,
// per-cell/type/interval demand means, destination distribution, pricing,
// and competitor behavior. This file format is the dataset interface.
struct ScenarioProfile {
    hexgrid::GridMap map;
    int horizon = 0;      // T, number of intervals per episode
    int platforms = 0;    // M
    int controlled_platform = 0;
    double competitor_ratio = 0.3;
    double encode_norm = 10.0;
    double discount_ratio = 0.7;
    int map_radius = -1;  // >= 0 when the map was given as a radius

    // supply_means[m][t]: mean online drivers of platform m in interval t.
    std::vector<std::vector<double>> supply_means;
    // demand_means[(t * cells + i) * 3 + j]: mean Type-(j+1) arrivals in cell i at t.
    std::vector<double> demand_means;
    // dest_weights[origin][dest], rows sum to 1.
    std::vector<std::vector<double>> dest_weights;

    explicit ScenarioProfile(hexgrid::GridMap m) : map(std::move(m)) {}

    double demand_mean(int t, std::size_t cell, int type_idx) const {
        return demand_means[(static_cast<std::size_t>(t) * map.size() + cell) * kOrderTypes +
                            static_cast<std::size_t>(type_idx)];
    }
    double& demand_mean_ref(int t, std::size_t cell, int type_idx) {
        return demand_means[(static_cast<std::size_t>(t) * map.size() + cell) * kOrderTypes +
                            static_cast<std::size_t>(type_idx)];
    }

    // Supply lookup clamps at the final interval (no change entering it).
    double supply_mean(int m, int t) const {
        const auto& row = supply_means[static_cast<std::size_t>(m)];
        return row[static_cast<std::size_t>(std::min<int>(t, horizon - 1))];
    }

    friend bool operator==(const ScenarioProfile& a, const ScenarioProfile& b) {
        return a.map == b.map && a.horizon == b.horizon && a.platforms == b.platforms &&
               a.controlled_platform == b.controlled_platform && a.competitor_ratio == b.competitor_ratio &&
               a.encode_norm == b.encode_norm && a.discount_ratio == b.discount_ratio &&
               a.supply_means == b.supply_means && a.demand_means == b.demand_means && a.dest_weights == b.dest_weights;
    }
};

namespace profile_io {

using nlohmann::json;

inline void validate(const ScenarioProfile& p) {
    std::vector<std::string> issues;
    const std::size_t cells = p.map.size();
    if (p.horizon < 1) issues.push_back("horizon: must be >= 1");
    if (p.platforms < 1) issues.push_back("platforms: must be >= 1");
    if (p.controlled_platform < 0 || p.controlled_platform >= p.platforms)
        issues.push_back("controlled_platform: out of range");
    if (p.competitor_ratio < 0.0 || p.competitor_ratio > 1.0) issues.push_back("competitor_ratio: must lie in [0, 1]");
    if (!(p.encode_norm > 0.0)) issues.push_back("encode_norm: must be positive");
    if (p.discount_ratio < 0.0 || p.discount_ratio > 1.0) issues.push_back("pricing.discount_ratio: must lie in [0, 1]");
    if (p.supply_means.size() != static_cast<std::size_t>(p.platforms))
        issues.push_back("supply_means: need one row per platform");
    for (std::size_t m = 0; m < p.supply_means.size(); ++m) {
        if (p.supply_means[m].size() != static_cast<std::size_t>(p.horizon))
            issues.push_back("supply_means[platform=" + std::to_string(m) + "]: need horizon entries");
        for (std::size_t t = 0; t < p.supply_means[m].size(); ++t)
            if (!(p.supply_means[m][t] >= 0.0))
                issues.push_back("supply_means[platform=" + std::to_string(m) + "][t=" + std::to_string(t) +
                                 "]: negative mean");
    }
    if (p.demand_means.size() != static_cast<std::size_t>(p.horizon) * cells * kOrderTypes) {
        issues.push_back("demand: need horizon x cells x 3 means");
    } else {
        for (int t = 0; t < p.horizon; ++t)
            for (std::size_t i = 0; i < cells; ++i)
                for (int j = 0; j < kOrderTypes; ++j)
                    if (!(p.demand_mean(t, i, j) >= 0.0))
                        issues.push_back("demand.means[cell=" + std::to_string(i) + "][type=" + std::to_string(j + 1) +
                                         "][t=" + std::to_string(t) + "]: negative mean");
    }
    if (p.dest_weights.size() != cells) {
        issues.push_back("destinations: need one row per origin cell");
    } else {
        for (std::size_t i = 0; i < cells; ++i) {
            if (p.dest_weights[i].size() != cells) {
                issues.push_back("destinations.weights[origin=" + std::to_string(i) + "]: need one entry per cell");
                continue;
            }
            double sum = 0.0;
            bool neg = false;
            for (double w : p.dest_weights[i]) {
                if (w < 0.0) neg = true;
                sum += w;
            }
            if (neg) issues.push_back("destinations.weights[origin=" + std::to_string(i) + "]: negative weight");
            if (std::abs(sum - 1.0) > 1e-6)
                issues.push_back("destinations.weights[origin=" + std::to_string(i) + "]: weights sum to " +
                                 format_double(sum) + ", expected 1");
        }
    }
    if (!issues.empty()) {
        std::string msg = "invalid profile (" + std::to_string(issues.size()) + " issue(s)):";
        for (const auto& s : issues) msg += "\n  - " + s;
        throw ConfigError(msg);
    }
}

inline hexgrid::GridMap map_from_json(const json& jm, int& radius_out) {
    radius_out = -1;
    if (jm.contains("radius")) {
        radius_out = jm.at("radius").get<int>();
        return hexgrid::GridMap::hexagon(radius_out);
    }
    if (jm.contains("cells")) {
        std::vector<hexgrid::GridCell> cells;
        for (const auto& jc : jm.at("cells")) {
            if (!jc.is_array() || jc.size() != 3) throw ConfigError("map.cells: each cell must be [x, y, z]");
            cells.emplace_back(jc[0].get<int>(), jc[1].get<int>(), jc[2].get<int>());
        }
        return hexgrid::GridMap(std::move(cells));
    }
    throw ConfigError("map: need either 'radius' or 'cells'");
}

inline std::vector<std::vector<double>> dest_weights_preset(const hexgrid::GridMap& map, const std::string& preset,
                                                            double gamma) {
    const std::size_t n = map.size();
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double x = 1.0;
            if (preset == "distance-decay") x = std::exp(-gamma * hexgrid::hex_distance(map.cell(i), map.cell(k)));
            w[i][k] = x;
            sum += x;
        }
        for (std::size_t k = 0; k < n; ++k) w[i][k] /= sum;
    }
    return w;
}

inline ScenarioProfile parse(const json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != kProfileSchemaVersion)
        throw ConfigError("profile: missing or unsupported schema version");
    int radius = -1;
    ScenarioProfile p(map_from_json(j.at("map"), radius));
    p.map_radius = radius;
    p.horizon = j.at("horizon").get<int>();
    p.platforms = j.at("platforms").get<int>();
    p.controlled_platform = j.value("controlled_platform", 0);
    p.competitor_ratio = j.value("competitor_accept_ratio", 0.3);
    p.encode_norm = j.value("encode_norm", 10.0);
    if (j.contains("pricing")) p.discount_ratio = j.at("pricing").value("discount_ratio", 0.7);

    p.supply_means = j.at("supply_means").get<std::vector<std::vector<double>>>();

    const std::size_t cells = p.map.size();
    const auto& jd = j.at("demand");
    const std::string form = jd.at("form").get<std::string>();
    p.demand_means.assign(static_cast<std::size_t>(std::max(p.horizon, 0)) * cells * kOrderTypes, 0.0);
    if (form == "table") {
        // means[cell][type][t]
        const auto table = jd.at("means").get<std::vector<std::vector<std::vector<double>>>>();
        if (table.size() != cells) throw ConfigError("demand.means: need one row per cell");
        for (std::size_t i = 0; i < cells; ++i) {
            if (table[i].size() != kOrderTypes) throw ConfigError("demand.means[cell=" + std::to_string(i) + "]: need 3 types");
            for (int jt = 0; jt < kOrderTypes; ++jt) {
                if (table[i][static_cast<std::size_t>(jt)].size() != static_cast<std::size_t>(p.horizon))
                    throw ConfigError("demand.means[cell=" + std::to_string(i) + "][type=" + std::to_string(jt + 1) +
                                      "]: need horizon entries");
                for (int t = 0; t < p.horizon; ++t)
                    p.demand_mean_ref(t, i, jt) = table[i][static_cast<std::size_t>(jt)][static_cast<std::size_t>(t)];
            }
        }
    } else if (form == "factored") {
        // means = temporal[type][t] * spatial[type][cell]
        const auto temporal = jd.at("temporal").get<std::vector<std::vector<double>>>();
        const auto spatial = jd.at("spatial").get<std::vector<std::vector<double>>>();
        if (temporal.size() != kOrderTypes || spatial.size() != kOrderTypes)
            throw ConfigError("demand factored form: need 3 temporal shapes and 3 spatial weight rows");
        for (int jt = 0; jt < kOrderTypes; ++jt) {
            if (temporal[static_cast<std::size_t>(jt)].size() != static_cast<std::size_t>(p.horizon))
                throw ConfigError("demand.temporal[type=" + std::to_string(jt + 1) + "]: need horizon entries");
            if (spatial[static_cast<std::size_t>(jt)].size() != cells)
                throw ConfigError("demand.spatial[type=" + std::to_string(jt + 1) + "]: need one entry per cell");
            for (int t = 0; t < p.horizon; ++t)
                for (std::size_t i = 0; i < cells; ++i)
                    p.demand_mean_ref(t, i, jt) =
                        temporal[static_cast<std::size_t>(jt)][static_cast<std::size_t>(t)] * spatial[static_cast<std::size_t>(jt)][i];
        }
    } else {
        throw ConfigError("demand.form: must be 'table' or 'factored'");
    }

    const auto& jdest = j.at("destinations");
    if (jdest.contains("preset")) {
        const std::string preset = jdest.at("preset").get<std::string>();
        if (preset != "uniform" && preset != "distance-decay") throw ConfigError("destinations.preset: unknown preset " + preset);
        p.dest_weights = dest_weights_preset(p.map, preset, jdest.value("gamma", 0.5));
    } else if (jdest.contains("weights")) {
        p.dest_weights = jdest.at("weights").get<std::vector<std::vector<double>>>();
    } else {
        throw ConfigError("destinations: need 'preset' or 'weights'");
    }

    validate(p);
    return p;
}

inline json to_json(const ScenarioProfile& p) {
    json j;
    j["version"] = kProfileSchemaVersion;
    if (p.map_radius >= 0) {
        j["map"] = {{"radius", p.map_radius}};
    } else {
        json cells = json::array();
        for (const auto& c : p.map.cells()) cells.push_back({c.x, c.y, c.z});
        j["map"] = {{"cells", cells}};
    }
    j["horizon"] = p.horizon;
    j["platforms"] = p.platforms;
    j["controlled_platform"] = p.controlled_platform;
    j["competitor_accept_ratio"] = p.competitor_ratio;
    j["encode_norm"] = p.encode_norm;
    j["pricing"] = {{"discount_ratio", p.discount_ratio}};
    j["supply_means"] = p.supply_means;
    const std::size_t cells = p.map.size();
    std::vector<std::vector<std::vector<double>>> table(
        cells, std::vector<std::vector<double>>(kOrderTypes, std::vector<double>(static_cast<std::size_t>(p.horizon))));
    for (std::size_t i = 0; i < cells; ++i)
        for (int jt = 0; jt < kOrderTypes; ++jt)
            for (int t = 0; t < p.horizon; ++t)
                table[i][static_cast<std::size_t>(jt)][static_cast<std::size_t>(t)] = p.demand_mean(t, i, jt);
    j["demand"] = {{"form", "table"}, {"means", table}};
    j["destinations"] = {{"weights", p.dest_weights}};
    return j;
}

inline std::string serialize(const ScenarioProfile& p) { return to_json(p).dump(1) + "\n"; }

inline ScenarioProfile parse_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("profile: ") + e.what());
    }
    try {
        return parse(j);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("profile: ") + e.what());
    }
}

inline ScenarioProfile load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("profile: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
}

inline void save(const ScenarioProfile& p, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("profile: cannot open " + path + " for writing");
    os << serialize(p);
}

inline std::string digest_text(const std::string& text) { return hex64(fnv1a64(text)); }

inline std::string digest_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("profile: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return digest_text(ss.str());
}

}  // namespace profile_io

// Knobs for the synthetic day-shaped scenario generator. The defaults mirror
// the macro structure of the calibrated market: 37 cells, 96 intervals,
// 5 platforms (one deliberately small), bimodal demand with a morning peak
// dominated by Express-only orders and an evening peak dominated by
// Discount-only orders, distance-decay destinations.
struct SynthSpec {
    int radius = 3;
    int horizon = 96;
    int platforms = 5;
    // Peak citywide mean arrivals per interval, all types combined.
    double demand_peak = 60.0;
    // Citywide mean online drivers (all platforms) as a fraction of demand_peak.
    double supply_demand_ratio = 0.55;
    // Per-type mix weights (base, morning bump, evening bump).
    std::array<std::array<double, 3>, 3> type_mix = {{
        {0.10, 0.15, 1.00},  // Type 1: Discount-only, evening-heavy
        {0.10, 1.00, 0.15},  // Type 2: Express-only, morning-heavy
        {0.06, 0.20, 0.20},  // Type 3: either service
    }};
    double morning_center_frac = 1.0 / 3.0;  // peak positions as a fraction of the day
    double evening_center_frac = 3.0 / 4.0;
    double peak_width_frac = 1.0 / 12.0;
    double spatial_decay = 0.35;      // demand concentration toward the center
    double spatial_jitter = 0.15;     // seeded relative jitter on spatial weights
    double dest_gamma = 0.5;
    double competitor_ratio = 0.3;
    int controlled_platform = 0;
};

// Deterministic given (spec, seed).
inline ScenarioProfile synth_profile(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.radius < 0 || spec.horizon < 1 || spec.platforms < 1) throw ConfigError("synth_profile: bad spec");
    ScenarioProfile p(hexgrid::GridMap::hexagon(spec.radius));
    p.map_radius = spec.radius;
    p.horizon = spec.horizon;
    p.platforms = spec.platforms;
    p.controlled_platform = spec.controlled_platform;
    p.competitor_ratio = spec.competitor_ratio;
    Rng rng(Rng::derive(seed, 0x5f0f11e));

    const std::size_t cells = p.map.size();
    const double t_m = spec.morning_center_frac * spec.horizon;
    const double t_e = spec.evening_center_frac * spec.horizon;
    const double width = std::max(1.0, spec.peak_width_frac * spec.horizon);

    // Temporal shapes per type, later scaled so the citywide peak equals demand_peak.
    std::vector<std::array<double, 3>> shape(static_cast<std::size_t>(spec.horizon));
    double citywide_peak = 0.0;
    for (int t = 0; t < spec.horizon; ++t) {
        const double gm = std::exp(-0.5 * std::pow((t - t_m) / width, 2.0));
        const double ge = std::exp(-0.5 * std::pow((t - t_e) / width, 2.0));
        double total = 0.0;
        for (int jt = 0; jt < kOrderTypes; ++jt) {
            const auto& mix = spec.type_mix[static_cast<std::size_t>(jt)];
            const double s = mix[0] + mix[1] * gm + mix[2] * ge;
            shape[static_cast<std::size_t>(t)][static_cast<std::size_t>(jt)] = s;
            total += s;
        }
        citywide_peak = std::max(citywide_peak, total);
    }
    const double demand_scale = citywide_peak > 0.0 ? spec.demand_peak / citywide_peak : 0.0;

    // Spatial weights: center-heavy with seeded jitter, normalized to sum 1.
    const hexgrid::GridCell center{0, 0, 0};
    std::vector<double> spatial(cells);
    double sp_sum = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        const double base = std::exp(-spec.spatial_decay * hexgrid::hex_distance(p.map.cell(i), center));
        const double jit = 1.0 + spec.spatial_jitter * (2.0 * rng.uniform01() - 1.0);
        spatial[i] = base * jit;
        sp_sum += spatial[i];
    }
    for (double& w : spatial) w /= sp_sum;

    p.demand_means.assign(static_cast<std::size_t>(spec.horizon) * cells * kOrderTypes, 0.0);
    for (int t = 0; t < spec.horizon; ++t)
        for (std::size_t i = 0; i < cells; ++i)
            for (int jt = 0; jt < kOrderTypes; ++jt)
                p.demand_mean_ref(t, i, jt) =
                    demand_scale * shape[static_cast<std::size_t>(t)][static_cast<std::size_t>(jt)] * spatial[i];

    // Supply: one flatter bimodal curve shared by all platforms, split by
    // heterogeneous scale factors with the last platform deliberately small.
    std::vector<double> platform_frac(static_cast<std::size_t>(spec.platforms));
    double frac_sum = 0.0;
    for (int m = 0; m < spec.platforms; ++m) {
        platform_frac[static_cast<std::size_t>(m)] =
            (m + 1 == spec.platforms && spec.platforms > 1) ? 0.25 : 1.0 / (1.0 + 0.35 * m);
        frac_sum += platform_frac[static_cast<std::size_t>(m)];
    }
    for (double& f : platform_frac) f /= frac_sum;

    p.supply_means.assign(static_cast<std::size_t>(spec.platforms),
                          std::vector<double>(static_cast<std::size_t>(spec.horizon), 0.0));
    for (int t = 0; t < spec.horizon; ++t) {
        const double gm = std::exp(-0.5 * std::pow((t - t_m) / (1.6 * width), 2.0));
        const double ge = std::exp(-0.5 * std::pow((t - t_e) / (1.6 * width), 2.0));
        const double citywide = spec.supply_demand_ratio * spec.demand_peak * (0.35 + 0.65 * std::max(gm, ge));
        for (int m = 0; m < spec.platforms; ++m)
            p.supply_means[static_cast<std::size_t>(m)][static_cast<std::size_t>(t)] =
                citywide * platform_frac[static_cast<std::size_t>(m)];
    }

    p.dest_weights = profile_io::dest_weights_preset(p.map, "distance-decay", spec.dest_gamma);
    profile_io::validate(p);
    return p;
}

}  // namespace hexmarket
