#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <map>
#include <vector>

#include "hexmarket/common.hpp"
#include "hexmarket/tensor.hpp"

namespace hexmarket::hexgrid {

// Cube-coordinate hexagonal cell; x + y + z = 0 always.
struct GridCell {
    int x = 0, y = 0, z = 0;

    GridCell() = default;
    GridCell(int x_, int y_, int z_) : x(x_), y(y_), z(z_) {
        if (x + y + z != 0) throw DomainError("cube coordinates must satisfy x + y + z = 0");
    }

    friend bool operator==(const GridCell& a, const GridCell& b) { return a.x == b.x && a.y == b.y && a.z == b.z; }
    friend bool operator!=(const GridCell& a, const GridCell& b) { return !(a == b); }
    // Canonical order: lexicographic by (x, y); z is determined by x and y.
    friend bool operator<(const GridCell& a, const GridCell& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; }
};

inline const std::array<GridCell, 6>& cube_directions() {
    static const std::array<GridCell, 6> dirs = {GridCell{+1, -1, 0}, GridCell{+1, 0, -1}, GridCell{0, +1, -1},
                                                 GridCell{0, -1, +1}, GridCell{-1, +1, 0}, GridCell{-1, 0, +1}};
    return dirs;
}

inline int hex_distance(const GridCell& a, const GridCell& b) {
    return (std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z)) / 2;
}

// Finite study-area map with a lossless axial embedding:
// (row, col) = (z - min_z, x - min_x) over the bounding box.
class GridMap {
public:
    explicit GridMap(std::vector<GridCell> cells) {
        if (cells.empty()) throw ConfigError("map must contain at least one cell");
        std::sort(cells.begin(), cells.end());
        cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
        cells_ = std::move(cells);
        int min_x = cells_[0].x, max_x = cells_[0].x, min_z = cells_[0].z, max_z = cells_[0].z;
        for (const auto& c : cells_) {
            min_x = std::min(min_x, c.x);
            max_x = std::max(max_x, c.x);
            min_z = std::min(min_z, c.z);
            max_z = std::max(max_z, c.z);
        }
        min_x_ = min_x;
        min_z_ = min_z;
        rows_ = static_cast<std::size_t>(max_z - min_z + 1);
        cols_ = static_cast<std::size_t>(max_x - min_x + 1);
        mask_ = Tensor({rows_, cols_});
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            index_of_[cells_[i]] = i;
            auto [r, c] = axial(cells_[i]);
            mask_.v[r * cols_ + c] = 1.0;
        }
    }

    // Hexagon of the given radius around the origin (radius 3 -> 37 cells).
    static GridMap hexagon(int radius) {
        if (radius < 0) throw ConfigError("map radius must be nonnegative");
        std::vector<GridCell> cells;
        for (int x = -radius; x <= radius; ++x)
            for (int y = std::max(-radius, -x - radius); y <= std::min(radius, -x + radius); ++y)
                cells.emplace_back(x, y, -x - y);
        return GridMap(std::move(cells));
    }

    const std::vector<GridCell>& cells() const { return cells_; }
    std::size_t size() const { return cells_.size(); }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const Tensor& mask() const { return mask_; }

    bool contains(const GridCell& c) const { return index_of_.count(c) != 0; }

    std::size_t index(const GridCell& c) const {
        auto it = index_of_.find(c);
        if (it == index_of_.end()) throw DomainError("cell not in map");
        return it->second;
    }

    const GridCell& cell(std::size_t i) const { return cells_.at(i); }

    std::pair<std::size_t, std::size_t> axial(const GridCell& c) const {
        return {static_cast<std::size_t>(c.z - min_z_), static_cast<std::size_t>(c.x - min_x_)};
    }

    friend bool operator==(const GridMap& a, const GridMap& b) { return a.cells_ == b.cells_; }

private:
    std::vector<GridCell> cells_;
    std::map<GridCell, std::size_t> index_of_;
    std::size_t rows_ = 0, cols_ = 0;
    int min_x_ = 0, min_z_ = 0;
    Tensor mask_;
};

// In-map subset of the 6 cube neighbors, in canonical (x, y) order.
inline std::vector<GridCell> neighbors(const GridCell& cell, const GridMap& map) {
    if (!map.contains(cell)) throw DomainError("neighbors: cell not in map");
    std::vector<GridCell> out;
    for (const auto& d : cube_directions()) {
        GridCell n{cell.x + d.x, cell.y + d.y, cell.z + d.z};
        if (map.contains(n)) out.push_back(n);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// One interval's per-cell market facts for the memory encoding, all vectors
// indexed by map cell index. Channel layout is fixed by encode_snapshot.
struct Snapshot {
    std::vector<double> drivers_accept;
    std::vector<double> drivers_reject;
    std::array<std::vector<double>, 3> demand;
    std::vector<double> action;
    std::array<std::vector<double>, 3> fulfilled;

    static Snapshot zeros(std::size_t cells) {
        Snapshot s;
        s.drivers_accept.assign(cells, 0.0);
        s.drivers_reject.assign(cells, 0.0);
        s.action.assign(cells, 0.0);
        for (auto& d : s.demand) d.assign(cells, 0.0);
        for (auto& f : s.fulfilled) f.assign(cells, 0.0);
        return s;
    }

    friend bool operator==(const Snapshot& a, const Snapshot& b) {
        return a.drivers_accept == b.drivers_accept && a.drivers_reject == b.drivers_reject && a.demand == b.demand &&
               a.action == b.action && a.fulfilled == b.fulfilled;
    }
};

inline constexpr std::size_t kSnapshotChannels = 9;
inline constexpr std::size_t kObservationChannels = 5;

namespace detail {
inline void check_field(const std::vector<double>& f, const GridMap& map, const char* name) {
    if (f.size() != map.size()) throw DomainError(std::string("snapshot field '") + name + "' is not indexed by the map cells");
}
inline void scatter(Tensor& t, std::size_t channel, const std::vector<double>& per_cell, const GridMap& map, double divisor) {
    for (std::size_t i = 0; i < map.size(); ++i) {
        auto [r, c] = map.axial(map.cell(i));
        t.at3(channel, r, c) = per_cell[i] / divisor;
    }
}
inline void gather(const Tensor& t, std::size_t channel, std::vector<double>& per_cell, const GridMap& map, double scale,
                   bool round_counts) {
    per_cell.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        auto [r, c] = map.axial(map.cell(i));
        const double x = t.at3(channel, r, c) * scale;
        per_cell[i] = round_counts ? std::round(x) : x;
    }
}
}  // namespace detail

// Channel order: [drivers_accept, drivers_reject, demand1..3, action, fulfilled1..3].
// Count channels are divided by norm; the action channel is a fraction and is
// stored as-is. Out-of-map positions are zero.
inline Tensor encode_snapshot(const Snapshot& snap, const GridMap& map, double norm = 10.0) {
    if (norm <= 0.0) throw ConfigError("normalization constant must be positive");
    detail::check_field(snap.drivers_accept, map, "drivers_accept");
    detail::check_field(snap.drivers_reject, map, "drivers_reject");
    detail::check_field(snap.action, map, "action");
    for (const auto& d : snap.demand) detail::check_field(d, map, "demand");
    for (const auto& f : snap.fulfilled) detail::check_field(f, map, "fulfilled");
    Tensor t({kSnapshotChannels, map.rows(), map.cols()});
    detail::scatter(t, 0, snap.drivers_accept, map, norm);
    detail::scatter(t, 1, snap.drivers_reject, map, norm);
    for (std::size_t j = 0; j < 3; ++j) detail::scatter(t, 2 + j, snap.demand[j], map, norm);
    detail::scatter(t, 5, snap.action, map, 1.0);
    for (std::size_t j = 0; j < 3; ++j) detail::scatter(t, 6 + j, snap.fulfilled[j], map, norm);
    return t;
}

// Inverse of encode_snapshot; count channels are rounded back to integers.
inline Snapshot decode_snapshot(const Tensor& t, const GridMap& map, double norm = 10.0) {
    if (t.shape != std::vector<std::size_t>{kSnapshotChannels, map.rows(), map.cols()})
        throw ShapeError("decode_snapshot: tensor shape does not match map");
    Snapshot s;
    detail::gather(t, 0, s.drivers_accept, map, norm, true);
    detail::gather(t, 1, s.drivers_reject, map, norm, true);
    for (std::size_t j = 0; j < 3; ++j) detail::gather(t, 2 + j, s.demand[j], map, norm, true);
    detail::gather(t, 5, s.action, map, 1.0, false);
    for (std::size_t j = 0; j < 3; ++j) detail::gather(t, 6 + j, s.fulfilled[j], map, norm, true);
    return s;
}

// Current-state encoding (n_t, d_t): [drivers_accept, drivers_reject, demand1..3].
inline Tensor encode_observation(const std::vector<double>& accept, const std::vector<double>& reject,
                                 const std::array<std::vector<double>, 3>& demand, const GridMap& map,
                                 double norm = 10.0) {
    if (norm <= 0.0) throw ConfigError("normalization constant must be positive");
    detail::check_field(accept, map, "drivers_accept");
    detail::check_field(reject, map, "drivers_reject");
    for (const auto& d : demand) detail::check_field(d, map, "demand");
    Tensor t({kObservationChannels, map.rows(), map.cols()});
    detail::scatter(t, 0, accept, map, norm);
    detail::scatter(t, 1, reject, map, norm);
    for (std::size_t j = 0; j < 3; ++j) detail::scatter(t, 2 + j, demand[j], map, norm);
    return t;
}

// Zero-pads the front so the output always has length memory_len, oldest first.
inline std::vector<Tensor> encode_memory(const std::vector<Snapshot>& history, const GridMap& map,
                                         std::size_t memory_len, double norm = 10.0) {
    if (history.size() > memory_len) throw DomainError("encode_memory: history longer than the memory window");
    std::vector<Tensor> out;
    out.reserve(memory_len);
    const std::size_t pad = memory_len - history.size();
    for (std::size_t i = 0; i < pad; ++i) out.emplace_back(Tensor({kSnapshotChannels, map.rows(), map.cols()}));
    for (const auto& s : history) out.push_back(encode_snapshot(s, map, norm));
    return out;
}

}  // namespace hexmarket::hexgrid
