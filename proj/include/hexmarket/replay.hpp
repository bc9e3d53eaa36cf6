#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hexmarket/checkpoint.hpp"
#include "hexmarket/common.hpp"
#include "hexmarket/rng.hpp"
#include "hexmarket/tensor.hpp"

namespace hexmarket::replay {

// Memory-augmented transition: encoded observation and memory stack on both
// sides, the executed action, and the rank metadata.
struct Transition {
    Tensor s;
    std::vector<Tensor> memory;
    std::vector<double> action;
    double reward = 0.0;
    Tensor next_s;
    std::vector<Tensor> next_memory;
    bool terminal = false;
};

struct SampleResult {
    std::vector<const Transition*> batch;
    std::vector<std::size_t> indices;  // storage slots, valid until the next insert
    std::vector<double> weights;       // normalized so the batch max is exactly 1
};

// Rank-based prioritized replay. Items are ranked by |TD error| descending
// (rank 1 = highest priority); fresh items outrank all trained ones until
// their first update, ties resolve newer-first. Eviction is strictly FIFO.
class PerBuffer {
public:
    PerBuffer(std::size_t capacity, double alpha, double beta, std::uint64_t sample_seed)
        : capacity_(capacity), alpha_(alpha), beta_(beta), rng_(sample_seed) {
        if (capacity_ == 0) throw ConfigError("replay: capacity must be positive");
        if (alpha_ < 0.0 || beta_ < 0.0) throw ConfigError("replay: alpha and beta must be nonnegative");
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    const Transition& transition(std::size_t slot) const { return items_.at(slot).tr; }
    bool is_fresh(std::size_t slot) const { return items_.at(slot).fresh; }
    double abs_td(std::size_t slot) const { return items_.at(slot).abs_td; }

    void insert(Transition tr) {
        Item item;
        item.tr = std::move(tr);
        item.seq = next_seq_++;
        item.fresh = true;
        item.abs_td = 0.0;
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            // FIFO eviction: overwrite the slot holding the oldest sequence.
            std::size_t oldest = 0;
            for (std::size_t i = 1; i < items_.size(); ++i)
                if (items_[i].seq < items_[oldest].seq) oldest = i;
            items_[oldest] = std::move(item);
        }
        rerank();
    }

    std::size_t rank(std::size_t slot) const {
        return rank_of_.at(slot);  // 1-based
    }

    // Eq. (12): P(j) = (1/rank(j))^alpha / sum_k (1/rank(k))^alpha.
    double probability(std::size_t slot) const {
        if (slot >= items_.size()) throw DomainError("replay: no item in that slot");
        return std::pow(1.0 / static_cast<double>(rank_of_[slot]), alpha_) / priority_mass();
    }

    // Draws min(requested, stored) indices i.i.d. with replacement by P(j);
    // Eq. (13) weights use S = current stored count and are normalized by the
    // batch maximum.
    SampleResult sample(std::size_t requested) {
        if (items_.empty()) throw StateError("replay: cannot sample from an empty buffer");
        const std::size_t n = std::min(requested, items_.size());
        const double mass = priority_mass();
        std::vector<double> cum(items_.size());
        double acc = 0.0;
        for (std::size_t pos = 0; pos < ranked_.size(); ++pos) {
            acc += std::pow(1.0 / static_cast<double>(pos + 1), alpha_) / mass;
            cum[pos] = acc;
        }
        SampleResult res;
        res.batch.reserve(n);
        res.indices.reserve(n);
        res.weights.reserve(n);
        const double stored = static_cast<double>(items_.size());
        double max_w = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t pos = rng_.categorical(cum);
            const std::size_t slot = ranked_[pos];
            const double p = std::pow(1.0 / static_cast<double>(pos + 1), alpha_) / mass;
            const double w = std::pow(1.0 / (stored * p), beta_);
            res.batch.push_back(&items_[slot].tr);
            res.indices.push_back(slot);
            res.weights.push_back(w);
            max_w = std::max(max_w, w);
        }
        for (double& w : res.weights) w /= max_w;
        return res;
    }

    void update_priorities(const std::vector<std::size_t>& slots, const std::vector<double>& abs_td_errors) {
        if (slots.size() != abs_td_errors.size()) throw ShapeError("replay: slot/error count mismatch");
        for (std::size_t k = 0; k < slots.size(); ++k) {
            if (slots[k] >= items_.size()) throw DomainError("replay: invalid slot");
            if (!(abs_td_errors[k] >= 0.0)) throw DomainError("replay: |TD error| must be nonnegative");
            items_[slots[k]].abs_td = abs_td_errors[k];
            items_[slots[k]].fresh = false;
        }
        rerank();
    }

    // Buffer snapshot in the shared checkpoint container. Sampling RNG state
    // is not captured; a resumed run reseeds its sampler.
    void save_snapshot(const std::string& path) const {
        std::vector<std::pair<std::string, Tensor>> blobs;
        blobs.emplace_back("buffer.meta", Tensor({5}, {static_cast<double>(capacity_), alpha_, beta_,
                                                       static_cast<double>(items_.size()), static_cast<double>(next_seq_)}));
        for (std::size_t i = 0; i < items_.size(); ++i) {
            const Item& it = items_[i];
            const std::string p = "item" + std::to_string(i);
            blobs.emplace_back(p + ".meta", Tensor({5}, {it.tr.reward, it.tr.terminal ? 1.0 : 0.0, it.abs_td,
                                                         it.fresh ? 1.0 : 0.0, static_cast<double>(it.seq)}));
            blobs.emplace_back(p + ".s", it.tr.s);
            blobs.emplace_back(p + ".next_s", it.tr.next_s);
            blobs.emplace_back(p + ".action", Tensor({it.tr.action.size()}, it.tr.action));
            for (std::size_t l = 0; l < it.tr.memory.size(); ++l) blobs.emplace_back(p + ".mem" + std::to_string(l), it.tr.memory[l]);
            for (std::size_t l = 0; l < it.tr.next_memory.size(); ++l)
                blobs.emplace_back(p + ".next_mem" + std::to_string(l), it.tr.next_memory[l]);
        }
        checkpoint::save(path, blobs);
    }

    static PerBuffer load_snapshot(const std::string& path, std::uint64_t sample_seed) {
        auto blobs = checkpoint::load(path);
        const auto find = [&](const std::string& name) -> const Tensor& {
            for (const auto& [n, t] : blobs)
                if (n == name) return t;
            throw ConfigError("replay snapshot: missing entry " + name);
        };
        const Tensor& meta = find("buffer.meta");
        PerBuffer buf(static_cast<std::size_t>(meta.v[0]), meta.v[1], meta.v[2], sample_seed);
        const std::size_t count = static_cast<std::size_t>(meta.v[3]);
        for (std::size_t i = 0; i < count; ++i) {
            const std::string p = "item" + std::to_string(i);
            const Tensor& im = find(p + ".meta");
            Item it;
            it.tr.reward = im.v[0];
            it.tr.terminal = im.v[1] != 0.0;
            it.abs_td = im.v[2];
            it.fresh = im.v[3] != 0.0;
            it.seq = static_cast<std::uint64_t>(im.v[4]);
            it.tr.s = find(p + ".s");
            it.tr.next_s = find(p + ".next_s");
            it.tr.action = find(p + ".action").v;
            for (std::size_t l = 0;; ++l) {
                bool found = false;
                for (const auto& [n, t] : blobs)
                    if (n == p + ".mem" + std::to_string(l)) {
                        it.tr.memory.push_back(t);
                        found = true;
                    }
                if (!found) break;
            }
            for (std::size_t l = 0;; ++l) {
                bool found = false;
                for (const auto& [n, t] : blobs)
                    if (n == p + ".next_mem" + std::to_string(l)) {
                        it.tr.next_memory.push_back(t);
                        found = true;
                    }
                if (!found) break;
            }
            buf.items_.push_back(std::move(it));
            buf.next_seq_ = std::max(buf.next_seq_, buf.items_.back().seq + 1);
        }
        buf.rerank();
        return buf;
    }

private:
    struct Item {
        Transition tr;
        std::uint64_t seq = 0;
        double abs_td = 0.0;
        bool fresh = true;
    };

    // sum_{r=1..n} (1/r)^alpha; depends only on the stored count.
    double priority_mass() const {
        double z = 0.0;
        for (std::size_t r = 1; r <= items_.size(); ++r) z += std::pow(1.0 / static_cast<double>(r), alpha_);
        return z;
    }

    void rerank() {
        ranked_.resize(items_.size());
        for (std::size_t i = 0; i < items_.size(); ++i) ranked_[i] = i;
        std::sort(ranked_.begin(), ranked_.end(), [this](std::size_t a, std::size_t b) {
            const Item& ia = items_[a];
            const Item& ib = items_[b];
            if (ia.fresh != ib.fresh) return ia.fresh;
            if (ia.fresh) return ia.seq > ib.seq;  // newer fresh items first
            if (ia.abs_td != ib.abs_td) return ia.abs_td > ib.abs_td;
            return ia.seq > ib.seq;  // equal |TD|: newer first
        });
        rank_of_.resize(items_.size());
        for (std::size_t pos = 0; pos < ranked_.size(); ++pos) rank_of_[ranked_[pos]] = pos + 1;
    }

    std::size_t capacity_;
    double alpha_;
    double beta_;
    Rng rng_;
    std::vector<Item> items_;
    std::vector<std::size_t> ranked_;   // slot ids in rank order
    std::vector<std::size_t> rank_of_;  // slot -> 1-based rank
    std::uint64_t next_seq_ = 0;
};

}  // namespace hexmarket::replay
