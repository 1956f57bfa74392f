#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace stylealign {

// Deterministic random stream with portable draw algorithms.
//
// std::mt19937_64 output is fully specified by the standard, but the
// std:: distribution classes are not; every draw method here is spelled
// out so two standard libraries produce identical artifacts.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // Derives an independent stream from a root seed and a purpose label.
    // Identical (seed, label) pairs always yield identical streams.
    static Rng derive(uint64_t root_seed, std::string_view label);

    uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, bound) by rejection; bound > 0.
    uint64_t next_below(uint64_t bound);

    // Uniform double in [0, 1) with 53 random bits.
    double next_double();

    // Uniform double in [lo, hi).
    double next_double(double lo, double hi);

    // Standard normal via Box-Muller (two uniforms per pair, one cached).
    double next_gaussian();

    // Index draw proportional to non-negative weights (cumulative search).
    size_t next_weighted(const std::vector<double>& cumulative_weights);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Engine state as decimal text, for checkpointing.
    std::string save_state() const;
    void restore_state(const std::string& text);

private:
    std::mt19937_64 engine_;
    bool has_spare_gaussian_ = false;
    double spare_gaussian_ = 0.0;
};

// Builds a cumulative weight table for Rng::next_weighted.
std::vector<double> cumulative_weights(const std::vector<double>& weights);

}  // namespace stylealign
