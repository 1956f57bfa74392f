#include "stylealign/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "stylealign/errors.hpp"

namespace stylealign {

namespace {

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

Rng Rng::derive(uint64_t root_seed, std::string_view label) {
    return Rng(splitmix64(root_seed ^ fnv1a64(label)));
}

uint64_t Rng::next_below(uint64_t bound) {
    if (bound == 0) {
        throw ContractError("Rng::next_below: bound must be positive");
    }
    // Rejection over the largest multiple of bound below 2^64.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % bound;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_double(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

double Rng::next_gaussian() {
    if (has_spare_gaussian_) {
        has_spare_gaussian_ = false;
        return spare_gaussian_;
    }
    double u1 = next_double();
    double u2 = next_double();
    // Guard log(0); 1 - u1 lies in (0, 1].
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_gaussian_ = r * std::sin(theta);
    has_spare_gaussian_ = true;
    return r * std::cos(theta);
}

size_t Rng::next_weighted(const std::vector<double>& cumulative) {
    if (cumulative.empty()) {
        throw ContractError("Rng::next_weighted: empty weight table");
    }
    const double total = cumulative.back();
    if (!(total > 0.0)) {
        throw ContractError("Rng::next_weighted: weights sum to zero");
    }
    const double x = next_double() * total;
    // First index with cumulative > x.
    size_t lo = 0;
    size_t hi = cumulative.size() - 1;
    while (lo < hi) {
        size_t mid = (lo + hi) / 2;
        if (cumulative[mid] > x) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo;
}

std::string Rng::save_state() const {
    std::ostringstream out;
    out << engine_;
    out << " " << (has_spare_gaussian_ ? 1 : 0) << " ";
    out.precision(17);
    out << std::scientific << spare_gaussian_;
    return out.str();
}

void Rng::restore_state(const std::string& text) {
    std::istringstream in(text);
    int spare_flag = 0;
    in >> engine_ >> spare_flag >> spare_gaussian_;
    if (in.fail()) {
        throw IoError("Rng::restore_state: malformed engine state");
    }
    has_spare_gaussian_ = spare_flag != 0;
}

std::vector<double> cumulative_weights(const std::vector<double>& weights) {
    std::vector<double> cumulative(weights.size());
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0) {
            throw ContractError("cumulative_weights: negative weight");
        }
        acc += weights[i];
        cumulative[i] = acc;
    }
    return cumulative;
}

}  // namespace stylealign
