#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dropspread {

// Seeded generator with hand-rolled distributions. std::mt19937_64 output is
// specified by the standard, but the std distributions are not; rolling our
// own keeps sampled values identical across compilers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)), seed_base_(seed) {}

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n) by rejection, bias-free.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent stream for a numbered subtask (tree, repetition, MC pass).
    // Derivation depends only on the construction seed, not on draws made so
    // far, so schedules cannot perturb results.
    Rng derive(std::uint64_t stream) const {
        return Rng(seed_base_ ^ splitmix64(0x51b5c019a32ed3f7ULL + stream));
    }

    std::uint64_t raw() { return engine_(); }

  private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    std::uint64_t seed_base_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dropspread
