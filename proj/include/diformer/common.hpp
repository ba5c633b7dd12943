#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace diformer {

// ─── Errors ─────────────────────────────────────────────────────────────────

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidAudio : Error { using Error::Error; };
struct InvalidCorpus : Error { using Error::Error; };
struct InvalidSpec : Error { using Error::Error; };
struct InvalidInput : Error { using Error::Error; };
struct InvalidCost : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// ─── Deterministic RNG ──────────────────────────────────────────────────────
//
// All randomness in the project flows through this generator so that runs are
// reproducible from a single seed. Distributions are hand-rolled: the standard
// library's are implementation-defined and would tie outputs to a particular
// libstdc++ version.

class Rng {
public:
    explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) { reseed(seed); }

    void reseed(uint64_t seed) {
        // splitmix64 expansion of the seed into the xoshiro state
        state_ = seed;
        for (auto &s : s_) s = splitmix64();
        have_gauss_ = false;
    }

    uint64_t next_u64() {
        // xoshiro256** step
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n)
    uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

    // Standard normal via Box-Muller (deterministic, cached pair)
    double gaussian();

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Exponential with the given mean
    double exponential(double mean);

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t splitmix64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t state_ = 0;
    uint64_t s_[4] = {1, 2, 3, 4};
    bool have_gauss_ = false;
    double cached_gauss_ = 0.0;
};

// Stateless 64-bit mix, used for counter-based draws (e.g. picking the scene
// for step k) so that resumed training replays the identical sequence.
uint64_t hash_mix(uint64_t a, uint64_t b);
uint64_t hash_string(const std::string &s);

// ─── Thread pool ────────────────────────────────────────────────────────────
//
// parallel_for partitions [0, n) into contiguous chunks, one per worker.
// Results are bit-identical for any worker count because every output element
// is computed by exactly one thread with a fixed sequential reduction order.

void set_num_threads(int n);
int  num_threads();
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)> &fn);

} // namespace diformer
