#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace advnas {

// Deterministic random stream. All randomness in a run flows from one config
// seed through named sub-streams ("data", "gumbel", "init", "random-arch", ...)
// so components can be reseeded and replayed independently.
//
// Samplers are stateless between calls (no cached Box-Muller spare), so the
// full stream state is exactly the engine state and can be checkpointed with
// serialize_state()/restore_state() for bitwise-reproducible resumption.
class RandomStream {
public:
    RandomStream() : RandomStream(0, "default") {}
    RandomStream(std::uint64_t seed, std::string_view name);

    // Uniform in the open interval (0, 1).
    double uniform01();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller (two uniforms per call, no cache).
    double gaussian();
    // Gumbel(0, 1): -log(-log(u)).
    double gumbel();
    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    // Bernoulli(p).
    bool bernoulli(double p);

    // Number of raw engine draws consumed so far (used by replay tests).
    std::uint64_t draw_count() const { return draws_; }

    std::string serialize_state() const;
    void restore_state(const std::string& text);

private:
    std::uint64_t next_bits();

    std::mt19937_64 engine_;
    std::uint64_t draws_ = 0;
};

} // namespace advnas
