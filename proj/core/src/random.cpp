#include "advnas/random.hpp"

#include "advnas/errors.hpp"

#include <cmath>
#include <sstream>

namespace advnas {

namespace {

// FNV-1a, used only to fold a sub-stream name into the seed sequence.
std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

RandomStream::RandomStream(std::uint64_t seed, std::string_view name) {
    const std::uint64_t tag = fnv1a(name);
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    engine_.seed(seq);
}

std::uint64_t RandomStream::next_bits() {
    ++draws_;
    return engine_();
}

double RandomStream::uniform01() {
    // 53 random bits; add half an ulp so the result is strictly inside (0,1).
    const double u = (static_cast<double>(next_bits() >> 11) + 0.5) * 0x1.0p-53;
    return u;
}

double RandomStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

double RandomStream::gaussian() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double RandomStream::gumbel() {
    return -std::log(-std::log(uniform01()));
}

std::uint64_t RandomStream::uniform_int(std::uint64_t n) {
    if (n == 0) throw ContractError("uniform_int: n must be positive");
    // Rejection sampling keeps the distribution exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_bits();
    } while (x >= limit);
    return x % n;
}

bool RandomStream::bernoulli(double p) {
    return uniform01() < p;
}

std::string RandomStream::serialize_state() const {
    std::ostringstream os;
    os << engine_ << ' ' << draws_;
    return os.str();
}

void RandomStream::restore_state(const std::string& text) {
    std::istringstream is(text);
    is >> engine_ >> draws_;
    if (!is) throw FormatError("RandomStream: malformed engine state");
}

} // namespace advnas
