#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace skillpatch {

enum class ErrorCode {
    InvalidConfig,
    Unplaceable,
    NotPositiveDefinite,
    InsufficientSamples,
    InsufficientData,
    NotApplicable,
    DemoFailed,
    PlanNotFound,
    NoFeasibleGoal,
    SamplingExhausted,
    CorruptLog,
    MalformedMessage,
    ClientDisconnected,
    IoFailure,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to fan a master seed out into independent streams.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based seed split: the seed for item `index` of stream `stream`
/// depends only on (master, stream, index), so adding trials never reshuffles
/// earlier ones.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index)
{
    return mix64(mix64(master ^ mix64(stream)) + index);
}

}  // namespace skillpatch
