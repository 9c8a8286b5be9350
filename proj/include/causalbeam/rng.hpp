// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace causalbeam {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named sub-stream. The same
/// (base, name, index) triple always yields the same seed, so any stage can be
/// re-run in isolation and parallel workers never share a stream.
std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index = 0);

inline Rng make_stream(std::uint64_t base, std::string_view name, std::uint64_t index = 0)
{
    return Rng(derive_seed(base, name, index));
}

} // namespace causalbeam
