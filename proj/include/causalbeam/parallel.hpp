// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace causalbeam {

/// Number of workers to use when the caller passes 0.
std::size_t default_workers();

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = default).
/// Items are claimed dynamically; callers that reduce results must write into
/// per-item slots and combine them in index order afterwards. The first
/// exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)> &fn);

} // namespace causalbeam
