// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace dsg {

/// Number of worker threads to use when the caller asks for `requested`
/// (0 means "all hardware threads").
unsigned resolve_jobs(unsigned requested);

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Indices are
/// handed out in contiguous blocks; body must only write to slot i of any
/// shared output. Exceptions from workers are rethrown on the caller.
void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body);

}  // namespace dsg
