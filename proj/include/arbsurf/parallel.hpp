#pragma once

#include <cstddef>
#include <functional>

namespace arbsurf {

// Worker count used when a caller passes jobs <= 0; starts at 1.
void set_default_jobs(int jobs);
int default_jobs();

// Runs body(i) for i in [0, n) on up to `jobs` threads. Indices are handed out in order;
// the first exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int jobs = 0);

}  // namespace arbsurf
