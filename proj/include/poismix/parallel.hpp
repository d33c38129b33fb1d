#ifndef POISMIX_PARALLEL_HPP
#define POISMIX_PARALLEL_HPP

#include <functional>

namespace poismix {

/// Runs body(0..n-1) on up to `threads` workers. Work items must write only
/// to their own output slots; iteration order is unspecified. The first
/// exception thrown by any item is rethrown after all workers join.
/// threads <= 1 runs serially in index order.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

/// std::thread::hardware_concurrency with a floor of 1.
int default_threads();

}  // namespace poismix

#endif  // POISMIX_PARALLEL_HPP
