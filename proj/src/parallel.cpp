#include "slq/parallel.hpp"

#include <atomic>

namespace slq {

namespace {
std::atomic<int> g_workers{1};
}

int default_workers() { return g_workers.load(); }

void set_default_workers(int workers) { g_workers.store(workers > 0 ? workers : 1); }

}  // namespace slq
