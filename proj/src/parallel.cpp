#include "pcix/parallel.hpp"

namespace pcix {

namespace {
int g_workers = 0;
}

void set_workers(int n) { g_workers = n < 0 ? 0 : n; }
int workers() { return g_workers; }

}  // namespace pcix
