#include "sincon/parallel.hpp"

#include <atomic>

namespace sincon {

namespace {
std::atomic<int> g_max_threads{0};
}

void set_max_threads(int count) { g_max_threads.store(count < 0 ? 0 : count); }

int max_threads() {
    const int cap = g_max_threads.load();
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int base = hw > 0 ? hw : 1;
    return cap == 0 ? base : std::min(cap, base);
}

}  // namespace sincon
