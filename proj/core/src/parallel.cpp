#include "kalikow/parallel.hpp"

#include <cstdlib>
#include <string>

namespace kalikow {

std::size_t worker_count() {
    if (const char* env = std::getenv("KALIKOW_THREADS")) {
        try {
            const auto n = std::stoul(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    const auto hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace kalikow
