#include "cider/common.hpp"

#include <iostream>
#include <mutex>

namespace cider {

static std::mutex log_mu;

void log_warn(const std::string& msg) {
    std::lock_guard<std::mutex> g(log_mu);
    std::cerr << "[cider] warning: " << msg << "\n";
}

void log_info(const std::string& msg) {
    std::lock_guard<std::mutex> g(log_mu);
    std::cerr << "[cider] " << msg << "\n";
}

}  // namespace cider
