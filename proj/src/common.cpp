#include <atomic>
#include <iostream>
#include <thread>

#include "kdq/error.hpp"
#include "kdq/parallel.hpp"

namespace kdq {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_threads(unsigned n) { g_threads.store(n); }

unsigned threads() {
  const unsigned n = g_threads.load();
  if (n != 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void log_warning(const std::string& message) { std::clog << "warning: " << message << '\n'; }

}  // namespace kdq
