#include "vidctl/core/autograd.hpp"

#include <algorithm>

namespace vidctl::core {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool enabled) { g_grad_enabled = enabled; }

}  // namespace vidctl::core

#include <cstdio>
#include <cstdlib>
#include <cxxabi.h>

#include <map>
#include <mutex>
#include <vector>

namespace vidctl::core {

namespace {
std::mutex g_profile_mutex;
std::map<std::string, std::pair<double, int64_t>> g_profile;
}  // namespace

bool backward_profiling_enabled() {
  static const bool on = std::getenv("VIDCTL_PROFILE_BACKWARD") != nullptr;
  return on;
}

void profile_backward_add(const char* type_name, double seconds) {
  std::lock_guard<std::mutex> lock(g_profile_mutex);
  auto& slot = g_profile[type_name];
  slot.first += seconds;
  slot.second += 1;
}

void dump_backward_profile() {
  std::lock_guard<std::mutex> lock(g_profile_mutex);
  std::vector<std::pair<double, std::string>> rows;
  for (auto& [name, v] : g_profile) {
    int status = 0;
    char* demangled = abi::__cxa_demangle(name.c_str(), nullptr, nullptr, &status);
    std::string pretty = status == 0 && demangled ? demangled : name;
    if (demangled) std::free(demangled);
    if (pretty.size() > 120) pretty = pretty.substr(0, 120);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%9.1f ms %8ld calls  %s", v.first * 1e3, (long)v.second,
                  pretty.c_str());
    rows.emplace_back(v.first, buf);
  }
  std::sort(rows.rbegin(), rows.rend());
  for (auto& [t, line] : rows) std::fprintf(stderr, "%s\n", line.c_str());
  g_profile.clear();
}

}  // namespace vidctl::core
