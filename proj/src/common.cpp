#include "msmkit/common.hpp"

#include <cmath>
#include <cstdio>

namespace msmkit {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

double stable_mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double sum = 0.0, comp = 0.0;
  for (double x : xs) {
    double y = x - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum / static_cast<double>(xs.size());
}

}  // namespace msmkit
