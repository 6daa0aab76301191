#include "gtn/windows.hpp"

#include <algorithm>

#include "gtn/error.hpp"

namespace gtn {

std::vector<Window> window_plan(std::size_t frames, std::size_t window, std::size_t stride) {
  require(frames > 0, Errc::invalid_argument, "window_plan: T == 0");
  require(window >= 1 && stride >= 1, Errc::invalid_argument, "window_plan: window and stride must be >= 1");
  require(stride <= window, Errc::invalid_argument, "window_plan: stride > window leaves frames uncovered");
  std::vector<Window> plan;
  for (std::size_t s = 0; s < frames; s += stride) {
    const std::size_t e = std::min(s + window, frames);
    plan.push_back({s, e});
    if (e == frames) break;
  }
  return plan;
}

std::vector<std::size_t> coverage(const std::vector<Window>& plan, std::size_t frames) {
  std::vector<std::size_t> count(frames, 0);
  for (const auto& w : plan) {
    require(w.start <= w.end && w.end <= frames, Errc::invalid_argument, "window outside video");
    for (std::size_t t = w.start; t < w.end; ++t) ++count[t];
  }
  return count;
}

}  // namespace gtn
