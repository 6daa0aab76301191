#pragma once

#include <cstddef>
#include <vector>

namespace gtn {

/// Half-open frame interval [start, end).
struct Window {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Window&, const Window&) = default;
};

/// Windows [s, min(s + window, T)) for s = 0, stride, ... up to the first
/// window that reaches T. Requires 1 <= stride <= window, so the last window
/// always ends at T and every frame is covered.
std::vector<Window> window_plan(std::size_t frames, std::size_t window, std::size_t stride);

/// Number of windows covering each frame.
std::vector<std::size_t> coverage(const std::vector<Window>& plan, std::size_t frames);

}  // namespace gtn
