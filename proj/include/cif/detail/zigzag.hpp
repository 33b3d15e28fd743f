#pragma once

#include <vector>

#include "cif/error.hpp"

namespace cif {

template <class T>
std::vector<T> zigzag_merge(const std::vector<std::vector<T>>& views) {
  std::vector<T> merged;
  if (views.empty()) return merged;
  const std::size_t frames = views.front().size();
  merged.reserve(views.size() * frames);
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].size() != frames) fail(ErrorCode::Data, "all views must have the same frame count");
    // v is 0-based: views 0, 2, 4, ... are the odd-numbered ones.
    if (v % 2 == 0) {
      merged.insert(merged.end(), views[v].begin(), views[v].end());
    } else {
      merged.insert(merged.end(), views[v].rbegin(), views[v].rend());
    }
  }
  return merged;
}

}  // namespace cif
