#pragma once

#include <cmath>
#include <string>

#include <doctest.h>

#include "clothret/mesh.hpp"

namespace testing {

/// Flat n x n grid of unit spacing in the z = 0 plane, two triangles per cell.
inline clothret::Mesh grid_mesh(int n) {
  clothret::Points3 v(n * n, 3);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) v.row(j * n + i) << i, j, 0.0;
  }
  std::vector<clothret::Face> f;
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const int a = j * n + i, b = a + 1, c = a + n, d = c + 1;
      f.push_back({a, b, d});
      f.push_back({a, d, c});
    }
  }
  return clothret::Mesh(std::move(v), std::move(f));
}

inline const char* kCubeObj =
    "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
    "f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\n"
    "f 2 3 7\nf 2 7 6\nf 3 4 8\nf 3 8 7\nf 4 1 5\nf 4 5 8\n";

inline bool message_contains(const std::exception& e, const std::string& part) {
  return std::string(e.what()).find(part) != std::string::npos;
}

}  // namespace testing
