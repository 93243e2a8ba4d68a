#pragma once

#include <cstddef>
#include <vector>

namespace msqnet {

// Raw pixel clip, values in [0,1], layout [T][3][H][W].
struct Video {
  int frames = 0, height = 0, width = 0;
  std::vector<double> pixels;

  static Video zeros(int t, int h, int w) {
    Video v;
    v.frames = t;
    v.height = h;
    v.width = w;
    v.pixels.assign(static_cast<std::size_t>(t) * 3 * h * w, 0.0);
    return v;
  }

  std::size_t index(int t, int c, int y, int x) const {
    return ((static_cast<std::size_t>(t) * 3 + c) * height + y) * width + x;
  }
  double& at(int t, int c, int y, int x) { return pixels[index(t, c, y, x)]; }
  double at(int t, int c, int y, int x) const { return pixels[index(t, c, y, x)]; }
};

}  // namespace msqnet
