#pragma once

// Reference implementations written independently of the library, shared by the unit tests
// and the acceptance runner.

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <set>
#include <utility>
#include <vector>

#include "univcd/baseline.hpp"
#include "univcd/core.hpp"

namespace oracle {

using univcd::BinaryMask;
using univcd::MatchPair;
using univcd::Raster;
using Hist = std::array<std::uint64_t, 256>;

// Straight scalar loops over (row, col, channel); shares nothing with the library code.
inline double mse(const Raster& a, const Raster& b) {
  double s = 0.0;
  long n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        s += d * d;
        ++n;
      }
    }
  }
  return s / n;
}

inline double mcs(const Raster& a, const Raster& b) {
  double s = 0.0;
  long n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int c = 0; c < a.channels(); ++c) {
        dot += a.at(y, x, c) * b.at(y, x, c);
        na += a.at(y, x, c) * a.at(y, x, c);
        nb += b.at(y, x, c) * b.at(y, x, c);
      }
      if (na == 0.0 || nb == 0.0) continue;
      s += dot / std::sqrt(na * nb);
      ++n;
    }
  }
  return 1.0 - s / n;
}

// Exhaustive: every cut recomputed from scratch in floating point.
inline int otsu(const Hist& h) {
  int best = -1;
  double best_var = -1.0;
  for (int k = 0; k < 255; ++k) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int b = 0; b < 256; ++b) {
      if (b <= k) {
        n0 += h[b];
        s0 += static_cast<double>(h[b]) * b;
      } else {
        n1 += h[b];
        s1 += static_cast<double>(h[b]) * b;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double n = n0 + n1;
    const double d = s0 / n0 - s1 / n1;
    const double var = (n0 / n) * (n1 / n) * d * d;
    if (var > best_var) {
      best_var = var;
      best = k;
    }
  }
  return best;
}

inline std::vector<std::set<std::pair<int, int>>> flood_fill(const BinaryMask& m) {
  std::vector<std::set<std::pair<int, int>>> out;
  std::vector<char> seen(static_cast<std::size_t>(m.height() * m.width()), 0);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(y, x) || seen[y * m.width() + x]) continue;
      std::set<std::pair<int, int>> comp;
      std::deque<std::pair<int, int>> q{{y, x}};
      seen[y * m.width() + x] = 1;
      while (!q.empty()) {
        const auto [r, c] = q.front();
        q.pop_front();
        comp.insert({r, c});
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= m.height() || cc >= m.width()) continue;
            if (!m.at(rr, cc) || seen[rr * m.width() + cc]) continue;
            seen[rr * m.width() + cc] = 1;
            q.push_back({rr, cc});
          }
        }
      }
      out.push_back(std::move(comp));
    }
  }
  return out;
}

// Rescans the whole table for each pick.
inline std::vector<MatchPair> greedy(const std::vector<std::vector<double>>& t, double theta) {
  const std::size_t n1 = t.size();
  const std::size_t n2 = n1 ? t[0].size() : 0;
  std::vector<bool> u1(n1), u2(n2);
  std::vector<MatchPair> out;
  while (true) {
    int bi = -1, bj = -1;
    double best = -1.0;
    for (std::size_t i = 0; i < n1; ++i) {
      for (std::size_t j = 0; j < n2; ++j) {
        if (u1[i] || u2[j] || t[i][j] < theta) continue;
        if (t[i][j] > best) {
          best = t[i][j];
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    }
    if (bi < 0) return out;
    u1[bi] = u2[bj] = true;
    out.push_back({bi, bj, best});
  }
}

}  // namespace oracle
