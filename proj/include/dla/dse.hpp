// Design-space exploration over (C_vec, K_vec): evaluate resources and modeled
// throughput at every grid point, zero out points where K_vec is not an even
// multiple of C_vec (those lack an efficient memory structure), and pick the
// best feasible point.
#pragma once

#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dla/arch_model.hpp"
#include "dla/perf_model.hpp"

namespace dla {

struct DsePoint {
  VectorConfig cfg;
  bool even_multiple = false;
  ResourceReport resources;
  std::optional<SystemPerf> perf;  // present iff resources.feasible

  // reported throughput; non-even-multiple points are recorded as zero
  double img_per_s_system() const {
    return (perf && even_multiple) ? perf->img_per_s_system : 0.0;
  }
  double img_per_s_device() const {
    return (perf && even_multiple) ? perf->img_per_s_device : 0.0;
  }
};

struct DseFixed {
  int q_vec = 4;
  int w_vec = 6;
  bool winograd = true;
  int l_w = 2;
  int l_h = 3;
  double derate = kDefaultDerate;
};

inline std::vector<int> default_c_range() { return {4, 8, 16}; }
inline std::vector<int> default_k_range() {
  std::vector<int> k;
  for (int v = 8; v <= 96; v += 8) k.push_back(v);
  return k;
}

// Evaluates every (C_vec, K_vec) pair, C_vec major. Pure: identical inputs
// produce identical results (and identical CSV bytes).
inline std::vector<DsePoint> sweep_grid(const DlaLayout& layout, const DeviceSpec& dev,
                                        const DseFixed& fixed,
                                        const std::vector<int>& c_range,
                                        const std::vector<int>& k_range) {
  if (c_range.empty() || k_range.empty())
    throw std::invalid_argument("sweep_grid: empty range");
  std::vector<DsePoint> points;
  points.reserve(c_range.size() * k_range.size());
  for (int c : c_range) {
    for (int k : k_range) {
      DsePoint pt;
      pt.cfg.c_vec = c;
      pt.cfg.k_vec = k;
      pt.cfg.q_vec = fixed.q_vec;
      pt.cfg.w_vec = fixed.w_vec;
      pt.cfg.s_vec = fixed.w_vec - fixed.q_vec + 1;
      pt.cfg.winograd = fixed.winograd;
      pt.cfg.l_w = fixed.l_w;
      pt.cfg.l_h = fixed.l_h;
      pt.even_multiple = (k % (2 * c)) == 0;
      pt.resources = check_fit(pt.cfg, layout, dev);
      if (pt.resources.feasible)
        pt.perf = system_throughput(pt.cfg, layout, dev, fixed.derate);
      points.push_back(std::move(pt));
    }
  }
  return points;
}

// Highest reported system throughput; ties broken by fewer DSPs, then fewer
// M20Ks, then smaller K_vec.
inline const DsePoint& select_best(const std::vector<DsePoint>& points) {
  const DsePoint* best = nullptr;
  for (const auto& pt : points) {
    if (pt.img_per_s_system() <= 0.0) continue;
    if (!best) {
      best = &pt;
      continue;
    }
    const double a = pt.img_per_s_system(), b = best->img_per_s_system();
    if (a > b) {
      best = &pt;
    } else if (a == b) {
      auto key = [](const DsePoint& p) {
        return std::tuple(p.resources.n_dsps, p.resources.m20k_total(), p.cfg.k_vec);
      };
      if (key(pt) < key(*best)) best = &pt;
    }
  }
  if (!best) throw std::runtime_error("design space has no feasible point");
  return *best;
}

inline std::string dse_csv(const std::vector<DsePoint>& points) {
  std::string out = "c_vec,k_vec,dsps,m20k_total,feasible,img_per_s_device,img_per_s_system\n";
  char line[160];
  for (const auto& pt : points) {
    std::snprintf(line, sizeof line, "%d,%d,%lld,%lld,%d,%.4f,%.4f\n", pt.cfg.c_vec,
                  pt.cfg.k_vec, static_cast<long long>(pt.resources.n_dsps),
                  static_cast<long long>(pt.resources.m20k_total()),
                  pt.resources.feasible ? 1 : 0, pt.img_per_s_device(),
                  pt.img_per_s_system());
    out += line;
  }
  return out;
}

}  // namespace dla
