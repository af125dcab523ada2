#pragma once

// Independent reference computations used by the unit and acceptance tests.
// They deliberately avoid the library's loss and metric code paths.

#include <cmath>
#include <cstddef>
#include <vector>

#include "antifrag/core.hpp"

namespace oracle {

using antifrag::LossFunction;
using antifrag::LossKind;
using antifrag::Vec;

inline double loss_at(const LossFunction& l, const Vec& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (l.kind() == LossKind::quadratic) {
      const double diff = a[i] - l.param()[i];
      s += 0.5 * diff * diff;
    } else {
      s += l.param()[i] * a[i];
    }
  }
  return s;
}

inline Vec grad_at(const LossFunction& l, const Vec& a) {
  Vec g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    g[i] = l.kind() == LossKind::quadratic ? a[i] - l.param()[i] : l.param()[i];
  }
  return g;
}

inline double dynamic_regret(const std::vector<LossFunction>& losses, const std::vector<Vec>& actions,
                             const std::vector<Vec>& comparators) {
  double learner = 0.0, comp = 0.0;
  for (std::size_t t = 0; t < losses.size(); ++t) {
    learner += loss_at(losses[t], actions[t]);
    comp += loss_at(losses[t], comparators[t]);
  }
  return learner - comp;
}

inline double static_regret(const std::vector<LossFunction>& losses, const std::vector<Vec>& actions,
                            const Vec& u) {
  return dynamic_regret(losses, actions, std::vector<Vec>(losses.size(), u));
}

inline double path_length(const std::vector<Vec>& seq) {
  double s = 0.0;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < seq[t].size(); ++i) {
      const double d = seq[t][i] - seq[t - 1][i];
      sq += d * d;
    }
    s += std::sqrt(sq);
  }
  return s;
}

// Box grid with n points per axis including both ends.
inline std::vector<Vec> box_grid(const Vec& lo, const Vec& hi, std::size_t n) {
  std::vector<Vec> pts{Vec{}};
  for (std::size_t i = 0; i < lo.size(); ++i) {
    std::vector<Vec> next;
    for (const auto& p : pts) {
      for (std::size_t k = 0; k < n; ++k) {
        Vec q = p;
        q.push_back(lo[i] + (hi[i] - lo[i]) * static_cast<double>(k) / static_cast<double>(n - 1));
        next.push_back(std::move(q));
      }
    }
    pts = std::move(next);
  }
  return pts;
}

struct Variability {
  double f = 0.0;
  double g = 0.0;
};

// Sup over a box grid of the round-to-round loss and squared gradient change.
inline Variability grid_variability(const std::vector<LossFunction>& losses, const Vec& lo, const Vec& hi,
                                    std::size_t n) {
  const auto pts = box_grid(lo, hi, n);
  Variability out;
  for (std::size_t t = 1; t < losses.size(); ++t) {
    double f = 0.0, g = 0.0;
    for (const auto& a : pts) {
      f = std::max(f, std::abs(loss_at(losses[t], a) - loss_at(losses[t - 1], a)));
      const Vec g1 = grad_at(losses[t], a), g0 = grad_at(losses[t - 1], a);
      double sq = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) sq += (g1[i] - g0[i]) * (g1[i] - g0[i]);
      g = std::max(g, sq);
    }
    out.f += f;
    out.g += g;
  }
  return out;
}

inline bool rel_close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace oracle
