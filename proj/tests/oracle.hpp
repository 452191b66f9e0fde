#pragma once

// Test-only double-precision oracles, independent of the tape implementation.
// Finite differences run against these, never against the float32 library path.

#include <cmath>
#include <functional>
#include <vector>

#include "shortcut/net.hpp"
#include "shortcut/tensor.hpp"

namespace oracle {

using DMat = std::vector<std::vector<double>>;

inline DMat from_tensor(const shortcut::Tensor& t) {
  DMat m(t.rows, std::vector<double>(t.cols));
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) m[r][c] = t.at(r, c);
  return m;
}

inline DMat dmatmul(const DMat& a, const DMat& b) {
  DMat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t k = 0; k < b.size(); ++k)
      for (size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline double dsilu(double x) { return x / (1.0 + std::exp(-x)); }

inline double dmse(const DMat& a, const DMat& b) {
  double acc = 0.0;
  int n = 0;
  for (size_t r = 0; r < a.size(); ++r)
    for (size_t c = 0; c < a[0].size(); ++c) {
      double d = a[r][c] - b[r][c];
      acc += d * d;
      ++n;
    }
  return acc / n;
}

// Central finite difference of a scalar function of one flat coordinate.
inline double fd(const std::function<double(double)>& f, double x, double h = 1e-3) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Double-precision re-implementation of the velocity network forward pass.
// Mirrors the architecture contract only; shares no code with the tape path.
struct DoubleNet {
  std::vector<DMat> w, b;
  DMat time_w, time_b, d_embed, class_embed;
  shortcut::NetConfig cfg;
  shortcut::StepGrid grid;

  static DoubleNet from(const shortcut::Params& p, const shortcut::NetConfig& cfg,
                        const shortcut::StepGrid& grid) {
    DoubleNet n;
    n.cfg = cfg;
    n.grid = grid;
    for (const auto& t : p.w) n.w.push_back(from_tensor(t));
    for (const auto& t : p.b) n.b.push_back(from_tensor(t));
    n.time_w = from_tensor(p.time_w);
    n.time_b = from_tensor(p.time_b);
    n.d_embed = from_tensor(p.d_embed);
    if (p.class_embed.size() > 0) n.class_embed = from_tensor(p.class_embed);
    return n;
  }

  std::vector<double> forward_row(const std::vector<double>& x, double t, int bucket,
                                  int cls = -1) const {
    int half = cfg.time_embed_dim / 2;
    std::vector<double> feat(cfg.time_embed_dim);
    for (int j = 0; j < half; ++j) {
      double frac = half > 1 ? static_cast<double>(j) / (half - 1) : 0.0;
      double omega = std::pow(1000.0, frac);
      feat[j] = std::sin(omega * t);
      feat[half + j] = std::cos(omega * t);
    }
    std::vector<double> temb(cfg.time_embed_dim, 0.0);
    for (int j = 0; j < cfg.time_embed_dim; ++j) {
      for (int i = 0; i < cfg.time_embed_dim; ++i) temb[j] += feat[i] * time_w[i][j];
      temb[j] += time_b[0][j];
    }
    std::vector<double> h;
    h.insert(h.end(), x.begin(), x.end());
    h.insert(h.end(), temb.begin(), temb.end());
    int eidx = grid.embed_index(bucket);
    h.insert(h.end(), d_embed[eidx].begin(), d_embed[eidx].end());
    if (cfg.num_classes > 0) {
      int c = cls < 0 ? cfg.num_classes : cls;
      h.insert(h.end(), class_embed[c].begin(), class_embed[c].end());
    }
    for (size_t l = 0; l < w.size(); ++l) {
      std::vector<double> next(w[l][0].size(), 0.0);
      for (size_t j = 0; j < next.size(); ++j) {
        for (size_t i = 0; i < h.size(); ++i) next[j] += h[i] * w[l][i][j];
        next[j] += b[l][0][j];
        if (l + 1 < w.size()) next[j] = dsilu(next[j]);
      }
      h = std::move(next);
    }
    return h;
  }
};

}  // namespace oracle
