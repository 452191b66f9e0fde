#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "shortcut/errors.hpp"
#include "shortcut/rng.hpp"
#include "shortcut/tensor.hpp"

namespace shortcut {

// Toy 2-D distribution with known mode structure. Normalization is affine
// per dimension and stored so samples and mode centers map back exactly.
struct Dataset {
  Tensor points;                 // n x D
  std::vector<int> labels;       // empty or size n
  Tensor mode_centers;           // K x D (may be 0x0 when modes are not meaningful)
  float mode_sigma = 0.0f;       // generator's per-mode std, in current coordinates
  Tensor norm_mean;              // 1 x D
  Tensor norm_scale;             // 1 x D (std), identity until normalize()
  bool normalized = false;

  int size() const { return points.rows; }
  int dim() const { return points.cols; }
  int num_classes() const {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    return k;
  }
};

inline Dataset gen_eight_gaussians(int n, std::uint64_t seed, float radius = 4.0f,
                                   float sigma = 0.3f) {
  if (n <= 0) throw ContractError("gen_eight_gaussians: n must be positive");
  Rng rng(seed);
  Dataset ds;
  ds.points = Tensor(n, 2);
  ds.labels.resize(n);
  ds.mode_centers = Tensor(8, 2);
  ds.mode_sigma = sigma;
  for (int k = 0; k < 8; ++k) {
    double a = k * M_PI / 4.0;
    ds.mode_centers.at(k, 0) = static_cast<float>(radius * std::cos(a));
    ds.mode_centers.at(k, 1) = static_cast<float>(radius * std::sin(a));
  }
  for (int i = 0; i < n; ++i) {
    int k = rng.uniform_int(8);
    ds.labels[i] = k;
    ds.points.at(i, 0) = ds.mode_centers.at(k, 0) + sigma * rng.normalf();
    ds.points.at(i, 1) = ds.mode_centers.at(k, 1) + sigma * rng.normalf();
  }
  ds.norm_mean = Tensor::zeros(1, 2);
  ds.norm_scale = Tensor::full(1, 2, 1.0f);
  return ds;
}

// 4x4 checkerboard over [-2,2]^2; points land only on "black" cells.
inline Dataset gen_checkerboard(int n, std::uint64_t seed) {
  if (n <= 0) throw ContractError("gen_checkerboard: n must be positive");
  Rng rng(seed);
  Dataset ds;
  ds.points = Tensor(n, 2);
  ds.labels.resize(n);
  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if ((i + j) % 2 == 0) cells.emplace_back(i, j);
  ds.mode_centers = Tensor(static_cast<int>(cells.size()), 2);
  ds.mode_sigma = 0.5f;  // half cell width, for coverage radii
  for (size_t c = 0; c < cells.size(); ++c) {
    ds.mode_centers.at(static_cast<int>(c), 0) = -2.0f + cells[c].first + 0.5f;
    ds.mode_centers.at(static_cast<int>(c), 1) = -2.0f + cells[c].second + 0.5f;
  }
  for (int i = 0; i < n; ++i) {
    int c = rng.uniform_int(static_cast<int>(cells.size()));
    ds.labels[i] = c;
    ds.points.at(i, 0) = -2.0f + cells[c].first + static_cast<float>(rng.uniform());
    ds.points.at(i, 1) = -2.0f + cells[c].second + static_cast<float>(rng.uniform());
  }
  ds.norm_mean = Tensor::zeros(1, 2);
  ds.norm_scale = Tensor::full(1, 2, 1.0f);
  return ds;
}

// Two interleaved spirals; labels alternate so even n splits 50/50 exactly.
inline Dataset gen_two_spirals(int n, std::uint64_t seed) {
  if (n <= 0) throw ContractError("gen_two_spirals: n must be positive");
  Rng rng(seed);
  Dataset ds;
  ds.points = Tensor(n, 2);
  ds.labels.resize(n);
  ds.mode_sigma = 0.1f;
  for (int i = 0; i < n; ++i) {
    int arm = i % 2;
    double u = rng.uniform();
    double r = 0.4 + 2.6 * u;
    double a = 3.0 * M_PI * u + arm * M_PI;
    ds.labels[i] = arm;
    ds.points.at(i, 0) = static_cast<float>(r * std::cos(a) + 0.1 * rng.normal());
    ds.points.at(i, 1) = static_cast<float>(r * std::sin(a) + 0.1 * rng.normal());
  }
  ds.norm_mean = Tensor::zeros(1, 2);
  ds.norm_scale = Tensor::full(1, 2, 1.0f);
  return ds;
}

// Per-dimension standardization; transforms points and mode centers in place
// and records the affine map so denormalize() is the exact inverse.
inline void normalize(Dataset& ds) {
  if (ds.size() == 0) throw ContractError("normalize: empty dataset");
  int D = ds.dim();
  Tensor mean(1, D), scale(1, D);
  for (int c = 0; c < D; ++c) {
    double m = 0.0;
    for (int r = 0; r < ds.size(); ++r) m += ds.points.at(r, c);
    m /= ds.size();
    double var = 0.0;
    for (int r = 0; r < ds.size(); ++r) {
      double d = ds.points.at(r, c) - m;
      var += d * d;
    }
    var /= ds.size();
    if (var < 1e-12)
      throw DomainError("normalize: dimension " + std::to_string(c) + " has zero variance");
    mean.data[c] = static_cast<float>(m);
    scale.data[c] = static_cast<float>(std::sqrt(var));
  }
  for (int r = 0; r < ds.size(); ++r)
    for (int c = 0; c < D; ++c)
      ds.points.at(r, c) = (ds.points.at(r, c) - mean.data[c]) / scale.data[c];
  for (int r = 0; r < ds.mode_centers.rows; ++r)
    for (int c = 0; c < D; ++c)
      ds.mode_centers.at(r, c) = (ds.mode_centers.at(r, c) - mean.data[c]) / scale.data[c];
  // Mode width is shared across dims; use the mean scale for the radius.
  float s = 0.0f;
  for (int c = 0; c < D; ++c) s += scale.data[c];
  ds.mode_sigma /= s / D;
  ds.norm_mean = mean;
  ds.norm_scale = scale;
  ds.normalized = true;
}

inline Tensor denormalize(const Tensor& points, const Dataset& ds) {
  if (points.cols != ds.dim()) throw DimensionError("denormalize: dimension mismatch");
  Tensor out = points;
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c)
      out.at(r, c) = out.at(r, c) * ds.norm_scale.data[c] + ds.norm_mean.data[c];
  return out;
}

struct PairBatch {
  Tensor x0;               // B x D noise ~ N(0, I)
  Tensor x1;               // B x D data rows
  std::vector<int> labels; // empty when the dataset is unlabeled
};

// Random pairing of fresh noise with dataset rows (with replacement). The
// independent pairing per call is what creates overlapping training paths.
inline PairBatch draw_pairs(const Dataset& ds, int batch_size, Rng& rng) {
  if (ds.size() == 0) throw ContractError("draw_pairs: empty dataset");
  PairBatch b;
  b.x0 = Tensor(batch_size, ds.dim());
  b.x1 = Tensor(batch_size, ds.dim());
  bool labeled = !ds.labels.empty();
  if (labeled) b.labels.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    for (int c = 0; c < ds.dim(); ++c) b.x0.at(i, c) = rng.normalf();
    int r = rng.uniform_int(ds.size());
    for (int c = 0; c < ds.dim(); ++c) b.x1.at(i, c) = ds.points.at(r, c);
    if (labeled) b.labels[i] = ds.labels[r];
  }
  return b;
}

inline void write_points_csv(const std::string& path, const Tensor& points,
                             const std::vector<int>* labels = nullptr) {
  std::ofstream f(path);
  if (!f) throw FileError("cannot open " + path + " for writing");
  f << (labels ? "x,y,label\n" : "x,y\n");
  f.precision(9);
  for (int r = 0; r < points.rows; ++r) {
    for (int c = 0; c < points.cols; ++c) f << (c ? "," : "") << points.at(r, c);
    if (labels) f << "," << (*labels)[r];
    f << "\n";
  }
}

}  // namespace shortcut
