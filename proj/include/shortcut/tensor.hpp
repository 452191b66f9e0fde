#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shortcut/errors.hpp"
#include "shortcut/rng.hpp"

namespace shortcut {

// Dense row-major float32 matrix. Vectors are 1xN or Nx1, scalars 1x1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {
    if (r <= 0 || c <= 0) throw DimensionError("tensor shape must be positive, got " + shape_str());
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, float v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(float v) { return full(1, 1, v); }
  static Tensor randn(int r, int c, Rng& rng, float scale = 1.0f) {
    Tensor t(r, c);
    for (auto& x : t.data) x = rng.normalf() * scale;
    return t;
  }

  int size() const { return rows * cols; }
  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using EMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CEMap = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline EMap emap(Tensor& t) { return EMap(t.data.data(), t.rows, t.cols); }
inline CEMap emap(const Tensor& t) { return CEMap(t.data.data(), t.rows, t.cols); }

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// Append-only reverse-mode tape. Node indices are creation order, which is a
// topological order of the recorded graph; backward() replays it in reverse.
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor value, bool needs_grad = false) {
    return push(std::move(value), {}, nullptr, needs_grad);
  }

  Id matmul(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.cols != tb.rows)
      throw DimensionError("matmul: inner dimensions disagree, " + ta.shape_str() + " x " + tb.shape_str());
    Tensor out(ta.rows, tb.cols);
    emap(out).noalias() = emap(ta) * emap(tb);
    return push(std::move(out), {a, b}, [a, b](Tape& t, Id self) {
      const Tensor& g = t.grad_[self];
      if (t.needs_grad(a)) emap(t.grad_[a]).noalias() += emap(g) * emap(t.value(b)).transpose();
      if (t.needs_grad(b)) emap(t.grad_[b]).noalias() += emap(t.value(a)).transpose() * emap(g);
    });
  }

  Id add(Id a, Id b) {
    check_same_shape(value(a), value(b), "add");
    Tensor out = value(a);
    emap(out) += emap(value(b));
    return push(std::move(out), {a, b}, [a, b](Tape& t, Id self) {
      if (t.needs_grad(a)) emap(t.grad_[a]) += emap(t.grad_[self]);
      if (t.needs_grad(b)) emap(t.grad_[b]) += emap(t.grad_[self]);
    });
  }

  Id sub(Id a, Id b) {
    check_same_shape(value(a), value(b), "sub");
    Tensor out = value(a);
    emap(out) -= emap(value(b));
    return push(std::move(out), {a, b}, [a, b](Tape& t, Id self) {
      if (t.needs_grad(a)) emap(t.grad_[a]) += emap(t.grad_[self]);
      if (t.needs_grad(b)) emap(t.grad_[b]) -= emap(t.grad_[self]);
    });
  }

  Id mul(Id a, Id b) {
    check_same_shape(value(a), value(b), "mul");
    Tensor out = value(a);
    emap(out).array() *= emap(value(b)).array();
    return push(std::move(out), {a, b}, [a, b](Tape& t, Id self) {
      const Tensor& g = t.grad_[self];
      if (t.needs_grad(a)) emap(t.grad_[a]).array() += emap(g).array() * emap(t.value(b)).array();
      if (t.needs_grad(b)) emap(t.grad_[b]).array() += emap(g).array() * emap(t.value(a)).array();
    });
  }

  Id scale(Id a, float s) {
    Tensor out = value(a);
    emap(out) *= s;
    return push(std::move(out), {a}, [a, s](Tape& t, Id self) {
      if (t.needs_grad(a)) emap(t.grad_[a]) += s * emap(t.grad_[self]);
    });
  }

  // Adds a 1xN bias row to every row of a BxN matrix. The one sanctioned
  // broadcast in the library.
  Id bias_add(Id a, Id bias) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(bias);
    if (tb.rows != 1 || tb.cols != ta.cols)
      throw DimensionError("bias_add: bias must be 1x" + std::to_string(ta.cols) + ", got " + tb.shape_str());
    Tensor out = ta;
    emap(out).rowwise() += Eigen::Map<const Eigen::RowVectorXf>(tb.data.data(), tb.cols);
    return push(std::move(out), {a, bias}, [a, bias](Tape& t, Id self) {
      const Tensor& g = t.grad_[self];
      if (t.needs_grad(a)) emap(t.grad_[a]) += emap(g);
      if (t.needs_grad(bias))
        Eigen::Map<Eigen::RowVectorXf>(t.grad_[bias].data.data(), t.grad_[bias].cols) +=
            emap(g).colwise().sum();
    });
  }

  Id silu(Id a) {
    Tensor out = value(a);
    for (auto& v : out.data) v = v / (1.0f + std::exp(-v));
    return push(std::move(out), {a}, [a](Tape& t, Id self) {
      if (!t.needs_grad(a)) return;
      const Tensor& x = t.value(a);
      const Tensor& g = t.grad_[self];
      Tensor& ga = t.grad_[a];
      for (int i = 0; i < x.size(); ++i) {
        float s = 1.0f / (1.0f + std::exp(-x.data[i]));
        ga.data[i] += g.data[i] * s * (1.0f + x.data[i] * (1.0f - s));
      }
    });
  }

  Id square(Id a) {
    Tensor out = value(a);
    emap(out).array() = emap(out).array().square();
    return push(std::move(out), {a}, [a](Tape& t, Id self) {
      if (t.needs_grad(a))
        emap(t.grad_[a]).array() += 2.0f * emap(t.grad_[self]).array() * emap(t.value(a)).array();
    });
  }

  // Mean over all entries of (a-b)^2, accumulated in 64-bit.
  Id mse(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape(ta, tb, "mse");
    double acc = 0.0;
    for (int i = 0; i < ta.size(); ++i) {
      double d = static_cast<double>(ta.data[i]) - static_cast<double>(tb.data[i]);
      acc += d * d;
    }
    int n = ta.size();
    Tensor out = Tensor::scalar(static_cast<float>(acc / n));
    return push(std::move(out), {a, b}, [a, b, n](Tape& t, Id self) {
      float g = t.grad_[self].data[0] * 2.0f / static_cast<float>(n);
      const Tensor& ta2 = t.value(a);
      const Tensor& tb2 = t.value(b);
      if (t.needs_grad(a))
        emap(t.grad_[a]) += g * (emap(ta2) - emap(tb2));
      if (t.needs_grad(b))
        emap(t.grad_[b]) -= g * (emap(ta2) - emap(tb2));
    });
  }

  Id sum(Id a) {
    double acc = 0.0;
    for (float v : value(a).data) acc += v;
    return push(Tensor::scalar(static_cast<float>(acc)), {a}, [a](Tape& t, Id self) {
      if (t.needs_grad(a))
        emap(t.grad_[a]).array() += t.grad_[self].data[0];
    });
  }

  Id concat_cols(std::span<const Id> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    int rows = value(parts[0]).rows;
    int cols = 0;
    for (Id p : parts) {
      if (value(p).rows != rows)
        throw DimensionError("concat_cols: row mismatch " + value(p).shape_str());
      cols += value(p).cols;
    }
    Tensor out(rows, cols);
    int off = 0;
    for (Id p : parts) {
      const Tensor& tp = value(p);
      for (int r = 0; r < rows; ++r)
        std::copy(tp.data.begin() + static_cast<size_t>(r) * tp.cols,
                  tp.data.begin() + static_cast<size_t>(r + 1) * tp.cols,
                  out.data.begin() + static_cast<size_t>(r) * cols + off);
      off += tp.cols;
    }
    std::vector<Id> ps(parts.begin(), parts.end());
    return push(std::move(out), ps, [ps](Tape& t, Id self) {
      const Tensor& g = t.grad_[self];
      int off2 = 0;
      for (Id p : ps) {
        const Tensor& tp = t.value(p);
        if (t.needs_grad(p)) {
          Tensor& gp = t.grad_[p];
          for (int r = 0; r < tp.rows; ++r)
            for (int c = 0; c < tp.cols; ++c)
              gp.at(r, c) += g.at(r, off2 + c);
        }
        off2 += tp.cols;
      }
    });
  }

  // Row lookup into an embedding table; gradient scatter-adds per index.
  Id gather_rows(Id table, std::vector<int> idx) {
    const Tensor& tab = value(table);
    for (int i : idx)
      if (i < 0 || i >= tab.rows)
        throw DomainError("gather_rows: index " + std::to_string(i) + " out of range [0," +
                          std::to_string(tab.rows) + ")");
    Tensor out(static_cast<int>(idx.size()), tab.cols);
    for (size_t r = 0; r < idx.size(); ++r)
      std::copy(tab.data.begin() + static_cast<size_t>(idx[r]) * tab.cols,
                tab.data.begin() + static_cast<size_t>(idx[r] + 1) * tab.cols,
                out.data.begin() + r * tab.cols);
    return push(std::move(out), {table}, [table, idx = std::move(idx)](Tape& t, Id self) {
      if (!t.needs_grad(table)) return;
      const Tensor& g = t.grad_[self];
      Tensor& gt = t.grad_[table];
      for (size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < gt.cols; ++c)
          gt.at(idx[r], c) += g.at(static_cast<int>(r), c);
    });
  }

  // Identity value, zero gradient; the branch behind it never propagates.
  Id stopgrad(Id a) {
    Tensor out = value(a);
    Id id = push(std::move(out), {}, nullptr, false);
    nodes_[id].needs_grad = false;
    return id;
  }

  const Tensor& value(Id id) const { return nodes_[id].value; }
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }

  // Gradient of the last backward() loss w.r.t. node id (zeros if detached).
  const Tensor& grad(Id id) const {
    if (grad_.size() != nodes_.size()) throw ContractError("grad: backward() has not run");
    return grad_[id];
  }

  void backward(Id loss) {
    if (value(loss).size() != 1)
      throw ContractError("backward: loss must be scalar, got " + value(loss).shape_str());
    grad_.clear();
    grad_.reserve(nodes_.size());
    for (auto& n : nodes_) grad_.emplace_back(Tensor::zeros(n.value.rows, n.value.cols));
    grad_[loss].data[0] = 1.0f;
    for (Id i = loss; i >= 0; --i)
      if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back(*this, i);
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<Id> parents;
    std::function<void(Tape&, Id)> back;
    bool needs_grad = false;
  };

  Id push(Tensor value, std::vector<Id> parents, std::function<void(Tape&, Id)> back,
          bool leaf_needs_grad = false) {
    bool ng = leaf_needs_grad;
    for (Id p : parents) ng = ng || nodes_[p].needs_grad;
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(back), ng});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grad_;
};

}  // namespace shortcut
