// Dense building blocks with explicit backward passes. Everything is
// templated on the scalar so the same code runs in float for training and
// in double for finite-difference checks.
#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fnmt/error.hpp"
#include "fnmt/random.hpp"

namespace fnmt::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Row-wise softmax.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using T = typename Derived::Scalar;
  Matrix<T> out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

/// Row-wise log-softmax.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using T = typename Derived::Scalar;
  Matrix<T> out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const T m = row.maxCoeff();
    const T lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return out;
}

/// Sinusoidal position table, rows = positions.
template <typename T>
Matrix<T> positional_encoding(Eigen::Index length, Eigen::Index dim) {
  Matrix<T> pe(length, dim);
  for (Eigen::Index p = 0; p < length; ++p) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double a = static_cast<double>(p) * freq;
      pe(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

template <typename T>
struct Parameter {
  Matrix<T> value;
  Matrix<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

enum class Init { Zeros, Ones, Xavier, Normal };

/// Named parameters with stable addresses. Values are initialized from a
/// per-name stream so the same name draws the same numbers no matter which
/// other parameters exist.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                    std::uint64_t seed, double scale = 1.0) {
    if (params_.count(name)) throw Error("duplicate parameter " + name);
    auto& p = params_[name];
    p.value.resize(rows, cols);
    p.grad.setZero(rows, cols);
    Rng rng(seed ^ hash(name));
    switch (init) {
      case Init::Zeros:
        p.value.setZero();
        break;
      case Init::Ones:
        p.value.setOnes();
        break;
      case Init::Xavier: {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index i = 0; i < p.value.size(); ++i)
          p.value.data()[i] = static_cast<T>((2.0 * uniform_unit(rng) - 1.0) * a);
        break;
      }
      case Init::Normal:
        for (Eigen::Index i = 0; i < p.value.size(); ++i)
          p.value.data()[i] = static_cast<T>(scale * normal(rng));
        break;
    }
    return p;
  }

  Parameter<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("no parameter " + name);
    return it->second;
  }
  const Parameter<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("no parameter " + name);
    return it->second;
  }
  [[nodiscard]] bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Parameter<T>>& all() { return params_; }
  const std::map<std::string, Parameter<T>>& all() const { return params_; }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

 private:
  static std::uint64_t hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }
  static double normal(Rng& rng) {
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::map<std::string, Parameter<T>> params_;
};

/// y = x W + b.
template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;  // in x out
  Parameter<T>* bias = nullptr;    // 1 x out

  Matrix<T> forward(const Matrix<T>& x) const {
    Matrix<T> y = x * weight->value;
    y.rowwise() += bias->value.row(0);
    return y;
  }

  Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy) const {
    weight->grad.noalias() += x.transpose() * dy;
    bias->grad.row(0) += dy.colwise().sum();
    return dy * weight->value.transpose();
  }
};

template <typename T>
struct LayerNorm {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  T eps = T(1e-5);

  struct Cache {
    Matrix<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  };

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const {
    const auto d = static_cast<T>(x.cols());
    Matrix<T> xhat(x.rows(), x.cols());
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mu = x.row(r).sum() / d;
      const auto centered = (x.row(r).array() - mu).eval();
      const T var = centered.square().sum() / d;
      inv(r) = T(1) / std::sqrt(var + eps);
      xhat.row(r) = centered * inv(r);
    }
    Matrix<T> y = (xhat.array().rowwise() * gamma->value.row(0).array()).matrix();
    y.rowwise() += beta->value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv);
    }
    return y;
  }

  Matrix<T> backward(const Cache& c, const Matrix<T>& dy) const {
    gamma->grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta->grad.row(0) += dy.colwise().sum();
    const Matrix<T> dxhat = (dy.array().rowwise() * gamma->value.row(0).array()).matrix();
    const auto d = static_cast<T>(dy.cols());
    Matrix<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const T mean_d = dxhat.row(r).sum() / d;
      const T mean_dx = dxhat.row(r).dot(c.xhat.row(r)) / d;
      dx.row(r) = c.inv_std(r) * (dxhat.row(r).array() - mean_d - c.xhat.row(r).array() * mean_dx).matrix();
    }
    return dx;
  }
};

/// Multi-head scaled dot-product attention with an optional causal mask.
template <typename T>
struct Attention {
  Linear<T> q, k, v, o;
  int heads = 1;
  bool causal = false;

  struct Cache {
    Matrix<T> query_in, memory_in;
    Matrix<T> Q, K, V, O;
    std::vector<Matrix<T>> probs;
  };

  Matrix<T> forward(const Matrix<T>& query_in, const Matrix<T>& memory_in, Cache* cache) const {
    const Eigen::Index dim = q.weight->value.cols();
    const Eigen::Index dh = dim / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Matrix<T> Q = q.forward(query_in);
    Matrix<T> K = k.forward(memory_in);
    Matrix<T> V = v.forward(memory_in);
    Matrix<T> O(Q.rows(), dim);
    std::vector<Matrix<T>> probs;
    if (cache) probs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Matrix<T> s = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * scale;
      if (causal) {
        for (Eigen::Index i = 0; i < s.rows(); ++i)
          for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(i, j) = -std::numeric_limits<T>::infinity();
      }
      Matrix<T> p = softmax_rows(s);
      O.middleCols(h * dh, dh).noalias() = p * V.middleCols(h * dh, dh);
      if (cache) probs.push_back(std::move(p));
    }
    Matrix<T> y = o.forward(O);
    if (cache) {
      cache->query_in = query_in;
      cache->memory_in = memory_in;
      cache->Q = std::move(Q);
      cache->K = std::move(K);
      cache->V = std::move(V);
      cache->O = std::move(O);
      cache->probs = std::move(probs);
    }
    return y;
  }

  /// Returns (d query_in, d memory_in).
  std::pair<Matrix<T>, Matrix<T>> backward(const Cache& c, const Matrix<T>& dy) const {
    const Eigen::Index dim = q.weight->value.cols();
    const Eigen::Index dh = dim / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const Matrix<T> dO = o.backward(c.O, dy);
    Matrix<T> dQ(c.Q.rows(), dim), dK(c.K.rows(), dim), dV(c.V.rows(), dim);
    for (int h = 0; h < heads; ++h) {
      const auto& p = c.probs[static_cast<std::size_t>(h)];
      const auto dOh = dO.middleCols(h * dh, dh);
      dV.middleCols(h * dh, dh).noalias() = p.transpose() * dOh;
      const Matrix<T> dp = dOh * c.V.middleCols(h * dh, dh).transpose();
      const auto row_dot = (dp.array() * p.array()).rowwise().sum().eval();
      const Matrix<T> ds = ((dp.array().colwise() - row_dot) * p.array() * scale).matrix();
      dQ.middleCols(h * dh, dh).noalias() = ds * c.K.middleCols(h * dh, dh);
      dK.middleCols(h * dh, dh).noalias() = ds.transpose() * c.Q.middleCols(h * dh, dh);
    }
    Matrix<T> dquery = q.backward(c.query_in, dQ);
    Matrix<T> dmemory = k.backward(c.memory_in, dK);
    dmemory += v.backward(c.memory_in, dV);
    return {std::move(dquery), std::move(dmemory)};
  }
};

template <typename T>
struct FeedForward {
  Linear<T> in, out;

  struct Cache {
    Matrix<T> x, hidden;
  };

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const {
    Matrix<T> h = in.forward(x).cwiseMax(T(0));
    Matrix<T> y = out.forward(h);
    if (cache) {
      cache->x = x;
      cache->hidden = std::move(h);
    }
    return y;
  }

  Matrix<T> backward(const Cache& c, const Matrix<T>& dy) const {
    Matrix<T> dh = out.backward(c.hidden, dy);
    dh = (c.hidden.array() > T(0)).select(dh, T(0));
    return in.backward(c.x, dh);
  }
};

}  // namespace fnmt::nn
