#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "dfnsm/errors.hpp"
#include "dfnsm/rng.hpp"

namespace dfnsm::numcore {

// Dense row-major array of doubles. Everything is 64-bit so gradient checks
// and bit-exact reruns behave.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // same size as values when requires_grad

  static std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) throw ValidationError("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    Tensor t;
    const std::size_t n = shape_numel(shape);
    t.shape = std::move(shape);
    t.values.assign(n, 0.0);
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad.assign(n, 0.0);
    return t;
  }

  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t;
    const std::size_t n = shape_numel(shape);
    if (values.size() != n) throw ValidationError("value count does not match shape");
    t.shape = std::move(shape);
    t.values = std::move(values);
    return t;
  }

  std::size_t numel() const { return values.size(); }

  void enable_grad() {
    requires_grad = true;
    grad.assign(values.size(), 0.0);
  }

  void zero_grad() {
    if (requires_grad) grad.assign(values.size(), 0.0);
  }
};

// I.i.d. Normal(0, stddev^2) entries drawn from `rng`.
inline Tensor gaussian_init(std::vector<std::size_t> shape, Rng& rng, double stddev = 0.1) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values) v = rng.next_gaussian(0.0, stddev);
  return t;
}

// theta <- theta - lr * grad for every entry, then grads are cleared.
inline void sgd_step(const std::vector<Tensor*>& params, double learning_rate) {
  if (learning_rate < 0.0) throw ValidationError("learning rate must be >= 0");
  for (Tensor* p : params) {
    if (!p->requires_grad) continue;
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      p->values[i] -= learning_rate * p->grad[i];
    }
    p->zero_grad();
  }
}

}  // namespace dfnsm::numcore
