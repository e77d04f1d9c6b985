// Bias-corrected Adam over named parameter tensors.
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "motorec/errors.hpp"
#include "motorec/matrix.hpp"

namespace motorec {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  ParamMap m;  // first moments, keyed like the parameters
  ParamMap v;  // second moments

  explicit AdamState(double lr = 1e-3) : learning_rate(lr) {}

  // One optimizer step over every (param, grad) pair present in `grads`.
  // Parameters absent from `grads` keep their moments untouched.
  void update(ParamMap& params, const ParamMap& grads) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (auto& [name, p] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const DenseMatrix& g = git->second;
      if (!g.same_shape(p))
        throw dimension_error("adam: gradient shape mismatch for " + name);
      if (!g.is_finite()) throw training_error("adam: non-finite gradient for " + name);
      DenseMatrix& mm = moment(m, name, p);
      DenseMatrix& vv = moment(v, name, p);
      for (std::size_t i = 0; i < p.size(); ++i) {
        mm.v[i] = beta1 * mm.v[i] + (1.0 - beta1) * g.v[i];
        vv.v[i] = beta2 * vv.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
        const double mhat = mm.v[i] / bc1;
        const double vhat = vv.v[i] / bc2;
        p.v[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
      }
    }
  }

  // Reseeded codebook rows restart from cold moments.
  void reset_row(const std::string& name, std::size_t row) {
    for (ParamMap* store : {&m, &v}) {
      auto it = store->find(name);
      if (it == store->end()) continue;
      for (std::size_t c = 0; c < it->second.cols; ++c) it->second(row, c) = 0.0;
    }
  }

 private:
  static DenseMatrix& moment(ParamMap& store, const std::string& name, const DenseMatrix& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, DenseMatrix(like.rows, like.cols)).first;
    return it->second;
  }
};

}  // namespace motorec
