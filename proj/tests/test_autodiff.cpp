#include <catch2/catch_amalgamated.hpp>

#include <memory>

#include "motorec/autodiff.hpp"
#include "motorec/rng.hpp"
#include "support/oracles.hpp"

using namespace motorec;
namespace ops = motorec::ad;
using ops::Tape;
using ops::Var;

TEST_CASE("backward of sum gives all-ones gradient") {
  Tape t;
  DenseMatrix w(2, 2);
  w.v = {1.0, -2.0, 3.0, 0.5};
  Var W = t.leaf(w, "W");
  Var root = ops::sum_all(W);
  t.backward(root);
  REQUIRE(root->grad.scalar() == 1.0);  // d root / d root
  for (double g : W->grad.v) REQUIRE(g == 1.0);
}

TEST_CASE("backward of sum of squares gives 2W") {
  Tape t;
  DenseMatrix w(2, 2);
  w.v = {1.0, -2.0, 3.0, 0.5};
  Var W = t.leaf(w, "W");
  t.backward(ops::sum_all(ops::mul(W, W)));
  for (std::size_t i = 0; i < w.size(); ++i) REQUIRE(W->grad.v[i] == 2.0 * w.v[i]);
}

TEST_CASE("backward contracts") {
  Tape t;
  Var W = t.leaf(DenseMatrix(2, 3, 1.0), "W");
  REQUIRE_THROWS_AS(t.backward(W), contract_error);  // non-scalar root
  Var root = ops::sum_all(W);
  t.backward(root);
  REQUIRE_THROWS_AS(t.backward(root), contract_error);  // repeated backward
}

namespace {

// A composite touching most of the op set; used by the finite-difference
// sweep below. The sparse operand stays fixed across evaluations.
double composite_loss(const ParamMap& params, const DenseMatrix& x,
                      const std::shared_ptr<const SparseMatrix>& adj, Tape* out_tape = nullptr,
                      ParamMap* out_grads = nullptr) {
  Tape local;
  Tape& t = out_tape ? *out_tape : local;
  Var W = t.leaf(params.at("W"), "W");
  Var b = t.leaf(params.at("b"), "b");
  Var U = t.leaf(params.at("U"), "U");

  Var X = t.constant(x);
  Var h = ops::tanh_op(ops::add_row_vector(ops::matmul(X, W), b));   // 4x3
  Var p = ops::softmax_rows(ops::matmul(h, ops::transpose(U)));      // 4x4
  Var lse = ops::logsumexp_rows(ops::mul(p, p));                     // 4x1
  Var prop = ops::spmm(adj, ops::concat_cols(h, lse));               // 4x4
  Var nrm = ops::row_l2_normalize(ops::add(prop, t.constant(DenseMatrix(4, 4, 0.05))));
  Var diag = ops::gather_diag(ops::matmul(nrm, ops::transpose(nrm)));
  Var g = ops::gather_rows(ops::mul_col_vector(prop, diag), {0, 2, 2, 1});
  Var sp = ops::softplus(ops::slice_cols(g, 0, 2));
  Var sg = ops::sigmoid(ops::slice_rows(g, 1, 3));
  Var lg = ops::log_op(ops::clamp(ops::mul(sg, sg), 1e-9, 10.0));
  Var loss = ops::add(ops::add(ops::mean_all(sp), ops::mean_all(lg)),
                      ops::add(ops::sum_all(ops::col_mean(p)), ops::mean_all(ops::row_sum(h))));
  const double value = loss->value.scalar();
  if (out_grads) {
    t.backward(loss);
    *out_grads = t.gradients();
  }
  return value;
}

}  // namespace

TEST_CASE("composite loss gradients match finite differences: 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    ParamMap params;
    params["W"] = DenseMatrix(3, 3);
    params["b"] = DenseMatrix(1, 3);
    params["U"] = DenseMatrix(4, 3);
    for (auto& [k, m] : params) m.fill_normal(rng, 0.0, 0.7);
    DenseMatrix x(4, 3);
    x.fill_normal(rng, 0.0, 1.0);
    std::vector<std::tuple<std::size_t, std::size_t, double>> trip;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        if (rng.uniform() < 0.5) trip.emplace_back(r, c, rng.normal());
    auto adj = std::make_shared<const SparseMatrix>(SparseMatrix::from_triplets(4, 4, trip));

    ParamMap got;
    composite_loss(params, x, adj, nullptr, &got);
    ParamMap want = oracles::fd_gradients(
        params, [&](const ParamMap& p) { return composite_loss(p, x, adj); });
    REQUIRE(oracles::max_grad_rel_err(got, want, 1e-6) < 1e-4);
  }
}

TEST_CASE("stop_grad blocks, straight_through forwards identity") {
  Tape t;
  DenseMatrix z(2, 3);
  z.v = {0.3, -0.2, 0.9, 1.4, -1.0, 0.2};
  DenseMatrix q(2, 3);
  q.v = {0.0, 0.0, 1.0, 1.5, -1.0, 0.0};
  Var ze = t.leaf(z, "ze");
  Var zq = t.constant(q);
  Var st = ops::straight_through(ze, zq);
  REQUIRE(max_abs_diff(st->value, q) == 0.0);  // forward takes the target value

  Var blocked = ops::stop_grad(ops::mul(st, st));
  Var loss = ops::add(ops::sum_all(ops::mul(st, st)), ops::sum_all(blocked));
  t.backward(loss);
  // d loss / d ze == d loss / d st (identity Jacobian), and the stop_grad
  // branch contributes nothing.
  for (std::size_t i = 0; i < q.size(); ++i) REQUIRE(ze->grad.v[i] == 2.0 * q.v[i]);
}

TEST_CASE("capture/replay reproduces straight-through values and enables FD checks") {
  Rng rng(99);
  DenseMatrix z0(2, 2), q0(2, 2);
  z0.fill_normal(rng, 0.0, 1.0);
  q0.fill_normal(rng, 0.0, 1.0);

  // loss(theta) = sum((theta + sg(q - theta)) .* w) with w = theta row 0
  auto eval = [&](const ParamMap& p, ops::ReplayMode mode, ops::ReplayLog* log,
                  ParamMap* grads) {
    Tape t;
    t.set_replay(mode, log);
    Var theta = t.leaf(p.at("theta"), "theta");
    Var q = t.constant(q0);
    Var st = ops::straight_through(theta, q);
    Var loss = ops::sum_all(ops::mul(st, ops::mul(theta, theta)));
    double v = loss->value.scalar();
    if (grads) {
      t.backward(loss);
      *grads = t.gradients();
    }
    return v;
  };

  ParamMap params{{"theta", z0}};
  ops::ReplayLog log;
  ParamMap got;
  eval(params, ops::ReplayMode::capture, &log, &got);
  auto fd_fn = [&](const ParamMap& p) {
    log.rewind();
    return eval(p, ops::ReplayMode::replay, &log, nullptr);
  };
  ParamMap want = oracles::fd_gradients(params, fd_fn);
  REQUIRE(oracles::max_grad_rel_err(got, want, 1e-6) < 1e-4);
}

TEST_CASE("gradient reachability mirrors graph structure") {
  Tape t;
  Var a = t.leaf(DenseMatrix(2, 2, 1.0), "a");
  Var b = t.leaf(DenseMatrix(2, 2, 2.0), "b");
  Var viaA = ops::sum_all(ops::mul(a, a));
  Var viaBoth = ops::add(viaA, ops::sum_all(b));
  REQUIRE(ops::depends_on(viaA, a));
  REQUIRE(!ops::depends_on(viaA, b));
  REQUIRE(ops::depends_on(viaBoth, b));
}

TEST_CASE("spmm node differentiates w.r.t. dense operand only") {
  Rng rng(5);
  auto adj = std::make_shared<const SparseMatrix>(
      SparseMatrix::from_triplets(3, 3, {{0, 1, 2.0}, {1, 0, 1.0}, {2, 2, -1.0}}));
  ParamMap params{{"B", DenseMatrix(3, 2)}};
  params["B"].fill_normal(rng, 0.0, 1.0);

  auto f = [&](const ParamMap& p) {
    Tape t;
    Var B = t.leaf(p.at("B"), "B");
    return ops::sum_all(ops::mul(ops::spmm(adj, B), ops::spmm(adj, B)))->value.scalar();
  };
  Tape t;
  Var B = t.leaf(params.at("B"), "B");
  Var loss = ops::sum_all(ops::mul(ops::spmm(adj, B), ops::spmm(adj, B)));
  t.backward(loss);
  ParamMap want = oracles::fd_gradients(params, f);
  REQUIRE(oracles::max_grad_rel_err(t.gradients(), want, 1e-6) < 1e-4);
}
