#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "motorec/adam.hpp"

using namespace motorec;

TEST_CASE("zero gradient leaves parameters unchanged, moments decay") {
  AdamState opt(0.01);
  ParamMap params{{"w", DenseMatrix(2, 2, 3.0)}};
  ParamMap grads{{"w", DenseMatrix(2, 2, 1.0)}};
  opt.update(params, grads);  // seed nonzero moments
  const DenseMatrix after_first = params["w"];
  const double m_before = opt.m["w"].v[0];

  grads["w"].fill(0.0);
  opt.update(params, grads);
  REQUIRE(opt.step == 2);
  REQUIRE(std::abs(opt.m["w"].v[0]) < std::abs(m_before));
  // with m != 0 the parameter still moves; a fresh optimizer with zero grad must not
  AdamState fresh(0.01);
  ParamMap p2{{"w", DenseMatrix(2, 2, 3.0)}};
  ParamMap g2{{"w", DenseMatrix(2, 2, 0.0)}};
  fresh.update(p2, g2);
  REQUIRE(p2["w"] == DenseMatrix(2, 2, 3.0));
  (void)after_first;
}

TEST_CASE("first step with unit gradient moves by about -lr") {
  AdamState opt(0.001);
  ParamMap params{{"w", DenseMatrix(1, 1, 0.5)}};
  ParamMap grads{{"w", DenseMatrix(1, 1, 1.0)}};
  opt.update(params, grads);
  // bias correction makes mhat/sqrt(vhat) == 1 exactly on step one
  REQUIRE(std::abs(params["w"].v[0] - (0.5 - 0.001 / (1.0 + 1e-8))) < 1e-15);
  REQUIRE(opt.step == 1);
}

TEST_CASE("identical gradients produce identical updates") {
  AdamState opt(0.005);
  ParamMap params{{"a", DenseMatrix(2, 3, 1.0)}, {"b", DenseMatrix(2, 3, 1.0)}};
  ParamMap grads{{"a", DenseMatrix(2, 3, 0.7)}, {"b", DenseMatrix(2, 3, 0.7)}};
  for (int i = 0; i < 5; ++i) opt.update(params, grads);
  REQUIRE(params["a"] == params["b"]);
}

TEST_CASE("non-finite gradient names the parameter") {
  AdamState opt;
  ParamMap params{{"bad_param", DenseMatrix(1, 2, 0.0)}};
  ParamMap grads{{"bad_param", DenseMatrix(1, 2, 0.0)}};
  grads["bad_param"].v[1] = std::nan("");
  try {
    opt.update(params, grads);
    FAIL("expected training_error");
  } catch (const training_error& e) {
    REQUIRE(std::string(e.what()).find("bad_param") != std::string::npos);
  }
}

TEST_CASE("row moment reset zeroes one row only") {
  AdamState opt;
  ParamMap params{{"c", DenseMatrix(3, 2, 1.0)}};
  ParamMap grads{{"c", DenseMatrix(3, 2, 0.5)}};
  opt.update(params, grads);
  opt.reset_row("c", 1);
  REQUIRE(opt.m["c"](0, 0) != 0.0);
  REQUIRE(opt.m["c"](1, 0) == 0.0);
  REQUIRE(opt.v["c"](1, 1) == 0.0);
  REQUIRE(opt.m["c"](2, 0) != 0.0);
}
