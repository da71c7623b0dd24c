#include <doctest.h>

#include <cmath>

#include "sghmc/gradient_oracle.hpp"
#include "sghmc/objectives.hpp"

using namespace sghmc;

namespace {

Dataset gaussian_data(int dim, std::size_t n, std::uint64_t seed) {
  DatasetSpec spec;
  spec.dim = dim;
  spec.n = n;
  spec.seed = seed;
  return generate_dataset(spec);
}

}  // namespace

TEST_CASE("full pass equals the empirical gradient") {
  const Dataset data = gaussian_data(2, 30, 1);
  for (const auto& name : builtin_objective_names()) {
    const ObjectiveSpec obj = make_objective(name, {}, data);
    MinibatchOracle full = MinibatchOracle::full(obj, data);
    Vector x(2);
    x << 0.7, -1.3;
    CHECK((full.sample_gradient(x).array() == empirical_gradient(x, obj, data).array()).all());
  }
}

TEST_CASE("minibatch mean is unbiased at three standard errors") {
  const Dataset data = gaussian_data(2, 50, 2);
  const ObjectiveSpec obj = make_quadratic(2, 1.0, 1.0, data);
  MinibatchOracle oracle(obj, data, 5, 123);
  Vector x(2);
  x << 0.4, 1.1;
  const std::size_t N = 100000;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (std::size_t i = 0; i < N; ++i) {
    const Vector g = oracle.sample_gradient(x);
    sum += g;
    sq += g.cwiseProduct(g);
  }
  const Vector mean = sum / N;
  const Vector var = sq / N - mean.cwiseProduct(mean);
  const Vector exact = empirical_gradient(x, obj, data);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(mean[i] - exact[i]) <= 3.0 * std::sqrt(var[i] / N));
}

TEST_CASE("same seed gives the same draws") {
  const Dataset data = gaussian_data(1, 40, 3);
  const ObjectiveSpec obj = make_objective("double_well", {}, data);
  MinibatchOracle a(obj, data, 3, 77), b(obj, data, 3, 77), c(obj, data, 3, 78);
  const Vector x = Vector::Constant(1, 0.3);
  bool differs = false;
  for (int i = 0; i < 50; ++i) {
    const Vector ga = a.sample_gradient(x), gb = b.sample_gradient(x), gc = c.sample_gradient(x);
    CHECK(ga[0] == gb[0]);
    differs |= ga[0] != gc[0];
  }
  CHECK(differs);

  std::vector<std::size_t> ia, ib;
  MinibatchOracle d(obj, data, 4, 5), e(obj, data, 4, 5);
  d.draw_indices(ia);
  e.draw_indices(ib);
  CHECK(ia == ib);
  for (auto i : ia) CHECK(i < data.n());
}

TEST_CASE("empty dataset is a configuration error") {
  const Dataset data = gaussian_data(1, 5, 3);
  const ObjectiveSpec obj = make_quadratic(1, 1.0, 1.0, data);
  const Dataset empty;
  CHECK_THROWS_AS(MinibatchOracle(obj, empty, 1, 0), ConfigError);
}

TEST_CASE("full pass has zero gradient noise") {
  const Dataset data = gaussian_data(2, 20, 4);
  const ObjectiveSpec obj = make_objective("gaussian_mixture", {}, data);
  const auto probes = default_variance_probes(2, 5.0, 3, 1);
  const VarianceReport rep = estimate_delta(obj, data, data.n(), probes, 100, 9, true);
  CHECK(rep.delta_hat == 0.0);
}

TEST_CASE("single-draw variance matches the dataset variance") {
  const Dataset data = gaussian_data(1, 100, 3);
  const ObjectiveSpec obj = make_quadratic(1, 1.0, 1.0, data);
  // grad f(0, z) = -z, so E|g - grad F|^2 is the population variance of z.
  long double mean = 0.0L;
  for (const auto& z : data.samples) mean += z[0];
  mean /= data.n();
  long double var = 0.0L;
  for (const auto& z : data.samples) var += (z[0] - mean) * (z[0] - mean);
  var /= data.n();
  const VarianceReport rep =
      estimate_delta(obj, data, 1, {Vector::Zero(1)}, 40000, 11);
  REQUIRE(rep.per_probe.size() == 1);
  CHECK(std::abs(rep.per_probe[0].variance - static_cast<double>(var)) <= 0.05 * var);
}

TEST_CASE("delta shrinks with the batch size") {
  const Dataset data = gaussian_data(1, 100, 3);
  const ObjectiveSpec obj = make_quadratic(1, 1.0, 1.0, data);
  const auto probes = default_variance_probes(1, 5.0, 2, 4);
  const double d1 = estimate_delta(obj, data, 1, probes, 20000, 1).delta_hat;
  const double d4 = estimate_delta(obj, data, 4, probes, 20000, 2).delta_hat;
  CHECK(d4 == doctest::Approx(d1 / 4).epsilon(0.2));
  for (std::size_t l : {2, 8, 16}) {
    const double dl = estimate_delta(obj, data, l, probes, 20000, 3 + l).delta_hat;
    CHECK(dl == doctest::Approx(d1 / l).epsilon(0.2));
  }
}

TEST_CASE("variance scaling curve") {
  const Dataset data = gaussian_data(2, 60, 5);
  Vector x(2);
  x << 1.0, -0.5;
  for (const auto& name : builtin_objective_names()) {
    CAPTURE(name);
    // The default quadratic has no sample dependence in its gradient.
    const nlohmann::json params =
        name == "quadratic" ? nlohmann::json{{"shift", 1.0}} : nlohmann::json::object();
    const ObjectiveSpec obj = make_objective(name, params, data);
    const VarianceCurve c = variance_scaling_curve(obj, data, x, {1, 2, 4, 8, 16}, 20000, 6);
    REQUIRE(c.slope);
    CHECK(*c.slope >= -1.15);
    CHECK(*c.slope <= -0.85);
  }
  const ObjectiveSpec q = make_quadratic(2, 1.0, 1.0, data);
  const VarianceCurve one = variance_scaling_curve(q, data, x, {3}, 1000, 1);
  CHECK(one.variances.size() == 1);
  CHECK_FALSE(one.slope);
  const VarianceCurve ends = variance_scaling_curve(q, data, x, {1, data.n()}, 5000, 2);
  CHECK(ends.variances[1] > 0.0);
  CHECK(ends.variances[1] < ends.variances[0]);
}

TEST_CASE("delta is stable across probe radii") {
  const Dataset data = gaussian_data(2, 50, 8);
  for (const auto& name : builtin_objective_names()) {
    CAPTURE(name);
    const ObjectiveSpec obj = make_objective(name, {}, data);
    std::vector<double> d;
    for (double r : {1.0, 5.0, 10.0})
      d.push_back(estimate_delta(obj, data, 1, default_variance_probes(2, r, 4, 3), 4000, 7).delta_hat);
    CHECK(std::isfinite(d[0]));
    for (double v : d) CHECK(v == doctest::Approx(d[0]).epsilon(0.1));
  }
}

TEST_CASE("fit_slope recovers a line") {
  CHECK(fit_slope({0, 1, 2, 3}, {1, 3, 5, 7}) == doctest::Approx(2.0));
}
