#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>

#include "treegrpo/flow_model.hpp"
#include "treegrpo/verification.hpp"

using namespace treegrpo;

namespace {

flow::InterpolantPair make_pair(std::vector<double> x0, std::vector<double> x1,
                                double t, int condition = 0) {
  flow::InterpolantPair p;
  p.x0 = std::move(x0);
  p.x1 = std::move(x1);
  p.t = t;
  p.condition = condition;
  return p;
}

// Model whose output is the constant `value` vector: all weights zero, the
// output biases set.
flow::VelocityField constant_model(int data_dim, int num_conditions,
                                   std::span<const double> value) {
  flow::VelocityField model(data_dim, num_conditions, {8}, 0);
  for (double& p : model.params()) p = 0.0;
  std::span<double> params = model.params();
  for (int i = 0; i < data_dim; ++i) {
    params[params.size() - data_dim + i] = value[i];
  }
  return model;
}

}  // namespace

TEST_CASE("interpolate endpoints and midpoint") {
  const auto p0 = make_pair({0.3, -1.2}, {2.0, 4.0}, 0.0);
  CHECK(flow::interpolate(p0) == std::vector<double>{0.3, -1.2});

  const auto p1 = make_pair({0.3, -1.2}, {2.0, 4.0}, 1.0);
  CHECK(flow::interpolate(p1) == std::vector<double>{2.0, 4.0});

  const auto mid = make_pair({0.0, 0.0}, {2.0, 4.0}, 0.5);
  CHECK(flow::interpolate(mid) == std::vector<double>{1.0, 2.0});
}

TEST_CASE("interpolate rejects bad input") {
  CHECK_THROWS_AS(flow::interpolate(make_pair({1.0}, {1.0, 2.0}, 0.5)),
                  std::invalid_argument);
  CHECK_THROWS_AS(flow::interpolate(make_pair({1.0}, {2.0}, 1.5)),
                  std::invalid_argument);
}

TEST_CASE("interpolate is affine in t") {
  rng::Stream stream(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x0{stream.normal(), stream.normal()};
    std::vector<double> x1{stream.normal(), stream.normal()};
    const double a = stream.uniform01();
    const double b = stream.uniform01();
    const double lambda = stream.uniform01();
    const auto at_a = flow::interpolate(make_pair(x0, x1, a));
    const auto at_b = flow::interpolate(make_pair(x0, x1, b));
    const auto at_mix =
        flow::interpolate(make_pair(x0, x1, (1.0 - lambda) * a + lambda * b));
    for (size_t i = 0; i < x0.size(); ++i) {
      const double blended = (1.0 - lambda) * at_a[i] + lambda * at_b[i];
      CHECK(blended == doctest::Approx(at_mix[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("fm_loss is zero when the model hits the target") {
  const std::vector<double> target{1.0, 1.0};
  const flow::VelocityField model = constant_model(2, 1, target);
  std::vector<flow::InterpolantPair> batch;
  for (double t : {0.1, 0.4, 0.9}) {
    batch.push_back(make_pair({0.5, -0.5}, {1.5, 0.5}, t));  // x1 - x0 = (1,1)
  }
  const flow::FmLossResult result = flow::fm_loss(model, batch);
  CHECK(result.loss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("fm_loss of the zero model on a unit-direction pair") {
  flow::VelocityField model(2, 1, {8}, 0);
  for (double& p : model.params()) p = 0.0;
  std::vector<flow::InterpolantPair> batch{
      make_pair({0.0, 0.0}, {1.0, 1.0}, 0.3)};
  CHECK(flow::fm_loss(model, batch).loss == doctest::Approx(2.0));
}

TEST_CASE("fm_loss rejects an empty batch") {
  flow::VelocityField model(2, 1, {8}, 1);
  CHECK_THROWS_AS(flow::fm_loss(model, {}), std::invalid_argument);
}

TEST_CASE("fm_loss gradient matches central finite differences") {
  flow::VelocityField model(2, 2, {16, 16}, 91);
  const flow::SyntheticTask task = flow::make_task(2);
  rng::Stream stream(5);
  std::vector<flow::InterpolantPair> batch(12);
  for (auto& pair : batch) {
    pair.condition = static_cast<int>(stream.next_u64() % 2);
    pair.x0.resize(2);
    pair.x1.resize(2);
    task.sample_data(pair.condition, stream, pair.x0);
    for (double& v : pair.x1) v = stream.normal();
    pair.t = stream.uniform01();
  }
  const flow::FmLossResult analytic = flow::fm_loss(model, batch);
  auto loss_at = [&](std::span<const double> p) {
    flow::VelocityField probe = model;
    std::copy(p.begin(), p.end(), probe.params().begin());
    return flow::fm_loss(probe, batch).loss;
  };
  int checked = 0;
  double max_rel = 0.0;
  rng::Stream coords(6);
  while (checked < 120) {
    const size_t coord = coords.next_u64() % model.param_count();
    const double fd = verify::finite_diff_coord(loss_at, model.params(), coord, 1e-5);
    const double an = analytic.grad[coord];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    ++checked;
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("score_estimate at tau = 1 is -x for any model") {
  flow::VelocityField model(2, 1, {8, 8}, 33);
  const std::vector<double> x{0.7, -2.1};
  const std::vector<double> score = flow::score_estimate(model, x, 1.0, 0);
  CHECK(score[0] == doctest::Approx(-x[0]).epsilon(1e-15));
  CHECK(score[1] == doctest::Approx(-x[1]).epsilon(1e-15));
}

TEST_CASE("score_estimate enforces the tau floor") {
  flow::VelocityField model(2, 1, {8}, 12);
  const std::vector<double> x{0.0, 0.0};
  CHECK_THROWS_AS(flow::score_estimate(model, x, 0.01, 0, 0.02),
                  std::invalid_argument);
}

TEST_CASE("score_estimate is exact on the closed-form Gaussian velocity") {
  verify::AnalyticGaussianField field({0.5}, 0.5);
  rng::Stream stream(21);
  for (double tau : {0.1, 0.25, 0.6, 0.95}) {
    for (int i = 0; i < 20; ++i) {
      std::vector<double> x{2.5 * stream.normal()};
      const auto estimated = flow::score_estimate(field, x, tau, 0);
      const auto exact = field.marginal_score(x, tau);
      CHECK(estimated[0] == doctest::Approx(exact[0]).epsilon(1e-6));
    }
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  flow::VelocityField model(2, 3, {16, 16}, 1234);
  const auto path = std::filesystem::temp_directory_path() / "tg_ckpt_test.bin";
  model.save(path);
  const flow::VelocityField loaded = flow::VelocityField::load(path);
  CHECK(loaded == model);
  std::filesystem::remove(path);
}

TEST_CASE("parameter count matches sum of (fan_in + 1) * fan_out") {
  flow::VelocityField model(2, 2, {64, 64}, 7);
  const auto& sizes = model.layer_sizes();
  size_t expected = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    expected += static_cast<size_t>(sizes[l] + 1) * sizes[l + 1];
  }
  CHECK(model.param_count() == expected);
  CHECK(sizes.front() == 2 + 1 + 2);
  CHECK(sizes.back() == 2);
}

TEST_CASE("pretrain with zero steps returns the initialization") {
  flow::VelocityField model(2, 2, {16}, 5);
  const flow::VelocityField before = model;
  flow::PretrainConfig cfg;
  cfg.steps = 0;
  flow::pretrain(model, flow::make_task(2), cfg, rng::Stream(3));
  CHECK(model == before);
}

TEST_CASE("pretrain is deterministic in the seed") {
  flow::PretrainConfig cfg;
  cfg.steps = 200;
  cfg.holdout_size = 128;
  const flow::SyntheticTask task = flow::make_task(2);
  flow::VelocityField a(2, 2, {16, 16}, 5);
  flow::VelocityField b(2, 2, {16, 16}, 5);
  flow::pretrain(a, task, cfg, rng::Stream(99));
  flow::pretrain(b, task, cfg, rng::Stream(99));
  CHECK(a == b);
}

TEST_CASE("pretraining reaches the held-out loss threshold" *
          doctest::timeout(300)) {
  flow::VelocityField model(2, 2, {64, 64},
                            rng::mix(42, rng::stream_label::kInit));
  const flow::SyntheticTask task = flow::make_task(2);
  flow::PretrainConfig cfg;  // 20k steps, threshold from the default config
  const flow::PretrainResult result =
      flow::pretrain(model, task, cfg, rng::Stream(42).child(rng::stream_label::kPretrain));
  MESSAGE("held-out fm loss: ", result.holdout_loss);
  CHECK(result.holdout_loss < cfg.holdout_loss_threshold);
}

TEST_CASE("trained velocity recovers the marginal score on a probe grid" *
          doctest::timeout(300)) {
  // Drive the excess flow-matching loss to ~0 by regressing directly onto
  // the closed-form velocity, then check the score estimator against the
  // true marginal score. The flow-matching objective itself has an
  // irreducible conditional-variance floor, so the regression formulation is
  // what "loss -> 0" can mean operationally.
  verify::AnalyticGaussianField field({0.4}, 0.7);
  flow::VelocityField model(1, 1, {32, 32}, 2024);

  std::vector<std::pair<double, double>> grid;  // (x, tau)
  for (double x = -3.0; x <= 3.0 + 1e-9; x += 0.25) {
    for (double tau = 0.4; tau <= 1.0 + 1e-9; tau += 0.05) {
      grid.emplace_back(x, tau);
    }
  }

  const size_t n_params = model.param_count();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
  std::vector<double> input(static_cast<size_t>(model.input_dim()));
  std::vector<double> out(1), cot(1), target(1);
  flow::VelocityField::Trace trace;
  double loss = 0.0;
  const int steps = 6000;
  for (int step = 1; step <= steps; ++step) {
    std::vector<double> grad(n_params, 0.0);
    loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(grid.size());
    for (const auto& [x, tau] : grid) {
      const std::vector<double> point{x};
      field.velocity(point, tau, 0, target);
      model.assemble_input(point, tau, 0, input);
      model.forward(input, out, &trace);
      const double r = out[0] - target[0];
      loss += inv_n * r * r;
      cot[0] = 2.0 * inv_n * r;
      model.backward(trace, cot, grad);
    }
    const double lr = step < steps / 2 ? 3e-3 : 3e-4;
    const double bc1 = 1.0 - std::pow(0.9, step);
    const double bc2 = 1.0 - std::pow(0.999, step);
    std::span<double> params = model.params();
    for (size_t i = 0; i < n_params; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
    }
  }
  MESSAGE("velocity regression mse: ", loss);
  REQUIRE(loss < 1e-3);

  double max_err = 0.0;
  for (double x = -2.0; x <= 2.0 + 1e-9; x += 0.5) {
    for (double tau : {0.5, 0.6, 0.75, 0.9, 1.0}) {
      const std::vector<double> point{x};
      const auto estimated = flow::score_estimate(model, point, tau, 0);
      const auto exact = field.marginal_score(point, tau);
      max_err = std::max(max_err, std::abs(estimated[0] - exact[0]));
    }
  }
  MESSAGE("score sup error on probe grid: ", max_err);
  CHECK(max_err < 1e-2);
}
