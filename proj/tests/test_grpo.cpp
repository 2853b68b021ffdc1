#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "treegrpo/grpo.hpp"
#include "treegrpo/verification.hpp"

using namespace treegrpo;

namespace {

struct GrpoSetup {
  flow::VelocityField model{2, 2, {16, 16}, 55};
  sampler::Schedule schedule = sampler::make_schedule(10, 0.02, 0.7);
  rng::Stream stream{17};

  sampler::Transition fresh_transition(int k = 4, int condition = 0) {
    const std::vector<double> x{stream.normal(), stream.normal()};
    return sampler::sde_step(model, x, k, condition, schedule, stream);
  }

  // Transition whose stored behavior log-prob is offset so the ratio under
  // the unchanged model equals `ratio`.
  sampler::Transition transition_with_ratio(double ratio, int k = 4) {
    sampler::Transition t = fresh_transition(k);
    t.logprob = sampler::transition_logprob(model, t, schedule) - std::log(ratio);
    return t;
  }
};

}  // namespace

TEST_CASE("importance ratio is one under unchanged parameters") {
  GrpoSetup s;
  const sampler::Transition t = s.fresh_transition();
  CHECK(grpo::importance_ratio(s.model, t, s.schedule) == 1.0);
}

TEST_CASE("a stored log-prob offset of ln 2 halves into ratio two") {
  GrpoSetup s;
  sampler::Transition t = s.fresh_transition();
  t.logprob -= std::log(2.0);
  CHECK(grpo::importance_ratio(s.model, t, s.schedule) ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ratio equals the two-density recomputation") {
  GrpoSetup s;
  flow::VelocityField current = s.model;
  for (double& p : current.params()) p += 0.02 * s.stream.normal();
  for (int i = 0; i < 10; ++i) {
    const sampler::Transition t = s.fresh_transition(2 + i % 6);
    const double ratio = grpo::importance_ratio(current, t, s.schedule);
    const double direct =
        std::exp(sampler::transition_logprob(current, t, s.schedule)) /
        std::exp(sampler::transition_logprob(s.model, t, s.schedule));
    CHECK(std::abs(ratio / direct - 1.0) < 1e-10);
  }
}

TEST_CASE("on-policy loss is minus the advantage sum with no clipping") {
  GrpoSetup s;
  grpo::EdgeBatch batch;
  const std::vector<double> advantages{0.5, -0.3, 1.7};
  for (double a : advantages) {
    batch.push_back({s.fresh_transition(), a});
  }
  const grpo::GrpoLossResult r = grpo::grpo_loss(s.model, batch, 0.2, s.schedule);
  CHECK(r.loss == doctest::Approx(-(0.5 - 0.3 + 1.7)).epsilon(1e-12));
  CHECK(r.clip_fraction == 0.0);
}

TEST_CASE("clip arithmetic: positive advantage, ratio above the band") {
  GrpoSetup s;
  grpo::EdgeBatch batch{{s.transition_with_ratio(1.5), 2.0}};
  const grpo::GrpoLossResult r = grpo::grpo_loss(s.model, batch, 0.2, s.schedule);
  CHECK(r.loss == doctest::Approx(-2.4).epsilon(1e-12));
  CHECK(r.clip_fraction == 1.0);
  // the clipped branch is constant in theta: no gradient flows
  double grad_norm = 0.0;
  for (double g : r.grad) grad_norm += g * g;
  CHECK(grad_norm == 0.0);
}

TEST_CASE("clip arithmetic: negative advantage, ratio below the band") {
  GrpoSetup s;
  grpo::EdgeBatch batch{{s.transition_with_ratio(0.5), -1.0}};
  const grpo::GrpoLossResult r = grpo::grpo_loss(s.model, batch, 0.2, s.schedule);
  CHECK(r.loss == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.clip_fraction == 1.0);
  double grad_norm = 0.0;
  for (double g : r.grad) grad_norm += g * g;
  CHECK(grad_norm == 0.0);
}

TEST_CASE("gradient flows when the unclipped branch attains the min") {
  GrpoSetup s;
  // ratio 1.5 with negative advantage: min picks the unclipped branch
  grpo::EdgeBatch batch{{s.transition_with_ratio(1.5), -1.0}};
  const grpo::GrpoLossResult r = grpo::grpo_loss(s.model, batch, 0.2, s.schedule);
  CHECK(r.loss == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(r.clip_fraction == 0.0);
  double grad_norm = 0.0;
  for (double g : r.grad) grad_norm += g * g;
  CHECK(grad_norm > 0.0);
}

TEST_CASE("grpo_loss gradient matches finite differences") {
  GrpoSetup s;
  flow::VelocityField old_model = s.model;
  for (double& p : s.model.params()) p += 0.01 * s.stream.normal();

  grpo::EdgeBatch batch;
  rng::Stream sde(23);
  for (int i = 0; i < 8; ++i) {
    std::vector<double> x{sde.normal(), sde.normal()};
    sampler::Transition t =
        sampler::sde_step(old_model, x, 2 + i % 6, i % 2, s.schedule, sde);
    batch.push_back({std::move(t), sde.normal()});
  }
  const grpo::GrpoLossResult analytic =
      grpo::grpo_loss(s.model, batch, 0.2, s.schedule);
  auto loss_at = [&](std::span<const double> p) {
    flow::VelocityField probe = s.model;
    std::copy(p.begin(), p.end(), probe.params().begin());
    return grpo::grpo_loss(probe, batch, 0.2, s.schedule).loss;
  };
  rng::Stream coords(31);
  double max_rel = 0.0;
  for (int i = 0; i < 120; ++i) {
    const size_t coord = coords.next_u64() % s.model.param_count();
    const double fd =
        verify::finite_diff_coord(loss_at, s.model.params(), coord, 1e-5);
    const double an = analytic.grad[coord];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    max_rel = std::max(max_rel, std::abs(fd - an) / denom);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("loss is invariant under batch permutation") {
  GrpoSetup s;
  grpo::EdgeBatch batch;
  for (int i = 0; i < 6; ++i) {
    batch.push_back({s.transition_with_ratio(0.9 + 0.05 * i), s.stream.normal()});
  }
  const double forward = grpo::grpo_loss(s.model, batch, 0.2, s.schedule).loss;
  std::reverse(batch.begin(), batch.end());
  const double reversed = grpo::grpo_loss(s.model, batch, 0.2, s.schedule).loss;
  CHECK(forward == doctest::Approx(reversed).epsilon(1e-12));
}

TEST_CASE("ascent sanity: positive advantages raise the batch log-likelihood") {
  GrpoSetup s;
  grpo::EdgeBatch batch;
  for (int i = 0; i < 10; ++i) batch.push_back({s.fresh_transition(), 1.0});

  auto total_logprob = [&](const flow::VelocityField& m) {
    double total = 0.0;
    for (const grpo::EdgeSample& e : batch) {
      total += sampler::transition_logprob(m, e.transition, s.schedule);
    }
    return total;
  };
  const double before = total_logprob(s.model);

  grpo::UpdateConfig cfg;
  cfg.clip = 1e9;  // effectively unclipped
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 0.0;
  grpo::PolicyUpdater updater(cfg);
  updater.update(s.model, batch, s.schedule);
  CHECK(total_logprob(s.model) > before);
}

TEST_CASE("zero advantages leave only weight-decay shrinkage") {
  GrpoSetup s;
  grpo::EdgeBatch batch;
  for (int i = 0; i < 4; ++i) batch.push_back({s.fresh_transition(), 0.0});

  grpo::UpdateConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.weight_decay = 0.1;
  grpo::PolicyUpdater updater(cfg);
  const std::vector<double> before(s.model.params().begin(),
                                   s.model.params().end());
  updater.update(s.model, batch, s.schedule);
  const double shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(s.model.params()[i] ==
          doctest::Approx(before[i] * shrink).epsilon(1e-12));
  }
}

TEST_CASE("zero learning rate freezes the parameters") {
  GrpoSetup s;
  grpo::EdgeBatch batch{{s.fresh_transition(), 1.0}};
  grpo::UpdateConfig cfg;
  cfg.learning_rate = 0.0;
  grpo::PolicyUpdater updater(cfg);
  const std::vector<double> before(s.model.params().begin(),
                                   s.model.params().end());
  updater.update(s.model, batch, s.schedule);
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(s.model.params()[i] == before[i]);
  }
}

TEST_CASE("non-finite gradients skip the step") {
  GrpoSetup s;
  grpo::EdgeBatch batch{
      {s.fresh_transition(), std::numeric_limits<double>::quiet_NaN()}};
  grpo::UpdateConfig cfg;
  grpo::PolicyUpdater updater(cfg);
  const std::vector<double> before(s.model.params().begin(),
                                   s.model.params().end());
  const grpo::UpdateMetrics metrics = updater.update(s.model, batch, s.schedule);
  CHECK(metrics.skipped_steps == 1);
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(s.model.params()[i] == before[i]);
  }
}

TEST_CASE("behavior refresh restores on-policy ratios") {
  GrpoSetup s;
  grpo::PolicyPair pair(s.model);
  // drift the policy away from the behavior snapshot
  for (double& p : pair.policy.params()) p += 0.05;
  rng::Stream stream(3);
  std::vector<double> x{0.1, 0.2};
  const sampler::Transition t =
      sampler::sde_step(pair.behavior, x, 3, 0, s.schedule, stream);
  CHECK(grpo::importance_ratio(pair.policy, t, s.schedule) != doctest::Approx(1.0));

  grpo::refresh_behavior(pair);
  const sampler::Transition t2 =
      sampler::sde_step(pair.behavior, x, 3, 0, s.schedule, stream);
  CHECK(grpo::importance_ratio(pair.policy, t2, s.schedule) == 1.0);

  grpo::EdgeBatch batch{{t2, 1.0}};
  CHECK(grpo::grpo_loss(pair.policy, batch, 0.2, s.schedule).clip_fraction ==
        0.0);
}

TEST_CASE("stale behavior snapshots produce off-policy ratios") {
  GrpoSetup s;
  grpo::PolicyPair pair(s.model);
  rng::Stream stream(5);

  // iteration 1: collect on-policy, update the policy, skip the refresh
  grpo::EdgeBatch first;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> x{stream.normal(), stream.normal()};
    first.push_back(
        {sampler::sde_step(pair.behavior, x, 4, 0, s.schedule, stream),
         stream.normal()});
  }
  grpo::UpdateConfig cfg;
  cfg.learning_rate = 1e-2;  // large enough to move the ratios
  grpo::PolicyUpdater updater(cfg);
  updater.update(pair.policy, first, s.schedule);

  // iteration 2 with cadence 2: the sampler still uses the stale snapshot
  std::vector<double> x{stream.normal(), stream.normal()};
  const sampler::Transition stale =
      sampler::sde_step(pair.behavior, x, 4, 0, s.schedule, stream);
  const double ratio = grpo::importance_ratio(pair.policy, stale, s.schedule);
  CHECK(std::abs(ratio - 1.0) > 1e-6);
}
