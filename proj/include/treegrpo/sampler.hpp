#pragma once

/**
 * Denoising schedule and the two step kinds.
 *
 * The schedule walks noise levels tau_0 = 1 > tau_1 > ... > tau_T = 0 on a
 * uniform grid. ODE steps follow the velocity field deterministically. SDE
 * steps add a score correction and Gaussian noise chosen so the per-step
 * marginals match the ODE's; the resulting transition density is a diagonal
 * Gaussian whose log-density is stored on each edge and later re-evaluated
 * under updated parameters for importance ratios.
 *
 * Step k uses velocity and score at tau_k and moves to tau_{k+1}:
 *
 *     ODE:   x' = x - v(x, tau_k) * dtau
 *     SDE:   mean = x - [v(x, tau_k) - sigma_k^2/2 * score(x, tau_k)] * dtau
 *            x' = mean + sigma_k * sqrt(dtau) * eps
 *
 * The SDE mean needs a single velocity evaluation: the score estimator
 * reuses v, so branching b children off one parent costs one forward pass.
 */

#include <span>
#include <vector>

#include "treegrpo/flow_model.hpp"
#include "treegrpo/rng.hpp"

namespace treegrpo::sampler {

struct Schedule {
  int steps = 0;                // T
  double tau_min = 0.02;        // floor for the score denominator
  double noise_coeff = 0.7;     // a in sigma_k = a * sqrt(max(tau_{k+1}, tau_min))
  std::vector<double> taus;     // T + 1 levels, taus[0] = 1, taus[T] = 0
  std::vector<double> sigmas;   // T per-step noise scales

  double dtau(int k) const { return taus[k] - taus[k + 1]; }
};

// tau_k = 1 - k/T; sigma_k = a * sqrt(max(tau_{k+1}, tau_min)).
// Requires T >= 2, 0 < tau_min < 1/T, a >= 0.
Schedule make_schedule(int steps, double tau_min = 0.02,
                       double noise_coeff = 0.7);

// One stochastic transition along an edge. `child` is the action; the stored
// log-probability is the behavior policy's density of `child` under
// (mean, std_dev) at sampling time.
struct Transition {
  std::vector<double> source;
  std::vector<double> child;
  int step = 0;
  int condition = 0;
  std::vector<double> mean;
  double std_dev = 0.0;  // 0 marks a deterministic (ODE) transition
  double logprob = 0.0;
};

std::vector<double> ode_step(const flow::VelocityModel& model,
                             std::span<const double> x, int k, int condition,
                             const Schedule& schedule);

struct GaussianProposal {
  std::vector<double> mean;
  double std_dev = 0.0;
};

// SDE proposal for step k; requires sigma_k > 0. Costs one velocity
// evaluation, shared by all children sampled from it.
GaussianProposal sde_proposal(const flow::VelocityModel& model,
                              std::span<const double> x, int k, int condition,
                              const Schedule& schedule);

// Draws one child from a proposal and records the behavior log-probability.
Transition sample_transition(const GaussianProposal& proposal,
                             std::span<const double> x, int k, int condition,
                             rng::Stream& stream);

// sde_proposal + sample_transition in one call.
Transition sde_step(const flow::VelocityModel& model, std::span<const double> x,
                    int k, int condition, const Schedule& schedule,
                    rng::Stream& stream);

// Diagonal Gaussian log density with scalar std.
double gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                       double std_dev);

// Log density of the stored child under the CURRENT model's proposal mean.
// With unchanged parameters this reproduces transition.logprob exactly.
double transition_logprob(const flow::VelocityModel& model,
                          const Transition& transition,
                          const Schedule& schedule);

// Same value, and additionally accumulates d(logprob)/d(params) into grad.
double transition_logprob_grad(const flow::VelocityField& model,
                               const Transition& transition,
                               const Schedule& schedule,
                               std::span<double> grad);

// Deterministic rollout from tau = 1 to tau = 0 (used by evaluation).
std::vector<double> ode_rollout(const flow::VelocityModel& model,
                                std::span<const double> x0, int condition,
                                const Schedule& schedule);

}  // namespace treegrpo::sampler
