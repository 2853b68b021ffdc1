#include "treegrpo/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace treegrpo::sampler {

namespace {

void check_step(const Schedule& schedule, int k) {
  if (k < 0 || k >= schedule.steps) {
    throw std::invalid_argument("step index out of range");
  }
}

// mean = coeff_x * x + coeff_v * v with the score folded into the
// coefficients; see mean_coefficients below.
struct MeanCoeffs {
  double coeff_x = 1.0;
  double coeff_v = 0.0;
};

// The SDE mean expands to an affine function of (x, v):
//   score = -(x + (1 - tau) v) / tau
//   mean  = x - [v - sigma^2/2 * score] * dtau
//         = (1 - sigma^2 dtau / (2 tau)) * x
//           - dtau * (1 + sigma^2 (1 - tau) / (2 tau)) * v
// Keeping it affine makes the parameter gradient a single backprop with a
// scaled cotangent.
MeanCoeffs mean_coefficients(const Schedule& schedule, int k) {
  const double tau = schedule.taus[k];
  const double sigma = schedule.sigmas[k];
  const double dtau = schedule.dtau(k);
  MeanCoeffs c;
  c.coeff_x = 1.0 - sigma * sigma * dtau / (2.0 * tau);
  c.coeff_v = -dtau * (1.0 + sigma * sigma * (1.0 - tau) / (2.0 * tau));
  return c;
}

}  // namespace

Schedule make_schedule(int steps, double tau_min, double noise_coeff) {
  if (steps < 2) throw std::invalid_argument("schedule needs T >= 2");
  if (!(tau_min > 0.0) || !(tau_min < 1.0 / steps)) {
    throw std::invalid_argument("tau_min must satisfy 0 < tau_min < 1/T");
  }
  if (noise_coeff < 0.0) throw std::invalid_argument("noise coefficient must be >= 0");
  Schedule s;
  s.steps = steps;
  s.tau_min = tau_min;
  s.noise_coeff = noise_coeff;
  s.taus.resize(static_cast<size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    s.taus[k] = static_cast<double>(steps - k) / steps;
  }
  s.sigmas.resize(static_cast<size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    s.sigmas[k] = noise_coeff * std::sqrt(std::max(s.taus[k + 1], tau_min));
  }
  return s;
}

std::vector<double> ode_step(const flow::VelocityModel& model,
                             std::span<const double> x, int k, int condition,
                             const Schedule& schedule) {
  check_step(schedule, k);
  std::vector<double> v = model.velocity(x, schedule.taus[k], condition);
  const double dtau = schedule.dtau(k);
  std::vector<double> next(x.begin(), x.end());
  for (size_t i = 0; i < next.size(); ++i) next[i] -= v[i] * dtau;
  return next;
}

GaussianProposal sde_proposal(const flow::VelocityModel& model,
                              std::span<const double> x, int k, int condition,
                              const Schedule& schedule) {
  check_step(schedule, k);
  if (!(schedule.sigmas[k] > 0.0)) {
    throw std::invalid_argument("sde step requires sigma_k > 0; use ode_step");
  }
  const MeanCoeffs c = mean_coefficients(schedule, k);
  std::vector<double> v = model.velocity(x, schedule.taus[k], condition);
  GaussianProposal proposal;
  proposal.mean.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    proposal.mean[i] = c.coeff_x * x[i] + c.coeff_v * v[i];
  }
  proposal.std_dev = schedule.sigmas[k] * std::sqrt(schedule.dtau(k));
  return proposal;
}

Transition sample_transition(const GaussianProposal& proposal,
                             std::span<const double> x, int k, int condition,
                             rng::Stream& stream) {
  Transition t;
  t.source.assign(x.begin(), x.end());
  t.step = k;
  t.condition = condition;
  t.mean = proposal.mean;
  t.std_dev = proposal.std_dev;
  t.child.resize(proposal.mean.size());
  for (size_t i = 0; i < t.child.size(); ++i) {
    t.child[i] = proposal.mean[i] + proposal.std_dev * stream.normal();
  }
  t.logprob = gaussian_logpdf(t.child, t.mean, t.std_dev);
  return t;
}

Transition sde_step(const flow::VelocityModel& model, std::span<const double> x,
                    int k, int condition, const Schedule& schedule,
                    rng::Stream& stream) {
  const GaussianProposal proposal = sde_proposal(model, x, k, condition, schedule);
  return sample_transition(proposal, x, k, condition, stream);
}

double gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                       double std_dev) {
  if (x.size() != mean.size()) {
    throw std::invalid_argument("gaussian_logpdf: size mismatch");
  }
  if (!(std_dev > 0.0)) {
    throw std::invalid_argument("gaussian_logpdf: std must be > 0");
  }
  const double var = std_dev * std_dev;
  double quad = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean[i];
    quad += d * d;
  }
  const double dim = static_cast<double>(x.size());
  return -0.5 * dim * std::log(2.0 * M_PI * var) - 0.5 * quad / var;
}

double transition_logprob(const flow::VelocityModel& model,
                          const Transition& transition,
                          const Schedule& schedule) {
  const int k = transition.step;
  check_step(schedule, k);
  const MeanCoeffs c = mean_coefficients(schedule, k);
  std::vector<double> v =
      model.velocity(transition.source, schedule.taus[k], transition.condition);
  std::vector<double> mean(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    mean[i] = c.coeff_x * transition.source[i] + c.coeff_v * v[i];
  }
  return gaussian_logpdf(transition.child, mean, transition.std_dev);
}

double transition_logprob_grad(const flow::VelocityField& model,
                               const Transition& transition,
                               const Schedule& schedule,
                               std::span<double> grad) {
  const int k = transition.step;
  check_step(schedule, k);
  const MeanCoeffs c = mean_coefficients(schedule, k);

  std::vector<double> input(static_cast<size_t>(model.input_dim()));
  std::vector<double> v(static_cast<size_t>(model.data_dim()));
  flow::VelocityField::Trace trace;
  model.assemble_input(transition.source, schedule.taus[k],
                       transition.condition, input);
  model.forward(input, v, &trace);

  const double var = transition.std_dev * transition.std_dev;
  double quad = 0.0;
  std::vector<double> cot(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    const double mean = c.coeff_x * transition.source[i] + c.coeff_v * v[i];
    const double d = transition.child[i] - mean;
    quad += d * d;
    // d(logp)/d(v_i) = (child_i - mean_i)/var * coeff_v
    cot[i] = c.coeff_v * d / var;
  }
  model.backward(trace, cot, grad);
  const double dim = static_cast<double>(v.size());
  return -0.5 * dim * std::log(2.0 * M_PI * var) - 0.5 * quad / var;
}

std::vector<double> ode_rollout(const flow::VelocityModel& model,
                                std::span<const double> x0, int condition,
                                const Schedule& schedule) {
  std::vector<double> x(x0.begin(), x0.end());
  for (int k = 0; k < schedule.steps; ++k) {
    x = ode_step(model, x, k, condition, schedule);
  }
  return x;
}

}  // namespace treegrpo::sampler
