#pragma once

/**
 * Independent brute-force oracles. Each one re-derives a quantity from its
 * definition without touching the production code path it checks: recursive
 * backup, central finite differences, frontier-size NFE accounting, the
 * closed-form Gaussian flow, and Monte Carlo variance probes. Exposed to
 * tests and to the `verify` CLI subcommand.
 */

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "treegrpo/tree.hpp"

namespace treegrpo::verify {

// Recomputes every edge advantage by direct recursion from the definition:
// a leaf edge carries its leaf advantage; an internal edge carries the
// softmax-weighted average of its child edges. Returns advantages indexed by
// edge id. Requires leaf advantages to be set on the tree.
std::vector<double> backup_oracle(const tree::DenoiseTree& tree);

using LossFn = std::function<double(std::span<const double>)>;

// Central differences on every coordinate.
std::vector<double> finite_diff_grad(const LossFn& fn,
                                     std::span<const double> params,
                                     double step);

// Central difference on a single coordinate.
double finite_diff_coord(const LossFn& fn, std::span<const double> params,
                         size_t coord, double step);

struct VarianceProbeResult {
  double empirical = 0.0;
  double predicted = 0.0;  // sigma_env^2 * sum(w^2)
};

// Draws i.i.d. leaf noise of variance sigma_env^2, forms the weighted
// estimator sum(w_i * x_i) per trial, and compares its empirical variance
// against the closed form. trials >= 1e4.
VarianceProbeResult variance_probe(std::span<const double> weights,
                                   double sigma_env, int trials,
                                   rng::Stream stream);

// Exact conditional-expectation velocity and marginal score for data
// N(mean, std^2 I) with standard-normal noise under the linear interpolant.
// The marginal at noise level tau is N((1-tau) mean, ((1-tau)^2 std^2 +
// tau^2) I).
class AnalyticGaussianField final : public flow::VelocityModel {
 public:
  AnalyticGaussianField(std::vector<double> mean, double std_dev);

  int data_dim() const override { return static_cast<int>(mean_.size()); }
  int num_conditions() const override { return 1; }
  using VelocityModel::velocity;
  void velocity(std::span<const double> x, double tau, int condition,
                std::span<double> out) const override;

  double marginal_mean(size_t i, double tau) const;
  double marginal_var(double tau) const;
  std::vector<double> marginal_score(std::span<const double> x,
                                     double tau) const;
  double marginal_logpdf(std::span<const double> x, double tau) const;

 private:
  std::vector<double> mean_;
  double std_dev_;
};

// Energy distance between two point sets: sqrt of
// 2 E|X-Y| - E|X-X'| - E|Y-Y'| under the empirical distributions.
double energy_distance(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b);

// NFE by frontier-size accounting: sums the frontier size over all steps.
long long frontier_nfe_oracle(int horizon, const std::vector<int>& window,
                              int branch);

// Runs the self-check table; one pass/fail line per check on `os`.
// Returns true iff every check passed.
bool run_verification_suite(std::ostream& os);

}  // namespace treegrpo::verify
