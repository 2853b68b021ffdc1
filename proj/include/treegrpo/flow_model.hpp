#pragma once

/**
 * Conditional velocity-field model and flow-matching pretraining.
 *
 * The generator policy is a small fully connected network mapping
 * (latent point, noise level tau, one-hot condition) to a velocity vector.
 * Gradients are computed analytically by plain backpropagation; there is no
 * autodiff framework anywhere in the project, which keeps every update
 * deterministic and finite-difference checkable.
 *
 * Noise-level convention: tau = 1 is pure noise, tau = 0 is data. Sampling
 * walks tau downward and updates x <- x - v * dtau.
 */

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "treegrpo/rng.hpp"

namespace treegrpo::flow {

// Read-only velocity field interface. Evaluation is const and safe for
// concurrent use; anything that trains also needs the concrete VelocityField.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual int data_dim() const = 0;
  virtual int num_conditions() const = 0;
  virtual void velocity(std::span<const double> x, double tau, int condition,
                        std::span<double> out) const = 0;

  std::vector<double> velocity(std::span<const double> x, double tau,
                               int condition) const {
    std::vector<double> out(static_cast<size_t>(data_dim()));
    velocity(x, tau, condition, out);
    return out;
  }
};

// ============================================================================
// VelocityField: tanh MLP with analytic gradients
// ============================================================================

class VelocityField final : public VelocityModel {
 public:
  // hidden = widths of the hidden layers (default {64, 64} at call sites).
  // Weights are initialized uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)],
  // biases zero.
  VelocityField(int data_dim, int num_conditions, std::vector<int> hidden,
                uint64_t init_seed);

  int data_dim() const override { return data_dim_; }
  int num_conditions() const override { return num_conditions_; }
  using VelocityModel::velocity;
  void velocity(std::span<const double> x, double tau, int condition,
                std::span<double> out) const override;

  // Layer widths including input and output.
  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }

  size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // --- raw forward/backward over an already-assembled input vector ---

  // Post-tanh activations per hidden layer, kept for the backward pass.
  struct Trace {
    std::vector<double> input;
    std::vector<std::vector<double>> hidden_act;
  };

  void assemble_input(std::span<const double> x, double tau, int condition,
                      std::span<double> out) const;
  void forward(std::span<const double> input, std::span<double> out,
               Trace* trace = nullptr) const;

  // Accumulates d(out . out_cotangent)/d(params) into grad (same layout as
  // params). Requires the Trace captured by the matching forward call.
  void backward(const Trace& trace, std::span<const double> out_cotangent,
                std::span<double> grad) const;

  // --- checkpoint io (binary format documented in README) ---
  void save(const std::filesystem::path& path) const;
  static VelocityField load(const std::filesystem::path& path);

  bool operator==(const VelocityField& other) const;

 private:
  int data_dim_ = 0;
  int num_conditions_ = 0;
  std::vector<int> sizes_;       // input, hidden..., output widths
  std::vector<size_t> w_offset_; // per layer: weight block start in params_
  std::vector<size_t> b_offset_; // per layer: bias block start in params_
  std::vector<double> params_;
};

// ============================================================================
// Flow-matching objective
// ============================================================================

struct InterpolantPair {
  std::vector<double> x0;  // data point
  std::vector<double> x1;  // noise point
  double t = 0.0;          // interpolation time in [0, 1]
  int condition = 0;
};

// x_t = (1 - t) * x0 + t * x1, componentwise.
std::vector<double> interpolate(const InterpolantPair& pair);

struct FmLossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d(loss)/d(params)
};

// Mean over the batch of || v(x_t, t, c) - (x1 - x0) ||^2 with its gradient.
FmLossResult fm_loss(const VelocityField& model,
                     std::span<const InterpolantPair> batch);

// Score of the model marginal at noise level tau, via the interpolant
// identity score = -E[x1 | x_t] / tau with E[x1 | x_t] = x_t + (1-tau) * v.
// Requires tau >= tau_min; the estimator diverges as tau -> 0.
std::vector<double> score_estimate(const VelocityModel& model,
                                   std::span<const double> x, double tau,
                                   int condition, double tau_min = 0.02);

// ============================================================================
// Pretraining
// ============================================================================

// Synthetic conditional data source for pretraining: condition c yields
// x0 ~ N(center[c], data_std^2 I). Centers double as the reward targets in
// the rewards module.
struct SyntheticTask {
  int data_dim = 2;
  std::vector<std::vector<double>> centers;  // one per condition
  double data_std = 0.8;

  int num_conditions() const { return static_cast<int>(centers.size()); }
  void sample_data(int condition, rng::Stream& stream,
                   std::span<double> out) const;
};

// Conditions are spread evenly: two conditions sit at (+-radius, 0, ...),
// more are placed on a circle in the first two coordinates.
SyntheticTask make_task(int num_conditions, int data_dim = 2,
                        double data_std = 0.8, double radius = 1.5);

struct PretrainConfig {
  int steps = 20000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int holdout_size = 2048;
  int log_every = 500;
  double holdout_loss_threshold = 2.8;  // calibrated for data_std 0.8
};

struct PretrainResult {
  double holdout_loss = 0.0;
  std::vector<std::pair<int, double>> loss_curve;  // (step, batch loss)
};

// AdamW on fm_loss over freshly sampled batches. Throws on non-finite loss.
// steps = 0 leaves the model untouched and only evaluates the holdout.
PretrainResult pretrain(VelocityField& model, const SyntheticTask& task,
                        const PretrainConfig& config, rng::Stream stream);

}  // namespace treegrpo::flow
