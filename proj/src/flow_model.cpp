#include "treegrpo/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace treegrpo::flow {

namespace {

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw std::runtime_error(std::string(what) + " is not finite");
  }
}

// Little-endian scalar io. The checkpoint format is fixed little-endian;
// this project only targets little-endian hosts, so plain memcpy suffices.
template <typename T>
void write_scalar(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_scalar(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

constexpr char kCheckpointMagic[8] = {'F', 'L', 'O', 'W', 'M', 'D', 'L', '\0'};
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

// ============================================================================
// VelocityField
// ============================================================================

VelocityField::VelocityField(int data_dim, int num_conditions,
                             std::vector<int> hidden, uint64_t init_seed)
    : data_dim_(data_dim), num_conditions_(num_conditions) {
  if (data_dim < 1) throw std::invalid_argument("data_dim must be >= 1");
  if (num_conditions < 1) {
    throw std::invalid_argument("num_conditions must be >= 1");
  }
  sizes_.push_back(data_dim + 1 + num_conditions);
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden width must be >= 1");
    sizes_.push_back(h);
  }
  sizes_.push_back(data_dim);

  size_t total = 0;
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const size_t fan_in = static_cast<size_t>(sizes_[l]);
    const size_t fan_out = static_cast<size_t>(sizes_[l + 1]);
    w_offset_.push_back(total);
    total += fan_in * fan_out;
    b_offset_.push_back(total);
    total += fan_out;
  }
  params_.assign(total, 0.0);

  rng::Stream stream(init_seed);
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    double* w = params_.data() + w_offset_[l];
    const size_t count = static_cast<size_t>(sizes_[l]) * sizes_[l + 1];
    for (size_t i = 0; i < count; ++i) {
      w[i] = bound * (2.0 * stream.uniform01() - 1.0);
    }
    // biases stay zero
  }
}

void VelocityField::assemble_input(std::span<const double> x, double tau,
                                   int condition,
                                   std::span<double> out) const {
  if (static_cast<int>(x.size()) != data_dim_) {
    throw std::invalid_argument("latent dimension mismatch");
  }
  if (condition < 0 || condition >= num_conditions_) {
    throw std::invalid_argument("condition id out of range");
  }
  if (static_cast<int>(out.size()) != input_dim()) {
    throw std::invalid_argument("input buffer size mismatch");
  }
  std::copy(x.begin(), x.end(), out.begin());
  out[data_dim_] = tau;
  std::fill(out.begin() + data_dim_ + 1, out.end(), 0.0);
  out[data_dim_ + 1 + condition] = 1.0;
}

void VelocityField::forward(std::span<const double> input,
                            std::span<double> out, Trace* trace) const {
  if (static_cast<int>(input.size()) != input_dim()) {
    throw std::invalid_argument("input size mismatch");
  }
  if (static_cast<int>(out.size()) != data_dim_) {
    throw std::invalid_argument("output size mismatch");
  }
  const size_t num_layers = sizes_.size() - 1;
  if (trace) {
    trace->input.assign(input.begin(), input.end());
    trace->hidden_act.assign(num_layers - 1, {});
  }

  std::vector<double> act(input.begin(), input.end());
  std::vector<double> next;
  for (size_t l = 0; l < num_layers; ++l) {
    const int fan_in = sizes_[l];
    const int fan_out = sizes_[l + 1];
    const double* w = params_.data() + w_offset_[l];
    const double* b = params_.data() + b_offset_[l];
    next.assign(static_cast<size_t>(fan_out), 0.0);
    for (int j = 0; j < fan_out; ++j) {
      double z = b[j];
      const double* row = w + static_cast<size_t>(j) * fan_in;
      for (int i = 0; i < fan_in; ++i) z += row[i] * act[i];
      next[j] = (l + 1 < num_layers) ? std::tanh(z) : z;
    }
    act.swap(next);
    if (trace && l + 1 < num_layers) trace->hidden_act[l] = act;
  }
  std::copy(act.begin(), act.end(), out.begin());
}

void VelocityField::backward(const Trace& trace,
                             std::span<const double> out_cotangent,
                             std::span<double> grad) const {
  if (grad.size() != params_.size()) {
    throw std::invalid_argument("gradient buffer size mismatch");
  }
  const size_t num_layers = sizes_.size() - 1;
  std::vector<double> delta(out_cotangent.begin(), out_cotangent.end());
  std::vector<double> prev_delta;
  for (size_t l = num_layers; l-- > 0;) {
    const int fan_in = sizes_[l];
    const int fan_out = sizes_[l + 1];
    const std::vector<double>& below =
        (l == 0) ? trace.input : trace.hidden_act[l - 1];
    const double* w = params_.data() + w_offset_[l];
    double* gw = grad.data() + w_offset_[l];
    double* gb = grad.data() + b_offset_[l];
    prev_delta.assign(static_cast<size_t>(fan_in), 0.0);
    for (int j = 0; j < fan_out; ++j) {
      const double d = delta[j];
      gb[j] += d;
      double* grow = gw + static_cast<size_t>(j) * fan_in;
      const double* wrow = w + static_cast<size_t>(j) * fan_in;
      for (int i = 0; i < fan_in; ++i) {
        grow[i] += d * below[i];
        prev_delta[i] += d * wrow[i];
      }
    }
    if (l > 0) {
      // tanh'(z) = 1 - a^2 at the activation feeding this layer
      const std::vector<double>& act = trace.hidden_act[l - 1];
      for (int i = 0; i < fan_in; ++i) {
        prev_delta[i] *= 1.0 - act[i] * act[i];
      }
    }
    delta.swap(prev_delta);
  }
}

void VelocityField::velocity(std::span<const double> x, double tau,
                             int condition, std::span<double> out) const {
  std::vector<double> input(static_cast<size_t>(input_dim()));
  assemble_input(x, tau, condition, input);
  forward(input, out);
}

bool VelocityField::operator==(const VelocityField& other) const {
  return data_dim_ == other.data_dim_ &&
         num_conditions_ == other.num_conditions_ && sizes_ == other.sizes_ &&
         params_ == other.params_;
}

void VelocityField::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_scalar<uint32_t>(os, kCheckpointVersion);
  write_scalar<uint32_t>(os, static_cast<uint32_t>(sizes_.size()));
  for (int s : sizes_) write_scalar<uint32_t>(os, static_cast<uint32_t>(s));
  write_scalar<uint32_t>(os, static_cast<uint32_t>(data_dim_));
  write_scalar<uint32_t>(os, static_cast<uint32_t>(num_conditions_));
  for (double p : params_) write_scalar<double>(os, p);
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

VelocityField VelocityField::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path.string());
  }
  const auto version = read_scalar<uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  const auto n_sizes = read_scalar<uint32_t>(is);
  if (n_sizes < 2 || n_sizes > 64) {
    throw std::runtime_error("corrupt checkpoint header");
  }
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) s = static_cast<int>(read_scalar<uint32_t>(is));
  const int data_dim = static_cast<int>(read_scalar<uint32_t>(is));
  const int num_conditions = static_cast<int>(read_scalar<uint32_t>(is));

  std::vector<int> hidden(sizes.begin() + 1, sizes.end() - 1);
  VelocityField model(data_dim, num_conditions, hidden, /*init_seed=*/0);
  if (model.sizes_ != sizes) {
    throw std::runtime_error("checkpoint header inconsistent with dimensions");
  }
  for (double& p : model.params_) p = read_scalar<double>(is);
  if (!is) throw std::runtime_error("checkpoint truncated: " + path.string());
  return model;
}

// ============================================================================
// Flow-matching objective
// ============================================================================

std::vector<double> interpolate(const InterpolantPair& pair) {
  if (pair.x0.size() != pair.x1.size()) {
    throw std::invalid_argument("interpolate: x0/x1 dimension mismatch");
  }
  if (pair.t < 0.0 || pair.t > 1.0) {
    throw std::invalid_argument("interpolate: t outside [0, 1]");
  }
  std::vector<double> out(pair.x0.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - pair.t) * pair.x0[i] + pair.t * pair.x1[i];
  }
  return out;
}

FmLossResult fm_loss(const VelocityField& model,
                     std::span<const InterpolantPair> batch) {
  if (batch.empty()) throw std::invalid_argument("fm_loss: empty batch");
  const int dim = model.data_dim();
  FmLossResult result;
  result.grad.assign(model.param_count(), 0.0);

  std::vector<double> input(static_cast<size_t>(model.input_dim()));
  std::vector<double> out(static_cast<size_t>(dim));
  std::vector<double> cot(static_cast<size_t>(dim));
  VelocityField::Trace trace;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (const InterpolantPair& pair : batch) {
    const std::vector<double> xt = interpolate(pair);
    model.assemble_input(xt, pair.t, pair.condition, input);
    model.forward(input, out, &trace);
    double sq = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double r = out[i] - (pair.x1[i] - pair.x0[i]);
      sq += r * r;
      cot[i] = 2.0 * inv_n * r;
    }
    result.loss += inv_n * sq;
    model.backward(trace, cot, result.grad);
  }
  return result;
}

std::vector<double> score_estimate(const VelocityModel& model,
                                   std::span<const double> x, double tau,
                                   int condition, double tau_min) {
  if (tau < tau_min) {
    throw std::invalid_argument("score_estimate: tau below tau_min floor");
  }
  std::vector<double> v = model.velocity(x, tau, condition);
  std::vector<double> score(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    score[i] = -(x[i] + (1.0 - tau) * v[i]) / tau;
  }
  return score;
}

// ============================================================================
// Synthetic task + pretraining
// ============================================================================

void SyntheticTask::sample_data(int condition, rng::Stream& stream,
                                std::span<double> out) const {
  if (condition < 0 || condition >= num_conditions()) {
    throw std::invalid_argument("sample_data: unknown condition");
  }
  const std::vector<double>& center = centers[static_cast<size_t>(condition)];
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = center[i] + data_std * stream.normal();
  }
}

SyntheticTask make_task(int num_conditions, int data_dim, double data_std,
                        double radius) {
  if (num_conditions < 1) throw std::invalid_argument("need >= 1 condition");
  if (data_dim < 1) throw std::invalid_argument("need data_dim >= 1");
  SyntheticTask task;
  task.data_dim = data_dim;
  task.data_std = data_std;
  for (int c = 0; c < num_conditions; ++c) {
    std::vector<double> center(static_cast<size_t>(data_dim), 0.0);
    if (num_conditions == 1) {
      // single mode at the origin shifted right, keeps the task non-trivial
      center[0] = radius;
    } else if (num_conditions == 2) {
      center[0] = (c == 0) ? radius : -radius;
    } else {
      const double angle = 2.0 * M_PI * c / num_conditions;
      center[0] = radius * std::cos(angle);
      if (data_dim > 1) center[1] = radius * std::sin(angle);
    }
    task.centers.push_back(std::move(center));
  }
  return task;
}

namespace {

InterpolantPair sample_pair(const SyntheticTask& task, int num_conditions,
                            rng::Stream& stream) {
  InterpolantPair pair;
  pair.condition = static_cast<int>(stream.next_u64() %
                                    static_cast<uint64_t>(num_conditions));
  pair.x0.resize(static_cast<size_t>(task.data_dim));
  pair.x1.resize(static_cast<size_t>(task.data_dim));
  task.sample_data(pair.condition, stream, pair.x0);
  for (double& v : pair.x1) v = stream.normal();
  pair.t = stream.uniform01();
  return pair;
}

}  // namespace

PretrainResult pretrain(VelocityField& model, const SyntheticTask& task,
                        const PretrainConfig& config, rng::Stream stream) {
  if (task.data_dim != model.data_dim()) {
    throw std::invalid_argument("pretrain: task/model data_dim mismatch");
  }
  if (task.num_conditions() != model.num_conditions()) {
    throw std::invalid_argument("pretrain: condition count mismatch");
  }

  PretrainResult result;
  const size_t n_params = model.param_count();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
  std::vector<InterpolantPair> batch(static_cast<size_t>(config.batch_size));
  rng::Stream data_stream = stream.child(1);

  for (int step = 0; step < config.steps; ++step) {
    for (auto& pair : batch) {
      pair = sample_pair(task, model.num_conditions(), data_stream);
    }
    FmLossResult fm = fm_loss(model, batch);
    check_finite(fm.loss, "pretraining loss");
    if (step % config.log_every == 0 || step + 1 == config.steps) {
      result.loss_curve.emplace_back(step, fm.loss);
    }
    // AdamW step
    const int t = step + 1;
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    std::span<double> params = model.params();
    for (size_t i = 0; i < n_params; ++i) {
      const double g = fm.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
      params[i] -= config.learning_rate * (update + config.weight_decay * params[i]);
    }
  }

  // held-out evaluation with a stream disjoint from training batches
  rng::Stream holdout_stream = stream.child(2);
  std::vector<InterpolantPair> holdout(static_cast<size_t>(config.holdout_size));
  for (auto& pair : holdout) {
    pair = sample_pair(task, model.num_conditions(), holdout_stream);
  }
  result.holdout_loss = fm_loss(model, holdout).loss;
  check_finite(result.holdout_loss, "holdout loss");
  return result;
}

}  // namespace treegrpo::flow
