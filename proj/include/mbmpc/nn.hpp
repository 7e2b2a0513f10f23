#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbmpc/vec.hpp"

namespace mbmpc::nn {

enum class Activation { kRelu, kTanh, kIdentity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Dense matrix, row-major.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Fully connected network. weights[i] has shape
// (layer_sizes[i+1] x layer_sizes[i]); activations has one entry per hidden
// layer; the output layer is always linear.
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vec> biases;
  std::vector<Activation> activations;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
};

// Same shapes as the parameters they correspond to.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vec> biases;

  void add_scaled(const Gradients& other, double scale);
  void scale(double s);
};

Gradients zero_gradients(const MlpParams& params);

struct AdamState {
  Gradients first_moment;
  Gradients second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(const MlpParams& params, double learning_rate);

// Uniform U(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.
// Deterministic for a given seed.
MlpParams init_params(const std::vector<int>& layer_sizes, Activation activation,
                      std::uint64_t seed);

// Pure function; safe to call concurrently on a shared frozen MlpParams.
Vec mlp_forward(const MlpParams& params, const Vec& input);

struct BackwardResult {
  Gradients grads;
  Vec input_grad;
};

// Gradient of <output_grad, mlp_forward(params, input)> with respect to every
// parameter and the input.
BackwardResult mlp_backward(const MlpParams& params, const Vec& input, const Vec& output_grad);

// Bias-corrected Adam update applied in place; increments state.step_count.
void adam_step(MlpParams& params, const Gradients& grads, AdamState& state);

// One Adam step on the batch-mean of 1/2 ||f(x) - y||^2; returns that loss
// value before the update.
double mse_batch_step(MlpParams& params, AdamState& adam, const std::vector<const Vec*>& inputs,
                      const std::vector<const Vec*>& targets);

// Mean over the batch of 1/2 ||f(x) - y||^2.
double mse_objective(const MlpParams& params, const std::vector<const Vec*>& inputs,
                     const std::vector<const Vec*>& targets);

// JSON round trip preserves every 64-bit value exactly.
std::string params_to_json(const MlpParams& params);
MlpParams params_from_json(const std::string& text);

}  // namespace mbmpc::nn
