#include "mbmpc/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "mbmpc/rng.hpp"

namespace mbmpc::nn {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  throw std::logic_error("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + name);
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t i = 0; i < weights[l].data.size(); ++i)
      weights[l].data[i] += scale * other.weights[l].data[i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += scale * other.biases[l][i];
  }
}

void Gradients::scale(double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (double& v : weights[l].data) v *= s;
    for (double& v : biases[l]) v *= s;
  }
}

Gradients zero_gradients(const MlpParams& params) {
  Gradients g;
  for (int l = 0; l < params.num_layers(); ++l) {
    g.weights.emplace_back(params.weights[l].rows, params.weights[l].cols);
    g.biases.emplace_back(params.biases[l].size(), 0.0);
  }
  return g;
}

AdamState make_adam_state(const MlpParams& params, double learning_rate) {
  AdamState state;
  state.first_moment = zero_gradients(params);
  state.second_moment = zero_gradients(params);
  state.learning_rate = learning_rate;
  return state;
}

MlpParams init_params(const std::vector<int>& layer_sizes, Activation activation,
                      std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("init_params: need at least two layers");
  for (int s : layer_sizes)
    if (s <= 0) throw std::invalid_argument("init_params: layer sizes must be positive");

  MlpParams params;
  params.layer_sizes = layer_sizes;
  params.activations.assign(layer_sizes.size() - 2, activation);

  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    int fan_in = layer_sizes[l];
    int fan_out = layer_sizes[l + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(fan_out, 0.0);
  }
  return params;
}

namespace {

inline double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kIdentity: return z;
  }
  return z;
}

// Derivative expressed through the activated value.
inline double activation_grad(Activation a, double activated) {
  switch (a) {
    case Activation::kRelu: return activated > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - activated * activated;
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

void check_input_dim(const MlpParams& params, const Vec& input, const char* who) {
  if (static_cast<int>(input.size()) != params.input_dim())
    throw std::invalid_argument(std::string(who) + ": input length " +
                                std::to_string(input.size()) + " != expected " +
                                std::to_string(params.input_dim()));
}

}  // namespace

Vec mlp_forward(const MlpParams& params, const Vec& input) {
  check_input_dim(params, input, "mlp_forward");
  Vec act = input;
  for (int l = 0; l < params.num_layers(); ++l) {
    const Matrix& w = params.weights[l];
    Vec z = params.biases[l];
    for (int i = 0; i < w.rows; ++i) {
      double s = 0.0;
      const double* row = &w.data[static_cast<std::size_t>(i) * w.cols];
      for (int j = 0; j < w.cols; ++j) s += row[j] * act[j];
      z[i] += s;
    }
    if (l + 1 < params.num_layers()) {
      Activation a = params.activations[l];
      for (double& v : z) v = apply_activation(a, v);
    }
    act = std::move(z);
  }
  return act;
}

BackwardResult mlp_backward(const MlpParams& params, const Vec& input, const Vec& output_grad) {
  check_input_dim(params, input, "mlp_backward");
  if (static_cast<int>(output_grad.size()) != params.output_dim())
    throw std::invalid_argument("mlp_backward: output_grad length mismatch");

  int num_layers = params.num_layers();

  // Forward pass, keeping each layer's activated output.
  std::vector<Vec> acts(num_layers + 1);
  acts[0] = input;
  for (int l = 0; l < num_layers; ++l) {
    const Matrix& w = params.weights[l];
    Vec z = params.biases[l];
    for (int i = 0; i < w.rows; ++i) {
      double s = 0.0;
      const double* row = &w.data[static_cast<std::size_t>(i) * w.cols];
      for (int j = 0; j < w.cols; ++j) s += row[j] * acts[l][j];
      z[i] += s;
    }
    if (l + 1 < num_layers) {
      Activation a = params.activations[l];
      for (double& v : z) v = apply_activation(a, v);
    }
    if (!all_finite(z))
      throw std::runtime_error("mlp_backward: non-finite activation at layer " +
                               std::to_string(l));
    acts[l + 1] = std::move(z);
  }

  BackwardResult result;
  result.grads = zero_gradients(params);

  Vec delta = output_grad;
  for (int l = num_layers - 1; l >= 0; --l) {
    const Matrix& w = params.weights[l];
    Matrix& gw = result.grads.weights[l];
    Vec& gb = result.grads.biases[l];
    const Vec& layer_in = acts[l];

    for (int i = 0; i < w.rows; ++i) {
      gb[i] = delta[i];
      double* grow = &gw.data[static_cast<std::size_t>(i) * w.cols];
      for (int j = 0; j < w.cols; ++j) grow[j] = delta[i] * layer_in[j];
    }

    Vec prev(w.cols, 0.0);
    for (int i = 0; i < w.rows; ++i) {
      const double* row = &w.data[static_cast<std::size_t>(i) * w.cols];
      for (int j = 0; j < w.cols; ++j) prev[j] += row[j] * delta[i];
    }
    if (l > 0) {
      Activation a = params.activations[l - 1];
      for (int j = 0; j < w.cols; ++j) prev[j] *= activation_grad(a, layer_in[j]);
    }
    if (!all_finite(prev))
      throw std::runtime_error("mlp_backward: non-finite gradient at layer " + std::to_string(l));
    delta = std::move(prev);
  }
  result.input_grad = std::move(delta);
  return result;
}

void adam_step(MlpParams& params, const Gradients& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size())
    throw std::invalid_argument("adam_step: gradient/parameter layer count mismatch");

  state.step_count += 1;
  double t = static_cast<double>(state.step_count);
  double bc1 = 1.0 - std::pow(state.beta1, t);
  double bc2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    if (grads.weights[l].rows != params.weights[l].rows ||
        grads.weights[l].cols != params.weights[l].cols)
      throw std::invalid_argument("adam_step: gradient shape mismatch at layer " +
                                  std::to_string(l));
    auto update = [&](double& p, double& m, double& v, double g) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      double m_hat = m / bc1;
      double v_hat = v / bc2;
      p -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    };
    for (std::size_t i = 0; i < params.weights[l].data.size(); ++i)
      update(params.weights[l].data[i], state.first_moment.weights[l].data[i],
             state.second_moment.weights[l].data[i], grads.weights[l].data[i]);
    for (std::size_t i = 0; i < params.biases[l].size(); ++i)
      update(params.biases[l][i], state.first_moment.biases[l][i],
             state.second_moment.biases[l][i], grads.biases[l][i]);
  }
}

double mse_batch_step(MlpParams& params, AdamState& adam, const std::vector<const Vec*>& inputs,
                      const std::vector<const Vec*>& targets) {
  if (inputs.empty() || inputs.size() != targets.size())
    throw std::invalid_argument("mse_batch_step: empty or mismatched batch");

  Gradients total = zero_gradients(params);
  double loss = 0.0;
  double inv_n = 1.0 / static_cast<double>(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Vec pred = mlp_forward(params, *inputs[k]);
    Vec err(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) err[i] = pred[i] - (*targets[k])[i];
    loss += 0.5 * squared_norm(err);
    BackwardResult back = mlp_backward(params, *inputs[k], err);
    total.add_scaled(back.grads, inv_n);
  }
  adam_step(params, total, adam);
  return loss * inv_n;
}

double mse_objective(const MlpParams& params, const std::vector<const Vec*>& inputs,
                     const std::vector<const Vec*>& targets) {
  if (inputs.size() != targets.size())
    throw std::invalid_argument("mse_objective: mismatched batch");
  double loss = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Vec pred = mlp_forward(params, *inputs[k]);
    Vec err(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) err[i] = pred[i] - (*targets[k])[i];
    loss += 0.5 * squared_norm(err);
  }
  return inputs.empty() ? 0.0 : loss / static_cast<double>(inputs.size());
}

std::string params_to_json(const MlpParams& params) {
  nlohmann::json j;
  j["layer_sizes"] = params.layer_sizes;
  std::vector<std::string> acts;
  for (Activation a : params.activations) acts.push_back(activation_name(a));
  j["activations"] = acts;
  std::vector<std::vector<double>> weights;
  for (const Matrix& w : params.weights) weights.push_back(w.data);
  j["weights"] = weights;
  j["biases"] = params.biases;
  return j.dump();
}

MlpParams params_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MlpParams params;
  params.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  for (const auto& name : j.at("activations"))
    params.activations.push_back(activation_from_name(name.get<std::string>()));
  auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
  auto biases = j.at("biases").get<std::vector<Vec>>();
  if (weights.size() + 1 != params.layer_sizes.size())
    throw std::invalid_argument("params_from_json: layer count mismatch");
  for (std::size_t l = 0; l + 1 < params.layer_sizes.size(); ++l) {
    Matrix w(params.layer_sizes[l + 1], params.layer_sizes[l]);
    if (w.data.size() != weights[l].size())
      throw std::invalid_argument("params_from_json: weight size mismatch at layer " +
                                  std::to_string(l));
    w.data = weights[l];
    params.weights.push_back(std::move(w));
    params.biases.push_back(biases.at(l));
  }
  return params;
}

}  // namespace mbmpc::nn
