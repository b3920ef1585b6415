#include "adaplan/nn/adam.hpp"

#include <cmath>

#include "adaplan/errors.hpp"

namespace adaplan::nn {

AdamState AdamState::fresh(const MlpParams& params, AdamHyper hyper) {
  AdamState s;
  s.first_moment = MlpGrads::zeros_like(params);
  s.second_moment = MlpGrads::zeros_like(params);
  s.hyper = hyper;
  return s;
}

void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads) {
  const std::size_t n = params.num_layers();
  if (grads.weights.size() != n || grads.biases.size() != n || state.first_moment.weights.size() != n) {
    throw ShapeError("adam: layer count mismatch");
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw ShapeError("adam: gradient shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!grads.all_finite()) throw NumericError("adam: non-finite gradient");

  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
    param.array() -= h.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + h.epsilon);
  };
  for (std::size_t l = 0; l < n; ++l) {
    update(params.weights[l], state.first_moment.weights[l], state.second_moment.weights[l],
           grads.weights[l]);
    update(params.biases[l], state.first_moment.biases[l], state.second_moment.biases[l], grads.biases[l]);
  }
}

std::pair<AdamState, MlpParams> adam_update(const AdamState& state, const MlpParams& params,
                                            const MlpGrads& grads) {
  AdamState next_state = state;
  MlpParams next_params = params;
  adam_step(next_state, next_params, grads);
  return {std::move(next_state), std::move(next_params)};
}

}  // namespace adaplan::nn
