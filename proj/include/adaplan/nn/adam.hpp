#pragma once

#include <cstdint>
#include <utility>

#include "adaplan/nn/mlp.hpp"

namespace adaplan::nn {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step_count = 0;
  MlpGrads first_moment;
  MlpGrads second_moment;
  AdamHyper hyper;

  static AdamState fresh(const MlpParams& params, AdamHyper hyper);
};

/// One Adam step with bias correction. Throws ShapeError on mismatched shapes
/// and NumericError on a non-finite gradient; inputs are left untouched on error.
void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads);

/// Value-returning form of adam_step.
std::pair<AdamState, MlpParams> adam_update(const AdamState& state, const MlpParams& params,
                                            const MlpGrads& grads);

}  // namespace adaplan::nn
