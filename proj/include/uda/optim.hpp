#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uda/tensor.hpp"

namespace uda {

enum class OptimizerKind { RmsProp, SgdMomentum };

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::RmsProp;
    double learning_rate = 1e-3;
    double decay_factor = 0.5;
    std::size_t decay_period = 60;  // epochs between decays
    double rho = 0.9;               // RMSProp accumulator coefficient
    double epsilon = 1e-8;          // RMSProp stabilizer
    double momentum = 0.9;          // SGD velocity coefficient
};

// Named view of one trainable tensor.
struct ParamRef {
    std::string name;
    Tensor2* tensor = nullptr;
};

// Per-parameter accumulators for one optimizer over one parameter slice.
// step() consumes and clears the gradients it applies.
//
// RMSProp:      acc <- rho*acc + (1-rho)*g^2;  p <- p - lr_eff*g/sqrt(acc+eps)
// SGD-momentum: v <- mu*v + g;                 p <- p - lr_eff*v
// lr_eff = lr * decay_factor^floor(epoch / decay_period)
class OptimizerState {
public:
    OptimizerState(OptimizerSettings settings, const std::vector<ParamRef>& params);

    void step(const std::vector<ParamRef>& params, std::size_t epoch);
    double effective_lr(std::size_t epoch) const;
    std::size_t step_count() const { return steps_; }
    const OptimizerSettings& settings() const { return settings_; }

private:
    OptimizerSettings settings_;
    std::vector<std::vector<double>> acc_;
    std::size_t steps_ = 0;
};

}  // namespace uda
