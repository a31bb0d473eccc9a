#include "uda/optim.hpp"

#include <cmath>

#include "uda/error.hpp"

namespace uda {

OptimizerState::OptimizerState(OptimizerSettings settings,
                               const std::vector<ParamRef>& params)
    : settings_(settings) {
    acc_.reserve(params.size());
    for (const ParamRef& p : params) acc_.emplace_back(p.tensor->size(), 0.0);
}

double OptimizerState::effective_lr(std::size_t epoch) const {
    const std::size_t decays =
        settings_.decay_period == 0 ? 0 : epoch / settings_.decay_period;
    return settings_.learning_rate * std::pow(settings_.decay_factor,
                                              static_cast<double>(decays));
}

void OptimizerState::step(const std::vector<ParamRef>& params, std::size_t epoch) {
    if (params.size() != acc_.size())
        throw StateError("optimizer: parameter slice has " +
                         std::to_string(params.size()) + " tensors, state holds " +
                         std::to_string(acc_.size()));
    const double lr = effective_lr(epoch);
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor2& tensor = *params[p].tensor;
        if (tensor.size() != acc_[p].size())
            throw StateError("optimizer: shape of " + params[p].name +
                             " changed since state construction");
        if (!tensor.grad)
            throw StateError("optimizer: missing gradient for parameter " +
                             params[p].name);
        const std::vector<double>& g = *tensor.grad;
        std::vector<double>& acc = acc_[p];
        switch (settings_.kind) {
            case OptimizerKind::RmsProp:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    acc[i] = settings_.rho * acc[i] + (1.0 - settings_.rho) * g[i] * g[i];
                    tensor.values[i] -= lr * g[i] / std::sqrt(acc[i] + settings_.epsilon);
                }
                break;
            case OptimizerKind::SgdMomentum:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    acc[i] = settings_.momentum * acc[i] + g[i];
                    tensor.values[i] -= lr * acc[i];
                }
                break;
        }
        tensor.clear_grad();
    }
    ++steps_;
}

}  // namespace uda
