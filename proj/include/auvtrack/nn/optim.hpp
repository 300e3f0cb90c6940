#pragma once

#include "auvtrack/nn/layers.hpp"

#include <vector>

namespace auvtrack::nn {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global L2 gradient clip; 0 disables.
    double clip_norm = 0.0;
};

/// Adaptive-moment optimizer with bias correction.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<NamedTensor> params, AdamConfig cfg);

    /// Applies one update from the accumulated gradients, then clears them.
    /// Throws NumericFault naming the first parameter with a non-finite gradient.
    void step();
    void zero_grad();

    [[nodiscard]] long steps() const { return t_; }
    [[nodiscard]] const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    [[nodiscard]] const std::vector<NamedTensor>& params() const { return params_; }

    /// First/second moments in parameter order (for checkpointing).
    [[nodiscard]] std::vector<NamedTensor> moments() const;

private:
    std::vector<NamedTensor> params_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace auvtrack::nn
