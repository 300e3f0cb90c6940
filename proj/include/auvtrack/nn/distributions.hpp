#pragma once

#include "auvtrack/nn/layers.hpp"

namespace auvtrack::nn {

struct SquashedSample {
    Tensor action;    // tanh(mean + std * eps), n x d
    Tensor log_prob;  // n x 1
};

/// Reparameterised tanh-Gaussian sample with the change-of-variables
/// correction log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
SquashedSample squashed_gaussian(const Tensor& mean, const Tensor& log_std, const Matrix& eps);

/// Standard normal draws.
Matrix randn(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace auvtrack::nn
