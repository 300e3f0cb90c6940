#include "auvtrack/nn/distributions.hpp"

#include <cmath>
#include <numbers>

namespace auvtrack::nn {

SquashedSample squashed_gaussian(const Tensor& mean, const Tensor& log_std, const Matrix& eps) {
    const Eigen::Index d = mean.cols();
    Tensor noise = Tensor::constant(eps);
    Tensor u = add(mean, mul(exp(log_std), noise));
    Tensor a = tanh(u);
    // Gaussian term: -eps^2/2 - log std - log(2 pi)/2
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Matrix quad = -0.5 * eps.array().square();
    Tensor gauss = add(Tensor::constant(quad), neg(log_std));
    Tensor log_det = scale(add_scalar(neg(add(u, softplus(scale(u, -2.0)))), std::numbers::ln2), 2.0);
    Tensor lp = add_scalar(sum_cols(sub(gauss, log_det)), -half_log_2pi * static_cast<double>(d));
    return {a, lp};
}

Matrix randn(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = n01(rng);
        }
    }
    return m;
}

}  // namespace auvtrack::nn
