#include "auvtrack/nn/optim.hpp"

#include <cmath>

namespace auvtrack::nn {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
        v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p.tensor.zero_grad();
    }
}

void Adam::step() {
    for (const auto& p : params_) {
        if (p.tensor.has_grad() && !p.tensor.grad().allFinite()) {
            throw NumericFault("non-finite gradient in parameter '" + p.name + "'");
        }
    }
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params_) {
            if (p.tensor.has_grad()) {
                sq += p.tensor.grad().squaredNorm();
            }
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) {
            scale = cfg_.clip_norm / norm;
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].tensor;
        if (!p.has_grad()) {
            // Missing gradient is treated as zero so moments still decay.
            m_[i] *= cfg_.beta1;
            v_[i] *= cfg_.beta2;
        } else {
            const Matrix& g = p.grad();
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * scale * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * (scale * g).cwiseAbs2();
        }
        p.mutable_value().array() -=
            cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
        p.zero_grad();
    }
}

std::vector<NamedTensor> Adam::moments() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.push_back({params_[i].name + ".adam_m", Tensor::constant(m_[i]), false});
        out.push_back({params_[i].name + ".adam_v", Tensor::constant(v_[i]), false});
    }
    return out;
}

}  // namespace auvtrack::nn
