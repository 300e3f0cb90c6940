#include "auvtrack/nn/layers.hpp"

#include <cmath>

namespace auvtrack::nn {

std::vector<NamedTensor> Module::state(const std::string& prefix) const {
    std::vector<NamedTensor> out;
    collect(out, prefix);
    return out;
}

std::vector<NamedTensor> Module::named_parameters(const std::string& prefix) const {
    std::vector<NamedTensor> out;
    for (auto& nt : state(prefix)) {
        if (nt.trainable) {
            out.push_back(std::move(nt));
        }
    }
    return out;
}

std::vector<Tensor> Module::parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : named_parameters()) {
        out.push_back(nt.tensor);
    }
    return out;
}

Eigen::Index Module::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& p : parameters()) {
        n += p.value().size();
    }
    return n;
}

void copy_state(const Module& src, Module& dst) {
    auto s = src.state();
    auto d = dst.state();
    if (s.size() != d.size()) {
        throw ContractError("copy_state: architectures differ");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].tensor.rows() != d[i].tensor.rows() || s[i].tensor.cols() != d[i].tensor.cols()) {
            throw ContractError("copy_state: shape mismatch at " + s[i].name);
        }
        d[i].tensor.mutable_value() = s[i].tensor.value();
    }
}

void polyak_update(const Module& src, Module& dst, double tau) {
    auto s = src.named_parameters();
    auto d = dst.named_parameters();
    if (s.size() != d.size()) {
        throw ContractError("polyak_update: architectures differ");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        Matrix& dv = d[i].tensor.mutable_value();
        dv = (1.0 - tau) * dv + tau * s[i].tensor.value();
    }
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = dist(rng);
        }
    }
    return m;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(Eigen::Index in, Eigen::Index out, Rng& rng, bool spectral) : spectral_(spectral) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = Tensor::parameter(uniform_init(in, out, bound, rng));
    bias_ = Tensor::parameter(uniform_init(1, out, bound, rng));
    if (spectral_) {
        std::normal_distribution<double> n01(0.0, 1.0);
        Matrix u(1, in);
        for (Eigen::Index i = 0; i < in; ++i) {
            u(0, i) = n01(rng);
        }
        u /= std::max(u.norm(), 1e-12);
        u_ = Tensor::constant(std::move(u));
    }
}

void Linear::power_iterate(int iterations) const {
    if (!spectral_) {
        return;
    }
    const Matrix& w = weight_.value();
    Matrix& u = u_.node()->value;
    for (int it = 0; it < iterations; ++it) {
        Matrix v = u * w;
        v /= std::max(v.norm(), 1e-12);
        u = v * w.transpose();
        u /= std::max(u.norm(), 1e-12);
    }
}

double Linear::sigma_estimate() const {
    if (!spectral_) {
        throw ContractError("sigma_estimate on a layer without spectral normalisation");
    }
    const Matrix& w = weight_.value();
    const Matrix& u = u_.value();
    Matrix v = u * w;
    v /= std::max(v.norm(), 1e-12);
    return (u * w * v.transpose())(0, 0);
}

Tensor Linear::effective_weight() const {
    if (!spectral_) {
        return weight_;
    }
    // The left vector only advances on training passes; evaluation reuses it.
    if (!NoGradGuard::active() && !FrozenStateGuard::active()) {
        power_iterate(1);
    }
    const Matrix& w = weight_.value();
    Matrix v = u_.value() * w;
    v /= std::max(v.norm(), 1e-12);
    Tensor sigma = matmul_nt(matmul(u_, weight_), Tensor::constant(v));
    if (sigma.item() < 1e-12) {
        return weight_;
    }
    return div_scalar(weight_, sigma);
}

Tensor Linear::apply(const Tensor& x, const Tensor& w) const { return add_row(matmul(x, w), bias_); }

Tensor Linear::forward(const Tensor& x) const { return apply(x, effective_weight()); }

void Linear::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
    out.push_back({prefix + "weight", weight_, true});
    out.push_back({prefix + "bias", bias_, true});
    if (spectral_) {
        out.push_back({prefix + "sn_u", u_, false});
    }
}

Linear Linear::clone() const {
    Linear c;
    c.weight_ = Tensor::parameter(weight_.value());
    c.bias_ = Tensor::parameter(bias_.value());
    if (spectral_) {
        c.u_ = Tensor::constant(u_.value());
    }
    c.spectral_ = spectral_;
    return c;
}

// ---------------------------------------------------------------- Mlp

Mlp::Mlp(const std::vector<Eigen::Index>& sizes, Rng& rng, Activation act, bool spectral) : act_(act) {
    if (sizes.size() < 2) {
        throw ContractError("Mlp needs at least input and output sizes");
    }
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        layers_.emplace_back(sizes[i], sizes[i + 1], rng, spectral);
    }
}

Tensor Mlp::forward(const Tensor& x, MlpTrace* trace) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Tensor w = layers_[i].effective_weight();
        h = layers_[i].apply(h, w);
        if (trace) {
            trace->weights.push_back(w);
        }
        if (i + 1 < layers_.size()) {
            h = act_ == Activation::kRelu ? relu(h) : tanh(h);
            if (trace) {
                trace->hidden.push_back(h);
            }
        }
    }
    return h;
}

Tensor Mlp::input_gradient(const MlpTrace& trace, Eigen::Index rows) const {
    if (out_features() != 1) {
        throw ContractError("input_gradient requires a scalar-output network");
    }
    if (trace.weights.size() != layers_.size()) {
        throw ContractError("input_gradient: trace does not match network");
    }
    Tensor g = Tensor::constant(Matrix::Ones(rows, 1));
    for (std::size_t l = layers_.size(); l-- > 0;) {
        g = matmul_nt(g, trace.weights[l]);
        if (l > 0) {
            const Tensor& h = trace.hidden[l - 1];
            if (act_ == Activation::kRelu) {
                Matrix mask = (h.value().array() > 0.0).cast<double>().matrix();
                g = mul(g, Tensor::constant(std::move(mask)));
            } else {
                g = mul(g, add_scalar(neg(square(h)), 1.0));
            }
        }
    }
    return g;
}

void Mlp::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].collect(out, prefix + "l" + std::to_string(i) + ".");
    }
}

Mlp Mlp::clone() const {
    Mlp c;
    c.act_ = act_;
    for (const auto& l : layers_) {
        c.layers_.push_back(l.clone());
    }
    return c;
}

Tensor gradient_penalty_at(const Mlp& d, const Matrix& x_policy, const Matrix& x_expert, const Matrix& eps,
                           double coeff) {
    if (x_policy.rows() != x_expert.rows() || x_policy.cols() != x_expert.cols()) {
        throw ContractError("gradient_penalty: batch shapes differ");
    }
    Matrix mix = x_expert.array().colwise() * eps.col(0).array() +
                 x_policy.array().colwise() * (1.0 - eps.col(0).array());
    MlpTrace trace;
    (void)d.forward(Tensor::constant(std::move(mix)), &trace);
    Tensor g = d.input_gradient(trace, x_policy.rows());
    Tensor norm = sqrt(add_scalar(sum_cols(square(g)), 1e-30));
    return scale(mean(square(add_scalar(norm, -1.0))), coeff);
}

Tensor gradient_penalty(const Mlp& d, const Matrix& x_policy, const Matrix& x_expert, double coeff, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Matrix eps(x_policy.rows(), 1);
    for (Eigen::Index i = 0; i < eps.rows(); ++i) {
        eps(i, 0) = u01(rng);
    }
    return gradient_penalty_at(d, x_policy, x_expert, eps, coeff);
}

// ---------------------------------------------------------------- LayerNorm / Embedding

LayerNorm::LayerNorm(Eigen::Index dim)
    : gain_(Tensor::parameter(Matrix::Ones(1, dim))), bias_(Tensor::parameter(Matrix::Zero(1, dim))) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gain_, bias_); }

void LayerNorm::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
    out.push_back({prefix + "gain", gain_, true});
    out.push_back({prefix + "bias", bias_, true});
}

Embedding::Embedding(Eigen::Index count, Eigen::Index dim, Rng& rng) {
    std::normal_distribution<double> n(0.0, 0.02);
    Matrix t(count, dim);
    for (Eigen::Index i = 0; i < count; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            t(i, j) = n(rng);
        }
    }
    table_ = Tensor::parameter(std::move(t));
}

Tensor Embedding::forward(std::span<const Eigen::Index> index) const { return gather_rows(table_, index); }

void Embedding::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
    out.push_back({prefix + "table", table_, true});
}

// ---------------------------------------------------------------- attention blocks

SelfAttention::SelfAttention(Eigen::Index dim, Rng& rng)
    : q_(dim, dim, rng), k_(dim, dim, rng), v_(dim, dim, rng), o_(dim, dim, rng) {}

Tensor SelfAttention::forward(const Tensor& x, Eigen::Index batch, Eigen::Index seq, AttentionMask mask,
                              std::span<const std::uint8_t> key_valid, bool scale_logits) const {
    Tensor z = attention(q_.forward(x), k_.forward(x), v_.forward(x), batch, seq, mask, key_valid, scale_logits);
    return o_.forward(z);
}

void SelfAttention::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
    q_.collect(out, prefix + "q.");
    k_.collect(out, prefix + "k.");
    v_.collect(out, prefix + "v.");
    o_.collect(out, prefix + "o.");
}

DecoderBlock::DecoderBlock(const DecoderBlockCfg& cfg, Rng& rng)
    : cfg_(cfg),
      ln1_(cfg.embed_dim),
      ln2_(cfg.embed_dim),
      attn_(cfg.embed_dim, rng),
      fc1_(cfg.embed_dim, cfg.mlp_hidden, rng),
      fc2_(cfg.mlp_hidden, cfg.embed_dim, rng) {
    if (cfg.n_heads != 1) {
        throw ContractError("only single-head attention is implemented");
    }
}

Tensor DecoderBlock::forward(const Tensor& x, Eigen::Index batch, Eigen::Index seq,
                             std::span<const std::uint8_t> key_valid) const {
    const AttentionMask mask = cfg_.causal ? AttentionMask::kCausal : AttentionMask::kNone;
    Tensor h = add(x, attn_.forward(ln1_.forward(x), batch, seq, mask, key_valid, cfg_.scale_logits));
    return add(h, fc2_.forward(relu(fc1_.forward(ln2_.forward(h)))));
}

void DecoderBlock::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
    ln1_.collect(out, prefix + "ln1.");
    attn_.collect(out, prefix + "attn.");
    ln2_.collect(out, prefix + "ln2.");
    fc1_.collect(out, prefix + "fc1.");
    fc2_.collect(out, prefix + "fc2.");
}

DecoderStack::DecoderStack(const DecoderBlockCfg& cfg, int n_blocks, Rng& rng) : ln_final_(cfg.embed_dim) {
    for (int i = 0; i < n_blocks; ++i) {
        blocks_.emplace_back(cfg, rng);
    }
}

Tensor DecoderStack::forward(const Tensor& x, Eigen::Index batch, Eigen::Index seq,
                             std::span<const std::uint8_t> key_valid) const {
    Tensor h = x;
    for (const auto& b : blocks_) {
        h = b.forward(h, batch, seq, key_valid);
    }
    return ln_final_.forward(h);
}

void DecoderStack::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        blocks_[i].collect(out, prefix + "b" + std::to_string(i) + ".");
    }
    ln_final_.collect(out, prefix + "lnf.");
}

}  // namespace auvtrack::nn
