#pragma once

#include "auvtrack/nn/ops.hpp"
#include "auvtrack/nn/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace auvtrack::nn {

using Rng = std::mt19937_64;

struct NamedTensor {
    std::string name;
    Tensor tensor;
    bool trainable = true;  // false for buffers such as the spectral-norm u vector
};

class Module {
public:
    virtual ~Module() = default;
    virtual void collect(std::vector<NamedTensor>& out, const std::string& prefix) const = 0;

    /// Parameters and buffers, in a stable order.
    [[nodiscard]] std::vector<NamedTensor> state(const std::string& prefix = "") const;
    /// Trainable parameters only.
    [[nodiscard]] std::vector<NamedTensor> named_parameters(const std::string& prefix = "") const;
    [[nodiscard]] std::vector<Tensor> parameters() const;
    [[nodiscard]] Eigen::Index parameter_count() const;
};

/// Copy values from `src` into `dst` (same architecture).
void copy_state(const Module& src, Module& dst);
/// dst <- (1 - tau) dst + tau src, trainable parameters only.
void polyak_update(const Module& src, Module& dst, double tau);

/// U(-1/sqrt(in), 1/sqrt(in)) for both weight and bias.
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

/// y = x W + b with W stored in x out. When `spectral` is set the weight
/// used in the forward pass is W / sigma(W), sigma estimated by one power
/// iteration per recorded (gradient) call with a persistent left vector.
class Linear : public Module {
public:
    Linear() = default;
    Linear(Eigen::Index in, Eigen::Index out, Rng& rng, bool spectral = false);

    /// Weight actually applied (runs one power iteration when spectral and
    /// gradients are being recorded).
    [[nodiscard]] Tensor effective_weight() const;
    [[nodiscard]] Tensor forward(const Tensor& x) const;
    [[nodiscard]] Tensor apply(const Tensor& x, const Tensor& w) const;

    /// Extra power iterations without building a graph.
    void power_iterate(int iterations) const;
    [[nodiscard]] double sigma_estimate() const;

    void collect(std::vector<NamedTensor>& out, const std::string& prefix) const override;
    /// Deep copy; the copy shares no tape nodes with this layer.
    [[nodiscard]] Linear clone() const;

    [[nodiscard]] Eigen::Index in_features() const { return weight_.rows(); }
    [[nodiscard]] Eigen::Index out_features() const { return weight_.cols(); }
    [[nodiscard]] bool spectral() const { return spectral_; }
    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }
    [[nodiscard]] const Tensor& weight() const { return weight_; }
    [[nodiscard]] const Tensor& bias() const { return bias_; }

private:
    Tensor weight_;
    Tensor bias_;
    Tensor u_;  // 1 x in, buffer
    bool spectral_ = false;
};

enum class Activation { kRelu, kTanh };

/// Activations kept from a forward pass so the input gradient can be rebuilt.
struct MlpTrace {
    std::vector<Tensor> weights;
    std::vector<Tensor> hidden;  // post-activation outputs of hidden layers
};

class Mlp : public Module {
public:
    Mlp() = default;
    /// sizes = {in, h1, ..., out}
    Mlp(const std::vector<Eigen::Index>& sizes, Rng& rng, Activation act = Activation::kRelu, bool spectral = false);

    [[nodiscard]] Tensor forward(const Tensor& x, MlpTrace* trace = nullptr) const;
    /// d(output)/d(input) per row, as a differentiable graph. Output dim must be 1.
    [[nodiscard]] Tensor input_gradient(const MlpTrace& trace, Eigen::Index rows) const;

    void collect(std::vector<NamedTensor>& out, const std::string& prefix) const override;
    [[nodiscard]] Mlp clone() const;

    [[nodiscard]] const std::vector<Linear>& layers() const { return layers_; }
    std::vector<Linear>& layers() { return layers_; }
    [[nodiscard]] Eigen::Index in_features() const { return layers_.front().in_features(); }
    [[nodiscard]] Eigen::Index out_features() const { return layers_.back().out_features(); }

private:
    std::vector<Linear> layers_;
    Activation act_ = Activation::kRelu;
};

/// coeff * mean_i (||grad_x D(x_i)|| - 1)^2 over x_i = eps x_expert + (1 - eps) x_policy.
Tensor gradient_penalty(const Mlp& d, const Matrix& x_policy, const Matrix& x_expert, double coeff, Rng& rng);
/// Same, with the interpolation coefficients supplied (n x 1).
Tensor gradient_penalty_at(const Mlp& d, const Matrix& x_policy, const Matrix& x_expert, const Matrix& eps,
                           double coeff);

class LayerNorm : public Module {
public:
    LayerNorm() = default;
    explicit LayerNorm(Eigen::Index dim);
    [[nodiscard]] Tensor forward(const Tensor& x) const;
    void collect(std::vector<NamedTensor>& out, const std::string& prefix) const override;

private:
    Tensor gain_;
    Tensor bias_;
};

/// Lookup table; forward gathers rows.
class Embedding : public Module {
public:
    Embedding() = default;
    Embedding(Eigen::Index count, Eigen::Index dim, Rng& rng);
    [[nodiscard]] Tensor forward(std::span<const Eigen::Index> index) const;
    void collect(std::vector<NamedTensor>& out, const std::string& prefix) const override;
    [[nodiscard]] Eigen::Index count() const { return table_.rows(); }

private:
    Tensor table_;
};

struct DecoderBlockCfg {
    Eigen::Index embed_dim = 128;
    int n_heads = 1;
    Eigen::Index mlp_hidden = 128;
    bool causal = true;
    /// Divide attention logits by sqrt(d). Off gives the plain inner-product form.
    bool scale_logits = false;
};

class SelfAttention : public Module {
public:
    SelfAttention() = default;
    SelfAttention(Eigen::Index dim, Rng& rng);
    /// x: (batch*seq) x dim
    [[nodiscard]] Tensor forward(const Tensor& x, Eigen::Index batch, Eigen::Index seq, AttentionMask mask,
                                 std::span<const std::uint8_t> key_valid, bool scale_logits) const;
    void collect(std::vector<NamedTensor>& out, const std::string& prefix) const override;

private:
    Linear q_, k_, v_, o_;
};

/// Pre-LN block: x + Attn(LN(x)), then + MLP(LN(x)).
class DecoderBlock : public Module {
public:
    DecoderBlock() = default;
    DecoderBlock(const DecoderBlockCfg& cfg, Rng& rng);
    [[nodiscard]] Tensor forward(const Tensor& x, Eigen::Index batch, Eigen::Index seq,
                                 std::span<const std::uint8_t> key_valid = {}) const;
    void collect(std::vector<NamedTensor>& out, const std::string& prefix) const override;
    [[nodiscard]] const DecoderBlockCfg& cfg() const { return cfg_; }

private:
    DecoderBlockCfg cfg_;
    LayerNorm ln1_, ln2_;
    SelfAttention attn_;
    Linear fc1_, fc2_;
};

class DecoderStack : public Module {
public:
    DecoderStack() = default;
    DecoderStack(const DecoderBlockCfg& cfg, int n_blocks, Rng& rng);
    [[nodiscard]] Tensor forward(const Tensor& x, Eigen::Index batch, Eigen::Index seq,
                                 std::span<const std::uint8_t> key_valid = {}) const;
    void collect(std::vector<NamedTensor>& out, const std::string& prefix) const override;

private:
    std::vector<DecoderBlock> blocks_;
    LayerNorm ln_final_;
};

}  // namespace auvtrack::nn
