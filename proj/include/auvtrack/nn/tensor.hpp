#pragma once

#include "auvtrack/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace auvtrack::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised when the autodiff contract is violated (non-scalar loss, reused tape, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

using auvtrack::NumericFault;

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. Leaves with `requires_grad` are
/// parameters; interior nodes carry a closure that pushes their gradient
/// into their parents.
struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    std::uint64_t id = 0;
    std::string name;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Matrix& grad_ref();
    void accumulate(const Matrix& g);
};

/// Handle to a tape node. Copying a Tensor shares the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    /// Trainable leaf.
    static Tensor parameter(Matrix value, std::string name = {});
    /// Leaf that never receives a gradient.
    static Tensor constant(Matrix value);
    static Tensor scalar(double v);

    [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
    [[nodiscard]] const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    [[nodiscard]] const Matrix& grad() const;
    [[nodiscard]] bool has_grad() const { return node_->grad.size() != 0; }
    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
    [[nodiscard]] std::uint64_t id() const { return node_->id; }
    [[nodiscard]] const std::string& name() const { return node_->name; }
    [[nodiscard]] double item() const;

    void zero_grad();
    /// Detached copy sharing nothing with the tape.
    [[nodiscard]] Tensor detach() const { return constant(node_->value); }

    [[nodiscard]] const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

/// While alive, ops on this thread record no tape (results are constants).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
    static bool active();

private:
    bool prev_;
};

/// While alive, forward passes on this thread leave layer state alone (the
/// spectral-norm power iteration), so repeated evaluations see one function.
class FrozenStateGuard {
public:
    FrozenStateGuard();
    ~FrozenStateGuard();
    FrozenStateGuard(const FrozenStateGuard&) = delete;
    FrozenStateGuard& operator=(const FrozenStateGuard&) = delete;
    static bool active();

private:
    bool prev_;
};

/// Build an interior node. If no parent requires grad the result is a
/// constant and `backward_fn` is discarded.
Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from a scalar loss. The interior of the tape is
/// released afterwards; a second call on the same loss throws ContractError.
void backward(const Tensor& loss);

/// Central finite-difference check of d(loss)/d(param) for every entry of
/// every parameter. Returns the max relative error
/// |analytic - numeric| / max(1e-6, |analytic|, |numeric|). Layer state is
/// frozen for the duration (FrozenStateGuard).
double gradient_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params, double h = 1e-5);

}  // namespace auvtrack::nn
