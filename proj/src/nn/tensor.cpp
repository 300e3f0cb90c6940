#include "auvtrack/nn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace auvtrack::nn {

namespace {

std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

thread_local bool g_no_grad = false;
thread_local bool g_frozen_state = false;

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = prev_; }
bool NoGradGuard::active() { return g_no_grad; }

FrozenStateGuard::FrozenStateGuard() : prev_(g_frozen_state) { g_frozen_state = true; }
FrozenStateGuard::~FrozenStateGuard() { g_frozen_state = prev_; }
bool FrozenStateGuard::active() { return g_frozen_state; }

Matrix& Node::grad_ref() {
    if (grad.size() == 0) {
        grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
}

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Tensor Tensor::parameter(Matrix value, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->is_leaf = true;
    n->id = next_id();
    n->name = std::move(name);
    return Tensor(std::move(n));
}

Tensor Tensor::constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = false;
    n->is_leaf = true;
    n->id = next_id();
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

const Matrix& Tensor::grad() const {
    if (node_->grad.size() == 0) {
        node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
    }
    return node_->grad;
}

double Tensor::item() const {
    if (node_->value.size() != 1) {
        throw ContractError("item() on non-scalar tensor");
    }
    return node_->value(0, 0);
}

void Tensor::zero_grad() {
    node_->grad.resize(0, 0);
}

Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = next_id();
    n->is_leaf = false;
    if (g_no_grad) {
        return Tensor(std::move(n));
    }
    bool any = false;
    for (const auto& p : parents) {
        if (p.node()->consumed && !p.node()->is_leaf) {
            throw ContractError("operand belongs to a tape that was already consumed by backward()");
        }
        if (p.requires_grad()) {
            any = true;
        }
    }
    if (any) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) {
            n->parents.push_back(p.node());
        }
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) {
        throw ContractError("backward on undefined tensor");
    }
    const NodePtr& root = loss.node();
    if (root->value.rows() != 1 || root->value.cols() != 1) {
        throw ContractError("backward requires a scalar loss, got " + std::to_string(root->value.rows()) + "x" +
                            std::to_string(root->value.cols()));
    }
    if (root->consumed) {
        throw ContractError("backward called twice on the same tape; re-run the forward pass");
    }
    root->consumed = true;
    if (!root->requires_grad) {
        return;  // constant loss: every gradient is zero
    }

    // Iterative post-order DFS; interior nodes only.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !p->is_leaf && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    Matrix one(1, 1);
    one(0, 0) = 1.0;
    root->accumulate(one);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->grad.size() != 0 && n->backward_fn) {
            n->backward_fn(*n);
        }
    }
    // Release the interior of the tape.
    for (Node* n : order) {
        n->backward_fn = nullptr;
        n->parents.clear();
        n->consumed = true;
        if (n != root.get()) {
            n->grad.resize(0, 0);
        }
    }
}

double gradient_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params, double h) {
    const FrozenStateGuard frozen;
    for (auto& p : params) {
        p.zero_grad();
    }
    backward(loss_fn());
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        analytic.push_back(p.grad());
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& v = params[k].mutable_value();
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                const double orig = v(i, j);
                v(i, j) = orig + h;
                const double fp = loss_fn().item();
                v(i, j) = orig - h;
                const double fm = loss_fn().item();
                v(i, j) = orig;
                const double numeric = (fp - fm) / (2.0 * h);
                const double a = analytic[k](i, j);
                const double denom = std::max({1e-6, std::abs(a), std::abs(numeric)});
                worst = std::max(worst, std::abs(a - numeric) / denom);
            }
        }
    }
    for (auto& p : params) {
        p.zero_grad();
    }
    return worst;
}

}  // namespace auvtrack::nn
