#include "auvtrack/nn/ops.hpp"

#include <cmath>
#include <limits>

namespace auvtrack::nn {

namespace {

inline bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

template <typename Expr>
inline void push(Node& self, std::size_t i, const Expr& g) {
    if (wants(self, i)) {
        self.parents[i]->accumulate(Matrix(g));
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ContractError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ContractError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + ")");
    }
    Matrix out;
    out.noalias() = a.value() * b.value();
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const Matrix& g = self.grad;
        if (wants(self, 0)) {
            Matrix ga;
            ga.noalias() = g * self.parents[1]->value.transpose();
            self.parents[0]->accumulate(ga);
        }
        if (wants(self, 1)) {
            Matrix gb;
            gb.noalias() = self.parents[0]->value.transpose() * g;
            self.parents[1]->accumulate(gb);
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw ContractError("matmul_nt: column counts differ");
    }
    Matrix out;
    out.noalias() = a.value() * b.value().transpose();
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const Matrix& g = self.grad;
        if (wants(self, 0)) {
            Matrix ga;
            ga.noalias() = g * self.parents[1]->value;
            self.parents[0]->accumulate(ga);
        }
        if (wants(self, 1)) {
            Matrix gb;
            gb.noalias() = g.transpose() * self.parents[0]->value;
            self.parents[1]->accumulate(gb);
        }
    });
}

Tensor transpose(const Tensor& a) {
    Matrix out = a.value().transpose();
    return make_result(std::move(out), {a}, [](Node& self) { push(self, 0, self.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
        push(self, 0, self.grad);
        push(self, 1, self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
        push(self, 0, self.grad);
        push(self, 1, -self.grad);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
        push(self, 0, self.grad.cwiseProduct(self.parents[1]->value));
        push(self, 1, self.grad.cwiseProduct(self.parents[0]->value));
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw ContractError("add_row: row must be 1x" + std::to_string(a.cols()));
    }
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make_result(std::move(out), {a, row}, [](Node& self) {
        push(self, 0, self.grad);
        push(self, 1, self.grad.colwise().sum());
    });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw ContractError("mul_row: row must be 1x" + std::to_string(a.cols()));
    }
    Matrix out = a.value().array().rowwise() * row.value().row(0).array();
    return make_result(std::move(out), {a, row}, [](Node& self) {
        const auto& r = self.parents[1]->value;
        push(self, 0, self.grad.array().rowwise() * r.row(0).array());
        push(self, 1, self.grad.cwiseProduct(self.parents[0]->value).colwise().sum());
    });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
    if (col.cols() != 1 || col.rows() != a.rows()) {
        throw ContractError("mul_col: column must be " + std::to_string(a.rows()) + "x1");
    }
    Matrix out = a.value().array().colwise() * col.value().col(0).array();
    return make_result(std::move(out), {a, col}, [](Node& self) {
        const auto& c = self.parents[1]->value;
        push(self, 0, self.grad.array().colwise() * c.col(0).array());
        push(self, 1, self.grad.cwiseProduct(self.parents[0]->value).rowwise().sum());
    });
}

Tensor add_col(const Tensor& a, const Tensor& col) {
    if (col.cols() != 1 || col.rows() != a.rows()) {
        throw ContractError("add_col: column must be " + std::to_string(a.rows()) + "x1");
    }
    Matrix out = a.value().colwise() + col.value().col(0);
    return make_result(std::move(out), {a, col}, [](Node& self) {
        push(self, 0, self.grad);
        push(self, 1, self.grad.rowwise().sum());
    });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw ContractError("div_scalar: divisor must be 1x1");
    }
    const double d = s.value()(0, 0);
    return make_result(a.value() / d, {a, s}, [d](Node& self) {
        push(self, 0, self.grad / d);
        if (wants(self, 1)) {
            const double gs = -(self.grad.cwiseProduct(self.parents[0]->value)).sum() / (d * d);
            Matrix g(1, 1);
            g(0, 0) = gs;
            self.parents[1]->accumulate(g);
        }
    });
}

Tensor add_scalar_tensor(const Tensor& a, const Tensor& s) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw ContractError("add_scalar_tensor: operand must be 1x1");
    }
    Matrix out = a.value().array() + s.value()(0, 0);
    return make_result(std::move(out), {a, s}, [](Node& self) {
        push(self, 0, self.grad);
        if (wants(self, 1)) {
            Matrix g(1, 1);
            g(0, 0) = self.grad.sum();
            self.parents[1]->accumulate(g);
        }
    });
}

Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw ContractError("mul_scalar_tensor: operand must be 1x1");
    }
    const double c = s.value()(0, 0);
    return make_result(a.value() * c, {a, s}, [c](Node& self) {
        push(self, 0, self.grad * c);
        if (wants(self, 1)) {
            Matrix g(1, 1);
            g(0, 0) = self.grad.cwiseProduct(self.parents[0]->value).sum();
            self.parents[1]->accumulate(g);
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    return make_result(a.value() * c, {a}, [c](Node& self) { push(self, 0, self.grad * c); });
}

Tensor add_scalar(const Tensor& a, double c) {
    Matrix out = a.value().array() + c;
    return make_result(std::move(out), {a}, [](Node& self) { push(self, 0, self.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor min_elem(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "min_elem");
    Matrix out = a.value().cwiseMin(b.value());
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        push(self, 0, (av.array() <= bv.array()).select(self.grad, 0.0));
        push(self, 1, (av.array() <= bv.array()).select(0.0, self.grad));
    });
}

Tensor relu(const Tensor& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0, (self.parents[0]->value.array() > 0.0).select(self.grad, 0.0));
    });
}

Tensor tanh(const Tensor& a) {
    Matrix out = a.value().array().tanh();
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0, self.grad.array() * (1.0 - self.value.array().square()));
    });
}

Tensor sigmoid(const Tensor& a) {
    Matrix out = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0, self.grad.array() * self.value.array() * (1.0 - self.value.array()));
    });
}

Tensor exp(const Tensor& a) {
    Matrix out = a.value().array().exp();
    return make_result(std::move(out), {a}, [](Node& self) { push(self, 0, self.grad.cwiseProduct(self.value)); });
}

Tensor log(const Tensor& a) {
    Matrix out = a.value().array().log();
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0, self.grad.array() / self.parents[0]->value.array());
    });
}

Tensor softplus(const Tensor& a) {
    Matrix out = a.value().unaryExpr([](double x) { return softplus_scalar(x); });
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0,
             self.grad.array() * self.parents[0]->value.unaryExpr([](double x) { return sigmoid_scalar(x); }).array());
    });
}

Tensor log_sigmoid(const Tensor& a) {
    Matrix out = a.value().unaryExpr([](double x) { return -softplus_scalar(-x); });
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0,
             self.grad.array() * self.parents[0]->value.unaryExpr([](double x) { return sigmoid_scalar(-x); }).array());
    });
}

Tensor square(const Tensor& a) {
    Matrix out = a.value().array().square();
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0, 2.0 * self.grad.cwiseProduct(self.parents[0]->value));
    });
}

Tensor sqrt(const Tensor& a) {
    Matrix out = a.value().array().sqrt();
    return make_result(std::move(out), {a}, [](Node& self) {
        push(self, 0, 0.5 * self.grad.array() / self.value.array());
    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
    return make_result(std::move(out), {a}, [lo, hi](Node& self) {
        const auto& x = self.parents[0]->value.array();
        push(self, 0, ((x > lo) && (x < hi)).select(self.grad, 0.0));
    });
}

Tensor sum(const Tensor& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make_result(std::move(out), {a}, [](Node& self) {
        const auto& pv = self.parents[0]->value;
        push(self, 0, Matrix::Constant(pv.rows(), pv.cols(), self.grad(0, 0)));
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.value().size());
    Matrix out(1, 1);
    out(0, 0) = a.value().sum() / n;
    return make_result(std::move(out), {a}, [n](Node& self) {
        const auto& pv = self.parents[0]->value;
        push(self, 0, Matrix::Constant(pv.rows(), pv.cols(), self.grad(0, 0) / n));
    });
}

Tensor sum_cols(const Tensor& a) {
    Matrix out = a.value().rowwise().sum();
    return make_result(std::move(out), {a}, [](Node& self) {
        const auto& pv = self.parents[0]->value;
        Matrix g(pv.rows(), pv.cols());
        g.colwise() = self.grad.col(0);
        push(self, 0, g);
    });
}

Tensor mean_rows(const Tensor& a) {
    const double n = static_cast<double>(a.rows());
    Matrix out = a.value().colwise().mean();
    return make_result(std::move(out), {a}, [n](Node& self) {
        const auto& pv = self.parents[0]->value;
        Matrix g(pv.rows(), pv.cols());
        g.rowwise() = self.grad.row(0) / n;
        push(self, 0, g);
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ContractError("concat_cols: no operands");
    }
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw ContractError("concat_cols: row counts differ");
        }
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        out.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    return make_result(std::move(out), parts, [offsets](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            push(self, i, self.grad.middleCols(offsets[i], self.parents[i]->value.cols()));
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ContractError("concat_rows: no operands");
    }
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) {
            throw ContractError("concat_rows: column counts differ");
        }
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        out.middleRows(off, p.rows()) = p.value();
        off += p.rows();
    }
    return make_result(std::move(out), parts, [offsets](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            push(self, i, self.grad.middleRows(offsets[i], self.parents[i]->value.rows()));
        }
    });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) {
        throw ContractError("slice_cols: out of range");
    }
    Matrix out = a.value().middleCols(start, count);
    return make_result(std::move(out), {a}, [start, count](Node& self) {
        if (wants(self, 0)) {
            Matrix& g = self.parents[0]->grad_ref();
            g.middleCols(start, count) += self.grad;
        }
    });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) {
        throw ContractError("slice_rows: out of range");
    }
    Matrix out = a.value().middleRows(start, count);
    return make_result(std::move(out), {a}, [start, count](Node& self) {
        if (wants(self, 0)) {
            Matrix& g = self.parents[0]->grad_ref();
            g.middleRows(start, count) += self.grad;
        }
    });
}

Tensor gather_rows(const Tensor& a, std::span<const Eigen::Index> index) {
    Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.rows()) {
            throw ContractError("gather_rows: index out of range");
        }
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
    }
    std::vector<Eigen::Index> idx(index.begin(), index.end());
    return make_result(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
        if (wants(self, 0)) {
            Matrix& g = self.parents[0]->grad_ref();
            for (std::size_t i = 0; i < idx.size(); ++i) {
                g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
            }
        }
    });
}

Tensor softmax_rows(const Tensor& a) {
    Matrix out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double mx = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    return make_result(std::move(out), {a}, [](Node& self) {
        const Matrix& y = self.value;
        Eigen::VectorXd dot = self.grad.cwiseProduct(y).rowwise().sum();
        Matrix g = y.array() * (self.grad.colwise() - dot).array();
        push(self, 0, g);
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const Eigen::Index n = x.rows();
    const Eigen::Index m = x.cols();
    if (gain.rows() != 1 || gain.cols() != m || bias.rows() != 1 || bias.cols() != m) {
        throw ContractError("layer_norm: gain/bias must be 1x" + std::to_string(m));
    }
    Matrix xhat(n, m);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mu = x.value().row(r).mean();
        const double var = (x.value().row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
    }
    Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    return make_result(std::move(out), {x, gain, bias},
                       [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           const Matrix& dy = self.grad;
                           const auto& g = self.parents[1]->value;
                           if (wants(self, 0)) {
                               Matrix dxhat = dy.array().rowwise() * g.row(0).array();
                               const double m = static_cast<double>(dxhat.cols());
                               Eigen::VectorXd mean_d = dxhat.rowwise().sum() / m;
                               Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().sum() / m;
                               Matrix dx = dxhat;
                               dx.colwise() -= mean_d;
                               dx -= (xhat.array().colwise() * mean_dx.array()).matrix();
                               dx = dx.array().colwise() * inv_std.array();
                               self.parents[0]->accumulate(dx);
                           }
                           push(self, 1, dy.cwiseProduct(xhat).colwise().sum());
                           push(self, 2, dy.colwise().sum());
                       });
}

namespace {

// Softmax over the allowed keys of one row; rows with no allowed key stay zero.
void masked_softmax_inplace(Matrix& s, AttentionMask mask, const std::uint8_t* key_valid) {
    const Eigen::Index t = s.rows();
    for (Eigen::Index i = 0; i < t; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < t; ++j) {
            const bool allowed = (mask != AttentionMask::kCausal || j <= i) && (!key_valid || key_valid[j]);
            if (allowed) {
                mx = std::max(mx, s(i, j));
            }
        }
        if (!std::isfinite(mx)) {
            s.row(i).setZero();
            continue;
        }
        double total = 0.0;
        for (Eigen::Index j = 0; j < t; ++j) {
            const bool allowed = (mask != AttentionMask::kCausal || j <= i) && (!key_valid || key_valid[j]);
            const double e = allowed ? std::exp(s(i, j) - mx) : 0.0;
            s(i, j) = e;
            total += e;
        }
        s.row(i) /= total;
    }
}

}  // namespace

Matrix attention_weights(const Matrix& q, const Matrix& k, AttentionMask mask, bool scale_logits) {
    const double c = scale_logits ? 1.0 / std::sqrt(static_cast<double>(q.cols())) : 1.0;
    Matrix s = (q * k.transpose()) * c;
    masked_softmax_inplace(s, mask, nullptr);
    return s;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, Eigen::Index batch, Eigen::Index seq_len,
                 AttentionMask mask, std::span<const std::uint8_t> key_valid, bool scale_logits) {
    const Eigen::Index d = q.cols();
    if (q.rows() != batch * seq_len || k.rows() != q.rows() || v.rows() != q.rows() || k.cols() != d) {
        throw ContractError("attention: operand shapes do not match batch*seq_len");
    }
    if (!key_valid.empty() && static_cast<Eigen::Index>(key_valid.size()) != batch * seq_len) {
        throw ContractError("attention: key mask length mismatch");
    }
    const double c = scale_logits ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
    std::vector<Matrix> probs(static_cast<std::size_t>(batch));
    Matrix out(q.rows(), v.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
        const Eigen::Index off = b * seq_len;
        Matrix s;
        s.noalias() = q.value().middleRows(off, seq_len) * k.value().middleRows(off, seq_len).transpose();
        s *= c;
        masked_softmax_inplace(s, mask, key_valid.empty() ? nullptr : key_valid.data() + off);
        out.middleRows(off, seq_len).noalias() = s * v.value().middleRows(off, seq_len);
        probs[static_cast<std::size_t>(b)] = std::move(s);
    }
    return make_result(std::move(out), {q, k, v}, [probs = std::move(probs), batch, seq_len, c](Node& self) {
        const Matrix& dout = self.grad;
        const Matrix& qv = self.parents[0]->value;
        const Matrix& kv = self.parents[1]->value;
        const Matrix& vv = self.parents[2]->value;
        Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
        Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
        Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
            const Eigen::Index off = b * seq_len;
            const Matrix& p = probs[static_cast<std::size_t>(b)];
            const auto g = dout.middleRows(off, seq_len);
            dv.middleRows(off, seq_len).noalias() = p.transpose() * g;
            Matrix dp;
            dp.noalias() = g * vv.middleRows(off, seq_len).transpose();
            Eigen::VectorXd dot = dp.cwiseProduct(p).rowwise().sum();
            Matrix ds = p.array() * (dp.colwise() - dot).array();
            ds *= c;
            dq.middleRows(off, seq_len).noalias() = ds * kv.middleRows(off, seq_len);
            dk.middleRows(off, seq_len).noalias() = ds.transpose() * qv.middleRows(off, seq_len);
        }
        if (wants(self, 0)) self.parents[0]->accumulate(dq);
        if (wants(self, 1)) self.parents[1]->accumulate(dk);
        if (wants(self, 2)) self.parents[2]->accumulate(dv);
    });
}

}  // namespace auvtrack::nn
