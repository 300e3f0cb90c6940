#include "auvtrack/sac.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/nn/distributions.hpp"

#include <cmath>
#include <sstream>

namespace auvtrack {

using nn::Matrix;
using nn::Tensor;

namespace {

std::vector<Eigen::Index> mlp_sizes(int in, int hidden, int layers, int out) {
    std::vector<Eigen::Index> s{in};
    for (int i = 0; i < layers; ++i) {
        s.push_back(hidden);
    }
    s.push_back(out);
    return s;
}

Matrix scale_cols(const Matrix& m, const Eigen::VectorXd& s) {
    if (s.size() == 0) {
        return m;
    }
    return m * s.asDiagonal();
}

void check_finite(double v, const char* what, long step) {
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "sac " << what << " is not finite at update " << step;
        throw NumericFault(os.str());
    }
}

}  // namespace

SacAgent::SacAgent(SacConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
    if (cfg_.obs_dim <= 0 || cfg_.act_dim <= 0) {
        throw ConfigError("sac: obs_dim and act_dim must be positive");
    }
    if (std::isnan(cfg_.target_entropy)) {
        cfg_.target_entropy = -static_cast<double>(cfg_.act_dim);
    }
    actor_ = nn::Mlp(mlp_sizes(cfg_.obs_dim, cfg_.hidden, cfg_.hidden_layers, 2 * cfg_.act_dim), rng_);
    const int qin = cfg_.obs_dim + cfg_.act_dim + cfg_.ctx_dim;
    q1_ = nn::Mlp(mlp_sizes(qin, cfg_.hidden, cfg_.hidden_layers, 1), rng_);
    q2_ = nn::Mlp(mlp_sizes(qin, cfg_.hidden, cfg_.hidden_layers, 1), rng_);
    q1_target_ = q1_.clone();
    q2_target_ = q2_.clone();
    log_alpha_ = Tensor::parameter(Matrix::Constant(1, 1, std::log(cfg_.init_alpha)), "log_alpha");

    nn::AdamConfig ac;
    ac.lr = cfg_.lr;
    actor_opt_ = nn::Adam(actor_.named_parameters("actor."), ac);
    auto qp = q1_.named_parameters("q1.");
    auto q2p = q2_.named_parameters("q2.");
    qp.insert(qp.end(), q2p.begin(), q2p.end());
    critic_opt_ = nn::Adam(qp, ac);
    alpha_opt_ = nn::Adam({{"log_alpha", log_alpha_, true}}, ac);
}

Matrix SacAgent::scaled_obs(const Matrix& obs) const { return scale_cols(obs, cfg_.obs_scale); }

SacAgent::Head SacAgent::policy(const Matrix& obs) const {
    Tensor out = actor_.forward(Tensor::constant(scaled_obs(obs)));
    Tensor mean = nn::slice_cols(out, 0, cfg_.act_dim);
    Tensor raw = nn::slice_cols(out, cfg_.act_dim, cfg_.act_dim);
    // Smooth squash into [log_std_min, log_std_max].
    const double half = 0.5 * (cfg_.log_std_max - cfg_.log_std_min);
    Tensor log_std = nn::add_scalar(nn::scale(nn::add_scalar(nn::tanh(raw), 1.0), half), cfg_.log_std_min);
    return {mean, log_std};
}

Tensor SacAgent::critic_in(const Matrix& obs, const Tensor& act, const Matrix& ctx) const {
    std::vector<Tensor> parts{Tensor::constant(scaled_obs(obs)), act};
    if (cfg_.ctx_dim > 0) {
        parts.push_back(Tensor::constant(scale_cols(ctx, cfg_.ctx_scale)));
    }
    return nn::concat_cols(parts);
}

Eigen::VectorXd SacAgent::act(const Eigen::VectorXd& obs, bool deterministic) {
    Matrix m = act_batch(obs.transpose(), deterministic);
    return m.row(0).transpose();
}

Matrix SacAgent::mean_action(const Matrix& obs) const {
    nn::NoGradGuard ng;
    return policy(obs).mean.value().array().tanh();
}

Matrix SacAgent::act_batch(const Matrix& obs, bool deterministic) {
    if (deterministic) {
        return mean_action(obs);
    }
    nn::NoGradGuard ng;
    Head h = policy(obs);
    Matrix eps = nn::randn(obs.rows(), cfg_.act_dim, rng_);
    return nn::squashed_gaussian(h.mean, h.log_std, eps).action.value();
}

Matrix SacAgent::sample(const Matrix& obs, Matrix* log_prob) {
    nn::NoGradGuard ng;
    Head h = policy(obs);
    Matrix eps = nn::randn(obs.rows(), cfg_.act_dim, rng_);
    auto s = nn::squashed_gaussian(h.mean, h.log_std, eps);
    if (log_prob != nullptr) {
        *log_prob = s.log_prob.value();
    }
    return s.action.value();
}

Matrix SacAgent::q_value(const Matrix& obs, const Matrix& act, const Matrix& ctx) const {
    nn::NoGradGuard ng;
    Tensor in = critic_in(obs, Tensor::constant(act), ctx);
    return q1_.forward(in).value().cwiseMin(q2_.forward(in).value());
}

double SacAgent::alpha() const { return std::exp(log_alpha_.value()(0, 0)); }

SacStats SacAgent::update(const SacBatch& b) {
    SacStats st;
    const Eigen::Index n = b.obs.rows();
    const double alpha = this->alpha();
    st.alpha = alpha;

    // Soft TD target.
    Matrix y;
    {
        nn::NoGradGuard ng;
        Matrix logp_next;
        Matrix a_next = sample(b.next_obs, &logp_next);
        if (b.next_absorbing.size() != 0) {
            for (Eigen::Index r = 0; r < n; ++r) {
                if (b.next_absorbing(r, 0) > 0.5) {
                    a_next.row(r).setZero();
                    logp_next(r, 0) = 0.0;
                }
            }
        }
        Tensor in = critic_in(b.next_obs, Tensor::constant(a_next), b.next_ctx);
        Matrix qn = q1_target_.forward(in).value().cwiseMin(q2_target_.forward(in).value());
        y = b.rew.array() + cfg_.gamma * b.mask.array() * (qn.array() - alpha * logp_next.array());
    }

    Tensor in = critic_in(b.obs, Tensor::constant(b.act), b.ctx);
    Tensor target = Tensor::constant(y);
    Tensor q1 = q1_.forward(in);
    Tensor q2 = q2_.forward(in);
    Tensor critic_loss = nn::add(nn::mean(nn::square(nn::sub(q1, target))), nn::mean(nn::square(nn::sub(q2, target))));
    st.critic_loss = critic_loss.item();
    st.q_mean = q1.value().mean();
    check_finite(st.critic_loss, "critic loss", updates_);
    nn::backward(critic_loss);
    critic_opt_.step();

    Head h = policy(b.obs);
    Matrix eps = nn::randn(n, cfg_.act_dim, rng_);
    auto s = nn::squashed_gaussian(h.mean, h.log_std, eps);
    Tensor pin = critic_in(b.obs, s.action, b.ctx);
    Tensor qpi = nn::min_elem(q1_.forward(pin), q2_.forward(pin));
    Tensor actor_loss = nn::mean(nn::sub(nn::scale(s.log_prob, alpha), qpi));
    st.actor_loss = actor_loss.item();
    check_finite(st.actor_loss, "actor loss", updates_);
    nn::backward(actor_loss);
    actor_opt_.step();
    critic_opt_.zero_grad();

    const Matrix& logp = s.log_prob.value();
    st.entropy = -logp.mean();
    Matrix coef = (logp.array() + cfg_.target_entropy).matrix();
    Tensor alpha_loss = nn::neg(nn::mean(nn::mul_scalar_tensor(Tensor::constant(coef), log_alpha_)));
    st.alpha_loss = alpha_loss.item();
    nn::backward(alpha_loss);
    alpha_opt_.step();

    nn::polyak_update(q1_, q1_target_, cfg_.tau);
    nn::polyak_update(q2_, q2_target_, cfg_.tau);
    ++updates_;
    return st;
}

void SacAgent::collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const {
    actor_.collect(out, prefix + "actor.");
    q1_.collect(out, prefix + "q1.");
    q2_.collect(out, prefix + "q2.");
    q1_target_.collect(out, prefix + "q1_target.");
    q2_target_.collect(out, prefix + "q2_target.");
    out.push_back({prefix + "log_alpha", log_alpha_, true});
}

}  // namespace auvtrack
