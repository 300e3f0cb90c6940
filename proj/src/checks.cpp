#include "auvtrack/checks.hpp"

#include "auvtrack/acoustics.hpp"
#include "auvtrack/errors.hpp"
#include "auvtrack/eval.hpp"
#include "auvtrack/nn/distributions.hpp"
#include "auvtrack/nn/layers.hpp"
#include "auvtrack/swarm.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>

namespace auvtrack {

namespace {

CheckResult make(const std::string& suite, const std::string& name, bool ok, double value, std::string detail) {
    return {suite, name, ok, value, std::move(detail)};
}

// Seawater absorption written out from the empirical fit, in dB/km.
double oracle_alpha(double f) {
    const double f2 = f * f;
    return 0.11 * f2 / (1 + f2) + 44 * f2 / (4100 + f2) + 2.75e-4 * f2 + 0.003;
}

double oracle_em(double d, const HydroParams& h) {
    const double tl = 20 * std::log10(d) + oracle_alpha(h.f) * d / 1000;
    return h.sl - 2 * tl + h.ts - (h.nl - h.di) - h.dt_thresh;
}

// Newton on EM(d) = 0 from the spreading-only root.
double oracle_radius(const HydroParams& h) {
    const double budget = h.sl + h.ts - (h.nl - h.di) - h.dt_thresh;
    double d = std::pow(10.0, budget / 40.0);
    for (int it = 0; it < 50; ++it) {
        const double em = oracle_em(d, h);
        const double slope = -2 * (20 / (d * std::log(10.0)) + oracle_alpha(h.f) / 1000);
        d -= em / slope;
    }
    return d;
}

std::vector<CheckResult> sonar() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CheckResult> out;
    HydroParams hp;
    const double a = thorp_alpha(10.0);
    out.push_back(make("sonar", "thorp_alpha(10 kHz)", std::abs(a - 1.18703) <= 1e-5 &&
                                                           std::abs(a - oracle_alpha(10.0)) < 1e-12,
                       a, fmt::format("alpha = {:.6f} dB/km", a)));
    const double rc = detection_radius(hp);
    const double ro = oracle_radius(hp);
    out.push_back(make("sonar", "detection radius", std::abs(rc - 25.03) <= 0.05 && std::abs(rc - ro) < 1e-3, rc,
                       fmt::format("r_c = {:.2f} m (bisection {:.5f}, closed-form root {:.5f})", rc, rc, ro)));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(make("sonar", "runtime", secs < 1.0, secs, fmt::format("{:.4f} s", secs)));
    return out;
}

// det(M) by cofactor expansion; fine for n <= 4.
double cofactor_det(const Eigen::MatrixXd& m) {
    const auto n = m.rows();
    if (n == 1) return m(0, 0);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::MatrixXd minor(n - 1, n - 1);
        for (Eigen::Index r = 1; r < n; ++r) {
            Eigen::Index c2 = 0;
            for (Eigen::Index c = 0; c < n; ++c) {
                if (c != j) minor(r - 1, c2++) = m(r, c);
            }
        }
        acc += ((j % 2 == 0) ? 1.0 : -1.0) * m(0, j) * cofactor_det(minor);
    }
    return acc;
}

std::vector<CheckResult> laplacian() {
    std::vector<CheckResult> out;
    HydroParams hp;
    const double lam = swarm_consistency({{0, 0}, {12, 0}}, hp);
    const double oracle = 2 * (hp.sl - (20 * std::log10(12.0) + oracle_alpha(hp.f) * 12 / 1000) - hp.nl + hp.di);
    out.push_back(make("laplacian", "two agents at 12 m", std::abs(lam - 102.80) <= 0.02 && std::abs(lam - oracle) < 1e-9,
                       lam, fmt::format("lambda = {:.4f}", lam)));
    for (int n = 2; n <= 4; ++n) {
        std::vector<Eigen::Vector2d> pts;
        for (int i = 0; i < n; ++i) {
            const double a = 2 * M_PI * i / n;
            pts.emplace_back(9 * std::cos(a), 9 * std::sin(a));
        }
        const SwarmGraph g = build_laplacian(pts, hp);
        const Eigen::VectorXd ev = jacobi_eigenvalues(g.laplacian);
        const double scale = std::pow(std::max(1.0, ev.cwiseAbs().maxCoeff()), n);
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            const Eigen::MatrixXd shifted = g.laplacian - ev(i) * Eigen::MatrixXd::Identity(n, n);
            worst = std::max(worst, std::abs(cofactor_det(shifted)) / scale);
        }
        out.push_back(make("laplacian", fmt::format("spectrum roots of det(L - xI), n = {}", n), worst < 1e-9, worst,
                           fmt::format("max |p(x)| / scale = {:.3g}", worst)));
    }
    return out;
}

constexpr double kGradTol = 1e-4;

nn::Tensor project(const nn::Tensor& y, const nn::Matrix& r) { return nn::sum(nn::mul(y, nn::Tensor::constant(r))); }

std::vector<CheckResult> gradient() {
    std::vector<CheckResult> out;
    nn::Rng rng(12345);
    auto grad_case = [&](const std::string& name, const std::function<nn::Tensor()>& f,
                         const std::vector<nn::Tensor>& params) {
        const double err = nn::gradient_check(f, params);
        out.push_back(make("gradient", name, err < kGradTol, err, fmt::format("max rel err {:.3g}", err)));
    };
    const nn::Matrix x = nn::randn(6, 4, rng);
    const nn::Matrix r4 = nn::randn(6, 4, rng), r2 = nn::randn(6, 2, rng), r1 = nn::randn(6, 1, rng);

    nn::Linear lin(4, 4, rng);
    grad_case("linear", [&] { return project(lin.forward(nn::Tensor::constant(x)), r4); }, lin.parameters());
    nn::Mlp relu({4, 8, 2}, rng, nn::Activation::kRelu);
    grad_case("mlp relu", [&] { return project(relu.forward(nn::Tensor::constant(x)), r2); }, relu.parameters());
    nn::Mlp th({4, 8, 2}, rng, nn::Activation::kTanh);
    grad_case("mlp tanh", [&] { return project(th.forward(nn::Tensor::constant(x)), r2); }, th.parameters());
    nn::LayerNorm ln(4);
    nn::Tensor xp = nn::Tensor::parameter(x);
    auto lnp = ln.parameters();
    lnp.push_back(xp);
    grad_case("layer norm", [&] { return project(ln.forward(xp), r4); }, lnp);
    nn::Tensor q = nn::Tensor::parameter(nn::randn(6, 4, rng)), k = nn::Tensor::parameter(nn::randn(6, 4, rng)),
               v = nn::Tensor::parameter(nn::randn(6, 4, rng));
    grad_case("causal attention",
              [&] { return project(nn::attention(q, k, v, 2, 3, nn::AttentionMask::kCausal, {}, false), r4); },
              {q, k, v});
    nn::DecoderBlockCfg bc;
    bc.embed_dim = 4;
    bc.mlp_hidden = 8;
    nn::DecoderBlock block(bc, rng);
    grad_case("decoder block", [&] { return project(block.forward(nn::Tensor::constant(x), 2, 3), r4); },
              block.parameters());
    nn::Mlp head({4, 6, 1}, rng);
    grad_case("log-sigmoid head",
              [&] { return nn::mean(nn::neg(nn::log_sigmoid(head.forward(nn::Tensor::constant(x))))); },
              head.parameters());
    nn::Tensor mu = nn::Tensor::parameter(nn::randn(6, 2, rng));
    nn::Tensor ls = nn::Tensor::parameter(0.3 * nn::randn(6, 2, rng));
    const nn::Matrix eps = nn::randn(6, 2, rng);
    grad_case("squashed gaussian",
              [&] {
                  auto s = nn::squashed_gaussian(mu, ls, eps);
                  return nn::add(project(s.action, r2), nn::sum(s.log_prob));
              },
              {mu, ls});
    nn::Linear sn(4, 4, rng, true);
    sn.power_iterate(200);
    grad_case("spectral linear", [&] { return project(sn.forward(nn::Tensor::constant(x)), r4); }, sn.parameters());
    nn::Mlp deep({4, 6, 1}, rng, nn::Activation::kTanh);
    const nn::Matrix xe = nn::randn(6, 4, rng);
    const nn::Matrix mix = nn::Matrix::Constant(6, 1, 0.3);
    grad_case("gradient penalty", [&] { return nn::gradient_penalty_at(deep, x, xe, mix, 1.0); }, deep.parameters());
    (void)r1;

    // Spectral bound against a full SVD.
    double lo = 1e9, hi = 0.0;
    for (int t = 0; t < 10; ++t) {
        nn::Linear l(8 + t, 16, rng, true);
        l.weight().mutable_value() *= 1.0 + 2.0 * t;
        l.power_iterate(100);
        const double s = Eigen::JacobiSVD<nn::Matrix>(l.effective_weight().value()).singularValues()(0);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    out.push_back(make("gradient", "spectral norm top singular value", lo >= 0.95 && hi <= 1.05, hi,
                       fmt::format("range [{:.4f}, {:.4f}]", lo, hi)));

    nn::Mlp unit({4, 1}, rng);
    Eigen::Vector4d w(1, 2, -2, 4);
    unit.layers()[0].weight().mutable_value() = w.normalized();
    const double gp = nn::gradient_penalty(unit, x, xe, 1.0, rng).item();
    out.push_back(make("gradient", "gradient penalty of unit-norm linear critic", gp == 0.0, gp,
                       fmt::format("gp = {:.3g}", gp)));
    return out;
}

std::vector<CheckResult> lemma1() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const int s = 1 + static_cast<int>(seed % 6);
        const int a1 = 1 + static_cast<int>((seed / 6) % 3);
        const int a2 = 1 + static_cast<int>((seed / 18) % 3);
        worst = std::max(worst, lemma1_residual(random_markov_game(s, a1, a2, 0.9, seed)));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {make("lemma1", "residual over 100 random games", worst < 1e-8, worst, fmt::format("max |f_r| = {:.3g}", worst)),
            make("lemma1", "runtime", secs < 30.0, secs, fmt::format("{:.3f} s", secs))};
}

}  // namespace

std::vector<std::string> check_suites() { return {"sonar", "laplacian", "gradient", "lemma1"}; }

std::vector<CheckResult> run_check_suite(const std::string& suite) {
    if (suite == "sonar") return sonar();
    if (suite == "laplacian") return laplacian();
    if (suite == "gradient") return gradient();
    if (suite == "lemma1") return lemma1();
    throw ConfigError("unknown check suite '" + suite + "'");
}

}  // namespace auvtrack
