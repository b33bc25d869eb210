#include <doctest.h>

#include <filesystem>

#include "specadv/models.hpp"
#include "specadv/rng.hpp"

using namespace specadv;

namespace {

Eigen::ArrayXXcd random_complex(uint64_t seed, Eigen::Index r, Eigen::Index c) {
    Rng rng(seed);
    Eigen::ArrayXXcd z(r, c);
    rng.fill_complex_unit(z);
    return z;
}

std::string temp_prefix(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("OUVE diffusion coefficient hits its endpoint values") {
    SdeConfig sde;  // gamma 1.5, sigma 0.05..0.5, T=1
    CHECK(sde.g(0.0) == doctest::Approx(0.1072983).epsilon(1e-6));
    CHECK(sde.g(1.0) == doctest::Approx(1.0729830).epsilon(1e-6));
    CHECK(sde.g(1.0) / sde.g(0.0) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK_THROWS_AS(sde.g(-0.01), std::invalid_argument);
    CHECK_THROWS_AS(sde.g(1.01), std::invalid_argument);
}

TEST_CASE("perturbation-kernel std matches the closed form") {
    SdeConfig sde;
    CHECK(sde.sigma(0.0) == doctest::Approx(0.0));
    CHECK(sde.sigma(1.0) == doctest::Approx(0.389).epsilon(1e-3));
    // brute-force the closed form at an interior point
    const double t = 0.37;
    const double logr = std::log(10.0);
    const double v = 0.0025 * (std::pow(10.0, 2 * t) - std::exp(-3.0 * t)) * logr / (1.5 + logr);
    CHECK(sde.sigma(t) == doctest::Approx(std::sqrt(v)).epsilon(1e-12));
    CHECK(sde.mean_coef(1.0) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));
}

TEST_CASE("sde config validation") {
    SdeConfig sde;
    sde.sigma_min = 0.6;  // above sigma_max
    CHECK_THROWS_AS(sde.validate(), std::invalid_argument);
    sde = SdeConfig{};
    sde.n_steps = 0;
    CHECK_THROWS_AS(sde.validate(), std::invalid_argument);
    sde = SdeConfig{};
    sde.gamma = 0.0;
    CHECK_THROWS_AS(sde.validate(), std::invalid_argument);
}

TEST_CASE("noise paths are seed-deterministic with unit complex variance") {
    NoisePath a = make_noise_path(99, 64, 40, 5);
    NoisePath b = make_noise_path(99, 64, 40, 5);
    CHECK((a.init - b.init).abs().maxCoeff() == 0.0);
    for (size_t i = 0; i < a.steps.size(); ++i)
        CHECK((a.steps[i] - b.steps[i]).abs().maxCoeff() == 0.0);
    NoisePath c = make_noise_path(100, 64, 40, 5);
    CHECK((a.init - c.init).abs().maxCoeff() > 0.0);

    // Monte-Carlo: E|z|^2 = 1 per bin (2560 samples -> well inside 3%)
    CHECK(a.init.abs2().mean() == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("direct variant starts as the identity operator") {
    Model m;
    m.kind = "direct";
    m.pred = init_predictive("direct", 16, 24, 7);
    const Eigen::ArrayXXcd Y = random_complex(1, 16, 9);
    const Eigen::ArrayXXcd out = enhance(m, Y, nullptr);
    CHECK((out - Y).abs().maxCoeff() < 1e-12);
}

TEST_CASE("crm variant starts as the zero mask") {
    Model m;
    m.kind = "crm";
    m.pred = init_predictive("crm", 16, 24, 7);
    const Eigen::ArrayXXcd Y = random_complex(2, 16, 9);
    CHECK(enhance(m, Y, nullptr).abs().maxCoeff() == 0.0);
}

TEST_CASE("crm logits of artanh(1/2) make a unit mask") {
    const int f = 8;
    PredictiveParams p = init_predictive("crm", f, 12, 3);
    p.b3.topRows(f).setConstant(std::atanh(0.5));  // real mask plane -> 2*0.5 = 1
    // kill the trunk so b3 alone sets the logits
    p.W3.setZero();
    Model m;
    m.kind = "crm";
    m.pred = p;
    const Eigen::ArrayXXcd Y = random_complex(3, f, 5);
    CHECK((enhance(m, Y, nullptr) - Y).abs().maxCoeff() < 1e-12);
}

TEST_CASE("crm mask planes stay inside (-2, 2)") {
    const int f = 8;
    Rng rng(4);
    PredictiveParams p = init_predictive("crm", f, 12, 4);
    p.W3 = 5.0 * rng.gaussian_array(2 * f, 12);
    p.b3 = 3.0 * rng.gaussian_array(2 * f, 1);
    const Eigen::ArrayXXcd Y = random_complex(5, f, 6);

    Tape t;
    const PredictiveVars v = put_on_tape(t, p, false);
    // reconstruct the mask from S_hat = M (.) Y on a nonzero Y
    const CVar s_hat = predictive_apply(t, v, cconst(t, Y));
    const Eigen::ArrayXXcd mask = cvalue(t, s_hat) / Y;
    CHECK(mask.real().abs().maxCoeff() < 2.0);
    CHECK(mask.imag().abs().maxCoeff() < 2.0);
}

TEST_CASE("predictive forward rejects mismatched spectrogram height") {
    Model m;
    m.kind = "direct";
    m.pred = init_predictive("direct", 16, 8, 1);
    const Eigen::ArrayXXcd Y = random_complex(6, 12, 4);
    CHECK_THROWS_AS(enhance(m, Y, nullptr), std::invalid_argument);
}

TEST_CASE("reverse sampler with zero score and zero path is the identity") {
    const int f = 12, frames = 7;
    ScoreParams sp = init_score(f, 10, 11);  // zero output head at init
    SdeConfig sde;
    const Eigen::ArrayXXcd Y = random_complex(7, f, frames);
    const NoisePath path = make_zero_path(f, frames, sde.n_steps);

    Tape t;
    const ScoreVars v = put_on_tape(t, sp, false);
    const CVar out = reverse_sde_sample(t, v, 1.0, cconst(t, Y), sde, path);
    CHECK((cvalue(t, out) - Y).abs().maxCoeff() < 1e-14);

    // the same holds through the data-domain rescaling
    Tape t2;
    const ScoreVars v2 = put_on_tape(t2, sp, false);
    const CVar out2 = reverse_sde_sample(t2, v2, 4.7, cconst(t2, Y), sde, path);
    CHECK((cvalue(t2, out2) - Y).abs().maxCoeff() < 1e-14);
}

TEST_CASE("reverse sampler matches an eager Euler recursion") {
    const int f = 10, frames = 6;
    ScoreParams sp = init_score(f, 8, 13);  // score identically zero
    SdeConfig sde;
    sde.n_steps = 9;
    const Eigen::ArrayXXcd Y = random_complex(8, f, frames);
    const NoisePath path = make_noise_path(21, f, frames, sde.n_steps);

    Tape t;
    const ScoreVars v = put_on_tape(t, sp, false);
    const CVar out = reverse_sde_sample(t, v, 1.0, cconst(t, Y), sde, path);

    const double T = sde.t_end, dt = T / sde.n_steps;
    Eigen::ArrayXXcd x = Y + sde.sigma(T) * path.init;
    for (int i = 0; i < sde.n_steps; ++i) {
        const double ti = T * (1.0 - static_cast<double>(i) / sde.n_steps);
        x = x + dt * (sde.gamma * (Y - x)) + sde.g(ti) * std::sqrt(dt) * path.steps[static_cast<size_t>(i)];
    }
    CHECK((cvalue(t, out) - x).abs().maxCoeff() < 1e-12);
}

TEST_CASE("euler error against the drift-only closed form halves with dt") {
    const int f = 6, frames = 4;
    ScoreParams sp = init_score(f, 8, 17);
    SdeConfig sde;
    const Eigen::ArrayXXcd Y = random_complex(9, f, frames);
    NoisePath path0 = make_noise_path(31, f, frames, 1);

    auto run_with = [&](int n_steps) {
        SdeConfig s = sde;
        s.n_steps = n_steps;
        NoisePath p = make_zero_path(f, frames, n_steps);
        p.init = path0.init;  // nonzero start, zero increments
        Tape t;
        const ScoreVars v = put_on_tape(t, sp, false);
        return cvalue(t, reverse_sde_sample(t, v, 1.0, cconst(t, Y), s, p));
    };
    // dx = gamma (Y - x) dt integrates to x(0) = Y + (x_T - Y) e^{-gamma T}
    const Eigen::ArrayXXcd exact =
        Y + (sde.sigma(sde.t_end) * path0.init) * std::exp(-sde.gamma * sde.t_end);
    const double e1 = (run_with(10) - exact).abs().maxCoeff();
    const double e2 = (run_with(20) - exact).abs().maxCoeff();
    CHECK(e1 / e2 > 1.7);
    CHECK(e1 / e2 < 2.4);
}

TEST_CASE("frozen path makes the diffusion forward deterministic") {
    const int f = 8, frames = 5;
    Model m;
    m.kind = "diffusion";
    m.score = init_score(f, 10, 23);
    // give the score a nonzero head so the path actually matters
    Rng rng(24);
    m.score.W3 = 0.1 * rng.gaussian_array(2 * f, 10);
    m.sde = SdeConfig{};
    m.sde.n_steps = 6;
    const Eigen::ArrayXXcd Y = random_complex(10, f, frames);
    const NoisePath path = make_noise_path(77, f, frames, m.sde.n_steps);

    const Eigen::ArrayXXcd a = enhance(m, Y, &path);
    const Eigen::ArrayXXcd b = enhance(m, Y, &path);
    CHECK((a - b).abs().maxCoeff() == 0.0);

    const NoisePath other = make_noise_path(78, f, frames, m.sde.n_steps);
    CHECK((a - enhance(m, Y, &other)).abs().maxCoeff() > 0.0);
}

TEST_CASE("diffusion forward without a path is rejected") {
    Model m;
    m.kind = "diffusion";
    m.score = init_score(4, 6, 1);
    m.sde = SdeConfig{};
    const Eigen::ArrayXXcd Y = random_complex(11, 4, 3);
    CHECK_THROWS_AS(enhance(m, Y, nullptr), std::invalid_argument);
}

TEST_CASE("model save/load round-trips bit-exactly") {
    Rng rng(40);
    Model m;
    m.kind = "crm";
    m.pred = init_predictive("crm", 8, 10, 41);
    m.pred.W3 = rng.gaussian_array(16, 10);
    const std::string p1 = temp_prefix("specadv_model_crm");
    save_model(p1, m);
    const Model back = load_model(p1);
    CHECK(back.kind == "crm");
    CHECK(back.pred.variant == "crm");
    CHECK((back.pred.W1 - m.pred.W1).abs().maxCoeff() == 0.0);
    CHECK((back.pred.W3 - m.pred.W3).abs().maxCoeff() == 0.0);
    CHECK((back.pred.skip - m.pred.skip).abs().maxCoeff() == 0.0);
    CHECK(back.pred.input_scale == m.pred.input_scale);

    Model d;
    d.kind = "diffusion";
    d.score = init_score(8, 10, 42);
    d.score.data_scale = 3.25;
    d.sde = SdeConfig{};
    d.sde.n_steps = 13;
    const std::string p2 = temp_prefix("specadv_model_diff");
    save_model(p2, d);
    const Model dback = load_model(p2);
    CHECK(dback.kind == "diffusion");
    CHECK(dback.score.data_scale == 3.25);
    CHECK(dback.sde.n_steps == 13);
    CHECK((dback.score.Wt - d.score.Wt).abs().maxCoeff() == 0.0);
    CHECK((dback.score.skip_y - d.score.skip_y).abs().maxCoeff() == 0.0);

    for (const std::string& pfx : {p1, p2}) {
        std::filesystem::remove(pfx + ".json");
        std::filesystem::remove(pfx + ".bin");
    }
}

TEST_CASE("score gradients flow through the checkpointed sampler") {
    const int f = 5, frames = 4;
    ScoreParams sp = init_score(f, 6, 50);
    Rng rng(51);
    sp.W3 = 0.05 * rng.gaussian_array(2 * f, 6);
    SdeConfig sde;
    sde.n_steps = 4;
    const Eigen::ArrayXXcd Y = random_complex(12, f, frames);
    const Eigen::ArrayXXcd target = random_complex(13, f, frames);
    const NoisePath path = make_noise_path(52, f, frames, sde.n_steps);

    // loss(delta) = sum |sample(Y + delta) - target|^2, gradient vs FD
    auto loss_at = [&](const Eigen::ArrayXXcd& delta) {
        Tape t;
        const ScoreVars v = put_on_tape(t, sp, false);
        const CVar yd = cconst(t, Y + delta);
        const CVar out = reverse_sde_sample(t, v, 1.0, yd, sde, path);
        const CVar diff = csub(t, out, cconst(t, target));
        return t.value(t.sum(cabs2(t, diff)))(0, 0);
    };

    Tape t;
    const ScoreVars v = put_on_tape(t, sp, false);
    const CVar delta = cleaf(t, Eigen::ArrayXXcd::Zero(f, frames));
    const CVar out = reverse_sde_sample(t, v, 1.0, cadd(t, cconst(t, Y), delta), sde, path);
    const CVar diff = csub(t, out, cconst(t, target));
    const Var loss = t.sum(cabs2(t, diff));
    t.backward(loss);
    const Plane gre = t.grad(delta.re), gim = t.grad(delta.im);

    const double h = 1e-5;
    for (auto [i, j] : {std::pair<int, int>{0, 0}, {2, 1}, {4, 3}}) {
        Eigen::ArrayXXcd dre = Eigen::ArrayXXcd::Zero(f, frames);
        dre(i, j) = h;
        CHECK(gre(i, j) == doctest::Approx((loss_at(dre) - loss_at(-dre)) / (2 * h)).epsilon(1e-4));
        Eigen::ArrayXXcd dim = Eigen::ArrayXXcd::Zero(f, frames);
        dim(i, j) = std::complex<double>(0.0, h);
        CHECK(gim(i, j) == doctest::Approx((loss_at(dim) - loss_at(-dim)) / (2 * h)).epsilon(1e-4));
    }
}
