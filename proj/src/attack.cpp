#include "specadv/attack.hpp"

namespace specadv {

void AttackConfig::validate() const {
    if (iters < 1) throw std::invalid_argument("iters must be >= 1");
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("momentum must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive or inf");
    if (mode != "fixed" && mode != "stochastic")
        throw std::invalid_argument("mode must be fixed or stochastic");
}

double adv_loss(const Eigen::ArrayXXcd& s_hat, const Eigen::ArrayXXcd& s_attacker) {
    if (s_hat.rows() != s_attacker.rows() || s_hat.cols() != s_attacker.cols())
        throw std::invalid_argument("adv_loss: shape mismatch");
    return (s_hat - s_attacker).abs2().sum();
}

double adv_loss(const ComplexSpectrogram& s_hat, const ComplexSpectrogram& s_attacker) {
    if (!(s_hat.cfg.fft_size == s_attacker.cfg.fft_size && s_hat.cfg.hop == s_attacker.cfg.hop &&
          s_hat.cfg.window == s_attacker.cfg.window &&
          s_hat.cfg.sample_rate == s_attacker.cfg.sample_rate))
        throw std::invalid_argument("adv_loss: spectrograms from different stft configs");
    return adv_loss(s_hat.bins, s_attacker.bins);
}

Eigen::ArrayXXcd project_l2(const Eigen::ArrayXXcd& delta, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (std::isinf(epsilon)) return delta;
    const double norm = std::sqrt(delta.abs2().sum());
    if (norm <= epsilon) return delta;
    return delta * (epsilon / norm);
}

void attack_step(PerturbationState& st, const Plane& g_re, const Plane& g_im,
                 const Plane& phi_hat, const AttackConfig& cfg) {
    if (g_re.rows() != st.delta.rows() || g_re.cols() != st.delta.cols() ||
        g_im.rows() != st.delta.rows() || g_im.cols() != st.delta.cols() ||
        phi_hat.rows() != st.delta.rows() || phi_hat.cols() != st.delta.cols())
        throw std::invalid_argument("attack_step: shape mismatch");
    if (!g_re.isFinite().all() || !g_im.isFinite().all())
        throw NumericError("attack aborted: non-finite gradient at iteration " +
                           std::to_string(st.iter));
    Eigen::ArrayXXcd gated(g_re.rows(), g_re.cols());
    gated.real() = phi_hat * g_re;
    gated.imag() = phi_hat * g_im;
    st.velocity = cfg.momentum * st.velocity + gated;
    st.delta -= cfg.eta * st.velocity;
    if (!cfg.unbounded()) st.delta = project_l2(st.delta, cfg.epsilon);
    ++st.iter;
}

AttackResult run_attack(const Model& model, const ComplexSpectrogram& Y_user,
                        const ComplexSpectrogram& S_attacker, const AttackConfig& cfg) {
    cfg.validate();
    model.validate();
    if (Y_user.rows() != S_attacker.rows() || Y_user.frames() != S_attacker.frames())
        throw std::invalid_argument("run_attack: pair shape mismatch");
    if (Y_user.rows() != model.bins())
        throw std::invalid_argument("run_attack: spectrogram rows do not match model");

    const Eigen::Index F = Y_user.bins.rows();
    const Eigen::Index T = Y_user.bins.cols();
    const bool diffusion = model.kind == "diffusion";

    // H is computed once per utterance; D and the gate are refreshed every
    // iteration from the current delta.
    HearingThreshold H;
    if (cfg.gate_enabled) H = hearing_threshold(Y_user);

    Rng path_rng(cfg.seed);
    NoisePath fixed_path;
    if (diffusion && cfg.mode == "fixed") {
        fixed_path = make_noise_path(path_rng, F, T, model.sde.n_steps);
        fixed_path.seed = cfg.seed;
    }

    PerturbationState st;
    st.delta = Eigen::ArrayXXcd::Zero(F, T);
    st.velocity = Eigen::ArrayXXcd::Zero(F, T);

    AttackResult res;
    res.cfg = cfg;
    res.loss_trace.reserve(static_cast<size_t>(cfg.iters));
    res.norm_trace.reserve(static_cast<size_t>(cfg.iters));
    res.gate_zero = Plane::Ones(F, T);

    for (int k = 0; k < cfg.iters; ++k) {
        NoisePath iter_path;
        const NoisePath* path = nullptr;
        if (diffusion) {
            if (cfg.mode == "fixed") {
                path = &fixed_path;
            } else {
                iter_path = make_noise_path(path_rng, F, T, model.sde.n_steps);
                path = &iter_path;
            }
        }

        Tape tape;
        const CVar dv = cleaf(tape, st.delta, true);
        const CVar yv = cconst(tape, Y_user.bins);
        const CVar sv = model_apply(tape, model, cadd(tape, yv, dv), path);
        const CVar target = cconst(tape, S_attacker.bins);
        const Var loss = tape.sum(cabs2(tape, csub(tape, sv, target)));
        const double loss_val = tape.value(loss)(0, 0);
        if (!std::isfinite(loss_val))
            throw NumericError("attack aborted: non-finite loss at iteration " +
                               std::to_string(k));
        res.loss_trace.push_back(loss_val);

        tape.backward(loss);
        const Plane g_re = tape.grad(dv.re);
        const Plane g_im = tape.grad(dv.im);

        Plane phi_hat;
        if (cfg.gate_enabled) {
            const Plane D = spectral_difference(st.delta, Y_user.bins);
            const GateMask gm = gate(H, D, cfg.lambda_db);
            phi_hat = gm.phi_hat;
            res.gate_zero *= (phi_hat == 0.0).cast<double>();
        } else {
            phi_hat = Plane::Ones(F, T);
            res.gate_zero.setZero();
        }

        attack_step(st, g_re, g_im, phi_hat, cfg);
        res.norm_trace.push_back(std::sqrt(st.delta.abs2().sum()));
    }

    res.delta = st.delta;
    res.attacked = Y_user.bins + st.delta;

    // Exports: fixed mode reuses the frozen path; stochastic mode draws the
    // next path from the same seeded stream (deterministic given cfg.seed).
    NoisePath export_path;
    const NoisePath* epath = nullptr;
    if (diffusion) {
        if (cfg.mode == "fixed") {
            epath = &fixed_path;
        } else {
            export_path = make_noise_path(path_rng, F, T, model.sde.n_steps);
            epath = &export_path;
        }
    }
    res.enhanced_clean = enhance(model, Y_user.bins, epath);
    res.enhanced_attacked = enhance(model, res.attacked, epath);
    return res;
}

}  // namespace specadv
