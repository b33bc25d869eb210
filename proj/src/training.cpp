#include "specadv/training.hpp"

#include <map>

namespace specadv {

void TrainConfig::validate() const {
    if (epochs < 1 || utterances < 2) throw std::invalid_argument("epochs >= 1, utterances >= 2");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum in [0,1)");
    if (snr_low > snr_high) throw std::invalid_argument("snr_low must be <= snr_high");
    if (duration_s < 1.0 || duration_s > 4.0)
        throw std::invalid_argument("duration_s outside supported range");
    if (!(t_min > 0.0)) throw std::invalid_argument("t_min must be positive");
    if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
    if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be positive");
}

Waveform synth_utterance(uint64_t seed, double duration_s, int sample_rate) {
    if (duration_s < 1.0 || duration_s > 4.0)
        throw std::invalid_argument("duration outside supported range");
    Rng rng(seed);
    const int n = static_cast<int>(duration_s * sample_rate);

    // gliding f0: random anchor points, cosine-interpolated
    const int n_anchor = 4 + static_cast<int>(rng.uniform() * 3);
    std::vector<double> f0a(static_cast<size_t>(n_anchor));
    for (double& a : f0a) a = 90.0 + 130.0 * rng.uniform();

    // formant-like envelope: three resonance bumps below 3.2 kHz
    double fc[3], bw[3], fg[3];
    for (int r = 0; r < 3; ++r) {
        fc[r] = 300.0 + 2900.0 * rng.uniform();
        bw[r] = 150.0 + 250.0 * rng.uniform();
        fg[r] = 0.5 + 0.5 * rng.uniform();
    }
    auto envelope = [&](double f) {
        double e = 0.05;
        for (int r = 0; r < 3; ++r) {
            const double d = (f - fc[r]) / bw[r];
            e += fg[r] * std::exp(-d * d);
        }
        return e / (1.0 + std::pow(f / 3500.0, 8.0));  // keep energy below 4 kHz
    };

    const double am_rate = 2.0 + 4.0 * rng.uniform();
    const double am_phase = 2.0 * kPi * rng.uniform();
    const int max_harm = 40;
    std::vector<double> hphase(max_harm, 0.0);
    for (double& ph : hphase) ph = 2.0 * kPi * rng.uniform();

    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) / n * (n_anchor - 1);
        const int a0 = std::min(static_cast<int>(pos), n_anchor - 2);
        const double frac = pos - a0;
        const double mix = 0.5 - 0.5 * std::cos(kPi * frac);
        const double f0 = f0a[static_cast<size_t>(a0)] * (1.0 - mix) +
                          f0a[static_cast<size_t>(a0 + 1)] * mix;
        double s = 0.0;
        for (int h = 1; h <= max_harm; ++h) {
            const double fh = h * f0;
            if (fh > 4200.0) break;
            hphase[static_cast<size_t>(h - 1)] += 2.0 * kPi * fh / sample_rate;
            s += envelope(fh) * std::sin(hphase[static_cast<size_t>(h - 1)]);
        }
        const double am = 0.55 + 0.45 * std::sin(2.0 * kPi * am_rate * i / sample_rate + am_phase);
        w.samples[static_cast<size_t>(i)] = s * am;
    }
    double peak = 0.0;
    for (double x : w.samples) peak = std::max(peak, std::abs(x));
    if (peak > 0.0)
        for (double& x : w.samples) x *= 0.95 / peak;
    return w;
}

Waveform synth_noise(uint64_t seed, double duration_s, int sample_rate) {
    Rng rng(seed);
    const int n = static_cast<int>(duration_s * sample_rate);
    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(static_cast<size_t>(n));

    // one-pole lowpassed Gaussian bed
    const double pole = 0.6 + 0.35 * rng.uniform();
    double state = 0.0;
    for (int i = 0; i < n; ++i) {
        state = pole * state + (1.0 - pole) * rng.gaussian();
        w.samples[static_cast<size_t>(i)] = state;
    }
    // two AM tonal interferers
    for (int tone = 0; tone < 2; ++tone) {
        const double f = 200.0 + 5800.0 * rng.uniform();
        const double am = 1.0 + 7.0 * rng.uniform();
        const double ph = 2.0 * kPi * rng.uniform();
        const double gain = 0.1 + 0.2 * rng.uniform();
        for (int i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            w.samples[static_cast<size_t>(i)] +=
                gain * (0.5 + 0.5 * std::sin(2.0 * kPi * am * t)) * std::sin(2.0 * kPi * f * t + ph);
        }
    }
    double peak = 0.0;
    for (double x : w.samples) peak = std::max(peak, std::abs(x));
    if (peak > 0.0)
        for (double& x : w.samples) x *= 0.95 / peak;
    return w;
}

Waveform make_mixture(const Waveform& clean, const Waveform& noise, double snr_db) {
    if (clean.samples.size() != noise.samples.size())
        throw std::invalid_argument("make_mixture: length mismatch");
    if (clean.sample_rate != noise.sample_rate)
        throw std::invalid_argument("make_mixture: sample-rate mismatch");
    double ec = 0.0, en = 0.0;
    for (double x : clean.samples) ec += x * x;
    for (double x : noise.samples) en += x * x;
    if (ec <= 0.0) throw std::invalid_argument("make_mixture: silent clean signal");
    if (en <= 0.0) throw std::invalid_argument("make_mixture: silent noise signal");
    const double alpha = std::sqrt(ec) / (std::sqrt(en) * std::pow(10.0, snr_db / 20.0));
    Waveform y;
    y.sample_rate = clean.sample_rate;
    y.samples.resize(clean.samples.size());
    for (size_t i = 0; i < y.samples.size(); ++i)
        y.samples[i] = clean.samples[i] + alpha * noise.samples[i];
    return y;
}

TrainSet make_train_set(const TrainConfig& cfg, const StftConfig& stft_cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    TrainSet set;
    for (int i = 0; i < cfg.utterances; ++i) {
        Waveform clean = synth_utterance(cfg.seed * 1000003u + static_cast<uint64_t>(i),
                                         cfg.duration_s, stft_cfg.sample_rate);
        const Waveform noise = synth_noise(cfg.seed * 2000003u + static_cast<uint64_t>(i),
                                           cfg.duration_s, stft_cfg.sample_rate);
        const double snr = cfg.snr_low + (cfg.snr_high - cfg.snr_low) * rng.uniform();
        Waveform mix = make_mixture(clean, noise, snr);
        // ingestion normalization: scale mixture to peak 0.95 and the clean
        // target by the same factor so Y = S + N is preserved
        double peak = 0.0;
        for (double x : mix.samples) peak = std::max(peak, std::abs(x));
        if (peak > 0.95) {
            const double f = 0.95 / peak;
            for (double& x : mix.samples) x *= f;
            for (double& x : clean.samples) x *= f;
        }
        TrainExample ex;
        ex.mixture = stft(mix, stft_cfg);
        ex.clean = stft(clean, stft_cfg);
        set.push_back(std::move(ex));
    }
    return set;
}

namespace {

// Shared momentum-SGD machinery (same update convention as the attack loop:
// v = m*v + g; p -= lr*v).
struct MomentumSgd {
    double lr, momentum, clip;
    std::map<std::string, Plane> vel;

    void step(const std::string& name, Plane& param, const Plane& grad) {
        // per-tensor norm clip: loud spectrogram bins otherwise dominate the
        // curvature and destabilize the mask head
        const double gn = std::sqrt(grad.square().sum());
        const double s = gn > clip ? clip / gn : 1.0;
        Plane& v = vel[name];
        if (v.size() == 0) v = Plane::Zero(param.rows(), param.cols());
        v = momentum * v + s * grad;
        param -= lr * v;
    }
};

double mean_loss_scale(const ComplexSpectrogram& s) {
    return 1.0 / static_cast<double>(s.bins.rows() * s.bins.cols());
}

}  // namespace

TrainedPredictive train_predictive(const TrainSet& data, const std::string& variant,
                                   const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_predictive: empty dataset");
    const int bins = static_cast<int>(data[0].mixture.bins.rows());

    TrainedPredictive out;
    out.params = init_predictive(variant, bins, cfg.hidden, cfg.seed);

    double acc = 0.0;
    size_t cnt = 0;
    for (const TrainExample& ex : data) {
        acc += ex.mixture.bins.abs2().sum();
        cnt += static_cast<size_t>(ex.mixture.bins.size());
    }
    const double rms = std::sqrt(acc / static_cast<double>(cnt));
    out.params.data_scale = rms > 0.0 ? 1.0 / rms : 1.0;
    MomentumSgd opt{cfg.lr, cfg.momentum, cfg.grad_clip, {}};

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const TrainExample& ex : data) {
            Tape t;
            PredictiveVars v = put_on_tape(t, out.params, true);
            const CVar y = cconst(t, ex.mixture.bins);
            const CVar s = cconst(t, ex.clean.bins);
            const CVar s_hat = predictive_apply(t, v, y);
            const Var loss =
                t.scale(t.sum(cabs2(t, csub(t, s_hat, s))), mean_loss_scale(ex.mixture));
            const double lv = t.value(loss)(0, 0);
            if (!std::isfinite(lv)) throw NumericError("train_predictive diverged");
            epoch_loss += lv;
            t.backward(loss);
            opt.step("W1", out.params.W1, t.grad(v.W1));
            opt.step("b1", out.params.b1, t.grad(v.b1));
            opt.step("W2", out.params.W2, t.grad(v.W2));
            opt.step("b2", out.params.b2, t.grad(v.b2));
            opt.step("W3", out.params.W3, t.grad(v.W3));
            opt.step("b3", out.params.b3, t.grad(v.b3));
            opt.step("skip", out.params.skip, t.grad(v.skip));
        }
        out.loss_trace.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return out;
}

TrainedScore train_score(const TrainSet& data, const TrainConfig& cfg, const SdeConfig& sde) {
    cfg.validate();
    sde.validate();
    if (data.empty()) throw std::invalid_argument("train_score: empty dataset");
    const int bins = static_cast<int>(data[0].mixture.bins.rows());

    TrainedScore out;
    out.params = init_score(bins, cfg.hidden, cfg.seed);

    // scale the working domain so mixtures have unit-ish RMS per bin
    double acc = 0.0;
    size_t cnt = 0;
    for (const TrainExample& ex : data) {
        acc += ex.mixture.bins.abs2().sum();
        cnt += static_cast<size_t>(ex.mixture.bins.size());
    }
    const double rms = std::sqrt(acc / static_cast<double>(cnt));
    out.params.data_scale = rms > 0.0 ? 1.0 / rms : 1.0;

    MomentumSgd opt{cfg.lr, cfg.momentum, cfg.grad_clip, {}};
    Rng rng(cfg.seed + 17);

    for (int step = 0; step < cfg.score_steps; ++step) {
        const TrainExample& ex = data[static_cast<size_t>(
            rng.uniform() * static_cast<double>(data.size())) % data.size()];
        const double t_draw = cfg.t_min + (sde.t_end - cfg.t_min) * rng.uniform();
        const double mu = sde.mean_coef(t_draw);
        const double sig = sde.sigma(t_draw);

        const double c = out.params.data_scale;
        const Eigen::ArrayXXcd s0 = ex.clean.bins * c;
        const Eigen::ArrayXXcd y0 = ex.mixture.bins * c;
        Eigen::ArrayXXcd z(s0.rows(), s0.cols());
        rng.fill_complex_unit(z);
        const Eigen::ArrayXXcd x_t = mu * s0 + (1.0 - mu) * y0 + sig * z;

        Tape t;
        ScoreVars v = put_on_tape(t, out.params, true);
        const CVar xv = cconst(t, x_t);
        const CVar yv = cconst(t, y0);
        const CVar score = score_apply(t, v, xv, yv, t_draw);
        // noise-prediction form: the net regresses -z, so the effective score
        // NN/sigma matches -z/sigma; loss || NN + z ||^2 averaged per bin
        const CVar resid = cadd(t, score, cconst(t, z));
        const Var loss = t.scale(t.sum(cabs2(t, resid)), mean_loss_scale(ex.mixture));
        const double lv = t.value(loss)(0, 0);
        if (!std::isfinite(lv)) throw NumericError("train_score diverged");
        out.loss_trace.push_back(lv);
        t.backward(loss);
        opt.step("W1", out.params.W1, t.grad(v.W1));
        opt.step("b1", out.params.b1, t.grad(v.b1));
        opt.step("Wt", out.params.Wt, t.grad(v.Wt));
        opt.step("W2", out.params.W2, t.grad(v.W2));
        opt.step("b2", out.params.b2, t.grad(v.b2));
        opt.step("W3", out.params.W3, t.grad(v.W3));
        opt.step("b3", out.params.b3, t.grad(v.b3));
        opt.step("skip", out.params.skip, t.grad(v.skip));
        opt.step("skip_y", out.params.skip_y, t.grad(v.skip_y));
    }
    return out;
}

PairSet build_pairs(const std::vector<Waveform>& utterances, int count, uint64_t seed,
                    const StftConfig& stft_cfg, double snr_low, double snr_high) {
    if (utterances.size() < 2)
        throw std::invalid_argument("build_pairs: need at least two utterances");
    Rng rng(seed);
    PairSet pairs;
    pairs.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int user = static_cast<int>(rng.uniform() * static_cast<double>(utterances.size())) %
                         static_cast<int>(utterances.size());
        int attacker = user;
        while (attacker == user)
            attacker = static_cast<int>(rng.uniform() * static_cast<double>(utterances.size())) %
                       static_cast<int>(utterances.size());

        Waveform clean = utterances[static_cast<size_t>(user)];
        Waveform target = utterances[static_cast<size_t>(attacker)];
        const size_t len = std::min(clean.samples.size(), target.samples.size());
        clean.samples.resize(len);
        target.samples.resize(len);

        Waveform noise = synth_noise(seed * 4000037u + static_cast<uint64_t>(i),
                                     static_cast<double>(len) / stft_cfg.sample_rate + 1e-9,
                                     stft_cfg.sample_rate);
        noise.samples.resize(len);
        const double snr = snr_low + (snr_high - snr_low) * rng.uniform();
        Waveform mix = make_mixture(clean, noise, snr);
        double peak = 0.0;
        for (double x : mix.samples) peak = std::max(peak, std::abs(x));
        if (peak > 0.95) {
            const double f = 0.95 / peak;
            for (double& x : mix.samples) x *= f;
            for (double& x : clean.samples) x *= f;
        }

        Pair p;
        p.Y_user = stft(mix, stft_cfg);
        p.S_user = stft(clean, stft_cfg);
        p.S_attacker = stft(target, stft_cfg);
        p.user_id = user;
        p.attacker_id = attacker;
        p.snr_db = snr;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace specadv
