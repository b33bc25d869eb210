#include <doctest.h>
#include <fftw3.h>

#include <set>

#include "specadv/training.hpp"

using namespace specadv;

namespace {

double energy(const Waveform& w) {
    double e = 0.0;
    for (double x : w.samples) e += x * x;
    return e;
}

double peak(const Waveform& w) {
    double p = 0.0;
    for (double x : w.samples) p = std::max(p, std::abs(x));
    return p;
}

// Max normalized circular cross-correlation between two equal-length signals,
// via the FFT correlation theorem on a zero-padded grid.
class XcorrOracle {
public:
    explicit XcorrOracle(int fft_size) : n_(fft_size) {
        buf_ = fftw_alloc_real(static_cast<size_t>(n_));
        spec_a_ = fftw_alloc_complex(static_cast<size_t>(n_ / 2 + 1));
        spec_b_ = fftw_alloc_complex(static_cast<size_t>(n_ / 2 + 1));
        inv_ = fftw_plan_dft_c2r_1d(n_, spec_a_, buf_, FFTW_ESTIMATE);
    }
    ~XcorrOracle() {
        fftw_destroy_plan(inv_);
        fftw_free(buf_);
        fftw_free(spec_a_);
        fftw_free(spec_b_);
    }

    double max_normalized(const std::vector<double>& a, const std::vector<double>& b) {
        REQUIRE(static_cast<int>(a.size() + b.size()) <= n_ + 1);
        load(a, spec_a_);
        load(b, spec_b_);
        for (int k = 0; k <= n_ / 2; ++k) {  // A * conj(B)
            const double re = spec_a_[k][0] * spec_b_[k][0] + spec_a_[k][1] * spec_b_[k][1];
            const double im = spec_a_[k][1] * spec_b_[k][0] - spec_a_[k][0] * spec_b_[k][1];
            spec_a_[k][0] = re;
            spec_a_[k][1] = im;
        }
        fftw_execute(inv_);
        double m = 0.0;
        for (int i = 0; i < n_; ++i) m = std::max(m, std::abs(buf_[i]));
        double ea = 0.0, eb = 0.0;
        for (double x : a) ea += x * x;
        for (double x : b) eb += x * x;
        return m / (static_cast<double>(n_) * std::sqrt(ea * eb));
    }

private:
    void load(const std::vector<double>& x, fftw_complex* out) {
        for (int i = 0; i < n_; ++i)
            buf_[i] = i < static_cast<int>(x.size()) ? x[static_cast<size_t>(i)] : 0.0;
        fftw_plan p = fftw_plan_dft_r2c_1d(n_, buf_, out, FFTW_ESTIMATE);
        fftw_execute(p);
        fftw_destroy_plan(p);
    }

    int n_;
    double* buf_;
    fftw_complex *spec_a_, *spec_b_;
    fftw_plan inv_;
};

}  // namespace

TEST_CASE("utterance synthesis is deterministic per seed and peak-normalized") {
    const Waveform a = synth_utterance(5, 1.0);
    const Waveform b = synth_utterance(5, 1.0);
    CHECK(a.samples == b.samples);
    CHECK(a.samples.size() == 16000);
    CHECK(peak(a) == doctest::Approx(0.95).epsilon(1e-12));

    const Waveform c = synth_utterance(6, 1.0);
    CHECK(a.samples != c.samples);

    CHECK_THROWS_AS(synth_utterance(1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(synth_utterance(1, 5.0), std::invalid_argument);
}

TEST_CASE("distinct seeds give decorrelated utterances") {
    XcorrOracle oracle(32768);
    double worst = 0.0;
    for (uint64_t s = 0; s < 100; ++s) {
        const Waveform a = synth_utterance(2 * s, 1.0);
        const Waveform b = synth_utterance(2 * s + 1, 1.0);
        worst = std::max(worst, oracle.max_normalized(a.samples, b.samples));
    }
    CHECK(worst < 0.5);
}

TEST_CASE("utterance energy concentrates below 4 kHz") {
    StftConfig cfg;
    for (uint64_t s : {1u, 9u, 33u}) {
        const ComplexSpectrogram spec = stft(synth_utterance(s, 1.0), cfg);
        const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
        const int k4 = static_cast<int>(4000.0 / bin_hz);
        const double low = spec.bins.topRows(k4).abs2().sum();
        const double total = spec.bins.abs2().sum();
        CHECK(low / total > 0.9);
    }
}

TEST_CASE("mixtures hit the requested snr exactly") {
    const Waveform clean = synth_utterance(10, 1.0);
    const Waveform noise = synth_noise(11, 1.0);
    for (double snr : {-2.5, 0.0, 7.5, 17.5}) {
        const Waveform mix = make_mixture(clean, noise, snr);
        Waveform resid = mix;
        for (size_t i = 0; i < resid.samples.size(); ++i) resid.samples[i] -= clean.samples[i];
        const double got = 10.0 * std::log10(energy(clean) / energy(resid));
        CHECK(std::abs(got - snr) < 1e-9);
    }

    Waveform silent = clean;
    for (double& x : silent.samples) x = 0.0;
    CHECK_THROWS_AS(make_mixture(silent, noise, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_mixture(clean, silent, 0.0), std::invalid_argument);
}

TEST_CASE("train sets are deterministic, co-scaled and peak-bounded") {
    TrainConfig cfg;
    cfg.utterances = 3;
    cfg.seed = 4;
    StftConfig stft_cfg;
    const TrainSet a = make_train_set(cfg, stft_cfg);
    const TrainSet b = make_train_set(cfg, stft_cfg);
    REQUIRE(a.size() == 3);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i].mixture.bins - b[i].mixture.bins).abs().maxCoeff() == 0.0);
        CHECK(a[i].mixture.bins.rows() == stft_cfg.bins());
        CHECK(a[i].mixture.bins.cols() == a[i].clean.bins.cols());
        // mixture peak was bounded before analysis
        const Waveform w = istft(a[i].mixture, 16000);
        CHECK(peak(w) < 0.95 + 1e-6);
    }
}

TEST_CASE("training config validation") {
    TrainConfig cfg;
    cfg.utterances = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.duration_s = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.snr_low = 10.0;
    cfg.snr_high = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("predictive training overfits a two-utterance set") {
    TrainConfig cfg;
    cfg.utterances = 2;
    cfg.epochs = 200;
    cfg.lr = 0.3;
    cfg.seed = 3;
    StftConfig stft_cfg;
    const TrainSet data = make_train_set(cfg, stft_cfg);

    for (const std::string variant : {"direct", "crm"}) {
        CAPTURE(variant);
        const TrainedPredictive tp = train_predictive(data, variant, cfg);
        REQUIRE(tp.loss_trace.size() == 200);
        CHECK(tp.loss_trace.back() < tp.loss_trace.front() / 10.0);
        CHECK(tp.params.variant == variant);
    }
}

TEST_CASE("predictive training is bit-reproducible") {
    TrainConfig cfg;
    cfg.utterances = 2;
    cfg.epochs = 5;
    StftConfig stft_cfg;
    const TrainSet data = make_train_set(cfg, stft_cfg);
    const TrainedPredictive a = train_predictive(data, "direct", cfg);
    const TrainedPredictive b = train_predictive(data, "direct", cfg);
    CHECK((a.params.W1 - b.params.W1).abs().maxCoeff() == 0.0);
    CHECK((a.params.W3 - b.params.W3).abs().maxCoeff() == 0.0);
    CHECK((a.params.skip - b.params.skip).abs().maxCoeff() == 0.0);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("score training reduces the matching loss") {
    TrainConfig cfg;
    cfg.utterances = 2;
    cfg.score_steps = 800;
    cfg.lr = 1.0;
    // restrict sampled t to the mid-to-late range, where the bridge noise is
    // large enough relative to the clean residual for a toy net to learn; at
    // small t the per-bin matching loss sits at its ~1.0 floor for any net of
    // this size, which would mask the decrease this test measures
    cfg.t_min = 0.5;
    cfg.seed = 8;
    StftConfig stft_cfg;
    const TrainSet data = make_train_set(cfg, stft_cfg);
    SdeConfig sde;
    const TrainedScore ts = train_score(data, cfg, sde);
    REQUIRE(ts.loss_trace.size() == 800);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 50; ++i) {
        head += ts.loss_trace[static_cast<size_t>(i)];
        tail += ts.loss_trace[ts.loss_trace.size() - 50 + static_cast<size_t>(i)];
    }
    CHECK(tail < head / 2.0);
    CHECK(ts.params.data_scale > 0.0);
}

TEST_CASE("pair building enforces its contract") {
    StftConfig cfg;
    std::vector<Waveform> pool;
    for (uint64_t s = 0; s < 4; ++s) pool.push_back(synth_utterance(100 + s, 1.0));

    CHECK_THROWS_AS(build_pairs({pool[0]}, 2, 1, cfg), std::invalid_argument);

    const PairSet pairs = build_pairs(pool, 12, 9, cfg);
    REQUIRE(pairs.size() == 12);
    std::set<std::pair<int, int>> combos;
    for (const Pair& p : pairs) {
        CHECK(p.user_id != p.attacker_id);
        CHECK(p.Y_user.rows() == p.S_attacker.rows());
        CHECK(p.Y_user.frames() == p.S_attacker.frames());
        CHECK(p.Y_user.frames() == p.S_user.frames());
        CHECK(p.snr_db >= -2.5);
        CHECK(p.snr_db <= 17.5);
        combos.insert({p.user_id, p.attacker_id});
        // mixture = clean + noise at analysis scale: residual is nonzero
        CHECK((p.Y_user.bins - p.S_user.bins).abs().maxCoeff() > 0.0);
    }
    CHECK(combos.size() > 1);  // the pool is actually being sampled

    const PairSet again = build_pairs(pool, 12, 9, cfg);
    for (size_t i = 0; i < pairs.size(); ++i)
        CHECK((pairs[i].Y_user.bins - again[i].Y_user.bins).abs().maxCoeff() == 0.0);
}
