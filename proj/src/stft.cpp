#include "specadv/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>

namespace specadv {

namespace {

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwBuffers {
    int n;
    double* real;
    fftw_complex* cplx;
    fftw_plan fwd;
    fftw_plan inv;

    explicit FftwBuffers(int fft_size) : n(fft_size) {
        real = fftw_alloc_real(static_cast<size_t>(n));
        cplx = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
        std::lock_guard<std::mutex> lock(planner_mutex());
        fwd = fftw_plan_dft_r2c_1d(n, real, cplx, FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_1d(n, cplx, real, FFTW_ESTIMATE);
    }
    ~FftwBuffers() {
        {
            std::lock_guard<std::mutex> lock(planner_mutex());
            fftw_destroy_plan(fwd);
            fftw_destroy_plan(inv);
        }
        fftw_free(real);
        fftw_free(cplx);
    }
    FftwBuffers(const FftwBuffers&) = delete;
    FftwBuffers& operator=(const FftwBuffers&) = delete;
};

void check_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError("waveform contains non-finite samples");
}

}  // namespace

void StftConfig::validate() const {
    if (fft_size <= 0 || fft_size % 2 != 0)
        throw std::invalid_argument("fft_size must be positive and even");
    if (hop <= 0 || hop > fft_size)
        throw std::invalid_argument("hop must be in [1, fft_size]");
    if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
    if (window != "sqrt_hann") throw std::invalid_argument("unknown window: " + window);
    // NOLA: the steady-state squared-window envelope must be bounded away
    // from zero at every hop phase.
    std::vector<double> w = make_window(*this);
    for (int r = 0; r < hop; ++r) {
        double e = 0.0;
        for (int n = r; n < fft_size; n += hop) e += w[n] * w[n];
        if (e <= 1e-9) throw std::invalid_argument("window/hop pair violates NOLA");
    }
}

std::vector<double> make_window(const StftConfig& cfg) {
    std::vector<double> w(static_cast<size_t>(cfg.fft_size));
    for (int n = 0; n < cfg.fft_size; ++n)
        w[static_cast<size_t>(n)] = std::sin(kPi * n / cfg.fft_size);
    return w;
}

ComplexSpectrogram stft(const Waveform& wav, const StftConfig& cfg) {
    cfg.validate();
    if (wav.samples.empty()) throw std::invalid_argument("empty waveform");
    check_finite(wav.samples);

    const int len = static_cast<int>(wav.samples.size());
    const int half = cfg.fft_size / 2;
    const int frames = len / cfg.hop + 1;
    const std::vector<double> w = make_window(cfg);

    ComplexSpectrogram spec;
    spec.cfg = cfg;
    spec.bins.resize(cfg.bins(), frames);

    FftwBuffers fb(cfg.fft_size);
    for (int t = 0; t < frames; ++t) {
        const int start = t * cfg.hop - half;  // position in unpadded signal
        for (int n = 0; n < cfg.fft_size; ++n) {
            const int idx = start + n;
            const double s = (idx >= 0 && idx < len) ? wav.samples[static_cast<size_t>(idx)] : 0.0;
            fb.real[n] = s * w[static_cast<size_t>(n)];
        }
        fftw_execute(fb.fwd);
        for (int k = 0; k < cfg.bins(); ++k)
            spec.bins(k, t) = std::complex<double>(fb.cplx[k][0], fb.cplx[k][1]);
    }
    return spec;
}

Waveform istft(const ComplexSpectrogram& spec, int out_len) {
    spec.cfg.validate();
    if (spec.rows() != spec.cfg.bins())
        throw std::invalid_argument("spectrogram rows do not match config bins");
    if (spec.frames() < 1) throw std::invalid_argument("empty spectrogram");
    if (out_len < 0) throw std::invalid_argument("negative out_len");

    const int fft = spec.cfg.fft_size;
    const int hop = spec.cfg.hop;
    const int half = fft / 2;
    const int frames = spec.frames();
    const int padded_len = (frames - 1) * hop + fft;
    if (half + out_len > padded_len)
        throw std::invalid_argument("out_len exceeds synthesizable length");

    const std::vector<double> w = make_window(spec.cfg);
    std::vector<double> ola(static_cast<size_t>(padded_len), 0.0);
    std::vector<double> env(static_cast<size_t>(padded_len), 0.0);

    FftwBuffers fb(fft);
    const double inv_n = 1.0 / fft;
    for (int t = 0; t < frames; ++t) {
        for (int k = 0; k <= fft / 2; ++k) {
            const std::complex<double> c = spec.bins(k, t);
            fb.cplx[k][0] = c.real();
            fb.cplx[k][1] = c.imag();
        }
        fftw_execute(fb.inv);
        const int start = t * hop;
        for (int n = 0; n < fft; ++n) {
            const double wn = w[static_cast<size_t>(n)];
            ola[static_cast<size_t>(start + n)] += fb.real[n] * inv_n * wn;
            env[static_cast<size_t>(start + n)] += wn * wn;
        }
    }

    double env_max = 0.0;
    for (int i = half; i < half + out_len; ++i)
        env_max = std::max(env_max, env[static_cast<size_t>(i)]);

    Waveform out;
    out.sample_rate = spec.cfg.sample_rate;
    out.samples.resize(static_cast<size_t>(out_len));
    for (int i = 0; i < out_len; ++i) {
        const double e = env[static_cast<size_t>(half + i)];
        if (e <= 1e-6 * env_max) throw NumericError("degenerate synthesis envelope");
        out.samples[static_cast<size_t>(i)] = ola[static_cast<size_t>(half + i)] / e;
    }
    return out;
}

double normalize_peak(Waveform& wav, double peak) {
    double m = 0.0;
    for (double x : wav.samples) m = std::max(m, std::abs(x));
    if (m <= peak || m == 0.0) return 1.0;
    const double f = peak / m;
    for (double& x : wav.samples) x *= f;
    return f;
}

}  // namespace specadv
