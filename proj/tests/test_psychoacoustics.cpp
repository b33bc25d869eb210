#include <doctest.h>

#include "specadv/psychoacoustics.hpp"
#include "specadv/rng.hpp"

using namespace specadv;

namespace {

// Test-side copy of the absolute-threshold formula.
double tq_formula(double f_hz) {
    const double k = f_hz / 1000.0;
    return 3.64 * std::pow(k, -0.8) - 6.5 * std::exp(-0.6 * (k - 3.3) * (k - 3.3)) +
           1e-3 * std::pow(k, 4.0);
}

ComplexSpectrogram sine_spectrogram(double f_hz, double amplitude, int samples = 8000) {
    StftConfig cfg;
    Waveform wav;
    wav.sample_rate = cfg.sample_rate;
    wav.samples.resize(static_cast<size_t>(samples));
    for (int n = 0; n < samples; ++n)
        wav.samples[static_cast<size_t>(n)] =
            amplitude * std::sin(2.0 * kPi * f_hz * n / cfg.sample_rate);
    return stft(wav, cfg);
}

double window_ref(const StftConfig& cfg) {
    double s = 0.0;
    for (double w : make_window(cfg)) s += w;
    return 0.5 * s;
}

}  // namespace

TEST_CASE("threshold in quiet matches the formula at its landmarks") {
    CHECK(threshold_in_quiet(20.0) == doctest::Approx(83.2).epsilon(1e-3));
    CHECK(threshold_in_quiet(1000.0) == doctest::Approx(3.37).epsilon(1e-2));
    CHECK(threshold_in_quiet(3300.0) == doctest::Approx(-4.98).epsilon(1e-2));
    for (int i = 0; i < 50; ++i) {
        const double f = 20.0 * std::pow(1000.0, i / 49.0);  // 20 Hz .. 20 kHz log spaced
        CHECK(threshold_in_quiet(f) == doctest::Approx(tq_formula(f)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(threshold_in_quiet(10.0), std::invalid_argument);
    CHECK_THROWS_AS(threshold_in_quiet(25000.0), std::invalid_argument);
    CHECK_THROWS_AS(threshold_in_quiet(9000.0, 8000.0), std::invalid_argument);
}

TEST_CASE("silence produces exactly the threshold in quiet") {
    StftConfig cfg;
    ComplexSpectrogram Y;
    Y.cfg = cfg;
    Y.bins = Eigen::ArrayXXcd::Zero(cfg.bins(), 12);
    const HearingThreshold H = hearing_threshold(Y);
    REQUIRE(H.h.rows() == cfg.bins());
    REQUIRE(H.h.cols() == 12);
    const double f_nyq = cfg.sample_rate / 2.0;
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    for (int k = 0; k < cfg.bins(); ++k) {
        const double f = std::min(std::max(k * bin_hz, 20.0), f_nyq);
        for (int t : {0, 6, 11}) CHECK(H.h(k, t) == tq_formula(f));
    }
    CHECK(H.peak_spl == 0.0);
}

TEST_CASE("full-scale calibration maps the reference amplitude to 96 dB SPL") {
    StftConfig cfg;
    ComplexSpectrogram Y;
    Y.cfg = cfg;
    Y.bins = Eigen::ArrayXXcd::Zero(cfg.bins(), 3);
    Y.bins(40, 1) = window_ref(cfg);  // amplitude-1.0 sinusoid peak
    const HearingThreshold H = hearing_threshold(Y);
    CHECK(H.peak_spl == doctest::Approx(96.0).epsilon(1e-9));
    CHECK(H.spl_offset == 96.0);
}

TEST_CASE("a 1 kHz tone masks its neighborhood and leaves remote rows quiet") {
    StftConfig cfg;
    const ComplexSpectrogram Y = sine_spectrogram(1000.0, 0.5);
    const HearingThreshold H = hearing_threshold(Y);
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    const int k_tone = static_cast<int>(std::round(1000.0 / bin_hz));
    const int t = Y.frames() / 2;

    // skirt: rows a few bins off the tone are masked far above quiet
    for (int k : {k_tone - 3, k_tone + 3, k_tone + 8}) {
        const double f = k * bin_hz;
        CHECK(H.h(k, t) > tq_formula(f) + 20.0);
    }
    // remote row ~7 kHz: within 1 dB of quiet
    const int k_far = static_cast<int>(std::round(7000.0 / bin_hz));
    CHECK(std::abs(H.h(k_far, t) - tq_formula(k_far * bin_hz)) < 1.0);
}

TEST_CASE("masker-dominated rows shift by +20 dB with the input") {
    StftConfig cfg;
    const ComplexSpectrogram Y1 = sine_spectrogram(1000.0, 0.05);
    ComplexSpectrogram Y2 = Y1;
    Y2.bins *= 10.0;  // +20 dB
    const HearingThreshold H1 = hearing_threshold(Y1);
    const HearingThreshold H2 = hearing_threshold(Y2);
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    const int k_tone = static_cast<int>(std::round(1000.0 / bin_hz));
    const int t = Y1.frames() / 2;
    // at the masker's own partition the spread slope is zero: exact shift
    CHECK(H2.h(k_tone, t) - H1.h(k_tone, t) == doctest::Approx(20.0).epsilon(5e-3));
    CHECK(H2.peak_spl - H1.peak_spl == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("spectral difference is peak-relative, floored, and shift-covariant") {
    Eigen::ArrayXXcd Y(2, 2), delta(2, 2);
    Y << std::complex<double>(4.0, 0.0), std::complex<double>(0.0, 3.0),
         std::complex<double>(0.0, 0.0), std::complex<double>(0.0, 0.0);
    delta << std::complex<double>(4.0, 0.0), std::complex<double>(0.4, 0.0),
             std::complex<double>(0.0, 0.0), std::complex<double>(4e-8, 0.0);
    const Plane D = spectral_difference(delta, Y);
    CHECK(D(0, 0) == doctest::Approx(0.0));            // |delta| == max|Y|
    CHECK(D(0, 1) == doctest::Approx(-20.0));          // one tenth of the peak
    CHECK(D(1, 0) == kSpectralFloorDb);                // exact floor for zero bins
    CHECK(D(1, 1) == kSpectralFloorDb);                // below the floor clamps

    const Plane D10 = spectral_difference(delta * 10.0, Y);
    CHECK(D10(0, 0) == doctest::Approx(20.0));
    CHECK(D10(0, 1) == doctest::Approx(0.0));

    CHECK_THROWS_AS(spectral_difference(delta, Eigen::ArrayXXcd::Zero(2, 2)),
                    std::invalid_argument);
}

TEST_CASE("gate headroom follows (H - peak) - D + lambda clamped at zero") {
    HearingThreshold H;
    H.h = Plane::Constant(3, 4, 60.0);
    H.peak_spl = 0.0;
    const Plane D = Plane::Constant(3, 4, 65.0);
    const GateMask g0 = gate(H, D, 0.0);
    CHECK(g0.phi_star.maxCoeff() == 0.0);  // -5 dB headroom clamps to zero
    CHECK(g0.phi_hat.maxCoeff() == 0.0);   // degenerate all-zero grid

    const GateMask g20 = gate(H, D, 20.0);
    CHECK(g20.phi_star(1, 2) == doctest::Approx(15.0));
    CHECK(g20.phi_hat(1, 2) == 1.0);  // degenerate positive grid -> all ones
}

TEST_CASE("gate is monotone in the difference plane and normalized to [0,1]") {
    Rng rng(5);
    HearingThreshold H;
    H.h = 40.0 + 10.0 * rng.gaussian_array(6, 5);
    H.peak_spl = 90.0;
    Plane D = -60.0 + 20.0 * rng.gaussian_array(6, 5);
    Plane D_hi = D + 7.5;  // uniformly louder perturbation
    const GateMask a = gate(H, D, 20.0);
    const GateMask b = gate(H, D_hi, 20.0);
    CHECK((a.phi_star - b.phi_star).minCoeff() >= 0.0);  // headroom can only shrink
    CHECK(a.phi_hat.minCoeff() >= 0.0);
    CHECK(a.phi_hat.maxCoeff() <= 1.0);
    CHECK(a.phi_hat.maxCoeff() == 1.0);  // attained after min-max scaling
    CHECK(a.phi_hat.minCoeff() == 0.0);
}

TEST_CASE("random spectrograms yield finite thresholds above quiet") {
    StftConfig cfg;
    Rng rng(6);
    ComplexSpectrogram Y;
    Y.cfg = cfg;
    Y.bins.resize(cfg.bins(), 10);
    rng.fill_complex_unit(Y.bins);
    Y.bins *= 20.0;
    const HearingThreshold H = hearing_threshold(Y);
    CHECK(H.h.isFinite().all());
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    const double f_nyq = cfg.sample_rate / 2.0;
    for (int k = 0; k < cfg.bins(); k += 17) {
        const double f = std::min(std::max(k * bin_hz, 20.0), f_nyq);
        for (int t = 0; t < 10; t += 3) CHECK(H.h(k, t) >= tq_formula(f) - 1e-9);
    }
}
