#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "specadv/common.hpp"

namespace specadv {

struct Waveform {
    std::vector<double> samples;
    int sample_rate = 16000;
};

struct StftConfig {
    int fft_size = 510;
    int hop = 128;
    std::string window = "sqrt_hann";
    int sample_rate = 16000;

    int bins() const { return fft_size / 2 + 1; }
    void validate() const;
};

// Complex spectrogram, F = cfg.bins() rows by T frames.
struct ComplexSpectrogram {
    Eigen::ArrayXXcd bins;   // F x T
    StftConfig cfg;

    int rows() const { return static_cast<int>(bins.rows()); }
    int frames() const { return static_cast<int>(bins.cols()); }
    double l2_norm() const { return std::sqrt(bins.abs2().sum()); }
};

// Analysis/synthesis window of length cfg.fft_size.
std::vector<double> make_window(const StftConfig& cfg);

// Centered STFT: pad fft_size/2 zeros each side, T = floor(len/hop) + 1.
ComplexSpectrogram stft(const Waveform& wav, const StftConfig& cfg);

// Envelope-normalized overlap-add inverse. out_len must not exceed the
// span covered by the frames; throws NumericError when the synthesis
// envelope degenerates.
Waveform istft(const ComplexSpectrogram& spec, int out_len);

// Peak normalization used at ingestion: scale so max |sample| == peak
// whenever it currently exceeds peak. Returns the applied factor.
double normalize_peak(Waveform& wav, double peak = 0.95);

// WAV I/O: 16-bit PCM mono only.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wav);

}  // namespace specadv
