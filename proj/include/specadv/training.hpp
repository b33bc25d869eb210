#pragma once

#include "specadv/models.hpp"
#include "specadv/stft.hpp"

namespace specadv {

struct TrainConfig {
    int epochs = 40;
    int batch = 1;           // utterances per update (SGD over utterances)
    double lr = 0.2;
    double momentum = 0.9;
    uint64_t seed = 1;
    int hidden = 128;
    double grad_clip = 0.5;  // per-tensor gradient norm cap
    double snr_low = -2.5;
    double snr_high = 17.5;
    int utterances = 8;
    double duration_s = 1.0;
    double t_min = 0.03;     // score training: lower bound of sampled t
    int score_steps = 600;   // score training: number of SGD steps

    void validate() const;
};

struct Pair {
    ComplexSpectrogram Y_user;      // mixture
    ComplexSpectrogram S_user;      // clean source of the mixture
    ComplexSpectrogram S_attacker;  // clean target from a different utterance
    int user_id = 0;
    int attacker_id = 0;
    double snr_db = 0.0;
};
using PairSet = std::vector<Pair>;

// Deterministic pseudo-speech: harmonic source with gliding f0, formant-like
// spectral envelope, and slow amplitude modulation. Peak-normalized.
Waveform synth_utterance(uint64_t seed, double duration_s, int sample_rate = 16000);

// Filtered Gaussian noise plus amplitude-modulated tonal interferers.
Waveform synth_noise(uint64_t seed, double duration_s, int sample_rate = 16000);

// Y = clean + alpha * noise with the exact-SNR alpha.
Waveform make_mixture(const Waveform& clean, const Waveform& noise, double snr_db);

struct TrainExample {
    ComplexSpectrogram mixture;
    ComplexSpectrogram clean;
};
using TrainSet = std::vector<TrainExample>;

// Synthesizes a training corpus of (mixture, clean) spectrogram pairs.
TrainSet make_train_set(const TrainConfig& cfg, const StftConfig& stft_cfg);

struct TrainedPredictive {
    PredictiveParams params;
    std::vector<double> loss_trace;  // per-epoch mean L_reg per bin
};

struct TrainedScore {
    ScoreParams params;
    std::vector<double> loss_trace;  // per-step DSM loss (per bin)
};

TrainedPredictive train_predictive(const TrainSet& data, const std::string& variant,
                                   const TrainConfig& cfg);
TrainedScore train_score(const TrainSet& data, const TrainConfig& cfg, const SdeConfig& sde);

// count pairs built from a clean-utterance pool: mixtures vs. distinct-target
// cleans, cropped to the shorter waveform, mixture peak-normalized.
PairSet build_pairs(const std::vector<Waveform>& utterances, int count, uint64_t seed,
                    const StftConfig& stft_cfg, double snr_low = -2.5, double snr_high = 17.5);

}  // namespace specadv
