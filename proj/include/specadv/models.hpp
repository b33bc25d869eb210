#pragma once

#include <optional>
#include <string>

#include "specadv/autodiff.hpp"
#include "specadv/rng.hpp"
#include "specadv/stft.hpp"

namespace specadv {

// ---- SDE machinery ----

struct SdeConfig {
    double gamma = 1.5;
    double sigma_min = 0.05;
    double sigma_max = 0.5;
    double t_end = 1.0;  // terminal time T
    int n_steps = 25;    // reverse steps N

    void validate() const;
    double g(double t) const;           // diffusion coefficient
    double sigma(double t) const;       // perturbation-kernel std
    double mean_coef(double t) const;   // e^{-gamma t}
};

// One frozen Wiener realization: the initial-state draw plus one complex
// Gaussian increment per reverse step, all unit variance per bin.
struct NoisePath {
    uint64_t seed = 0;
    Eigen::ArrayXXcd init;
    std::vector<Eigen::ArrayXXcd> steps;
};

NoisePath make_noise_path(uint64_t seed, Eigen::Index rows, Eigen::Index cols, int n_steps);
NoisePath make_noise_path(Rng& rng, Eigen::Index rows, Eigen::Index cols, int n_steps);
NoisePath make_zero_path(Eigen::Index rows, Eigen::Index cols, int n_steps);

// ---- predictive models (direct map / complex ratio mask) ----

struct PredictiveParams {
    std::string variant;  // "direct" | "crm"
    double input_scale = 0.05;
    double data_scale = 1.0;  // corpus normalization applied to the net input
    Plane W1, b1, W2, b2, W3, b3, skip;

    int bins() const { return static_cast<int>(W3.rows()) / 2; }
    void validate() const;
};

PredictiveParams init_predictive(const std::string& variant, int bins, int hidden, uint64_t seed);

struct PredictiveVars {
    Var W1, b1, W2, b2, W3, b3, skip;
    double input_scale = 0.0;
    double data_scale = 1.0;
    std::string variant;
};

PredictiveVars put_on_tape(Tape& t, const PredictiveParams& p, bool trainable);
CVar predictive_apply(Tape& t, const PredictiveVars& v, CVar Y);

// ---- score model ----

struct ScoreParams {
    double input_scale = 0.05;
    double data_scale = 1.0;  // spectrograms are scaled by this inside the sampler
    Plane W1, b1, Wt, W2, b2, W3, b3, skip, skip_y;

    int bins() const { return static_cast<int>(W3.rows()) / 2; }
    void validate() const;
};

ScoreParams init_score(int bins, int hidden, uint64_t seed);

struct ScoreVars {
    Var W1, b1, Wt, W2, b2, W3, b3, skip, skip_y;
    double input_scale = 0.0;
};

ScoreVars put_on_tape(Tape& t, const ScoreParams& p, bool trainable);

// Raw network output (noise-prediction convention); the sampler divides by
// sigma(t) to form the score. x and Y are in the sampler's scaled domain.
CVar score_apply(Tape& t, const ScoreVars& v, CVar x, CVar Y, double time);

// Euler-Maruyama reverse integration from t=T to t=0, one checkpoint region
// per step. Y_in is in spectrogram units; data_scale is applied internally.
CVar reverse_sde_sample(Tape& t, const ScoreVars& v, double data_scale, CVar Y_in,
                        const SdeConfig& sde, const NoisePath& path);

// ---- unified bundle ----

struct Model {
    std::string kind;  // "direct" | "crm" | "diffusion"
    PredictiveParams pred;  // valid when kind != diffusion
    ScoreParams score;      // valid when kind == diffusion
    SdeConfig sde;

    void validate() const;
    int bins() const { return kind == "diffusion" ? score.bins() : pred.bins(); }
};

void save_model(const std::string& path_prefix, const Model& m);
Model load_model(const std::string& path_prefix);

// Taped forward through the selected operator. path is required (and used)
// only for kind == diffusion.
CVar model_apply(Tape& t, const Model& m, CVar Y, const NoisePath* path);

// Eager enhancement (no gradients retained).
Eigen::ArrayXXcd enhance(const Model& m, const Eigen::ArrayXXcd& Y, const NoisePath* path);

// Convenience eager wrappers on spectrogram types.
ComplexSpectrogram enhance(const Model& m, const ComplexSpectrogram& Y, const NoisePath* path);

}  // namespace specadv
