#pragma once

#include <limits>

#include "specadv/models.hpp"
#include "specadv/psychoacoustics.hpp"

namespace specadv {

struct AttackConfig {
    int iters = 150;          // K
    double eta = 0.1;
    double momentum = 0.4;
    double lambda_db = 20.0;
    double epsilon = 10.0;    // l2 budget; +inf disables projection
    std::string mode = "fixed";  // "fixed" | "stochastic" (diffusion only)
    uint64_t seed = 1;           // noise-path seed
    bool gate_enabled = true;    // false: gate == 1 everywhere (lambda absent)

    void validate() const;
    bool unbounded() const { return std::isinf(epsilon); }
};

struct PerturbationState {
    Eigen::ArrayXXcd delta;     // starts at zero
    Eigen::ArrayXXcd velocity;  // momentum buffer
    int iter = 0;
};

struct AttackResult {
    Eigen::ArrayXXcd delta;
    std::vector<double> loss_trace;   // L_adv at the start of each iteration
    std::vector<double> norm_trace;   // ||delta||_2 after each update
    Eigen::ArrayXXcd attacked;            // Y + delta
    Eigen::ArrayXXcd enhanced_clean;      // f_SE(Y)
    Eigen::ArrayXXcd enhanced_attacked;   // f_SE(Y + delta)
    Plane gate_zero;   // 1 where phi_hat == 0 at every iteration
    AttackConfig cfg;
};

// Sum of squared complex differences over all bins.
double adv_loss(const Eigen::ArrayXXcd& s_hat, const Eigen::ArrayXXcd& s_attacker);
double adv_loss(const ComplexSpectrogram& s_hat, const ComplexSpectrogram& s_attacker);

// delta * min{1, eps/||delta||_2}; infinite eps returns delta unchanged.
Eigen::ArrayXXcd project_l2(const Eigen::ArrayXXcd& delta, double epsilon);

// One gated momentum step plus projection. The same real gate scales both
// planes of the gradient before it enters the momentum buffer.
void attack_step(PerturbationState& st, const Plane& g_re, const Plane& g_im,
                 const Plane& phi_hat, const AttackConfig& cfg);

AttackResult run_attack(const Model& model, const ComplexSpectrogram& Y_user,
                        const ComplexSpectrogram& S_attacker, const AttackConfig& cfg);

}  // namespace specadv
