#pragma once

#include "specadv/attack.hpp"
#include "specadv/training.hpp"

namespace specadv {

struct MetricRow {
    int pair = 0;
    std::string model;
    double lambda_db = 0.0;
    double epsilon = 0.0;  // +inf for the unbounded budget
    std::string mode;
    double loss_final = 0.0;
    double target_lsd_db = 0.0;  // lsd(f(Y+delta), S_attacker)
    double pert_snr_db = 0.0;
    double impact_lsd_db = 0.0;  // lsd(Y+delta, Y)
};

// 20 log10(||Y||_2 / ||delta||_2); +inf for an identically-zero delta.
double perturbation_snr(const Eigen::ArrayXXcd& Y_user, const Eigen::ArrayXXcd& delta);

// mean over bins of |20 log10((|a|+eps0)/(|b|+eps0))| with eps0 = 1e-8.
double spectral_log_distance(const Eigen::ArrayXXcd& a, const Eigen::ArrayXXcd& b);

struct GridSpec {
    std::vector<std::pair<std::string, Model>> models;  // name -> bundle
    std::vector<double> lambdas;
    std::vector<double> epsilons;   // may include +inf
    std::vector<std::string> modes; // "fixed" / "stochastic"
    int iters = 150;
    double eta = 0.1;
    double momentum = 0.4;
    uint64_t seed = 1;
    int jobs = 1;
};

// Row key "model|lambda|epsilon|mode|pair": identifies a grid cell for
// progress files and resume.
std::string metric_key(const MetricRow& r);

MetricRow run_cell(const Model& model, const std::string& model_name, const Pair& pair,
                   int pair_idx, double lambda_db, double epsilon, const std::string& mode,
                   const GridSpec& grid);

// Full grid in deterministic order (model, lambda, epsilon, mode, pair);
// optionally skipping precomputed rows (resume) provided by `done`.
std::vector<MetricRow> ablation_grid(const GridSpec& grid, const PairSet& pairs,
                                     const std::vector<MetricRow>& done = {},
                                     const std::function<void(const MetricRow&)>& on_row = {});

void emit_report(const std::vector<MetricRow>& table, const std::string& format,
                 const std::string& path);
std::vector<MetricRow> read_report(const std::string& path);  // format by extension

double median(std::vector<double> v);

// Shortest round-trip formatting shared by every report writer (byte-stable).
std::string format_double(double v);

}  // namespace specadv
