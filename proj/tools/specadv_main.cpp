#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "specadv/array_store.hpp"
#include "specadv/attack.hpp"
#include "specadv/metrics.hpp"
#include "specadv/models.hpp"
#include "specadv/psychoacoustics.hpp"
#include "specadv/stft.hpp"
#include "specadv/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace specadv;

namespace {

double parse_epsilon(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("cannot parse epsilon value: " + s);
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

void write_resolved_config(const CLI::App& app, const std::string& path) {
    write_text(path, app.config_to_str(true, true));
}

// Deterministic pair synthesis shared by attack/ablate.
PairSet cli_pairs(int count, uint64_t pair_seed, int pool, double duration,
                  const StftConfig& cfg) {
    if (pool < 2) throw UsageError("need a pool of at least 2 utterances");
    std::vector<Waveform> utts;
    utts.reserve(static_cast<size_t>(pool));
    for (int i = 0; i < pool; ++i)
        utts.push_back(synth_utterance(pair_seed * 1000003u + static_cast<uint64_t>(i), duration,
                                       cfg.sample_rate));
    return build_pairs(utts, count, pair_seed, cfg);
}

Waveform render(const ComplexSpectrogram& spec) {
    const int out_len = (spec.frames() - 1) * spec.cfg.hop;
    return istft(spec, out_len);
}

ComplexSpectrogram spec_from(const Eigen::ArrayXXcd& bins, const StftConfig& cfg) {
    ComplexSpectrogram s;
    s.bins = bins;
    s.cfg = cfg;
    return s;
}

json attack_metrics_json(const MetricRow& row, const AttackResult& res) {
    json j;
    j["pair"] = row.pair;
    j["model"] = row.model;
    j["lambda_db"] = row.lambda_db;
    j["epsilon"] = std::isinf(row.epsilon) ? json("inf") : json(row.epsilon);
    j["mode"] = row.mode;
    j["loss_final"] = row.loss_final;
    j["target_lsd_db"] = row.target_lsd_db;
    j["pert_snr_db"] = std::isinf(row.pert_snr_db) ? json("inf") : json(row.pert_snr_db);
    j["impact_lsd_db"] = row.impact_lsd_db;
    j["loss_trace"] = res.loss_trace;
    j["norm_trace"] = res.norm_trace;
    return j;
}

Plane column_from(const std::vector<double>& v) {
    Plane p(static_cast<Eigen::Index>(v.size()), 1);
    for (size_t i = 0; i < v.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = v[i];
    return p;
}

void save_bundle(const std::string& prefix, const Pair& pair, const AttackResult& res,
                 const std::string& model_name) {
    ArrayStore st;
    st.meta["bundle"] = "attack_result";
    st.meta["model"] = model_name;
    st.meta["mode"] = res.cfg.mode;
    st.meta["epsilon"] = format_double(res.cfg.epsilon);
    st.meta["seed"] = std::to_string(res.cfg.seed);
    st.meta["window"] = pair.Y_user.cfg.window;
    st.meta_num["lambda_db"] = res.cfg.lambda_db;
    st.meta_num["eta"] = res.cfg.eta;
    st.meta_num["momentum"] = res.cfg.momentum;
    st.meta_num["iters"] = res.cfg.iters;
    st.meta_num["gate_enabled"] = res.cfg.gate_enabled ? 1.0 : 0.0;
    st.meta_num["fft_size"] = pair.Y_user.cfg.fft_size;
    st.meta_num["hop"] = pair.Y_user.cfg.hop;
    st.meta_num["sample_rate"] = pair.Y_user.cfg.sample_rate;
    st.put("Y_re", pair.Y_user.bins.real());
    st.put("Y_im", pair.Y_user.bins.imag());
    st.put("S_att_re", pair.S_attacker.bins.real());
    st.put("S_att_im", pair.S_attacker.bins.imag());
    st.put("delta_re", res.delta.real());
    st.put("delta_im", res.delta.imag());
    st.put("enh_clean_re", res.enhanced_clean.real());
    st.put("enh_clean_im", res.enhanced_clean.imag());
    st.put("enh_att_re", res.enhanced_attacked.real());
    st.put("enh_att_im", res.enhanced_attacked.imag());
    st.put("gate_zero", res.gate_zero);
    st.put("loss_trace", column_from(res.loss_trace));
    st.put("norm_trace", column_from(res.norm_trace));
    save_store(prefix, st);
}

StftConfig bundle_stft(const ArrayStore& st) {
    StftConfig cfg;
    cfg.fft_size = static_cast<int>(st.num("fft_size"));
    cfg.hop = static_cast<int>(st.num("hop"));
    cfg.sample_rate = static_cast<int>(st.num("sample_rate"));
    cfg.window = st.str("window");
    return cfg;
}

Eigen::ArrayXXcd bundle_complex(const ArrayStore& st, const std::string& base) {
    const Plane& re = st.get(base + "_re");
    const Plane& im = st.get(base + "_im");
    Eigen::ArrayXXcd z(re.rows(), re.cols());
    z.real() = re;
    z.imag() = im;
    return z;
}

void export_listen_set(const std::string& bundle_prefix, const std::string& out_dir) {
    const ArrayStore st = load_store(bundle_prefix);
    if (!st.meta.count("bundle") || st.str("bundle") != "attack_result")
        throw IoError("not an attack result bundle: " + bundle_prefix);
    const StftConfig cfg = bundle_stft(st);
    const Eigen::ArrayXXcd Y = bundle_complex(st, "Y");
    const Eigen::ArrayXXcd delta = bundle_complex(st, "delta");
    fs::create_directories(out_dir);
    const std::string base = out_dir + "/" + fs::path(bundle_prefix).filename().string();
    write_wav(base + "_mixture.wav", render(spec_from(Y, cfg)));
    write_wav(base + "_attacked.wav", render(spec_from(Y + delta, cfg)));
    write_wav(base + "_enhanced_clean.wav", render(spec_from(bundle_complex(st, "enh_clean"), cfg)));
    write_wav(base + "_enhanced_attacked.wav",
              render(spec_from(bundle_complex(st, "enh_att"), cfg)));
    write_wav(base + "_delta.wav", render(spec_from(delta, cfg)));
}

struct ProgressFile {
    std::string path;
    std::vector<MetricRow> rows;

    void load() {
        rows.clear();
        std::ifstream f(path);
        if (!f) return;  // no progress yet
        json j;
        try {
            f >> j;
        } catch (const json::exception&) {
            return;  // unreadable progress is ignored, grid recomputes
        }
        if (!j.contains("rows")) return;
        for (const auto& r : j["rows"]) {
            MetricRow row;
            row.pair = r.at("pair").get<int>();
            row.model = r.at("model").get<std::string>();
            row.lambda_db = r.at("lambda_db").get<double>();
            row.epsilon = r.at("epsilon").is_string()
                              ? parse_epsilon(r.at("epsilon").get<std::string>())
                              : r.at("epsilon").get<double>();
            row.mode = r.at("mode").get<std::string>();
            row.loss_final = r.at("loss_final").get<double>();
            row.target_lsd_db = r.at("target_lsd_db").get<double>();
            row.pert_snr_db = r.at("pert_snr_db").is_string()
                                  ? parse_epsilon(r.at("pert_snr_db").get<std::string>())
                                  : r.at("pert_snr_db").get<double>();
            row.impact_lsd_db = r.at("impact_lsd_db").get<double>();
            rows.push_back(std::move(row));
        }
    }

    void save() const {
        std::vector<MetricRow> sorted = rows;
        std::sort(sorted.begin(), sorted.end(), [](const MetricRow& a, const MetricRow& b) {
            return metric_key(a) < metric_key(b);
        });
        json j;
        j["completed"] = json::array();
        j["rows"] = json::array();
        for (const MetricRow& r : sorted) {
            j["completed"].push_back(metric_key(r));
            json row;
            row["pair"] = r.pair;
            row["model"] = r.model;
            row["lambda_db"] = r.lambda_db;
            row["epsilon"] = std::isinf(r.epsilon) ? json("inf") : json(r.epsilon);
            row["mode"] = r.mode;
            row["loss_final"] = r.loss_final;
            row["target_lsd_db"] = r.target_lsd_db;
            row["pert_snr_db"] =
                std::isinf(r.pert_snr_db) ? json("inf") : json(r.pert_snr_db);
            row["impact_lsd_db"] = r.impact_lsd_db;
            j["rows"].push_back(row);
        }
        write_text(path, j.dump(2) + "\n");
    }
};

void sort_table(std::vector<MetricRow>& table) {
    std::sort(table.begin(), table.end(), [](const MetricRow& a, const MetricRow& b) {
        if (a.model != b.model) return a.model < b.model;
        if (a.lambda_db != b.lambda_db) return a.lambda_db < b.lambda_db;
        if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
        if (a.mode != b.mode) return a.mode < b.mode;
        return a.pair < b.pair;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"targeted attacks on speech-enhancement operators in the complex STFT domain"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key = value config file; one [section] per command");
    app.get_config_formatter_base()->comment('#');

    StftConfig stft_cfg;  // shared STFT frame parameters

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model variant and write its parameter files");
    std::string tr_variant;
    std::string tr_out = "model";
    TrainConfig tr_cfg;
    SdeConfig tr_sde;
    train->add_option("--variant", tr_variant, "direct | crm | diffusion")->required();
    train->add_option("--out", tr_out, "output path prefix (.json/.bin)");
    train->add_option("--seed", tr_cfg.seed, "training seed");
    train->add_option("--epochs", tr_cfg.epochs, "predictive epochs");
    train->add_option("--hidden", tr_cfg.hidden, "hidden layer width");
    train->add_option("--lr", tr_cfg.lr, "learning rate");
    train->add_option("--train-momentum", tr_cfg.momentum, "optimizer momentum");
    train->add_option("--grad-clip", tr_cfg.grad_clip, "per-tensor gradient norm cap");
    train->add_option("--utterances", tr_cfg.utterances, "corpus size");
    train->add_option("--duration", tr_cfg.duration_s, "utterance length, seconds");
    train->add_option("--snr-low", tr_cfg.snr_low, "mixture SNR lower bound, dB");
    train->add_option("--snr-high", tr_cfg.snr_high, "mixture SNR upper bound, dB");
    train->add_option("--score-steps", tr_cfg.score_steps, "score-matching SGD steps");
    train->add_option("--t-min", tr_cfg.t_min, "score training: minimum sampled t");
    train->add_option("--gamma", tr_sde.gamma, "OU drift stiffness");
    train->add_option("--sigma-min", tr_sde.sigma_min, "noise scale at t=0");
    train->add_option("--sigma-max", tr_sde.sigma_max, "noise scale at t=T");
    train->add_option("--steps", tr_sde.n_steps, "reverse steps N");

    // ---- attack ----
    auto* attack = app.add_subcommand("attack", "run the targeted attack on synthesized pairs");
    std::string at_model, at_out = "attack_out", at_eps = "10", at_mode = "fixed";
    AttackConfig at_cfg;
    int at_pairs = 1, at_pool = 4;
    double at_duration = 1.0;
    uint64_t at_pair_seed = 7;
    bool at_no_gate = false;
    attack->add_option("--model", at_model, "trained model path prefix")->required();
    attack->add_option("--out", at_out, "output directory");
    attack->add_option("--pairs", at_pairs, "number of attacked pairs");
    attack->add_option("--pool", at_pool, "utterance pool size");
    attack->add_option("--duration", at_duration, "utterance length, seconds");
    attack->add_option("--pair-seed", at_pair_seed, "pair synthesis seed");
    attack->add_option("--k", at_cfg.iters, "attack iterations K");
    attack->add_option("--eta", at_cfg.eta, "step size");
    attack->add_option("--momentum", at_cfg.momentum, "momentum coefficient");
    attack->add_option("--lambda", at_cfg.lambda_db, "gate tolerance, dB");
    attack->add_option("--epsilon", at_eps, "l2 budget (number or 'inf')");
    attack->add_option("--mode", at_mode, "fixed | stochastic");
    attack->add_option("--seed", at_cfg.seed, "noise-path seed");
    attack->add_flag("--no-gate", at_no_gate, "disable the psychoacoustic gate");

    // ---- ablate ----
    auto* ablate = app.add_subcommand("ablate", "run an attack grid and emit the report table");
    std::vector<std::string> ab_models;
    std::vector<double> ab_lambdas{0.0, 10.0, 20.0, 40.0};
    std::vector<std::string> ab_eps{"3", "6", "10", "15", "20", "inf"};
    std::vector<std::string> ab_modes{"fixed"};
    std::string ab_out = "ablate_out";
    int ab_pairs = 20, ab_pool = 6, ab_jobs = 1;
    double ab_duration = 1.0;
    uint64_t ab_pair_seed = 7, ab_seed = 1;
    int ab_iters = 150;
    double ab_eta = 0.1, ab_momentum = 0.4;
    bool ab_resume = false;
    ablate->add_option("--models", ab_models, "model path prefixes")->required();
    ablate->add_option("--lambdas", ab_lambdas, "gate tolerances, dB");
    ablate->add_option("--epsilons", ab_eps, "l2 budgets (numbers or 'inf')");
    ablate->add_option("--modes", ab_modes, "sampling modes");
    ablate->add_option("--out", ab_out, "output directory");
    ablate->add_option("--pairs", ab_pairs, "pairs per cell");
    ablate->add_option("--pool", ab_pool, "utterance pool size");
    ablate->add_option("--duration", ab_duration, "utterance length, seconds");
    ablate->add_option("--pair-seed", ab_pair_seed, "pair synthesis seed");
    ablate->add_option("--seed", ab_seed, "attack noise seed base");
    ablate->add_option("--k", ab_iters, "attack iterations K");
    ablate->add_option("--eta", ab_eta, "step size");
    ablate->add_option("--momentum", ab_momentum, "momentum coefficient");
    ablate->add_option("--jobs", ab_jobs, "worker threads over grid cells");
    ablate->add_flag("--resume", ab_resume, "skip cells recorded in progress.json");

    // ---- listen-export ----
    auto* listen = app.add_subcommand("listen-export", "render an attack result bundle to WAVs");
    std::string le_result, le_out = "listen_out";
    listen->add_option("--result", le_result, "attack result bundle prefix")->required();
    listen->add_option("--out", le_out, "output directory");

    // ---- report ----
    auto* report = app.add_subcommand("report", "convert a report table between csv and json");
    std::string rp_in, rp_out;
    report->add_option("--in", rp_in, "input table (.csv or .json)")->required();
    report->add_option("--out", rp_out, "output table (.csv or .json)")->required();

    try {
        app.parse(argc, argv);

        if (train->parsed()) {
            if (tr_variant != "direct" && tr_variant != "crm" && tr_variant != "diffusion")
                throw UsageError("unknown variant: " + tr_variant);
            tr_cfg.validate();
            Model m;
            std::vector<double> trace;
            const TrainSet data = make_train_set(tr_cfg, stft_cfg);
            if (tr_variant == "direct" || tr_variant == "crm") {
                TrainedPredictive tp = train_predictive(data, tr_variant, tr_cfg);
                m.kind = tr_variant;
                m.pred = std::move(tp.params);
                trace = std::move(tp.loss_trace);
            } else if (tr_variant == "diffusion") {
                tr_sde.validate();
                TrainedScore ts = train_score(data, tr_cfg, tr_sde);
                m.kind = "diffusion";
                m.score = std::move(ts.params);
                m.sde = tr_sde;
                trace = std::move(ts.loss_trace);
            }
            if (const auto dir = fs::path(tr_out).parent_path(); !dir.empty())
                fs::create_directories(dir);
            save_model(tr_out, m);
            json tj;
            tj["loss_trace"] = trace;
            write_text(tr_out + ".trace.json", tj.dump(2) + "\n");
            write_resolved_config(app, tr_out + ".cfg");
        } else if (attack->parsed()) {
            at_cfg.epsilon = parse_epsilon(at_eps);
            at_cfg.mode = at_mode;
            at_cfg.gate_enabled = !at_no_gate;
            at_cfg.validate();
            const Model model = load_model(at_model);
            const std::string model_name = fs::path(at_model).filename().string();
            fs::create_directories(at_out);
            const PairSet pairs = cli_pairs(at_pairs, at_pair_seed, at_pool, at_duration, stft_cfg);
            for (size_t i = 0; i < pairs.size(); ++i) {
                AttackConfig cfg = at_cfg;
                cfg.seed = at_cfg.seed * 0x9e3779b9u + static_cast<uint64_t>(i);
                const AttackResult res = run_attack(model, pairs[i].Y_user, pairs[i].S_attacker, cfg);
                MetricRow row;
                row.pair = static_cast<int>(i);
                row.model = model_name;
                row.lambda_db = cfg.lambda_db;
                row.epsilon = cfg.epsilon;
                row.mode = cfg.mode;
                row.loss_final = res.loss_trace.back();
                row.target_lsd_db =
                    spectral_log_distance(res.enhanced_attacked, pairs[i].S_attacker.bins);
                row.pert_snr_db = perturbation_snr(pairs[i].Y_user.bins, res.delta);
                row.impact_lsd_db = spectral_log_distance(res.attacked, pairs[i].Y_user.bins);
                const std::string prefix = at_out + "/pair" + std::to_string(i);
                save_bundle(prefix, pairs[i], res, model_name);
                write_text(prefix + "_metrics.json", attack_metrics_json(row, res).dump(2) + "\n");
                export_listen_set(prefix, at_out);
            }
            write_resolved_config(app, at_out + "/resolved.cfg");
        } else if (ablate->parsed()) {
            GridSpec grid;
            for (const std::string& prefix : ab_models)
                grid.models.emplace_back(fs::path(prefix).filename().string(), load_model(prefix));
            grid.lambdas = ab_lambdas;
            for (const std::string& e : ab_eps) grid.epsilons.push_back(parse_epsilon(e));
            grid.modes = ab_modes;
            grid.iters = ab_iters;
            grid.eta = ab_eta;
            grid.momentum = ab_momentum;
            grid.seed = ab_seed;
            grid.jobs = ab_jobs;
            fs::create_directories(ab_out);
            const PairSet pairs = cli_pairs(ab_pairs, ab_pair_seed, ab_pool, ab_duration, stft_cfg);

            ProgressFile progress{ab_out + "/progress.json", {}};
            if (ab_resume) progress.load();
            std::mutex progress_mtx;
            std::vector<MetricRow> table = ablation_grid(
                grid, pairs, progress.rows, [&](const MetricRow& r) {
                    std::lock_guard<std::mutex> lock(progress_mtx);
                    progress.rows.push_back(r);
                    progress.save();
                });
            sort_table(table);
            emit_report(table, "csv", ab_out + "/report.csv");
            emit_report(table, "json", ab_out + "/report.json");
            write_resolved_config(app, ab_out + "/resolved.cfg");
        } else if (listen->parsed()) {
            export_listen_set(le_result, le_out);
        } else if (report->parsed()) {
            const std::vector<MetricRow> table = read_report(rp_in);
            const bool csv = rp_out.size() >= 4 && rp_out.substr(rp_out.size() - 4) == ".csv";
            emit_report(table, csv ? "csv" : "json", rp_out);
        }
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return UsageError::exit_code;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return UsageError::exit_code;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return IoError::exit_code;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return NumericError::exit_code;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return UsageError::exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return NumericError::exit_code;
    }
}
