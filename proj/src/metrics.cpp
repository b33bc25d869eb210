#include "specadv/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "specadv/parallel.hpp"

namespace specadv {

using nlohmann::json;

double perturbation_snr(const Eigen::ArrayXXcd& Y_user, const Eigen::ArrayXXcd& delta) {
    if (Y_user.rows() != delta.rows() || Y_user.cols() != delta.cols())
        throw std::invalid_argument("perturbation_snr: shape mismatch");
    const double ny = std::sqrt(Y_user.abs2().sum());
    const double nd = std::sqrt(delta.abs2().sum());
    if (nd == 0.0) return std::numeric_limits<double>::infinity();
    return db_from_amplitude(ny / nd);
}

double spectral_log_distance(const Eigen::ArrayXXcd& a, const Eigen::ArrayXXcd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("spectral_log_distance: shape mismatch");
    constexpr double eps0 = 1e-8;
    return (20.0 * ((a.abs() + eps0) / (b.abs() + eps0)).log10()).abs().mean();
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

static double parse_double(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("malformed number in report: " + s);
    return v;
}

std::string metric_key(const MetricRow& r) {
    return r.model + "|" + format_double(r.lambda_db) + "|" + format_double(r.epsilon) + "|" +
           r.mode + "|" + std::to_string(r.pair);
}

MetricRow run_cell(const Model& model, const std::string& model_name, const Pair& pair,
                   int pair_idx, double lambda_db, double epsilon, const std::string& mode,
                   const GridSpec& grid) {
    AttackConfig cfg;
    cfg.iters = grid.iters;
    cfg.eta = grid.eta;
    cfg.momentum = grid.momentum;
    cfg.lambda_db = lambda_db;
    cfg.epsilon = epsilon;
    cfg.mode = mode;
    cfg.seed = grid.seed * 0x9e3779b9u + static_cast<uint64_t>(pair_idx);

    const AttackResult res = run_attack(model, pair.Y_user, pair.S_attacker, cfg);

    MetricRow row;
    row.pair = pair_idx;
    row.model = model_name;
    row.lambda_db = lambda_db;
    row.epsilon = epsilon;
    row.mode = mode;
    row.loss_final = res.loss_trace.back();
    row.target_lsd_db = spectral_log_distance(res.enhanced_attacked, pair.S_attacker.bins);
    row.pert_snr_db = perturbation_snr(pair.Y_user.bins, res.delta);
    row.impact_lsd_db = spectral_log_distance(res.attacked, pair.Y_user.bins);
    return row;
}

std::vector<MetricRow> ablation_grid(const GridSpec& grid, const PairSet& pairs,
                                     const std::vector<MetricRow>& done,
                                     const std::function<void(const MetricRow&)>& on_row) {
    struct Cell {
        int model_idx, pair_idx;
        double lambda, epsilon;
        std::string mode;
    };
    std::vector<Cell> cells;
    for (size_t m = 0; m < grid.models.size(); ++m)
        for (double l : grid.lambdas)
            for (double e : grid.epsilons)
                for (const std::string& mode : grid.modes)
                    for (size_t p = 0; p < pairs.size(); ++p)
                        cells.push_back({static_cast<int>(m), static_cast<int>(p), l, e, mode});

    std::set<std::string> done_keys;
    for (const MetricRow& r : done) done_keys.insert(metric_key(r));

    std::vector<MetricRow> rows(cells.size());
    std::vector<char> fresh(cells.size(), 0);
    std::mutex row_mtx;

    parallel_for(static_cast<int>(cells.size()), grid.jobs, [&](int i) {
        const Cell& c = cells[static_cast<size_t>(i)];
        MetricRow probe;
        probe.pair = c.pair_idx;
        probe.model = grid.models[static_cast<size_t>(c.model_idx)].first;
        probe.lambda_db = c.lambda;
        probe.epsilon = c.epsilon;
        probe.mode = c.mode;
        const std::string key = metric_key(probe);
        if (done_keys.count(key)) {
            for (const MetricRow& r : done)
                if (metric_key(r) == key) {
                    rows[static_cast<size_t>(i)] = r;
                    return;
                }
        }
        rows[static_cast<size_t>(i)] =
            run_cell(grid.models[static_cast<size_t>(c.model_idx)].second, probe.model,
                     pairs[static_cast<size_t>(c.pair_idx)], c.pair_idx, c.lambda, c.epsilon,
                     c.mode, grid);
        fresh[static_cast<size_t>(i)] = 1;
        if (on_row) {
            std::lock_guard<std::mutex> lock(row_mtx);
            on_row(rows[static_cast<size_t>(i)]);
        }
    });
    return rows;
}

static const char* kCsvHeader = "pair,model,lambda_db,epsilon,mode,loss_final,target_lsd_db,pert_snr_db,impact_lsd_db";

static json row_to_json(const MetricRow& r) {
    json j;
    j["pair"] = r.pair;
    j["model"] = r.model;
    j["lambda_db"] = r.lambda_db;
    j["epsilon"] = std::isinf(r.epsilon) ? json("inf") : json(r.epsilon);
    j["mode"] = r.mode;
    j["loss_final"] = r.loss_final;
    j["target_lsd_db"] = r.target_lsd_db;
    j["pert_snr_db"] = std::isinf(r.pert_snr_db) ? json(format_double(r.pert_snr_db))
                                                 : json(r.pert_snr_db);
    j["impact_lsd_db"] = r.impact_lsd_db;
    return j;
}

static MetricRow row_from_json(const json& j) {
    MetricRow r;
    r.pair = j.at("pair").get<int>();
    r.model = j.at("model").get<std::string>();
    r.lambda_db = j.at("lambda_db").get<double>();
    r.epsilon = j.at("epsilon").is_string() ? parse_double(j.at("epsilon").get<std::string>())
                                            : j.at("epsilon").get<double>();
    r.mode = j.at("mode").get<std::string>();
    r.loss_final = j.at("loss_final").get<double>();
    r.target_lsd_db = j.at("target_lsd_db").get<double>();
    r.pert_snr_db = j.at("pert_snr_db").is_string()
                        ? parse_double(j.at("pert_snr_db").get<std::string>())
                        : j.at("pert_snr_db").get<double>();
    r.impact_lsd_db = j.at("impact_lsd_db").get<double>();
    return r;
}

void emit_report(const std::vector<MetricRow>& table, const std::string& format,
                 const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    if (format == "csv") {
        f << kCsvHeader << "\n";
        for (const MetricRow& r : table) {
            f << r.pair << ',' << r.model << ',' << format_double(r.lambda_db) << ','
              << format_double(r.epsilon) << ',' << r.mode << ',' << format_double(r.loss_final)
              << ',' << format_double(r.target_lsd_db) << ',' << format_double(r.pert_snr_db)
              << ',' << format_double(r.impact_lsd_db) << "\n";
        }
    } else if (format == "json") {
        json arr = json::array();
        for (const MetricRow& r : table) arr.push_back(row_to_json(r));
        f << arr.dump(2) << "\n";
    } else {
        throw UsageError("unknown report format: " + format);
    }
    if (!f) throw IoError("write failed: " + path);
}

std::vector<MetricRow> read_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<MetricRow> rows;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
        std::string line;
        if (!std::getline(f, line)) throw IoError("empty report: " + path);
        if (line != kCsvHeader) throw IoError("unexpected CSV header in " + path);
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cols;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cols.push_back(cell);
            if (cols.size() != 9) throw IoError("malformed CSV row in " + path);
            MetricRow r;
            r.pair = std::stoi(cols[0]);
            r.model = cols[1];
            r.lambda_db = parse_double(cols[2]);
            r.epsilon = parse_double(cols[3]);
            r.mode = cols[4];
            r.loss_final = parse_double(cols[5]);
            r.target_lsd_db = parse_double(cols[6]);
            r.pert_snr_db = parse_double(cols[7]);
            r.impact_lsd_db = parse_double(cols[8]);
            rows.push_back(std::move(r));
        }
    } else {
        json arr;
        try {
            f >> arr;
        } catch (const json::exception& e) {
            throw IoError("corrupt report " + path + ": " + e.what());
        }
        if (!arr.is_array()) throw IoError("report is not an array: " + path);
        for (const auto& j : arr) rows.push_back(row_from_json(j));
    }
    return rows;
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace specadv
