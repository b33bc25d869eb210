#include "specadv/models.hpp"

#include "specadv/array_store.hpp"

namespace specadv {

// ---- SdeConfig ----

void SdeConfig::validate() const {
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
        throw std::invalid_argument("need 0 < sigma_min < sigma_max");
    if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
    if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
}

double SdeConfig::g(double t) const {
    if (t < 0.0 || t > t_end) throw std::invalid_argument("t outside [0, T]");
    const double ratio = sigma_max / sigma_min;
    return sigma_min * std::pow(ratio, t) * std::sqrt(2.0 * std::log(ratio));
}

double SdeConfig::sigma(double t) const {
    if (t < 0.0 || t > t_end) throw std::invalid_argument("t outside [0, T]");
    const double logr = std::log(sigma_max / sigma_min);
    const double v = sigma_min * sigma_min *
                     (std::pow(sigma_max / sigma_min, 2.0 * t) - std::exp(-2.0 * gamma * t)) *
                     logr / (gamma + logr);
    return std::sqrt(std::max(v, 0.0));
}

double SdeConfig::mean_coef(double t) const { return std::exp(-gamma * t); }

// ---- noise paths ----

NoisePath make_noise_path(Rng& rng, Eigen::Index rows, Eigen::Index cols, int n_steps) {
    NoisePath p;
    p.init.resize(rows, cols);
    rng.fill_complex_unit(p.init);
    p.steps.resize(static_cast<size_t>(n_steps));
    for (auto& z : p.steps) {
        z.resize(rows, cols);
        rng.fill_complex_unit(z);
    }
    return p;
}

NoisePath make_noise_path(uint64_t seed, Eigen::Index rows, Eigen::Index cols, int n_steps) {
    Rng rng(seed);
    NoisePath p = make_noise_path(rng, rows, cols, n_steps);
    p.seed = seed;
    return p;
}

NoisePath make_zero_path(Eigen::Index rows, Eigen::Index cols, int n_steps) {
    NoisePath p;
    p.init = Eigen::ArrayXXcd::Zero(rows, cols);
    p.steps.assign(static_cast<size_t>(n_steps), Eigen::ArrayXXcd::Zero(rows, cols));
    return p;
}

// ---- parameter initialization ----

namespace {

Plane glorot(Rng& rng, int rows, int cols) {
    const double s = std::sqrt(2.0 / (rows + cols));
    Plane w(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) w(i, j) = s * rng.gaussian();
    return w;
}

void check_finite_plane(const Plane& p, const char* name) {
    if (!p.isFinite().all()) throw NumericError(std::string("non-finite parameters: ") + name);
}

}  // namespace

void PredictiveParams::validate() const {
    if (variant != "direct" && variant != "crm")
        throw std::invalid_argument("unknown predictive variant: " + variant);
    if (W3.rows() % 2 != 0 || W1.cols() != W3.rows())
        throw std::invalid_argument("predictive parameter shapes inconsistent");
    if (W2.rows() != W2.cols() || W2.rows() != W1.rows() || W3.cols() != W2.rows())
        throw std::invalid_argument("predictive hidden shapes inconsistent");
    if (b1.rows() != W1.rows() || b2.rows() != W2.rows() || b3.rows() != W3.rows())
        throw std::invalid_argument("predictive bias shapes inconsistent");
    if (skip.rows() != W3.rows() || skip.cols() != 1)
        throw std::invalid_argument("skip must be (2F)x1");
    if (!(data_scale > 0.0)) throw std::invalid_argument("data_scale must be positive");
    for (const Plane* p : {&W1, &b1, &W2, &b2, &W3, &b3, &skip}) check_finite_plane(*p, variant.c_str());
}

PredictiveParams init_predictive(const std::string& variant, int bins, int hidden, uint64_t seed) {
    if (variant != "direct" && variant != "crm")
        throw UsageError("unknown predictive variant: " + variant);
    Rng rng(seed);
    PredictiveParams p;
    p.variant = variant;
    p.W1 = glorot(rng, hidden, 2 * bins);
    p.b1 = Plane::Zero(hidden, 1);
    p.W2 = glorot(rng, hidden, hidden);
    p.b2 = Plane::Zero(hidden, 1);
    p.W3 = Plane::Zero(2 * bins, hidden);
    p.b3 = Plane::Zero(2 * bins, 1);
    // direct: identity start (output = input); crm: zero logits (mask = 0)
    p.skip = variant == "direct" ? Plane::Ones(2 * bins, 1) : Plane::Zero(2 * bins, 1);
    return p;
}

PredictiveVars put_on_tape(Tape& t, const PredictiveParams& p, bool trainable) {
    p.validate();
    PredictiveVars v;
    v.W1 = t.leaf(p.W1, trainable);
    v.b1 = t.leaf(p.b1, trainable);
    v.W2 = t.leaf(p.W2, trainable);
    v.b2 = t.leaf(p.b2, trainable);
    v.W3 = t.leaf(p.W3, trainable);
    v.b3 = t.leaf(p.b3, trainable);
    v.skip = t.leaf(p.skip, trainable);
    v.input_scale = p.input_scale;
    v.data_scale = p.data_scale;
    v.variant = p.variant;
    return v;
}

CVar predictive_apply(Tape& t, const PredictiveVars& v, CVar Y) {
    const int f = static_cast<int>(t.value(Y.re).rows());
    if (2 * f != t.value(v.W1).cols())
        throw std::invalid_argument("spectrogram rows do not match trained model");
    const Var x = t.vstack2(Y.re, Y.im);
    // the net works on the corpus-normalized spectrogram; the direct head
    // un-scales on the way out, so identity init holds for any data_scale
    const Var xs = t.scale(x, v.data_scale);
    const Var h1 = t.tanh_(t.dense(v.W1, t.scale(xs, v.input_scale), v.b1));
    const Var h2 = t.tanh_(t.dense(v.W2, h1, v.b2));
    const Var logits = t.add(t.dense(v.W3, h2, v.b3), t.mul_col(xs, v.skip));
    if (v.variant == "direct") {
        const Var out = t.scale(logits, 1.0 / v.data_scale);
        return {t.slice_rows(out, 0, f), t.slice_rows(out, f, 2 * f)};
    }
    // crm: M = 2 tanh(logits), S_hat = M (.) Y
    const Var mr = t.scale(t.tanh_(t.slice_rows(logits, 0, f)), 2.0);
    const Var mi = t.scale(t.tanh_(t.slice_rows(logits, f, 2 * f)), 2.0);
    return cmul(t, {mr, mi}, Y);
}

// ---- score model ----

void ScoreParams::validate() const {
    if (W3.rows() % 2 != 0 || W1.cols() != 2 * W3.rows())
        throw std::invalid_argument("score parameter shapes inconsistent");
    if (W2.rows() != W2.cols() || W2.rows() != W1.rows() || W3.cols() != W2.rows())
        throw std::invalid_argument("score hidden shapes inconsistent");
    if (Wt.rows() != W1.rows() || Wt.cols() != 16)
        throw std::invalid_argument("time-embedding weights must be HxD16");
    if (b1.rows() != W1.rows() || b2.rows() != W2.rows() || b3.rows() != W3.rows())
        throw std::invalid_argument("score bias shapes inconsistent");
    if (skip.rows() != W3.rows() || skip.cols() != 1 || skip_y.rows() != W3.rows() ||
        skip_y.cols() != 1)
        throw std::invalid_argument("skips must be (2F)x1");
    if (!(data_scale > 0.0)) throw std::invalid_argument("data_scale must be positive");
    for (const Plane* p : {&W1, &b1, &Wt, &W2, &b2, &W3, &b3, &skip, &skip_y})
        check_finite_plane(*p, "score");
}

ScoreParams init_score(int bins, int hidden, uint64_t seed) {
    Rng rng(seed);
    ScoreParams p;
    p.W1 = glorot(rng, hidden, 4 * bins);
    p.b1 = Plane::Zero(hidden, 1);
    p.Wt = glorot(rng, hidden, 16);
    p.W2 = glorot(rng, hidden, hidden);
    p.b2 = Plane::Zero(hidden, 1);
    p.W3 = Plane::Zero(2 * bins, hidden);  // zero score at init
    p.b3 = Plane::Zero(2 * bins, 1);
    p.skip = Plane::Zero(2 * bins, 1);
    p.skip_y = Plane::Zero(2 * bins, 1);
    return p;
}

ScoreVars put_on_tape(Tape& t, const ScoreParams& p, bool trainable) {
    p.validate();
    ScoreVars v;
    v.W1 = t.leaf(p.W1, trainable);
    v.b1 = t.leaf(p.b1, trainable);
    v.Wt = t.leaf(p.Wt, trainable);
    v.W2 = t.leaf(p.W2, trainable);
    v.b2 = t.leaf(p.b2, trainable);
    v.W3 = t.leaf(p.W3, trainable);
    v.b3 = t.leaf(p.b3, trainable);
    v.skip = t.leaf(p.skip, trainable);
    v.skip_y = t.leaf(p.skip_y, trainable);
    v.input_scale = p.input_scale;
    return v;
}

namespace {

Plane time_features(double time) {
    Plane f(16, 1);
    for (int p = 0; p < 8; ++p) {
        const double w = kPi * std::pow(2.0, 0.5 * p);
        f(2 * p, 0) = std::sin(w * time);
        f(2 * p + 1, 0) = std::cos(w * time);
    }
    return f;
}

}  // namespace

CVar score_apply(Tape& t, const ScoreVars& v, CVar x, CVar Y, double time) {
    const int f = static_cast<int>(t.value(x.re).rows());
    if (4 * f != t.value(v.W1).cols())
        throw std::invalid_argument("spectrogram rows do not match trained score model");
    const Var xs = t.vstack2(x.re, x.im);
    const Var ys = t.vstack2(Y.re, Y.im);
    const Var stacked = t.vstack2(xs, ys);
    const Var emb = t.dense(v.Wt, t.constant(time_features(time)));
    const Var h1 = t.tanh_(t.add_col(t.dense(v.W1, t.scale(stacked, v.input_scale), v.b1), emb));
    const Var h2 = t.tanh_(t.dense(v.W2, h1, v.b2));
    const Var out = t.add(t.add(t.dense(v.W3, h2, v.b3), t.mul_col(xs, v.skip)),
                          t.mul_col(ys, v.skip_y));
    return {t.slice_rows(out, 0, f), t.slice_rows(out, f, 2 * f)};
}

CVar reverse_sde_sample(Tape& t, const ScoreVars& v, double data_scale, CVar Y_in,
                        const SdeConfig& sde, const NoisePath& path) {
    sde.validate();
    if (static_cast<int>(path.steps.size()) != sde.n_steps)
        throw std::invalid_argument("noise path length does not match n_steps");
    const auto rows = t.value(Y_in.re).rows();
    const auto cols = t.value(Y_in.re).cols();
    if (path.init.rows() != rows || path.init.cols() != cols)
        throw std::invalid_argument("noise path shape mismatch");

    CVar Y = cscale(t, Y_in, data_scale);
    const double T = sde.t_end;
    const double dt = T / sde.n_steps;

    // x_T = Y + sigma(T) z
    CVar x = cadd(t, Y, cscale(t, cconst(t, path.init), sde.sigma(T)));

    for (int i = 0; i < sde.n_steps; ++i) {
        const double ti = T * (1.0 - static_cast<double>(i) / sde.n_steps);
        const double gi = sde.g(ti);
        const double inv_sig = 1.0 / sde.sigma(ti);  // ti >= T/N > 0
        const double gamma = sde.gamma;
        const CVar zi = cconst(t, path.steps[static_cast<size_t>(i)]);
        const ScoreVars vv = v;
        auto step = [vv, ti, gi, gamma, dt, inv_sig](Tape& s, const std::vector<Var>& in) {
            ScoreVars sv = vv;
            sv.W1 = in[0];
            sv.b1 = in[1];
            sv.Wt = in[2];
            sv.W2 = in[3];
            sv.b2 = in[4];
            sv.W3 = in[5];
            sv.b3 = in[6];
            sv.skip = in[7];
            sv.skip_y = in[8];
            CVar cx{in[9], in[10]}, cy{in[11], in[12]}, cz{in[13], in[14]};
            // the network predicts the bridge noise; score = NN / sigma(t)
            const CVar score = cscale(s, score_apply(s, sv, cx, cy, ti), inv_sig);
            // x + dt*(gamma (Y - x) + g^2 score) + g sqrt(dt) z
            CVar drift = cadd(s, cscale(s, csub(s, cy, cx), gamma),
                              cscale(s, score, gi * gi));
            CVar nxt = cadd(s, cx, cscale(s, drift, dt));
            nxt = cadd(s, nxt, cscale(s, cz, gi * std::sqrt(dt)));
            return std::vector<Var>{nxt.re, nxt.im};
        };
        const std::vector<Var> outs = t.region(
            step, {v.W1, v.b1, v.Wt, v.W2, v.b2, v.W3, v.b3, v.skip, v.skip_y,
                   x.re, x.im, Y.re, Y.im, zi.re, zi.im});
        x = {outs[0], outs[1]};
    }
    return cscale(t, x, 1.0 / data_scale);
}

// ---- bundle ----

void Model::validate() const {
    if (kind == "direct" || kind == "crm") {
        pred.validate();
        if (pred.variant != kind) throw std::invalid_argument("variant tag mismatch");
    } else if (kind == "diffusion") {
        score.validate();
        sde.validate();
    } else {
        throw std::invalid_argument("unknown model kind: " + kind);
    }
}

void save_model(const std::string& path_prefix, const Model& m) {
    m.validate();
    ArrayStore st;
    st.meta["kind"] = m.kind;
    if (m.kind == "diffusion") {
        st.meta_num["input_scale"] = m.score.input_scale;
        st.meta_num["data_scale"] = m.score.data_scale;
        st.meta_num["gamma"] = m.sde.gamma;
        st.meta_num["sigma_min"] = m.sde.sigma_min;
        st.meta_num["sigma_max"] = m.sde.sigma_max;
        st.meta_num["t_end"] = m.sde.t_end;
        st.meta_num["n_steps"] = m.sde.n_steps;
        st.put("W1", m.score.W1);
        st.put("b1", m.score.b1);
        st.put("Wt", m.score.Wt);
        st.put("W2", m.score.W2);
        st.put("b2", m.score.b2);
        st.put("W3", m.score.W3);
        st.put("b3", m.score.b3);
        st.put("skip", m.score.skip);
        st.put("skip_y", m.score.skip_y);
    } else {
        st.meta["variant"] = m.pred.variant;
        st.meta_num["input_scale"] = m.pred.input_scale;
        st.meta_num["data_scale"] = m.pred.data_scale;
        st.put("W1", m.pred.W1);
        st.put("b1", m.pred.b1);
        st.put("W2", m.pred.W2);
        st.put("b2", m.pred.b2);
        st.put("W3", m.pred.W3);
        st.put("b3", m.pred.b3);
        st.put("skip", m.pred.skip);
    }
    save_store(path_prefix, st);
}

Model load_model(const std::string& path_prefix) {
    const ArrayStore st = load_store(path_prefix);
    Model m;
    m.kind = st.str("kind");
    if (m.kind == "diffusion") {
        m.score.input_scale = st.num("input_scale");
        m.score.data_scale = st.num("data_scale");
        m.score.W1 = st.get("W1");
        m.score.b1 = st.get("b1");
        m.score.Wt = st.get("Wt");
        m.score.W2 = st.get("W2");
        m.score.b2 = st.get("b2");
        m.score.W3 = st.get("W3");
        m.score.b3 = st.get("b3");
        m.score.skip = st.get("skip");
        m.score.skip_y = st.get("skip_y");
        m.sde.gamma = st.num("gamma");
        m.sde.sigma_min = st.num("sigma_min");
        m.sde.sigma_max = st.num("sigma_max");
        m.sde.t_end = st.num("t_end");
        m.sde.n_steps = static_cast<int>(st.num("n_steps"));
    } else {
        m.pred.variant = st.str("variant");
        m.pred.input_scale = st.num("input_scale");
        m.pred.data_scale = st.num("data_scale");
        m.pred.W1 = st.get("W1");
        m.pred.b1 = st.get("b1");
        m.pred.W2 = st.get("W2");
        m.pred.b2 = st.get("b2");
        m.pred.W3 = st.get("W3");
        m.pred.b3 = st.get("b3");
        m.pred.skip = st.get("skip");
    }
    m.validate();
    return m;
}

CVar model_apply(Tape& t, const Model& m, CVar Y, const NoisePath* path) {
    if (m.kind == "diffusion") {
        if (path == nullptr) throw std::invalid_argument("diffusion forward needs a noise path");
        const ScoreVars v = put_on_tape(t, m.score, false);
        return reverse_sde_sample(t, v, m.score.data_scale, Y, m.sde, *path);
    }
    const PredictiveVars v = put_on_tape(t, m.pred, false);
    return predictive_apply(t, v, Y);
}

Eigen::ArrayXXcd enhance(const Model& m, const Eigen::ArrayXXcd& Y, const NoisePath* path) {
    Tape t;
    const CVar y = cconst(t, Y);
    const CVar s = model_apply(t, m, y, path);
    return cvalue(t, s);
}

ComplexSpectrogram enhance(const Model& m, const ComplexSpectrogram& Y, const NoisePath* path) {
    ComplexSpectrogram out;
    out.cfg = Y.cfg;
    out.bins = enhance(m, Y.bins, path);
    return out;
}

}  // namespace specadv
