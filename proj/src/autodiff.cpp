#include "specadv/autodiff.hpp"

#include <algorithm>

namespace specadv {

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::at(Var v) const {
    if (!v.valid() || v.id >= size()) throw std::invalid_argument("invalid tape var");
    return nodes_[static_cast<size_t>(v.id)];
}

void Tape::check_shape(const Plane& a, const Plane& b, const char* what) const {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

Var Tape::leaf(Plane value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
    const Node &na = at(a), &nb = at(b);
    check_shape(na.value, nb.value, "add");
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.value = na.value + nb.value;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return {push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
    const Node &na = at(a), &nb = at(b);
    check_shape(na.value, nb.value, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a.id;
    n.b = b.id;
    n.value = na.value - nb.value;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return {push(std::move(n))};
}

Var Tape::mul(Var a, Var b) {
    const Node &na = at(a), &nb = at(b);
    check_shape(na.value, nb.value, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a.id;
    n.b = b.id;
    n.value = na.value * nb.value;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return {push(std::move(n))};
}

Var Tape::affine(Var a, double m, double c) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Affine;
    n.a = a.id;
    n.m = m;
    n.k = c;
    n.value = m * na.value + c;
    n.requires_grad = na.requires_grad;
    return {push(std::move(n))};
}

Var Tape::tanh_(Var a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Tanh;
    n.a = a.id;
    n.value = na.value.tanh();
    n.requires_grad = na.requires_grad;
    return {push(std::move(n))};
}

Var Tape::sum(Var a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    n.value = Plane::Constant(1, 1, na.value.sum());
    n.requires_grad = na.requires_grad;
    return {push(std::move(n))};
}

Var Tape::dense(Var W, Var x, Var b) {
    const Node &nw = at(W), &nx = at(x);
    if (nw.value.cols() != nx.value.rows())
        throw std::invalid_argument("dense: W cols != x rows");
    Node n;
    n.op = Op::Dense;
    n.a = W.id;
    n.b = x.id;
    n.value = (nw.value.matrix() * nx.value.matrix()).array();
    n.requires_grad = nw.requires_grad || nx.requires_grad;
    if (b.valid()) {
        const Node& nb = at(b);
        if (nb.value.rows() != nw.value.rows() || nb.value.cols() != 1)
            throw std::invalid_argument("dense: bias must be Px1");
        n.c = b.id;
        n.value.colwise() += nb.value.col(0);
        n.requires_grad = n.requires_grad || nb.requires_grad;
    }
    return {push(std::move(n))};
}

Var Tape::conv1d(Var W, Var x, Var b) {
    const Node &nw = at(W), &nx = at(x);
    const int q = static_cast<int>(nx.value.rows());
    const int t = static_cast<int>(nx.value.cols());
    if (q == 0 || nw.value.cols() % q != 0)
        throw std::invalid_argument("conv1d: W cols must be Q*K");
    const int k = static_cast<int>(nw.value.cols()) / q;
    const int p = static_cast<int>(nw.value.rows());
    const int center = k / 2;

    Node n;
    n.op = Op::Conv1d;
    n.a = W.id;
    n.b = x.id;
    n.i0 = k;
    n.value = Plane::Zero(p, t);
    n.requires_grad = nw.requires_grad || nx.requires_grad;
    Eigen::MatrixXd wk(p, q);
    for (int kk = 0; kk < k; ++kk) {
        for (int qq = 0; qq < q; ++qq) wk.col(qq) = nw.value.col(qq * k + kk).matrix();
        const int shift = kk - center;
        const int t0 = std::max(0, -shift);
        const int t1 = std::min(t, t - shift);
        if (t1 <= t0) continue;
        n.value.middleCols(t0, t1 - t0).matrix() +=
            wk * nx.value.middleCols(t0 + shift, t1 - t0).matrix();
    }
    if (b.valid()) {
        const Node& nb = at(b);
        if (nb.value.rows() != p || nb.value.cols() != 1)
            throw std::invalid_argument("conv1d: bias must be Px1");
        n.c = b.id;
        n.value.colwise() += nb.value.col(0);
        n.requires_grad = n.requires_grad || nb.requires_grad;
    }
    return {push(std::move(n))};
}

Var Tape::add_col(Var a, Var v) {
    const Node &na = at(a), &nv = at(v);
    if (nv.value.rows() != na.value.rows() || nv.value.cols() != 1)
        throw std::invalid_argument("add_col: v must be Px1");
    Node n;
    n.op = Op::AddCol;
    n.a = a.id;
    n.b = v.id;
    n.value = na.value;
    n.value.colwise() += nv.value.col(0);
    n.requires_grad = na.requires_grad || nv.requires_grad;
    return {push(std::move(n))};
}

Var Tape::mul_col(Var a, Var v) {
    const Node &na = at(a), &nv = at(v);
    if (nv.value.rows() != na.value.rows() || nv.value.cols() != 1)
        throw std::invalid_argument("mul_col: v must be Px1");
    Node n;
    n.op = Op::MulCol;
    n.a = a.id;
    n.b = v.id;
    n.value = na.value.colwise() * nv.value.col(0);
    n.requires_grad = na.requires_grad || nv.requires_grad;
    return {push(std::move(n))};
}

Var Tape::vstack2(Var a, Var b) {
    const Node &na = at(a), &nb = at(b);
    if (na.value.cols() != nb.value.cols())
        throw std::invalid_argument("vstack2: column mismatch");
    Node n;
    n.op = Op::VStack2;
    n.a = a.id;
    n.b = b.id;
    n.i0 = static_cast<int>(na.value.rows());
    n.value.resize(na.value.rows() + nb.value.rows(), na.value.cols());
    n.value.topRows(na.value.rows()) = na.value;
    n.value.bottomRows(nb.value.rows()) = nb.value;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    return {push(std::move(n))};
}

Var Tape::slice_rows(Var a, int r0, int r1) {
    const Node& na = at(a);
    if (r0 < 0 || r1 > na.value.rows() || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range");
    Node n;
    n.op = Op::SliceRows;
    n.a = a.id;
    n.i0 = r0;
    n.i1 = r1;
    n.value = na.value.middleRows(r0, r1 - r0);
    n.requires_grad = na.requires_grad;
    return {push(std::move(n))};
}

std::vector<Var> Tape::region(const RegionFn& fn, const std::vector<Var>& inputs) {
    Tape scratch;
    std::vector<Var> scratch_in;
    scratch_in.reserve(inputs.size());
    for (Var v : inputs) scratch_in.push_back(scratch.leaf(at(v).value, at(v).requires_grad));
    const std::vector<Var> scratch_out = fn(scratch, scratch_in);

    bool any_rg = false;
    for (Var v : inputs) any_rg = any_rg || at(v).requires_grad;

    auto payload = std::make_unique<RegionPayload>();
    payload->fn = fn;
    payload->inputs = inputs;
    payload->is_new.resize(scratch_out.size());

    std::vector<Var> outs;
    outs.reserve(scratch_out.size());
    int first_new = -1;
    for (size_t j = 0; j < scratch_out.size(); ++j) {
        int passthrough = -1;
        for (size_t i = 0; i < scratch_in.size(); ++i)
            if (scratch_out[j].id == scratch_in[i].id) passthrough = static_cast<int>(i);
        if (passthrough >= 0) {
            payload->is_new[j] = false;
            outs.push_back(inputs[static_cast<size_t>(passthrough)]);
        } else {
            payload->is_new[j] = true;
            Node n;
            n.op = Op::RegionOut;
            n.value = scratch.value(scratch_out[j]);
            n.requires_grad = any_rg;
            outs.push_back({push(std::move(n))});
            if (first_new < 0) first_new = outs.back().id;
        }
    }
    payload->out_map = outs;
    if (first_new >= 0)
        nodes_[static_cast<size_t>(first_new)].payload = std::move(payload);
    return outs;
}

const Plane& Tape::value(Var v) const { return at(v).value; }

Plane Tape::grad(Var v) const {
    const Node& n = at(v);
    if (grads_.size() == nodes_.size() && grads_[static_cast<size_t>(v.id)].size() > 0)
        return grads_[static_cast<size_t>(v.id)];
    return Plane::Zero(n.value.rows(), n.value.cols());
}

void Tape::accum(int id, const Plane& g) {
    if (id < 0) return;
    if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
    Plane& slot = grads_[static_cast<size_t>(id)];
    if (slot.size() == 0)
        slot = g;
    else
        slot += g;
}

void Tape::accum_block(int id, int r0, const Plane& g) {
    if (id < 0) return;
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    Plane& slot = grads_[static_cast<size_t>(id)];
    if (slot.size() == 0) slot = Plane::Zero(n.value.rows(), n.value.cols());
    slot.middleRows(r0, g.rows()) += g;
}

void Tape::backward(Var scalar_loss) {
    const Node& n = at(scalar_loss);
    if (n.value.rows() != 1 || n.value.cols() != 1)
        throw std::invalid_argument("backward: loss must be 1x1");
    backward_multi({scalar_loss}, {Plane::Ones(1, 1)});
}

void Tape::replay_region(int payload_id, std::vector<Plane>& grads) {
    const Node& pn = nodes_[static_cast<size_t>(payload_id)];
    RegionPayload& pay = *pn.payload;

    bool any_seed = false;
    std::vector<Plane> seeds(pay.out_map.size());
    for (size_t j = 0; j < pay.out_map.size(); ++j) {
        const int oid = pay.out_map[j].id;
        if (pay.is_new[j] && grads[static_cast<size_t>(oid)].size() > 0) {
            seeds[j] = grads[static_cast<size_t>(oid)];
            any_seed = true;
        } else {
            const Node& on = nodes_[static_cast<size_t>(oid)];
            seeds[j] = Plane::Zero(on.value.rows(), on.value.cols());
        }
    }
    if (!any_seed) return;

    Tape scratch;
    std::vector<Var> scratch_in;
    scratch_in.reserve(pay.inputs.size());
    for (Var v : pay.inputs)
        scratch_in.push_back(scratch.leaf(at(v).value, at(v).requires_grad));
    const std::vector<Var> scratch_out = pay.fn(scratch, scratch_in);
    if (scratch_out.size() != pay.out_map.size())
        throw NumericError("checkpoint region changed arity on replay");
    for (size_t j = 0; j < scratch_out.size(); ++j) {
        if (!pay.is_new[j]) continue;
        const Plane& recomputed = scratch.value(scratch_out[j]);
        const Plane& stored = nodes_[static_cast<size_t>(pay.out_map[j].id)].value;
        if (recomputed.rows() != stored.rows() || recomputed.cols() != stored.cols() ||
            (recomputed != stored).any())
            throw NumericError("checkpoint region is not deterministic");
    }
    scratch.backward_multi(scratch_out, seeds);
    for (size_t i = 0; i < pay.inputs.size(); ++i) {
        if (!at(pay.inputs[i]).requires_grad) continue;
        accum(pay.inputs[i].id, scratch.grad(scratch_in[i]));
    }
}

void Tape::backward_multi(const std::vector<Var>& outs, const std::vector<Plane>& seeds) {
    if (outs.size() != seeds.size())
        throw std::invalid_argument("backward_multi: outs/seeds size mismatch");
    grads_.assign(nodes_.size(), Plane());
    for (size_t i = 0; i < outs.size(); ++i) {
        const Node& n = at(outs[i]);
        check_shape(n.value, seeds[i], "backward seed");
        accum(outs[i].id, seeds[i]);
    }

    for (int id = size() - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.op == Op::RegionOut) {
            if (n.payload) replay_region(id, grads_);
            continue;  // sibling outputs are consumed by the payload replay
        }
        const Plane& g = grads_[static_cast<size_t>(id)];
        if (g.size() == 0 || !n.requires_grad) continue;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add:
                accum(n.a, g);
                accum(n.b, g);
                break;
            case Op::Sub:
                accum(n.a, g);
                accum(n.b, -g);
                break;
            case Op::Mul:
                accum(n.a, g * nodes_[static_cast<size_t>(n.b)].value);
                accum(n.b, g * nodes_[static_cast<size_t>(n.a)].value);
                break;
            case Op::Affine:
                accum(n.a, n.m * g);
                break;
            case Op::Tanh:
                accum(n.a, g * (1.0 - n.value * n.value));
                break;
            case Op::Sum:
                accum(n.a, Plane::Constant(nodes_[static_cast<size_t>(n.a)].value.rows(),
                                           nodes_[static_cast<size_t>(n.a)].value.cols(),
                                           g(0, 0)));
                break;
            case Op::Dense: {
                const Node& nw = nodes_[static_cast<size_t>(n.a)];
                const Node& nx = nodes_[static_cast<size_t>(n.b)];
                if (nw.requires_grad)
                    accum(n.a, (g.matrix() * nx.value.matrix().transpose()).array());
                if (nx.requires_grad)
                    accum(n.b, (nw.value.matrix().transpose() * g.matrix()).array());
                if (n.c >= 0) accum(n.c, g.rowwise().sum());
                break;
            }
            case Op::Conv1d: {
                const Node& nw = nodes_[static_cast<size_t>(n.a)];
                const Node& nx = nodes_[static_cast<size_t>(n.b)];
                const int k = n.i0;
                const int q = static_cast<int>(nx.value.rows());
                const int p = static_cast<int>(nw.value.rows());
                const int t = static_cast<int>(nx.value.cols());
                const int center = k / 2;
                Plane gw = Plane::Zero(p, q * k);
                Plane gx = Plane::Zero(q, t);
                Eigen::MatrixXd wk(p, q);
                for (int kk = 0; kk < k; ++kk) {
                    const int shift = kk - center;
                    const int t0 = std::max(0, -shift);
                    const int t1 = std::min(t, t - shift);
                    if (t1 <= t0) continue;
                    const auto gseg = g.middleCols(t0, t1 - t0).matrix();
                    const auto xseg = nx.value.middleCols(t0 + shift, t1 - t0).matrix();
                    if (nw.requires_grad) {
                        const Eigen::MatrixXd gwk = gseg * xseg.transpose();
                        for (int qq = 0; qq < q; ++qq) gw.col(qq * k + kk) = gwk.col(qq).array();
                    }
                    if (nx.requires_grad) {
                        for (int qq = 0; qq < q; ++qq) wk.col(qq) = nw.value.col(qq * k + kk).matrix();
                        gx.middleCols(t0 + shift, t1 - t0).matrix() += wk.transpose() * gseg;
                    }
                }
                if (nw.requires_grad) accum(n.a, gw);
                if (nx.requires_grad) accum(n.b, gx);
                if (n.c >= 0) accum(n.c, g.rowwise().sum());
                break;
            }
            case Op::AddCol:
                accum(n.a, g);
                accum(n.b, g.rowwise().sum());
                break;
            case Op::MulCol: {
                const Node& na = nodes_[static_cast<size_t>(n.a)];
                const Node& nv = nodes_[static_cast<size_t>(n.b)];
                if (na.requires_grad) accum(n.a, g.colwise() * nv.value.col(0));
                if (nv.requires_grad) accum(n.b, (g * na.value).rowwise().sum());
                break;
            }
            case Op::VStack2:
                accum(n.a, g.topRows(n.i0));
                accum(n.b, g.bottomRows(g.rows() - n.i0));
                break;
            case Op::SliceRows:
                accum_block(n.a, n.i0, g);
                break;
            case Op::RegionOut:
                break;
        }
    }
}

size_t Tape::retained_plane_count() const {
    size_t c = 0;
    for (const Node& n : nodes_)
        if (n.value.size() > 0) ++c;
    return c;
}

}  // namespace specadv
