#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "specadv/common.hpp"

namespace specadv {

using Plane = Eigen::ArrayXXd;  // one real plane; complex tensors are (re, im) pairs

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape;
// A checkpointed segment: given a tape and leaves holding the region inputs,
// build the segment and return its outputs. Must be deterministic given the
// inputs — any randomness enters as an explicit input.
using RegionFn = std::function<std::vector<Var>(Tape&, const std::vector<Var>&)>;

// Reverse-mode tape over real planes. Define-by-run: each call appends a node
// and returns its Var. backward() accumulates (dL/d re, dL/d im)-style plane
// gradients into every requires_grad leaf.
class Tape {
public:
    Var leaf(Plane value, bool requires_grad = true);
    Var constant(Plane value) { return leaf(std::move(value), false); }
    Var scalar(double v) { return constant(Plane::Constant(1, 1, v)); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                     // elementwise
    Var affine(Var a, double m, double c);     // m*a + c
    Var neg(Var a) { return affine(a, -1.0, 0.0); }
    Var scale(Var a, double m) { return affine(a, m, 0.0); }
    Var tanh_(Var a);
    Var sum(Var a);                            // -> 1x1
    Var dense(Var W, Var x, Var b = {});       // W:PxQ, x:QxT, b:Px1 broadcast
    Var conv1d(Var W, Var x, Var b = {});      // W:Px(Q*K) with col q*K+k, same padding
    Var add_col(Var a, Var v);                 // a:PxT + v:Px1 broadcast over columns
    Var mul_col(Var a, Var v);                 // a:PxT * v:Px1 broadcast over columns
    Var vstack2(Var a, Var b);
    Var slice_rows(Var a, int r0, int r1);     // rows [r0, r1)

    // Checkpointed region: forward keeps only the input var ids and the output
    // values; backward replays fn on a scratch tape to rebuild intermediates.
    std::vector<Var> region(const RegionFn& fn, const std::vector<Var>& inputs);

    const Plane& value(Var v) const;
    Plane grad(Var v) const;                   // zero plane when never touched
    void backward(Var scalar_loss);
    void backward_multi(const std::vector<Var>& outs, const std::vector<Plane>& seeds);

    int size() const { return static_cast<int>(nodes_.size()); }
    // Planes currently held alive by node values — the memory introspection
    // hook for the checkpointing contract.
    size_t retained_plane_count() const;

private:
    enum class Op : uint8_t {
        Leaf, Add, Sub, Mul, Affine, Tanh, Sum, Dense, Conv1d,
        AddCol, MulCol, VStack2, SliceRows, RegionOut
    };
    struct RegionPayload {
        RegionFn fn;
        std::vector<Var> inputs;     // main-tape vars (values retained by their nodes)
        std::vector<Var> out_map;    // fn output j -> main-tape var
        std::vector<bool> is_new;    // fn output j materialized as a RegionOut node
    };
    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        Plane value;
        double m = 1.0, k = 0.0;     // affine coefficients
        int i0 = 0, i1 = 0;          // slice bounds / conv kernel size
        bool requires_grad = false;
        std::unique_ptr<RegionPayload> payload;  // on the first RegionOut of a region
    };

    int push(Node n);
    void accum(int id, const Plane& g);
    void accum_block(int id, int r0, const Plane& g);
    const Node& at(Var v) const;
    void check_shape(const Plane& a, const Plane& b, const char* what) const;
    void replay_region(int payload_id, std::vector<Plane>& grads);

    std::vector<Node> nodes_;
    std::vector<Plane> grads_;
};

// ---- complex pair helpers ----

struct CVar {
    Var re, im;
};

inline CVar cleaf(Tape& t, const Eigen::ArrayXXcd& z, bool requires_grad = true) {
    return {t.leaf(z.real(), requires_grad), t.leaf(z.imag(), requires_grad)};
}
inline CVar cconst(Tape& t, const Eigen::ArrayXXcd& z) { return cleaf(t, z, false); }
inline Eigen::ArrayXXcd cvalue(const Tape& t, CVar z) {
    Eigen::ArrayXXcd out(t.value(z.re).rows(), t.value(z.re).cols());
    out.real() = t.value(z.re);
    out.imag() = t.value(z.im);
    return out;
}
inline CVar cadd(Tape& t, CVar a, CVar b) { return {t.add(a.re, b.re), t.add(a.im, b.im)}; }
inline CVar csub(Tape& t, CVar a, CVar b) { return {t.sub(a.re, b.re), t.sub(a.im, b.im)}; }
inline CVar cconj(Tape& t, CVar a) { return {a.re, t.neg(a.im)}; }
inline CVar cscale(Tape& t, CVar a, double m) { return {t.scale(a.re, m), t.scale(a.im, m)}; }
inline CVar cmul(Tape& t, CVar a, CVar b) {
    return {t.sub(t.mul(a.re, b.re), t.mul(a.im, b.im)),
            t.add(t.mul(a.re, b.im), t.mul(a.im, b.re))};
}
inline Var cabs2(Tape& t, CVar a) { return t.add(t.mul(a.re, a.re), t.mul(a.im, a.im)); }

}  // namespace specadv
