#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <stdexcept>

#include "json.hpp"
#include "scarnav/scar.hpp"

namespace scarnav {

namespace {

constexpr double kSigmoidClamp = 1e-7;

double draw_normal(Rng& rng) {
    const double u1 = std::max(rng.uniform(), 1e-300);
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// Adam state bound to a weight container owned by a layer.
struct ParamSlot {
    std::vector<double>* w = nullptr;
    std::vector<double> g, m, v;
    int kind = 0;  // ScarNetwork::SlotKind

    void bind(std::vector<double>* target, int kind_) {
        w = target;
        kind = kind_;
        g.assign(target->size(), 0.0);
        m.assign(target->size(), 0.0);
        v.assign(target->size(), 0.0);
    }
};

using Registry = std::vector<ParamSlot*>;

// ---------------------------------------------------------------- dense ops

Tensor dense_conv_apply(const Tensor& x, const ConvKernel& kern, int s, int p) {
    const int ho = (x.h + 2 * p - kern.k) / s + 1;
    const int wo = (x.w + 2 * p - kern.k) / s + 1;
    Tensor out(kern.cout, ho, wo);
    for (int oc = 0; oc < kern.cout; ++oc) {
        double* plane = &out.v[static_cast<std::size_t>(oc) * out.plane()];
        std::fill(plane, plane + out.plane(), kern.b[oc]);
    }
    for (int oc = 0; oc < kern.cout; ++oc) {
        for (int ic = 0; ic < kern.cin; ++ic) {
            for (int ky = 0; ky < kern.k; ++ky) {
                for (int kx = 0; kx < kern.k; ++kx) {
                    const double wv = kern.wat(oc, ic, ky, kx);
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * s + ky - p;
                        if (iy < 0 || iy >= x.h) continue;
                        const double* xrow = &x.v[x.idx(ic, iy, 0)];
                        double* orow = &out.v[out.idx(oc, oy, 0)];
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * s + kx - p;
                            if (ix < 0 || ix >= x.w) continue;
                            orow[ox] += wv * xrow[ix];
                        }
                    }
                }
            }
        }
    }
    return out;
}

void dense_conv_backward(const Tensor& x, const Tensor& gy, const ConvKernel& kern, int s, int p,
                         std::vector<double>& gw, std::vector<double>& gb, Tensor* gx) {
    for (int oc = 0; oc < kern.cout; ++oc) {
        const double* gplane = &gy.v[static_cast<std::size_t>(oc) * gy.plane()];
        double acc = 0.0;
        for (std::size_t i = 0; i < gy.plane(); ++i) acc += gplane[i];
        gb[oc] += acc;
    }
    for (int oc = 0; oc < kern.cout; ++oc) {
        for (int ic = 0; ic < kern.cin; ++ic) {
            for (int ky = 0; ky < kern.k; ++ky) {
                for (int kx = 0; kx < kern.k; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < gy.h; ++oy) {
                        const int iy = oy * s + ky - p;
                        if (iy < 0 || iy >= x.h) continue;
                        const double* xrow = &x.v[x.idx(ic, iy, 0)];
                        const double* grow = &gy.v[gy.idx(oc, oy, 0)];
                        for (int ox = 0; ox < gy.w; ++ox) {
                            const int ix = ox * s + kx - p;
                            if (ix < 0 || ix >= x.w) continue;
                            acc += grow[ox] * xrow[ix];
                        }
                    }
                    gw[kern.widx(oc, ic, ky, kx)] += acc;
                }
            }
        }
    }
    if (!gx) return;
    for (int oc = 0; oc < kern.cout; ++oc) {
        for (int ic = 0; ic < kern.cin; ++ic) {
            for (int ky = 0; ky < kern.k; ++ky) {
                for (int kx = 0; kx < kern.k; ++kx) {
                    const double wv = kern.wat(oc, ic, ky, kx);
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < gy.h; ++oy) {
                        const int iy = oy * s + ky - p;
                        if (iy < 0 || iy >= x.h) continue;
                        const double* grow = &gy.v[gy.idx(oc, oy, 0)];
                        double* gxrow = &gx->v[gx->idx(ic, iy, 0)];
                        for (int ox = 0; ox < gy.w; ++ox) {
                            const int ix = ox * s + kx - p;
                            if (ix < 0 || ix >= x.w) continue;
                            gxrow[ix] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
}

Tensor maxpool_down(const Tensor& x, int f) {
    if (f == 1) return x;
    Tensor out(x.c, x.h / f, x.w / f);
    for (int c = 0; c < x.c; ++c) {
        for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
                double m = -1e300;
                for (int fy = 0; fy < f; ++fy)
                    for (int fx = 0; fx < f; ++fx) m = std::max(m, x.at(c, oy * f + fy, ox * f + fx));
                out.at(c, oy, ox) = m;
            }
        }
    }
    return out;
}

Tensor upsample_nearest(const Tensor& x, int f) {
    if (f == 1) return x;
    Tensor out(x.c, x.h * f, x.w * f);
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int xx = 0; xx < out.w; ++xx) out.at(c, y, xx) = x.at(c, y / f, xx / f);
    return out;
}

Tensor upsample_backward(const Tensor& gy, int f) {
    if (f == 1) return gy;
    Tensor gx(gy.c, gy.h / f, gy.w / f);
    for (int c = 0; c < gy.c; ++c)
        for (int y = 0; y < gy.h; ++y)
            for (int xx = 0; xx < gy.w; ++xx) gx.at(c, y / f, xx / f) += gy.at(c, y, xx);
    return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor out(a.c + b.c, a.h, a.w);
    std::memcpy(out.v.data(), a.v.data(), a.v.size() * sizeof(double));
    std::memcpy(out.v.data() + a.v.size(), b.v.data(), b.v.size() * sizeof(double));
    return out;
}

// ------------------------------------------------------------- layer types

struct DenseConvLayer {
    ConvKernel kern;
    int s = 1, p = 0;
    ParamSlot sw, sb;
    Tensor x_cache;

    void init(int cin, int cout, int k, int stride, int pad, Rng& rng) {
        kern = ConvKernel(cout, cin, k);
        s = stride;
        p = pad;
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
        for (double& v : kern.w) v = std_dev * draw_normal(rng);
        // Small nonzero bias keeps zero-input regions off the ReLU kink.
        for (double& v : kern.b) v = 0.01;
    }
    void register_params(Registry& reg) {
        sw.bind(&kern.w, 0);
        sb.bind(&kern.b, 1);
        reg.push_back(&sw);
        reg.push_back(&sb);
    }

    Tensor apply(const Tensor& x) const { return dense_conv_apply(x, kern, s, p); }
    Tensor forward_train(const Tensor& x) {
        x_cache = x;
        return apply(x);
    }
    Tensor backward(const Tensor& gy, bool need_gx = true) {
        Tensor gx;
        if (need_gx) gx = Tensor(kern.cin, x_cache.h, x_cache.w);
        dense_conv_backward(x_cache, gy, kern, s, p, sw.g, sb.g, need_gx ? &gx : nullptr);
        return gx;
    }
    int hout(int h) const { return (h + 2 * p - kern.k) / s + 1; }
    std::uint64_t flops(int hin, int win) const { return flops_dense(kern.k, kern.cin, kern.cout, hout(hin), hout(win)); }
};

struct DenseAffineLayer {
    std::vector<double> scale, shift;
    ParamSlot ss, st;
    Tensor x_cache;

    void init(int c) {
        scale.assign(c, 1.0);
        shift.assign(c, 0.0);
    }
    void register_params(Registry& reg) {
        ss.bind(&scale, 2);
        st.bind(&shift, 3);
        reg.push_back(&ss);
        reg.push_back(&st);
    }
    Tensor apply(const Tensor& x) const {
        Tensor out = x;
        for (int c = 0; c < x.c; ++c) {
            double* plane = &out.v[static_cast<std::size_t>(c) * x.plane()];
            for (std::size_t i = 0; i < x.plane(); ++i) plane[i] = scale[c] * plane[i] + shift[c];
        }
        return out;
    }
    Tensor forward_train(const Tensor& x) {
        x_cache = x;
        return apply(x);
    }
    Tensor backward(const Tensor& gy) {
        Tensor gx(gy.c, gy.h, gy.w);
        for (int c = 0; c < gy.c; ++c) {
            const double* gp = &gy.v[static_cast<std::size_t>(c) * gy.plane()];
            const double* xp = &x_cache.v[static_cast<std::size_t>(c) * gy.plane()];
            double* gxp = &gx.v[static_cast<std::size_t>(c) * gy.plane()];
            double gs = 0.0, gt = 0.0;
            for (std::size_t i = 0; i < gy.plane(); ++i) {
                gs += gp[i] * xp[i];
                gt += gp[i];
                gxp[i] = scale[c] * gp[i];
            }
            ss.g[c] += gs;
            st.g[c] += gt;
        }
        return gx;
    }
};

struct DenseReluLayer {
    Tensor y_cache;

    Tensor apply(const Tensor& x) const {
        Tensor out = x;
        for (double& v : out.v) v = v > 0 ? v : 0.0;
        return out;
    }
    Tensor forward_train(const Tensor& x) {
        y_cache = apply(x);
        return y_cache;
    }
    Tensor backward(const Tensor& gy) {
        Tensor gx = gy;
        for (std::size_t i = 0; i < gx.v.size(); ++i)
            if (y_cache.v[i] <= 0.0) gx.v[i] = 0.0;
        return gx;
    }
};

enum class SparseMode { Subm, Strided3, Strided1x1 };

struct SparseConvLayer {
    ConvKernel kern;
    SparseMode mode = SparseMode::Subm;
    ParamSlot sw, sb;
    SparseTensor2D x_cache;
    Rulebook rb_cache;
    std::vector<std::array<int, 2>> out_coords_cache;

    void init(int cin, int cout, int k, SparseMode m, Rng& rng) {
        kern = ConvKernel(cout, cin, k);
        mode = m;
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
        for (double& v : kern.w) v = std_dev * draw_normal(rng);
        for (double& v : kern.b) v = 0.01;
    }
    void register_params(Registry& reg) {
        sw.bind(&kern.w, 0);
        sb.bind(&kern.b, 1);
        reg.push_back(&sw);
        reg.push_back(&sb);
    }

    // forced_out supplies the output active set for shortcut convolutions on
    // strided blocks.
    SparseTensor2D apply(const SparseTensor2D& x, const std::vector<std::array<int, 2>>* forced_out,
                         Rulebook* rb_out = nullptr) const {
        SparseTensor2D out;
        Rulebook rb;
        switch (mode) {
            case SparseMode::Subm:
                out = SparseTensor2D(kern.cout, x.h, x.w);
                out.coords = x.coords;
                rb = build_rulebook(x.coords, out.coords, kern.k, 1, (kern.k - 1) / 2);
                break;
            case SparseMode::Strided3:
                out = SparseTensor2D(kern.cout, (x.h + 1) / 2, (x.w + 1) / 2);
                out.coords = forced_out ? *forced_out : strided_output_coords(x.coords, x.h, x.w, 3, 2, 1);
                rb = build_rulebook(x.coords, out.coords, 3, 2, 1);
                break;
            case SparseMode::Strided1x1:
                if (!forced_out) throw std::logic_error("strided 1x1 shortcut needs forced output coords");
                out = SparseTensor2D(kern.cout, (x.h + 1) / 2, (x.w + 1) / 2);
                out.coords = *forced_out;
                rb = build_rulebook(x.coords, out.coords, 1, 2, 0);
                break;
        }
        sparse_conv_apply(x, kern, rb, out);
        if (rb_out) *rb_out = std::move(rb);
        return out;
    }

    SparseTensor2D forward_train(const SparseTensor2D& x,
                                 const std::vector<std::array<int, 2>>* forced_out) {
        x_cache = x;
        SparseTensor2D out = apply(x, forced_out, &rb_cache);
        out_coords_cache = out.coords;
        return out;
    }

    SparseTensor2D backward(const SparseTensor2D& gy, bool need_gx = true) {
        SparseTensor2D gx;
        if (need_gx) {
            gx = SparseTensor2D(kern.cin, x_cache.h, x_cache.w);
            gx.coords = x_cache.coords;
            gx.feats.assign(static_cast<std::size_t>(gx.nnz()) * kern.cin, 0.0);
        }
        sparse_conv_backward(x_cache, gy, rb_cache, kern, sw.g, sb.g, need_gx ? &gx : nullptr);
        return gx;
    }
};

struct SparseAffineLayer {
    std::vector<double> scale, shift;
    ParamSlot ss, st;
    SparseTensor2D x_cache;

    void init(int c) {
        scale.assign(c, 1.0);
        shift.assign(c, 0.0);
    }
    void register_params(Registry& reg) {
        ss.bind(&scale, 2);
        st.bind(&shift, 3);
        reg.push_back(&ss);
        reg.push_back(&st);
    }
    SparseTensor2D apply(const SparseTensor2D& x) const {
        SparseTensor2D out = x;
        const int c = static_cast<int>(scale.size());
        for (int i = 0; i < out.nnz(); ++i)
            for (int ch = 0; ch < c; ++ch) out.feat(i, ch) = scale[ch] * out.feat(i, ch) + shift[ch];
        return out;
    }
    SparseTensor2D forward_train(const SparseTensor2D& x) {
        x_cache = x;
        return apply(x);
    }
    SparseTensor2D backward(const SparseTensor2D& gy) {
        SparseTensor2D gx = gy;
        const int c = static_cast<int>(scale.size());
        for (int i = 0; i < gy.nnz(); ++i) {
            for (int ch = 0; ch < c; ++ch) {
                ss.g[ch] += gy.feat(i, ch) * x_cache.feat(i, ch);
                st.g[ch] += gy.feat(i, ch);
                gx.feat(i, ch) = scale[ch] * gy.feat(i, ch);
            }
        }
        return gx;
    }
};

struct SparseReluLayer {
    SparseTensor2D y_cache;

    SparseTensor2D apply(const SparseTensor2D& x) const {
        SparseTensor2D out = x;
        for (double& v : out.feats) v = v > 0 ? v : 0.0;
        return out;
    }
    SparseTensor2D forward_train(const SparseTensor2D& x) {
        y_cache = apply(x);
        return y_cache;
    }
    SparseTensor2D backward(const SparseTensor2D& gy) {
        SparseTensor2D gx = gy;
        for (std::size_t i = 0; i < gx.feats.size(); ++i)
            if (y_cache.feats[i] <= 0.0) gx.feats[i] = 0.0;
        return gx;
    }
};

// -------------------------------------------------------------- residual

struct DenseBlock {
    bool strided = false;
    int cin = 0, cout = 0;
    std::vector<DenseConvLayer> convs;
    std::vector<DenseAffineLayer> affs;
    std::vector<DenseReluLayer> relus;  // one between each conv pair
    std::optional<DenseConvLayer> sc;
    std::optional<DenseAffineLayer> sc_aff;
    DenseReluLayer out_relu;
    Tensor in_cache;
    Tensor sum_cache;

    void init(int cin_, int channels, int expansion, bool strided_, Rng& rng) {
        cin = cin_;
        strided = strided_;
        cout = channels * expansion;
        const int s = strided ? 2 : 1;
        if (expansion == 1) {
            convs.resize(2);
            affs.resize(2);
            relus.resize(1);
            convs[0].init(cin, channels, 3, s, 1, rng);
            affs[0].init(channels);
            convs[1].init(channels, channels, 3, 1, 1, rng);
            affs[1].init(channels);
        } else {
            convs.resize(3);
            affs.resize(3);
            relus.resize(2);
            convs[0].init(cin, channels, 1, 1, 0, rng);
            affs[0].init(channels);
            convs[1].init(channels, channels, 3, s, 1, rng);
            affs[1].init(channels);
            convs[2].init(channels, cout, 1, 1, 0, rng);
            affs[2].init(cout);
        }
        if (strided || cin != cout) {
            sc.emplace();
            sc_aff.emplace();
            sc->init(cin, cout, 1, s, 0, rng);
            sc_aff->init(cout);
        }
    }
    void register_params(Registry& reg) {
        for (std::size_t i = 0; i < convs.size(); ++i) {
            convs[i].register_params(reg);
            affs[i].register_params(reg);
        }
        if (sc) {
            sc->register_params(reg);
            sc_aff->register_params(reg);
        }
    }

    Tensor apply(const Tensor& x) const {
        Tensor cur = x;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            cur = affs[i].apply(convs[i].apply(cur));
            if (i + 1 < convs.size()) cur = relus[i].apply(cur);
        }
        const Tensor scv = sc ? sc_aff->apply(sc->apply(x)) : x;
        for (std::size_t i = 0; i < cur.v.size(); ++i) cur.v[i] += scv.v[i];
        return out_relu.apply(cur);
    }

    Tensor forward_train(const Tensor& x) {
        in_cache = x;
        Tensor cur = x;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            cur = affs[i].forward_train(convs[i].forward_train(cur));
            if (i + 1 < convs.size()) cur = relus[i].forward_train(cur);
        }
        const Tensor scv = sc ? sc_aff->forward_train(sc->forward_train(x)) : x;
        for (std::size_t i = 0; i < cur.v.size(); ++i) cur.v[i] += scv.v[i];
        sum_cache = cur;
        return out_relu.forward_train(cur);
    }

    Tensor backward(const Tensor& gy, bool need_gx = true) {
        Tensor g_sum = out_relu.backward(gy);
        // Main path, reversed.
        Tensor g = g_sum;
        for (int i = static_cast<int>(convs.size()) - 1; i >= 0; --i) {
            g = affs[i].backward(g);
            g = convs[i].backward(g, /*need_gx=*/need_gx || i > 0);
            if (i > 0) g = relus[i - 1].backward(g);
        }
        Tensor gx;
        if (need_gx) gx = g;
        if (sc) {
            Tensor gsc = sc_aff->backward(g_sum);
            gsc = sc->backward(gsc, need_gx);
            if (need_gx)
                for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += gsc.v[i];
        } else if (need_gx) {
            for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += g_sum.v[i];
        }
        return gx;
    }
};

struct SparseBlock {
    bool strided = false;
    int cin = 0, cout = 0;
    std::vector<SparseConvLayer> convs;
    std::vector<SparseAffineLayer> affs;
    std::vector<SparseReluLayer> relus;
    std::optional<SparseConvLayer> sc;
    std::optional<SparseAffineLayer> sc_aff;
    SparseReluLayer out_relu;

    void init(int cin_, int channels, int expansion, bool strided_, Rng& rng) {
        cin = cin_;
        strided = strided_;
        cout = channels * expansion;
        if (expansion == 1) {
            convs.resize(2);
            affs.resize(2);
            relus.resize(1);
            convs[0].init(cin, channels, 3, strided ? SparseMode::Strided3 : SparseMode::Subm, rng);
            affs[0].init(channels);
            convs[1].init(channels, channels, 3, SparseMode::Subm, rng);
            affs[1].init(channels);
        } else {
            convs.resize(3);
            affs.resize(3);
            relus.resize(2);
            convs[0].init(cin, channels, 1, SparseMode::Subm, rng);
            affs[0].init(channels);
            convs[1].init(channels, channels, 3, strided ? SparseMode::Strided3 : SparseMode::Subm, rng);
            affs[1].init(channels);
            convs[2].init(channels, cout, 1, SparseMode::Subm, rng);
            affs[2].init(cout);
        }
        if (strided || cin != cout) {
            sc.emplace();
            sc_aff.emplace();
            sc->init(cin, cout, 1, strided ? SparseMode::Strided1x1 : SparseMode::Subm, rng);
            sc_aff->init(cout);
        }
    }
    void register_params(Registry& reg) {
        for (std::size_t i = 0; i < convs.size(); ++i) {
            convs[i].register_params(reg);
            affs[i].register_params(reg);
        }
        if (sc) {
            sc->register_params(reg);
            sc_aff->register_params(reg);
        }
    }

    SparseTensor2D apply(const SparseTensor2D& x) const {
        SparseTensor2D cur = x;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            cur = affs[i].apply(convs[i].apply(cur, nullptr));
            if (i + 1 < convs.size()) cur = relus[i].apply(cur);
        }
        SparseTensor2D scv;
        if (sc)
            scv = sc_aff->apply(sc->apply(x, strided ? &cur.coords : nullptr));
        else
            scv = x;
        for (std::size_t i = 0; i < cur.feats.size(); ++i) cur.feats[i] += scv.feats[i];
        return out_relu.apply(cur);
    }

    SparseTensor2D forward_train(const SparseTensor2D& x) {
        SparseTensor2D cur = x;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            cur = affs[i].forward_train(convs[i].forward_train(cur, nullptr));
            if (i + 1 < convs.size()) cur = relus[i].forward_train(cur);
        }
        SparseTensor2D scv;
        if (sc)
            scv = sc_aff->forward_train(sc->forward_train(x, strided ? &cur.coords : nullptr));
        else
            scv = x;
        for (std::size_t i = 0; i < cur.feats.size(); ++i) cur.feats[i] += scv.feats[i];
        return out_relu.forward_train(cur);
    }

    SparseTensor2D backward(const SparseTensor2D& gy, bool need_gx = true) {
        SparseTensor2D g_sum = out_relu.backward(gy);
        SparseTensor2D g = g_sum;
        for (int i = static_cast<int>(convs.size()) - 1; i >= 0; --i) {
            g = affs[i].backward(g);
            g = convs[i].backward(g, need_gx || i > 0);
            if (i > 0) g = relus[i - 1].backward(g);
        }
        SparseTensor2D gx;
        if (need_gx) gx = g;
        if (sc) {
            SparseTensor2D gsc = sc_aff->backward(g_sum);
            gsc = sc->backward(gsc, need_gx);
            if (need_gx)
                for (std::size_t i = 0; i < gx.feats.size(); ++i) gx.feats[i] += gsc.feats[i];
        } else if (need_gx) {
            for (std::size_t i = 0; i < gx.feats.size(); ++i) gx.feats[i] += g_sum.feats[i];
        }
        return gx;
    }
};

Tensor sigmoid_clamped(const Tensor& logits) {
    Tensor p = logits;
    for (double& v : p.v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        v = std::clamp(s, kSigmoidClamp, 1.0 - kSigmoidClamp);
    }
    return p;
}

}  // namespace

// ---------------------------------------------------------------- network

struct ScarNetwork::Impl {
    ScarConfig cfg;
    int in_c = 0, targets = 0, H = 0, W = 0;
    std::uint64_t seed = 0;
    int s_stride = 1, d_stride = 1, f_in = 1;
    int fh = 0, fw = 0;

    SparseConvLayer s_stem;
    SparseAffineLayer s_stem_aff;
    SparseReluLayer s_stem_relu;
    std::vector<SparseBlock> s_blocks;
    SparseConvLayer compress_s;

    DenseConvLayer d_stem;
    DenseAffineLayer d_stem_aff;
    DenseReluLayer d_stem_relu;
    std::vector<DenseBlock> d_blocks;
    DenseConvLayer compress_d;

    DenseConvLayer dec1;
    DenseAffineLayer dec1_aff;
    DenseReluLayer dec1_relu;
    DenseConvLayer dec2;

    DenseConvLayer aux1;
    DenseAffineLayer aux1_aff;
    DenseReluLayer aux1_relu;
    DenseConvLayer aux2;

    Registry registry;
    long adam_t = 0;

    // training caches
    SparseTensor2D cache_s_comp;
    Tensor cache_dfeat;
    Tensor cache_p, cache_p_aux;

    Impl(const ScarConfig& cfg_, int in_c_, int targets_, int h, int w, std::uint64_t seed_)
        : cfg(cfg_), in_c(in_c_), targets(targets_), H(h), W(w), seed(seed_) {
        cfg.validate(H, W);
        s_stride = cfg.sparse_stride();
        d_stride = cfg.dense_stride();
        f_in = cfg.dense_input_downsample();
        fh = H / s_stride;
        fw = W / s_stride;

        Rng rng(seed);
        s_stem.init(in_c, cfg.sparse_stages[0].channels, 3, SparseMode::Subm, rng);
        s_stem_aff.init(cfg.sparse_stages[0].channels);
        int cur = cfg.sparse_stages[0].channels;
        for (const auto& st : cfg.sparse_stages) {
            for (int b = 0; b < st.blocks; ++b) {
                SparseBlock blk;
                blk.init(cur, st.channels, cfg.sparse_expansion, b == 0 && st.strided, rng);
                cur = blk.cout;
                s_blocks.push_back(std::move(blk));
            }
        }
        const int s_out = cur;
        compress_s.init(s_out, cfg.decode_channels, 1, SparseMode::Subm, rng);

        d_stem.init(in_c, cfg.dense_stages[0].channels, 3, 1, 1, rng);
        d_stem_aff.init(cfg.dense_stages[0].channels);
        cur = cfg.dense_stages[0].channels;
        for (const auto& st : cfg.dense_stages) {
            for (int b = 0; b < st.blocks; ++b) {
                DenseBlock blk;
                blk.init(cur, st.channels, cfg.dense_expansion, b == 0 && st.strided, rng);
                cur = blk.cout;
                d_blocks.push_back(std::move(blk));
            }
        }
        const int d_out = cur;
        compress_d.init(d_out, cfg.decode_channels, 1, 1, 0, rng);

        const int fused_c = cfg.fuse_mode == FuseMode::Add ? cfg.decode_channels : 2 * cfg.decode_channels;
        dec1.init(fused_c, cfg.decode_channels, 3, 1, 1, rng);
        dec1_aff.init(cfg.decode_channels);
        dec2.init(cfg.decode_channels, targets, 3, 1, 1, rng);

        if (cfg.aux_head) {
            aux1.init(d_out, cfg.decode_channels, 3, 1, 1, rng);
            aux1_aff.init(cfg.decode_channels);
            aux2.init(cfg.decode_channels, targets, 3, 1, 1, rng);
        }

        // Bind parameter slots only after every layer sits at its final
        // address; order defines the checkpoint blob layout.
        s_stem.register_params(registry);
        s_stem_aff.register_params(registry);
        for (auto& blk : s_blocks) blk.register_params(registry);
        compress_s.register_params(registry);
        d_stem.register_params(registry);
        d_stem_aff.register_params(registry);
        for (auto& blk : d_blocks) blk.register_params(registry);
        compress_d.register_params(registry);
        dec1.register_params(registry);
        dec1_aff.register_params(registry);
        dec2.register_params(registry);
        if (cfg.aux_head) {
            aux1.register_params(registry);
            aux1_aff.register_params(registry);
            aux2.register_params(registry);
        }
    }

    void check_input(const Tensor& m) const {
        if (m.c != in_c || m.h != H || m.w != W)
            throw std::invalid_argument("ScarNetwork: input map shape mismatch");
    }

    Tensor run_inference(const Tensor& m) const {
        check_input(m);
        SparseTensor2D xs = from_dense(m);
        xs = s_stem_relu.apply(s_stem_aff.apply(s_stem.apply(xs, nullptr)));
        for (const auto& blk : s_blocks) xs = blk.apply(xs);
        const Tensor S = to_dense(compress_s.apply(xs, nullptr));

        Tensor xd = maxpool_down(m, f_in);
        xd = d_stem_relu.apply(d_stem_aff.apply(d_stem.apply(xd)));
        for (const auto& blk : d_blocks) xd = blk.apply(xd);
        const Tensor D = compress_d.apply(xd);

        Tensor fused = cfg.fuse_mode == FuseMode::Add ? D + S : concat_channels(D, S);
        Tensor h1 = dec1_relu.apply(dec1_aff.apply(dec1.apply(fused)));
        Tensor logits = dec2.apply(h1);
        return sigmoid_clamped(upsample_nearest(logits, s_stride));
    }

    // Training forward with caches; returns probability maps.
    void run_train(const Tensor& m) {
        check_input(m);
        SparseTensor2D xs = from_dense(m);
        xs = s_stem_relu.forward_train(s_stem_aff.forward_train(s_stem.forward_train(xs, nullptr)));
        for (auto& blk : s_blocks) xs = blk.forward_train(xs);
        cache_s_comp = compress_s.forward_train(xs, nullptr);
        const Tensor S = to_dense(cache_s_comp);

        Tensor xd = maxpool_down(m, f_in);
        xd = d_stem_relu.forward_train(d_stem_aff.forward_train(d_stem.forward_train(xd)));
        for (auto& blk : d_blocks) xd = blk.forward_train(xd);
        cache_dfeat = xd;
        const Tensor D = compress_d.forward_train(xd);

        Tensor fused = cfg.fuse_mode == FuseMode::Add ? D + S : concat_channels(D, S);
        Tensor h1 = dec1_relu.forward_train(dec1_aff.forward_train(dec1.forward_train(fused)));
        Tensor logits = dec2.forward_train(h1);
        cache_p = sigmoid_clamped(upsample_nearest(logits, s_stride));

        if (cfg.aux_head) {
            Tensor a = aux1_relu.forward_train(aux1_aff.forward_train(aux1.forward_train(xd)));
            Tensor aux_logits = aux2.forward_train(a);
            cache_p_aux = sigmoid_clamped(upsample_nearest(aux_logits, s_stride));
        }
    }

    static Tensor bce_sigmoid_grad(const Tensor& p, const Tensor& target, double scale) {
        Tensor g(p.c, p.h, p.w);
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            const double pv = p.v[i];
            if (pv <= kSigmoidClamp || pv >= 1.0 - kSigmoidClamp) continue;  // clamp kills the gradient
            g.v[i] = (pv - target.v[i]) * scale;
        }
        return g;
    }

    void backward_sample(const Tensor& target, double inv_batch) {
        const double scale = inv_batch / static_cast<double>(cache_p.v.size());

        Tensor g_logits = upsample_backward(bce_sigmoid_grad(cache_p, target, scale), s_stride);
        Tensor g = dec2.backward(g_logits);
        g = dec1_relu.backward(g);
        g = dec1_aff.backward(g);
        Tensor g_fused = dec1.backward(g);

        Tensor gD, gS;
        if (cfg.fuse_mode == FuseMode::Add) {
            gD = g_fused;
            gS = g_fused;
        } else {
            gD = Tensor(cfg.decode_channels, g_fused.h, g_fused.w);
            gS = Tensor(cfg.decode_channels, g_fused.h, g_fused.w);
            std::memcpy(gD.v.data(), g_fused.v.data(), gD.v.size() * sizeof(double));
            std::memcpy(gS.v.data(), g_fused.v.data() + gD.v.size(), gS.v.size() * sizeof(double));
        }

        // Sparse side: gather dense grads at the compressed tensor's sites.
        SparseTensor2D gs(cfg.decode_channels, gS.h, gS.w);
        gs.coords = cache_s_comp.coords;
        gs.feats.assign(static_cast<std::size_t>(gs.nnz()) * cfg.decode_channels, 0.0);
        for (int i = 0; i < gs.nnz(); ++i) {
            const auto [r, c] = gs.coords[i];
            for (int ch = 0; ch < cfg.decode_channels; ++ch) gs.feat(i, ch) = gS.at(ch, r, c);
        }
        SparseTensor2D gxs = compress_s.backward(gs);
        for (int i = static_cast<int>(s_blocks.size()) - 1; i >= 0; --i) gxs = s_blocks[i].backward(gxs);
        gxs = s_stem_relu.backward(gxs);
        gxs = s_stem_aff.backward(gxs);
        s_stem.backward(gxs, /*need_gx=*/false);

        // Dense side (+ aux tap).
        Tensor g_dfeat = compress_d.backward(gD);
        if (cfg.aux_head) {
            const double aux_scale = cfg.aux_weight * inv_batch / static_cast<double>(cache_p_aux.v.size());
            Tensor g_aux_logits = upsample_backward(bce_sigmoid_grad(cache_p_aux, target, aux_scale), s_stride);
            Tensor ga = aux2.backward(g_aux_logits);
            ga = aux1_relu.backward(ga);
            ga = aux1_aff.backward(ga);
            ga = aux1.backward(ga);
            for (std::size_t i = 0; i < g_dfeat.v.size(); ++i) g_dfeat.v[i] += ga.v[i];
        }
        for (int i = static_cast<int>(d_blocks.size()) - 1; i >= 0; --i)
            g_dfeat = d_blocks[i].backward(g_dfeat);
        g_dfeat = d_stem_relu.backward(g_dfeat);
        g_dfeat = d_stem_aff.backward(g_dfeat);
        d_stem.backward(g_dfeat, /*need_gx=*/false);
    }

    void zero_grads() {
        for (ParamSlot* s : registry) std::fill(s->g.begin(), s->g.end(), 0.0);
    }

    double accumulate_batch(const std::vector<const TrainSample*>& batch) {
        if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
        const double inv_batch = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (const TrainSample* sample : batch) {
            if (sample->target.c != targets) throw std::invalid_argument("train_step: target channels mismatch");
            run_train(sample->map);
            double l = bce_loss(cache_p, sample->target);
            if (cfg.aux_head) l += cfg.aux_weight * bce_loss(cache_p_aux, sample->target);
            loss += l * inv_batch;
            backward_sample(sample->target, inv_batch);
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("train_step: non-finite loss (" + std::to_string(loss) + ") after " +
                                     std::to_string(adam_t) + " updates");
        return loss;
    }

    void adam_update(double lr) {
        ++adam_t;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
        for (ParamSlot* s : registry) {
            for (std::size_t i = 0; i < s->w->size(); ++i) {
                const double g = s->g[i];
                s->m[i] = b1 * s->m[i] + (1.0 - b1) * g;
                s->v[i] = b2 * s->v[i] + (1.0 - b2) * g * g;
                (*s->w)[i] -= lr * (s->m[i] / bc1) / (std::sqrt(s->v[i] / bc2) + eps);
            }
        }
    }
};

ScarNetwork::ScarNetwork(const ScarConfig& cfg, int in_channels, int targets, int in_h, int in_w,
                         std::uint64_t seed)
    : impl_(std::make_unique<Impl>(cfg, in_channels, targets, in_h, in_w, seed)) {}

ScarNetwork::~ScarNetwork() = default;
ScarNetwork::ScarNetwork(ScarNetwork&&) noexcept = default;
ScarNetwork& ScarNetwork::operator=(ScarNetwork&&) noexcept = default;

const ScarConfig& ScarNetwork::config() const { return impl_->cfg; }
int ScarNetwork::targets() const { return impl_->targets; }
int ScarNetwork::in_channels() const { return impl_->in_c; }
int ScarNetwork::in_h() const { return impl_->H; }
int ScarNetwork::in_w() const { return impl_->W; }

PredictionMap ScarNetwork::forward(const Tensor& m) const {
    PredictionMap out;
    out.y = impl_->run_inference(m);
    return out;
}

double ScarNetwork::train_step(const std::vector<const TrainSample*>& batch, double lr) {
    impl_->zero_grads();
    const double loss = impl_->accumulate_batch(batch);
    impl_->adam_update(lr);
    return loss;
}

double ScarNetwork::train_step(const std::vector<TrainSample>& batch, double lr) {
    std::vector<const TrainSample*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& s : batch) ptrs.push_back(&s);
    return train_step(ptrs, lr);
}

std::vector<double> ScarNetwork::parameter_gradients(const std::vector<const TrainSample*>& batch) {
    impl_->zero_grads();
    impl_->accumulate_batch(batch);
    std::vector<double> out;
    out.reserve(param_count());
    for (ParamSlot* s : impl_->registry) out.insert(out.end(), s->g.begin(), s->g.end());
    impl_->zero_grads();
    return out;
}

std::size_t ScarNetwork::param_count() const {
    std::size_t n = 0;
    for (ParamSlot* s : impl_->registry) n += s->w->size();
    return n;
}

std::vector<std::size_t> ScarNetwork::parameter_slot_sizes() const {
    std::vector<std::size_t> sizes;
    sizes.reserve(impl_->registry.size());
    for (ParamSlot* s : impl_->registry) sizes.push_back(s->w->size());
    return sizes;
}

std::vector<ScarNetwork::SlotKind> ScarNetwork::parameter_slot_kinds() const {
    std::vector<SlotKind> kinds;
    kinds.reserve(impl_->registry.size());
    for (ParamSlot* s : impl_->registry) kinds.push_back(static_cast<SlotKind>(s->kind));
    return kinds;
}

double ScarNetwork::evaluate_loss(const std::vector<const TrainSample*>& batch) {
    if (batch.empty()) throw std::invalid_argument("evaluate_loss: empty batch");
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const TrainSample* sample : batch) {
        impl_->run_train(sample->map);
        double l = bce_loss(impl_->cache_p, sample->target);
        if (impl_->cfg.aux_head) l += impl_->cfg.aux_weight * bce_loss(impl_->cache_p_aux, sample->target);
        loss += l * inv_batch;
    }
    return loss;
}

std::vector<double> ScarNetwork::parameters_flat() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (ParamSlot* s : impl_->registry) out.insert(out.end(), s->w->begin(), s->w->end());
    return out;
}

void ScarNetwork::set_parameters_flat(const std::vector<double>& flat) {
    if (flat.size() != param_count()) throw std::invalid_argument("set_parameters_flat: size mismatch");
    std::size_t off = 0;
    for (ParamSlot* s : impl_->registry) {
        std::copy(flat.begin() + off, flat.begin() + off + s->w->size(), s->w->begin());
        off += s->w->size();
    }
}

// ------------------------------------------------------------ accounting

namespace {

struct FlopWalker {
    FlopReport report;

    void sparse_conv(const SparseConvLayer& layer, std::vector<std::array<int, 2>>& coords, int& h, int& w,
                     std::uint64_t& bucket, const std::vector<std::array<int, 2>>* forced_out = nullptr) {
        std::vector<std::array<int, 2>> out_coords;
        Rulebook rb;
        switch (layer.mode) {
            case SparseMode::Subm:
                out_coords = coords;
                rb = build_rulebook(coords, out_coords, layer.kern.k, 1, (layer.kern.k - 1) / 2);
                break;
            case SparseMode::Strided3:
                out_coords = forced_out ? *forced_out : strided_output_coords(coords, h, w, 3, 2, 1);
                rb = build_rulebook(coords, out_coords, 3, 2, 1);
                break;
            case SparseMode::Strided1x1:
                out_coords = *forced_out;
                rb = build_rulebook(coords, out_coords, 1, 2, 0);
                break;
        }
        bucket += flops_sparse(rb, layer.kern.cin, layer.kern.cout, static_cast<int>(out_coords.size()));
        if (layer.mode != SparseMode::Subm) {
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
        if (layer.mode != SparseMode::Strided1x1) coords = std::move(out_coords);
    }

    void dense_conv(const DenseConvLayer& layer, int& h, int& w, std::uint64_t& bucket) {
        const int ho = layer.hout(h), wo = layer.hout(w);
        bucket += flops_dense(layer.kern.k, layer.kern.cin, layer.kern.cout, ho, wo);
        h = ho;
        w = wo;
    }
};

}  // namespace

FlopReport ScarNetwork::count_flops(const Tensor& m) const {
    impl_->check_input(m);
    FlopWalker walker;
    const Impl& I = *impl_;

    // Sparse branch: propagate active sets only.
    std::vector<std::array<int, 2>> coords = from_dense(m).coords;
    int h = I.H, w = I.W;
    walker.sparse_conv(I.s_stem, coords, h, w, walker.report.sparse_branch);
    for (const auto& blk : I.s_blocks) {
        const auto in_coords = coords;
        const int in_h = h, in_w = w;
        for (std::size_t i = 0; i < blk.convs.size(); ++i)
            walker.sparse_conv(blk.convs[i], coords, h, w, walker.report.sparse_branch);
        if (blk.sc) {
            auto sc_coords = in_coords;
            int sh = in_h, sw = in_w;
            walker.sparse_conv(*blk.sc, sc_coords, sh, sw, walker.report.sparse_branch,
                               blk.strided ? &coords : nullptr);
        }
    }
    {
        auto cc = coords;
        walker.sparse_conv(I.compress_s, cc, h, w, walker.report.compression);
    }

    int dh = I.H / I.f_in, dw = I.W / I.f_in;
    walker.dense_conv(I.d_stem, dh, dw, walker.report.dense_branch);
    for (const auto& blk : I.d_blocks) {
        const int in_h = dh, in_w = dw;
        for (const auto& conv : blk.convs) walker.dense_conv(conv, dh, dw, walker.report.dense_branch);
        if (blk.sc) {
            int sh = in_h, sw = in_w;
            walker.dense_conv(*blk.sc, sh, sw, walker.report.dense_branch);
        }
    }
    {
        int ch = dh, cw = dw;
        walker.dense_conv(I.compress_d, ch, cw, walker.report.compression);
    }
    {
        int ch = I.fh, cw = I.fw;
        walker.dense_conv(I.dec1, ch, cw, walker.report.decode);
        walker.dense_conv(I.dec2, ch, cw, walker.report.decode);
    }
    return walker.report;
}

namespace {

std::uint64_t dense_bytes(int c, int h, int w) { return 4ULL * c * h * w; }
// Full-occupancy bound: 12 bytes per coordinate + 4 bytes per feature value.
std::uint64_t sparse_bytes(int c, int h, int w) {
    return static_cast<std::uint64_t>(h) * w * (12ULL + 4ULL * c);
}

}  // namespace

// Peak is taken over the inference schedule (sparse branch, then dense
// branch, then fusion + decode). Affine/ReLU/sigmoid/add run in place; every
// conv, conversion, pooling, upsample and concat counts its inputs, its
// output and the tensors retained for later stages (the input map until the
// dense stem runs, the block input inside residual blocks, the main-path
// output during shortcut convolutions, and the compressed sparse output
// until fusion).
MemoryReport ScarNetwork::count_memory() const {
    const Impl& I = *impl_;
    MemoryReport rep;
    rep.params_bytes = 4ULL * param_count();

    std::uint64_t peak = 0;
    auto note = [&peak](std::uint64_t live) { peak = std::max(peak, live); };

    const std::uint64_t m_bytes = dense_bytes(I.in_c, I.H, I.W);

    // Sparse branch.
    int h = I.H, w = I.W;
    std::uint64_t cur = sparse_bytes(I.in_c, h, w);
    note(m_bytes + cur);  // from_dense
    {
        const std::uint64_t out = sparse_bytes(I.s_stem.kern.cout, h, w);
        note(m_bytes + cur + out);
        cur = out;
    }
    for (const auto& blk : I.s_blocks) {
        const std::uint64_t block_in = cur;
        std::uint64_t x = cur;
        int bh = h, bw = w;
        for (std::size_t i = 0; i < blk.convs.size(); ++i) {
            const bool strided_conv_here = blk.strided && blk.convs[i].mode == SparseMode::Strided3;
            const int oh = strided_conv_here ? (bh + 1) / 2 : bh;
            const int ow = strided_conv_here ? (bw + 1) / 2 : bw;
            const std::uint64_t out = sparse_bytes(blk.convs[i].kern.cout, oh, ow);
            note(m_bytes + block_in + (i == 0 ? 0 : x) + out);  // first conv reads the block input
            x = out;
            bh = oh;
            bw = ow;
        }
        if (blk.sc) {
            const std::uint64_t sc_out = sparse_bytes(blk.sc->kern.cout, bh, bw);
            note(m_bytes + block_in + x + sc_out);
        }
        h = bh;
        w = bw;
        cur = x;
    }
    {
        const std::uint64_t out = sparse_bytes(I.compress_s.kern.cout, h, w);
        note(m_bytes + cur + out);
        cur = out;
    }
    const std::uint64_t S = dense_bytes(I.compress_s.kern.cout, I.fh, I.fw);
    note(m_bytes + cur + S);  // to_dense

    // Dense branch; S stays resident until fusion.
    int dh = I.H / I.f_in, dw = I.W / I.f_in;
    std::uint64_t dcur = dense_bytes(I.in_c, dh, dw);
    note(m_bytes + S + dcur);  // maxpool
    {
        const std::uint64_t out = dense_bytes(I.d_stem.kern.cout, dh, dw);
        note(S + dcur + out);  // m freed once pooled copy exists
        dcur = out;
    }
    for (const auto& blk : I.d_blocks) {
        const std::uint64_t block_in = dcur;
        std::uint64_t x = dcur;
        int bh = dh, bw = dw;
        for (std::size_t i = 0; i < blk.convs.size(); ++i) {
            const int oh = blk.convs[i].hout(bh), ow = blk.convs[i].hout(bw);
            const std::uint64_t out = dense_bytes(blk.convs[i].kern.cout, oh, ow);
            note(S + block_in + (i == 0 ? 0 : x) + out);
            x = out;
            bh = oh;
            bw = ow;
        }
        if (blk.sc) {
            const std::uint64_t sc_out = dense_bytes(blk.sc->kern.cout, bh, bw);
            note(S + block_in + x + sc_out);
        }
        dh = bh;
        dw = bw;
        dcur = x;
    }
    const std::uint64_t D = dense_bytes(I.compress_d.kern.cout, I.fh, I.fw);
    note(S + dcur + D);

    // Fusion + decode.
    std::uint64_t fused = 0;
    if (I.cfg.fuse_mode == FuseMode::Add) {
        fused = D;  // added in place
        note(S + D);
    } else {
        fused = dense_bytes(2 * I.cfg.decode_channels, I.fh, I.fw);
        note(S + D + fused);
    }
    {
        const std::uint64_t h1 = dense_bytes(I.cfg.decode_channels, I.fh, I.fw);
        note(fused + h1);
        const std::uint64_t logits = dense_bytes(I.targets, I.fh, I.fw);
        note(h1 + logits);
        const std::uint64_t up = dense_bytes(I.targets, I.H, I.W);
        note(logits + up);
    }
    rep.peak_activation_bytes = peak;
    return rep;
}

// ------------------------------------------------------------ checkpoint

std::vector<std::uint8_t> ScarNetwork::to_checkpoint() const {
    nlohmann::json header;
    header["format_version"] = 1;
    header["config"] = nlohmann::json::parse(scar_config_to_json(impl_->cfg));
    header["seed"] = impl_->seed;
    header["in_channels"] = impl_->in_c;
    header["targets"] = impl_->targets;
    header["in_h"] = impl_->H;
    header["in_w"] = impl_->W;
    header["param_count"] = param_count();
    const std::string hs = header.dump();

    std::vector<std::uint8_t> out;
    const char magic[8] = {'S', 'C', 'N', 'V', 'C', 'K', 'P', '1'};
    out.insert(out.end(), magic, magic + 8);
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((hlen >> (8 * i)) & 0xFF));
    out.insert(out.end(), hs.begin(), hs.end());
    for (ParamSlot* s : impl_->registry)
        for (double v : *s->w) append_f32_le(out, static_cast<float>(v));
    return out;
}

ScarNetwork ScarNetwork::from_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "SCNVCKP1", 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
    const nlohmann::json header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
    if (header.at("format_version").get<int>() != 1)
        throw std::runtime_error("checkpoint: unsupported format_version");
    const ScarConfig cfg = scar_config_from_json(header.at("config").dump());
    ScarNetwork net(cfg, header.at("in_channels").get<int>(), header.at("targets").get<int>(),
                    header.at("in_h").get<int>(), header.at("in_w").get<int>(),
                    header.at("seed").get<std::uint64_t>());
    const std::size_t n = header.at("param_count").get<std::size_t>();
    if (n != net.param_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
    if (bytes.size() != 12 + hlen + 4 * n) throw std::runtime_error("checkpoint: payload size mismatch");
    std::vector<double> flat(n);
    for (std::size_t i = 0; i < n; ++i) {
        flat[i] = read_f32_le(&bytes[12 + hlen + 4 * i]);
        if (!std::isfinite(flat[i])) throw std::runtime_error("checkpoint: non-finite parameter");
    }
    net.set_parameters_flat(flat);
    return net;
}

}  // namespace scarnav
