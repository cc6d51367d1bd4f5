#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "scarnav/tensor.hpp"

namespace scarnav {

// Active-coordinate feature tensor. Coordinates are unique, in-bounds and
// kept in canonical row-major order so equality is well-defined. Features
// are stored site-major: feats[i * channels + c] is channel c of site i.
struct SparseTensor2D {
    int channels = 0, h = 0, w = 0;
    std::vector<std::array<int, 2>> coords;  // (row, col)
    std::vector<double> feats;

    SparseTensor2D() = default;
    SparseTensor2D(int c_, int h_, int w_) : channels(c_), h(h_), w(w_) {}

    int nnz() const { return static_cast<int>(coords.size()); }

    double& feat(int site, int ch) { return feats[static_cast<std::size_t>(site) * channels + ch]; }
    double feat(int site, int ch) const { return feats[static_cast<std::size_t>(site) * channels + ch]; }

    bool operator==(const SparseTensor2D& o) const {
        return channels == o.channels && h == o.h && w == o.w && coords == o.coords && feats == o.feats;
    }
};

// Gather/scatter pair lists per kernel offset. Offset (di, dj) with
// di, dj in [0, k) is stored at index di*k + dj; a pair (i, o) means
// input coord = stride * output coord - pad + (di, dj).
struct Rulebook {
    int k = 0, stride = 1, pad = 0;
    std::vector<std::vector<std::pair<int, int>>> pairs;

    std::size_t total_pairs() const {
        std::size_t n = 0;
        for (const auto& p : pairs) n += p.size();
        return n;
    }
};

// Convolution parameters, w laid out as [cout][cin][ky][kx].
struct ConvKernel {
    int cout = 0, cin = 0, k = 1;
    std::vector<double> w;
    std::vector<double> b;

    ConvKernel() = default;
    ConvKernel(int cout_, int cin_, int k_)
        : cout(cout_), cin(cin_), k(k_),
          w(static_cast<std::size_t>(cout_) * cin_ * k_ * k_, 0.0),
          b(static_cast<std::size_t>(cout_), 0.0) {}

    std::size_t widx(int oc, int ic, int ky, int kx) const {
        return ((static_cast<std::size_t>(oc) * cin + ic) * k + ky) * k + kx;
    }
    double& wat(int oc, int ic, int ky, int kx) { return w[widx(oc, ic, ky, kx)]; }
    double wat(int oc, int ic, int ky, int kx) const { return w[widx(oc, ic, ky, kx)]; }
};

SparseTensor2D from_dense(const Tensor& dense);
Tensor to_dense(const SparseTensor2D& x);

// Output active set of a strided convolution: grid ceil(h/s) x ceil(w/s),
// a site is active iff its receptive field contains an active input.
std::vector<std::array<int, 2>> strided_output_coords(const std::vector<std::array<int, 2>>& in_coords,
                                                      int h, int w, int k, int stride, int pad);

Rulebook build_rulebook(const std::vector<std::array<int, 2>>& in_coords,
                        const std::vector<std::array<int, 2>>& out_coords,
                        int k, int stride, int pad);

// Gather-multiply-scatter over a prebuilt rulebook. Bias is applied at
// every output site.
void sparse_conv_apply(const SparseTensor2D& x, const ConvKernel& kern, const Rulebook& rb,
                       SparseTensor2D& out);

// Submanifold convolution: output active set equals the input active set.
// k must be odd; padding is fixed at (k-1)/2.
SparseTensor2D subm_conv(const SparseTensor2D& x, const ConvKernel& kern, Rulebook* rb_out = nullptr);

// Downsampling convolution, fixed at k=3, stride 2, pad 1.
SparseTensor2D strided_conv(const SparseTensor2D& x, const ConvKernel& kern, Rulebook* rb_out = nullptr);

// Gradients of sparse_conv_apply: accumulates into gw/gb, and into
// gx.feats when gx is non-null (gx must alias x's coords).
void sparse_conv_backward(const SparseTensor2D& x, const SparseTensor2D& gout, const Rulebook& rb,
                          const ConvKernel& kern, std::vector<double>& gw, std::vector<double>& gb,
                          SparseTensor2D* gx);

// 2 * pairs * cin * cout multiply-adds plus the 2 * cout * nnz_out bias-add
// convention.
std::uint64_t flops_sparse(const Rulebook& rb, int cin, int cout, int nnz_out);
std::uint64_t flops_dense(int k, int cin, int cout, int hout, int wout);

}  // namespace scarnav
