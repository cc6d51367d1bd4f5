#include "scarnav/sparse.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace scarnav {

namespace {

inline std::int64_t coord_key(int r, int c) {
    return (static_cast<std::int64_t>(r) << 32) | static_cast<std::uint32_t>(c);
}

std::unordered_map<std::int64_t, int> coord_index(const std::vector<std::array<int, 2>>& coords) {
    std::unordered_map<std::int64_t, int> m;
    m.reserve(coords.size() * 2);
    for (int i = 0; i < static_cast<int>(coords.size()); ++i) m.emplace(coord_key(coords[i][0], coords[i][1]), i);
    return m;
}

}  // namespace

SparseTensor2D from_dense(const Tensor& dense) {
    SparseTensor2D out(dense.c, dense.h, dense.w);
    for (int y = 0; y < dense.h; ++y) {
        for (int x = 0; x < dense.w; ++x) {
            bool active = false;
            for (int ci = 0; ci < dense.c; ++ci) {
                if (dense.at(ci, y, x) != 0.0) {
                    active = true;
                    break;
                }
            }
            if (!active) continue;
            out.coords.push_back({y, x});
            for (int ci = 0; ci < dense.c; ++ci) out.feats.push_back(dense.at(ci, y, x));
        }
    }
    return out;
}

Tensor to_dense(const SparseTensor2D& x) {
    Tensor out(x.channels, x.h, x.w);
    for (int i = 0; i < x.nnz(); ++i) {
        const auto [r, c] = x.coords[i];
        for (int ci = 0; ci < x.channels; ++ci) out.at(ci, r, c) = x.feat(i, ci);
    }
    return out;
}

std::vector<std::array<int, 2>> strided_output_coords(const std::vector<std::array<int, 2>>& in_coords,
                                                      int h, int w, int k, int stride, int pad) {
    const int hout = (h + stride - 1) / stride;
    const int wout = (w + stride - 1) / stride;
    std::vector<std::array<int, 2>> out;
    out.reserve(in_coords.size());
    for (const auto& rc : in_coords) {
        for (int di = 0; di < k; ++di) {
            const int rn = rc[0] + pad - di;
            if (rn < 0 || rn % stride != 0) continue;
            const int orow = rn / stride;
            if (orow >= hout) continue;
            for (int dj = 0; dj < k; ++dj) {
                const int cn = rc[1] + pad - dj;
                if (cn < 0 || cn % stride != 0) continue;
                const int ocol = cn / stride;
                if (ocol >= wout) continue;
                out.push_back({orow, ocol});
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Rulebook build_rulebook(const std::vector<std::array<int, 2>>& in_coords,
                        const std::vector<std::array<int, 2>>& out_coords,
                        int k, int stride, int pad) {
    Rulebook rb;
    rb.k = k;
    rb.stride = stride;
    rb.pad = pad;
    rb.pairs.assign(static_cast<std::size_t>(k) * k, {});
    const auto in_index = coord_index(in_coords);
    for (int o = 0; o < static_cast<int>(out_coords.size()); ++o) {
        const int base_r = stride * out_coords[o][0] - pad;
        const int base_c = stride * out_coords[o][1] - pad;
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
                const auto it = in_index.find(coord_key(base_r + di, base_c + dj));
                if (it == in_index.end()) continue;
                rb.pairs[di * k + dj].emplace_back(it->second, o);
            }
        }
    }
    return rb;
}

void sparse_conv_apply(const SparseTensor2D& x, const ConvKernel& kern, const Rulebook& rb,
                       SparseTensor2D& out) {
    if (kern.cin != x.channels) throw std::invalid_argument("sparse_conv: channel mismatch");
    out.channels = kern.cout;
    out.feats.assign(static_cast<std::size_t>(out.nnz()) * kern.cout, 0.0);
    for (int o = 0; o < out.nnz(); ++o)
        for (int oc = 0; oc < kern.cout; ++oc) out.feat(o, oc) = kern.b[oc];

    const int k = rb.k;
    for (int di = 0; di < k; ++di) {
        for (int dj = 0; dj < k; ++dj) {
            const auto& pl = rb.pairs[di * k + dj];
            if (pl.empty()) continue;
            for (const auto& [i, o] : pl) {
                const double* in_row = &x.feats[static_cast<std::size_t>(i) * x.channels];
                double* out_row = &out.feats[static_cast<std::size_t>(o) * kern.cout];
                for (int oc = 0; oc < kern.cout; ++oc) {
                    double acc = 0.0;
                    const double* wrow = &kern.w[kern.widx(oc, 0, di, dj)];
                    for (int ic = 0; ic < kern.cin; ++ic) acc += wrow[static_cast<std::size_t>(ic) * kern.k * kern.k] * in_row[ic];
                    out_row[oc] += acc;
                }
            }
        }
    }
}

SparseTensor2D subm_conv(const SparseTensor2D& x, const ConvKernel& kern, Rulebook* rb_out) {
    if (kern.k % 2 == 0) throw std::invalid_argument("subm_conv: kernel size must be odd");
    SparseTensor2D out(kern.cout, x.h, x.w);
    out.coords = x.coords;
    Rulebook rb = build_rulebook(x.coords, out.coords, kern.k, 1, (kern.k - 1) / 2);
    sparse_conv_apply(x, kern, rb, out);
    if (rb_out) *rb_out = std::move(rb);
    return out;
}

SparseTensor2D strided_conv(const SparseTensor2D& x, const ConvKernel& kern, Rulebook* rb_out) {
    if (kern.k != 3) throw std::invalid_argument("strided_conv: requires k=3");
    SparseTensor2D out(kern.cout, (x.h + 1) / 2, (x.w + 1) / 2);
    out.coords = strided_output_coords(x.coords, x.h, x.w, 3, 2, 1);
    Rulebook rb = build_rulebook(x.coords, out.coords, 3, 2, 1);
    sparse_conv_apply(x, kern, rb, out);
    if (rb_out) *rb_out = std::move(rb);
    return out;
}

void sparse_conv_backward(const SparseTensor2D& x, const SparseTensor2D& gout, const Rulebook& rb,
                          const ConvKernel& kern, std::vector<double>& gw, std::vector<double>& gb,
                          SparseTensor2D* gx) {
    if (gw.size() != kern.w.size() || gb.size() != kern.b.size())
        throw std::invalid_argument("sparse_conv_backward: gradient buffer size mismatch");
    for (int o = 0; o < gout.nnz(); ++o)
        for (int oc = 0; oc < kern.cout; ++oc) gb[oc] += gout.feat(o, oc);

    const int k = rb.k;
    for (int di = 0; di < k; ++di) {
        for (int dj = 0; dj < k; ++dj) {
            const auto& pl = rb.pairs[di * k + dj];
            for (const auto& [i, o] : pl) {
                const double* in_row = &x.feats[static_cast<std::size_t>(i) * x.channels];
                const double* g_row = &gout.feats[static_cast<std::size_t>(o) * kern.cout];
                for (int oc = 0; oc < kern.cout; ++oc) {
                    const double g = g_row[oc];
                    if (g == 0.0) continue;
                    double* gw_row = &gw[kern.widx(oc, 0, di, dj)];
                    for (int ic = 0; ic < kern.cin; ++ic) gw_row[static_cast<std::size_t>(ic) * k * k] += g * in_row[ic];
                }
                if (gx) {
                    double* gx_row = &gx->feats[static_cast<std::size_t>(i) * kern.cin];
                    for (int ic = 0; ic < kern.cin; ++ic) {
                        double acc = 0.0;
                        const double* wrow = &kern.w[kern.widx(0, ic, di, dj)];
                        for (int oc = 0; oc < kern.cout; ++oc)
                            acc += wrow[static_cast<std::size_t>(oc) * kern.cin * k * k] * g_row[oc];
                        gx_row[ic] += acc;
                    }
                }
            }
        }
    }
}

std::uint64_t flops_sparse(const Rulebook& rb, int cin, int cout, int nnz_out) {
    return 2ULL * rb.total_pairs() * cin * cout + 2ULL * cout * nnz_out;
}

std::uint64_t flops_dense(int k, int cin, int cout, int hout, int wout) {
    const std::uint64_t sites = static_cast<std::uint64_t>(hout) * wout;
    return 2ULL * sites * k * k * cin * cout + 2ULL * cout * sites;
}

}  // namespace scarnav
