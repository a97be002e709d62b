#include "pcreg/rewardnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "pcreg/errors.hpp"
#include "pcreg/kernels.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

namespace {

constexpr double kLnEps = 1e-5;

std::vector<ParamBlock> build_blocks(const NetConfig& cfg) {
    std::vector<ParamBlock> blocks;
    std::size_t offset = 0;
    const auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
        blocks.push_back({std::move(name), offset, rows, cols});
        offset += rows * cols;
    };

    std::size_t in = 3;
    for (std::size_t l = 0; l < cfg.edgeconv_widths.size(); ++l) {
        const std::size_t out = cfg.edgeconv_widths[l];
        add("edgeconv" + std::to_string(l) + ".w", out, in);
        add("edgeconv" + std::to_string(l) + ".v", out, in);
        in = out;
    }

    const std::size_t k = cfg.embed_dim;
    add("attn.wq", k, k);
    add("attn.wk", k, k);
    add("attn.wv", k, k);
    add("attn.ln.gamma", k, 1);
    add("attn.ln.beta", k, 1);
    add("attn.ffn.w1", 2 * k, k);
    add("attn.ffn.b1", 2 * k, 1);
    add("attn.ffn.w2", k, 2 * k);
    add("attn.ffn.b2", k, 1);
    add("attn.wo", k, k);

    std::size_t s_in = cfg.fuse_difference ? k : 2 * k;
    for (std::size_t l = 0; l < cfg.shared_mlp_widths.size(); ++l) {
        const std::size_t out = cfg.shared_mlp_widths[l];
        add("shared" + std::to_string(l) + ".w", out, s_in);
        add("shared" + std::to_string(l) + ".b", out, 1);
        s_in = out;
    }

    for (const char* head : {"rot", "trans"}) {
        std::size_t h_in = s_in;
        for (std::size_t l = 0; l < cfg.head_mlp_widths.size(); ++l) {
            const std::size_t out = cfg.head_mlp_widths[l];
            add(std::string(head) + std::to_string(l) + ".w", out, h_in);
            add(std::string(head) + std::to_string(l) + ".b", out, 1);
            h_in = out;
        }
        add(std::string(head) + "_out.w", cfg.n_actions / 2, h_in);
        add(std::string(head) + "_out.b", cfg.n_actions / 2, 1);
    }
    return blocks;
}

/// Offsets and dimensions of every layer, resolved once per call chain.
struct Layout {
    struct Ec {
        std::size_t w, v, c_in, c_out;
    };
    struct Lin {
        std::size_t w, b, in, out;
    };

    std::size_t k = 0, heads = 0, head_dim = 0, knn = 0, fused = 0;
    std::vector<Ec> ec;
    std::size_t wq, wk, wv, gamma, beta, ffw1, ffb1, ffw2, ffb2, wo;
    std::vector<Lin> shared, rot, trans;
    bool fuse_difference = false;
};

Layout make_layout(const NetworkParameters& p) {
    const NetConfig& cfg = p.config();
    Layout L;
    L.k = cfg.embed_dim;
    L.heads = cfg.attn_heads;
    L.head_dim = cfg.embed_dim / cfg.attn_heads;
    L.knn = cfg.knn_k;
    L.fused = cfg.fuse_difference ? cfg.embed_dim : 2 * cfg.embed_dim;
    L.fuse_difference = cfg.fuse_difference;

    const auto off = [&](const std::string& name) { return p.block_info(name).offset; };

    std::size_t in = 3;
    for (std::size_t l = 0; l < cfg.edgeconv_widths.size(); ++l) {
        const std::size_t out = cfg.edgeconv_widths[l];
        L.ec.push_back({off("edgeconv" + std::to_string(l) + ".w"),
                        off("edgeconv" + std::to_string(l) + ".v"), in, out});
        in = out;
    }
    L.wq = off("attn.wq");
    L.wk = off("attn.wk");
    L.wv = off("attn.wv");
    L.gamma = off("attn.ln.gamma");
    L.beta = off("attn.ln.beta");
    L.ffw1 = off("attn.ffn.w1");
    L.ffb1 = off("attn.ffn.b1");
    L.ffw2 = off("attn.ffn.w2");
    L.ffb2 = off("attn.ffn.b2");
    L.wo = off("attn.wo");

    std::size_t s_in = L.fused;
    for (std::size_t l = 0; l < cfg.shared_mlp_widths.size(); ++l) {
        const std::size_t out = cfg.shared_mlp_widths[l];
        L.shared.push_back({off("shared" + std::to_string(l) + ".w"),
                            off("shared" + std::to_string(l) + ".b"), s_in, out});
        s_in = out;
    }
    for (const char* head : {"rot", "trans"}) {
        std::vector<Layout::Lin>& list = *head == 'r' ? L.rot : L.trans;
        std::size_t h_in = s_in;
        for (std::size_t l = 0; l < cfg.head_mlp_widths.size(); ++l) {
            const std::size_t out = cfg.head_mlp_widths[l];
            list.push_back({off(std::string(head) + std::to_string(l) + ".w"),
                            off(std::string(head) + std::to_string(l) + ".b"), h_in, out});
            h_in = out;
        }
        list.push_back({off(std::string(head) + "_out.w"), off(std::string(head) + "_out.b"),
                        h_in, cfg.n_actions / 2});
    }
    return L;
}

struct EdgeTape {
    std::size_t n = 0, c_in = 0, c_out = 0;
    std::vector<double> x;         // n x c_in input copy
    std::vector<std::size_t> edges; // n x knn
    std::vector<double> a, b;      // x Wt and x Vt, n x c_out
    std::vector<std::size_t> win;  // winning neighbor slot per (i, m)
    std::vector<double> out;       // n x c_out
};

struct CloudTape {
    std::size_t n = 0;
    std::vector<EdgeTape> layers;
};

struct AttnTape {
    std::size_t nq = 0, nkv = 0;
    const std::vector<double>* fq = nullptr;
    const std::vector<double>* fkv = nullptr;
    std::vector<double> q, key, val; // nq x K, nkv x K, nkv x K
    std::vector<double> probs;       // heads x nq x nkv
    std::vector<double> att;         // nq x K pre-norm
    std::vector<double> hat;         // nq x K normalized
    std::vector<double> invstd;      // nq
    std::vector<double> u;           // nq x K after scale/offset
    std::vector<double> z1, r1;      // nq x 2K
    std::vector<double> f;           // nq x K
    std::vector<double> phi;         // nq x K
};

struct MlpTape {
    std::vector<std::vector<double>> ins; // input of each layer
    std::vector<std::vector<double>> zs;  // pre-activation of each layer
};

struct ForwardTape {
    CloudTape src, tgt;
    AttnTape s2t, t2s;
    std::vector<double> phi_src, phi_tgt;
    std::vector<std::size_t> arg_src, arg_tgt; // pool argmax rows
    std::vector<double> pool_src, pool_tgt, fused;
    MlpTape shared, rot, trans;
    std::vector<double> shared_out;
    std::vector<double> rewards;
};

void edgeconv_layer(const double* w, const double* v, std::size_t c_in, std::size_t c_out,
                    std::size_t knn, std::vector<double> x, std::size_t n, EdgeTape& t) {
    t.n = n;
    t.c_in = c_in;
    t.c_out = c_out;
    t.edges = knn_graph(x, n, c_in, knn);
    t.a.assign(n * c_out, 0.0);
    t.b.assign(n * c_out, 0.0);
    kernels::active().gemm_nt(x.data(), w, t.a.data(), n, c_out, c_in, false);
    kernels::active().gemm_nt(x.data(), v, t.b.data(), n, c_out, c_in, false);
    t.x = std::move(x);
    t.win.assign(n * c_out, 0);
    t.out.assign(n * c_out, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t* nbr = t.edges.data() + i * knn;
        for (std::size_t m = 0; m < c_out; ++m) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t slot = 0;
            for (std::size_t s = 0; s < knn; ++s) {
                const double pre = t.a[i * c_out + m] + t.b[nbr[s] * c_out + m];
                if (pre > best) {
                    best = pre;
                    slot = s;
                }
            }
            t.win[i * c_out + m] = slot;
            t.out[i * c_out + m] = best > 0.0 ? best : 0.0;
        }
    }
}

void dgcnn_forward(const double* theta, const Layout& L, const PointCloud& cloud,
                   CloudTape& t) {
    const std::size_t n = cloud.size();
    t.n = n;
    t.layers.resize(L.ec.size());
    std::vector<double> x(cloud.xyz(), cloud.xyz() + 3 * n);
    for (std::size_t l = 0; l < L.ec.size(); ++l) {
        const Layout::Ec& ec = L.ec[l];
        edgeconv_layer(theta + ec.w, theta + ec.v, ec.c_in, ec.c_out, L.knn, std::move(x), n,
                       t.layers[l]);
        x = t.layers[l].out;
    }
}

void edgeconv_backward(const double* theta, const Layout::Ec& ec, std::size_t knn,
                       const EdgeTape& t, const std::vector<double>& dout, double* grads,
                       std::size_t gw, std::size_t gv, std::vector<double>& dx) {
    const std::size_t n = t.n, c_out = t.c_out, c_in = t.c_in;
    std::vector<double> da(n * c_out, 0.0), db(n * c_out, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t* nbr = t.edges.data() + i * knn;
        for (std::size_t m = 0; m < c_out; ++m) {
            if (t.out[i * c_out + m] <= 0.0) continue; // ReLU gate (max of ReLU)
            const double g = dout[i * c_out + m];
            da[i * c_out + m] += g;
            db[nbr[t.win[i * c_out + m]] * c_out + m] += g;
        }
    }
    kernels::active().gemm_tn(da.data(), t.x.data(), grads + gw, c_out, c_in, n, true);
    kernels::active().gemm_tn(db.data(), t.x.data(), grads + gv, c_out, c_in, n, true);
    dx.assign(n * c_in, 0.0);
    kernels::active().gemm_nn(da.data(), theta + ec.w, dx.data(), n, c_in, c_out, true);
    kernels::active().gemm_nn(db.data(), theta + ec.v, dx.data(), n, c_in, c_out, true);
}

void dgcnn_backward(const double* theta, const Layout& L, const CloudTape& t,
                    std::vector<double> dout, double* grads) {
    for (std::size_t l = L.ec.size(); l-- > 0;) {
        std::vector<double> dx;
        edgeconv_backward(theta, L.ec[l], L.knn, t.layers[l], dout, grads, L.ec[l].w,
                          L.ec[l].v, dx);
        dout = std::move(dx); // gradient w.r.t. the layer input (cloud coords at l = 0)
    }
}

void attention_forward(const double* theta, const Layout& L, const std::vector<double>& fq,
                       std::size_t nq, const std::vector<double>& fkv, std::size_t nkv,
                       AttnTape& t) {
    const std::size_t K = L.k, H = L.heads, d = L.head_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    t.nq = nq;
    t.nkv = nkv;
    t.fq = &fq;
    t.fkv = &fkv;

    t.q.assign(nq * K, 0.0);
    t.key.assign(nkv * K, 0.0);
    t.val.assign(nkv * K, 0.0);
    kernels::active().gemm_nt(fq.data(), theta + L.wq, t.q.data(), nq, K, K, false);
    kernels::active().gemm_nt(fkv.data(), theta + L.wk, t.key.data(), nkv, K, K, false);
    kernels::active().gemm_nt(fkv.data(), theta + L.wv, t.val.data(), nkv, K, K, false);

    t.probs.assign(H * nq * nkv, 0.0);
    t.att.assign(nq * K, 0.0);
    std::vector<double> row(nkv);
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t col = h * d;
        for (std::size_t i = 0; i < nq; ++i) {
            const double* qi = t.q.data() + i * K + col;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < nkv; ++j) {
                row[j] = inv_sqrt_d * kernels::active().dot(qi, t.key.data() + j * K + col, d);
                mx = std::max(mx, row[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < nkv; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            double* p = t.probs.data() + (h * nq + i) * nkv;
            for (std::size_t j = 0; j < nkv; ++j) p[j] = row[j] / sum;
            double* oi = t.att.data() + i * K + col;
            for (std::size_t j = 0; j < nkv; ++j)
                kernels::active().axpy(p[j], t.val.data() + j * K + col, oi, d);
        }
    }

    // Layer norm per point, then scale/offset.
    t.hat.assign(nq * K, 0.0);
    t.u.assign(nq * K, 0.0);
    t.invstd.assign(nq, 0.0);
    const double* gammav = theta + L.gamma;
    const double* betav = theta + L.beta;
    for (std::size_t i = 0; i < nq; ++i) {
        const double* o = t.att.data() + i * K;
        double mean = 0.0;
        for (std::size_t m = 0; m < K; ++m) mean += o[m];
        mean /= static_cast<double>(K);
        double var = 0.0;
        for (std::size_t m = 0; m < K; ++m) var += (o[m] - mean) * (o[m] - mean);
        var /= static_cast<double>(K);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        t.invstd[i] = inv;
        for (std::size_t m = 0; m < K; ++m) {
            const double hat = (o[m] - mean) * inv;
            t.hat[i * K + m] = hat;
            t.u[i * K + m] = gammav[m] * hat + betav[m];
        }
    }

    // Position-wise feed-forward of width 2K.
    t.z1.assign(nq * 2 * K, 0.0);
    kernels::active().gemm_nt(t.u.data(), theta + L.ffw1, t.z1.data(), nq, 2 * K, K, false);
    const double* b1 = theta + L.ffb1;
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t m = 0; m < 2 * K; ++m) t.z1[i * 2 * K + m] += b1[m];
    t.r1 = t.z1;
    for (double& z : t.r1) z = z > 0.0 ? z : 0.0;
    t.f.assign(nq * K, 0.0);
    kernels::active().gemm_nt(t.r1.data(), theta + L.ffw2, t.f.data(), nq, K, 2 * K, false);
    const double* b2 = theta + L.ffb2;
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t m = 0; m < K; ++m) t.f[i * K + m] += b2[m];

    // Output projection last: zero Wo collapses phi to zero exactly.
    t.phi.assign(nq * K, 0.0);
    kernels::active().gemm_nt(t.f.data(), theta + L.wo, t.phi.data(), nq, K, K, false);
}

void attention_backward(const double* theta, const Layout& L, const AttnTape& t,
                        const std::vector<double>& dphi, double* grads,
                        std::vector<double>& dfq, std::vector<double>& dfkv) {
    const std::size_t K = L.k, H = L.heads, d = L.head_dim;
    const std::size_t nq = t.nq, nkv = t.nkv;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const auto& kern = kernels::active();

    // phi = f Wo^T
    kern.gemm_tn(dphi.data(), t.f.data(), grads + L.wo, K, K, nq, true);
    std::vector<double> df(nq * K, 0.0);
    kern.gemm_nn(dphi.data(), theta + L.wo, df.data(), nq, K, K, true);

    // f = r1 W2^T + b2
    kern.gemm_tn(df.data(), t.r1.data(), grads + L.ffw2, K, 2 * K, nq, true);
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t m = 0; m < K; ++m) grads[L.ffb2 + m] += df[i * K + m];
    std::vector<double> dr1(nq * 2 * K, 0.0);
    kern.gemm_nn(df.data(), theta + L.ffw2, dr1.data(), nq, 2 * K, K, true);
    for (std::size_t idx = 0; idx < nq * 2 * K; ++idx)
        if (t.z1[idx] <= 0.0) dr1[idx] = 0.0;

    // z1 = u W1^T + b1
    kern.gemm_tn(dr1.data(), t.u.data(), grads + L.ffw1, 2 * K, K, nq, true);
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t m = 0; m < 2 * K; ++m) grads[L.ffb1 + m] += dr1[i * 2 * K + m];
    std::vector<double> du(nq * K, 0.0);
    kern.gemm_nn(dr1.data(), theta + L.ffw1, du.data(), nq, K, 2 * K, true);

    // u = gamma * hat + beta; hat = (att - mean) * invstd
    const double* gammav = theta + L.gamma;
    std::vector<double> datt(nq * K, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t m = 0; m < K; ++m) {
            const double dui = du[i * K + m];
            const double hat = t.hat[i * K + m];
            grads[L.beta + m] += dui;
            grads[L.gamma + m] += dui * hat;
            const double dhat = dui * gammav[m];
            m1 += dhat;
            m2 += dhat * hat;
        }
        m1 /= static_cast<double>(K);
        m2 /= static_cast<double>(K);
        for (std::size_t m = 0; m < K; ++m) {
            const double dhat = du[i * K + m] * gammav[m];
            datt[i * K + m] = t.invstd[i] * (dhat - m1 - t.hat[i * K + m] * m2);
        }
    }

    // Attention core per head.
    std::vector<double> dq(nq * K, 0.0), dk(nkv * K, 0.0), dv(nkv * K, 0.0);
    std::vector<double> dprob(nkv);
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t col = h * d;
        for (std::size_t i = 0; i < nq; ++i) {
            const double* p = t.probs.data() + (h * nq + i) * nkv;
            const double* doi = datt.data() + i * K + col;
            double inner = 0.0;
            for (std::size_t j = 0; j < nkv; ++j) {
                kern.axpy(p[j], doi, dv.data() + j * K + col, d);
                dprob[j] = kern.dot(doi, t.val.data() + j * K + col, d);
                inner += dprob[j] * p[j];
            }
            for (std::size_t j = 0; j < nkv; ++j) {
                const double ds = p[j] * (dprob[j] - inner) * inv_sqrt_d;
                kern.axpy(ds, t.key.data() + j * K + col, dq.data() + i * K + col, d);
                kern.axpy(ds, t.q.data() + i * K + col, dk.data() + j * K + col, d);
            }
        }
    }

    // Projections: q = fq Wq^T and so on.
    kern.gemm_tn(dq.data(), t.fq->data(), grads + L.wq, K, K, nq, true);
    kern.gemm_nn(dq.data(), theta + L.wq, dfq.data(), nq, K, K, true);
    kern.gemm_tn(dk.data(), t.fkv->data(), grads + L.wk, K, K, nkv, true);
    kern.gemm_nn(dk.data(), theta + L.wk, dfkv.data(), nkv, K, K, true);
    kern.gemm_tn(dv.data(), t.fkv->data(), grads + L.wv, K, K, nkv, true);
    kern.gemm_nn(dv.data(), theta + L.wv, dfkv.data(), nkv, K, K, true);
}

std::vector<double> mlp_forward(const double* theta, const std::vector<Layout::Lin>& layers,
                                std::vector<double> x, MlpTape& t, bool relu_last) {
    t.ins.clear();
    t.zs.clear();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layout::Lin& lin = layers[l];
        std::vector<double> z(lin.out, 0.0);
        for (std::size_t r = 0; r < lin.out; ++r)
            z[r] = kernels::active().dot(theta + lin.w + r * lin.in, x.data(), lin.in) +
                   theta[lin.b + r];
        t.ins.push_back(std::move(x));
        t.zs.push_back(z);
        const bool relu = relu_last || l + 1 < layers.size();
        if (relu)
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        x = std::move(z);
    }
    return x;
}

std::vector<double> mlp_backward(const double* theta, const std::vector<Layout::Lin>& layers,
                                 const MlpTape& t, std::vector<double> dout, double* grads,
                                 bool relu_last) {
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Layout::Lin& lin = layers[l];
        const bool relu = relu_last || l + 1 < layers.size();
        if (relu)
            for (std::size_t r = 0; r < lin.out; ++r)
                if (t.zs[l][r] <= 0.0) dout[r] = 0.0;
        std::vector<double> din(lin.in, 0.0);
        for (std::size_t r = 0; r < lin.out; ++r) {
            const double g = dout[r];
            grads[lin.b + r] += g;
            kernels::active().axpy(g, t.ins[l].data(), grads + lin.w + r * lin.in, lin.in);
            kernels::active().axpy(g, theta + lin.w + r * lin.in, din.data(), lin.in);
        }
        dout = std::move(din);
    }
    return dout;
}

void full_forward(const NetworkParameters& params, const Layout& L, const PointCloud& source,
                  const PointCloud& target, ForwardTape& t) {
    const NetConfig& cfg = params.config();
    if (source.size() < cfg.knn_k + 1 || target.size() < cfg.knn_k + 1)
        throw ValidationError("net_forward: cloud smaller than knn_k + 1");
    const double* theta = params.flat().data();

    dgcnn_forward(theta, L, source, t.src);
    dgcnn_forward(theta, L, target, t.tgt);
    const std::vector<double>& f_src = t.src.layers.back().out;
    const std::vector<double>& f_tgt = t.tgt.layers.back().out;

    attention_forward(theta, L, f_src, t.src.n, f_tgt, t.tgt.n, t.s2t);
    attention_forward(theta, L, f_tgt, t.tgt.n, f_src, t.src.n, t.t2s);

    const std::size_t K = L.k;
    t.phi_src.resize(t.src.n * K);
    for (std::size_t idx = 0; idx < t.phi_src.size(); ++idx)
        t.phi_src[idx] = f_src[idx] + t.s2t.phi[idx];
    t.phi_tgt.resize(t.tgt.n * K);
    for (std::size_t idx = 0; idx < t.phi_tgt.size(); ++idx)
        t.phi_tgt[idx] = f_tgt[idx] + t.t2s.phi[idx];

    const auto pool = [K](const std::vector<double>& m, std::size_t n,
                          std::vector<double>& out, std::vector<std::size_t>& arg) {
        out.assign(K, 0.0);
        arg.assign(K, 0);
        for (std::size_t c = 0; c < K; ++c) {
            double best = m[c];
            std::size_t row = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (m[i * K + c] > best) {
                    best = m[i * K + c];
                    row = i;
                }
            out[c] = best;
            arg[c] = row;
        }
    };
    pool(t.phi_src, t.src.n, t.pool_src, t.arg_src);
    pool(t.phi_tgt, t.tgt.n, t.pool_tgt, t.arg_tgt);

    if (L.fuse_difference) {
        t.fused.resize(K);
        for (std::size_t c = 0; c < K; ++c) t.fused[c] = t.pool_src[c] - t.pool_tgt[c];
    } else {
        t.fused = t.pool_src;
        t.fused.insert(t.fused.end(), t.pool_tgt.begin(), t.pool_tgt.end());
    }

    t.shared_out = mlp_forward(theta, L.shared, t.fused, t.shared, true);
    const std::vector<double> rot = mlp_forward(theta, L.rot, t.shared_out, t.rot, false);
    const std::vector<double> trans = mlp_forward(theta, L.trans, t.shared_out, t.trans, false);

    t.rewards = rot;
    t.rewards.insert(t.rewards.end(), trans.begin(), trans.end());
}

void full_backward(const NetworkParameters& params, const Layout& L, const ForwardTape& t,
                   const std::vector<double>& drewards, double* grads) {
    const double* theta = params.flat().data();
    const std::size_t K = L.k;
    const std::size_t half = params.config().n_actions / 2;

    const std::vector<double> drot(drewards.begin(), drewards.begin() + half);
    const std::vector<double> dtrans(drewards.begin() + half, drewards.end());
    std::vector<double> dshared = mlp_backward(theta, L.rot, t.rot, drot, grads, false);
    const std::vector<double> dshared2 =
        mlp_backward(theta, L.trans, t.trans, dtrans, grads, false);
    for (std::size_t i = 0; i < dshared.size(); ++i) dshared[i] += dshared2[i];
    const std::vector<double> dfused =
        mlp_backward(theta, L.shared, t.shared, dshared, grads, true);

    std::vector<double> dpool_src(K), dpool_tgt(K);
    if (L.fuse_difference) {
        for (std::size_t c = 0; c < K; ++c) {
            dpool_src[c] = dfused[c];
            dpool_tgt[c] = -dfused[c];
        }
    } else {
        for (std::size_t c = 0; c < K; ++c) {
            dpool_src[c] = dfused[c];
            dpool_tgt[c] = dfused[K + c];
        }
    }

    std::vector<double> dphi_src(t.src.n * K, 0.0), dphi_tgt(t.tgt.n * K, 0.0);
    for (std::size_t c = 0; c < K; ++c) {
        dphi_src[t.arg_src[c] * K + c] += dpool_src[c];
        dphi_tgt[t.arg_tgt[c] * K + c] += dpool_tgt[c];
    }

    // Residual: phi_src = f_src + phi(f_src, f_tgt), and symmetrically.
    std::vector<double> df_src = dphi_src;
    std::vector<double> df_tgt = dphi_tgt;
    attention_backward(theta, L, t.s2t, dphi_src, grads, df_src, df_tgt);
    attention_backward(theta, L, t.t2s, dphi_tgt, grads, df_tgt, df_src);

    dgcnn_backward(theta, L, t.src, std::move(df_src), grads);
    dgcnn_backward(theta, L, t.tgt, std::move(df_tgt), grads);
}

} // namespace

void NetConfig::validate() const {
    if (n_actions != 24) throw ValidationError("NetConfig: n_actions must be 24");
    if (knn_k == 0) throw ValidationError("NetConfig: knn_k must be positive");
    if (n_points < knn_k + 1)
        throw ValidationError("NetConfig: n_points must exceed knn_k");
    if (edgeconv_widths.empty())
        throw ValidationError("NetConfig: at least one edgeconv layer required");
    for (std::size_t w : edgeconv_widths)
        if (w == 0) throw ValidationError("NetConfig: zero edgeconv width");
    if (edgeconv_widths.back() != embed_dim)
        throw ValidationError("NetConfig: last edgeconv width must equal embed_dim");
    if (attn_heads == 0 || embed_dim % attn_heads != 0)
        throw ValidationError("NetConfig: embed_dim must divide evenly into attn_heads");
    for (std::size_t w : shared_mlp_widths)
        if (w == 0) throw ValidationError("NetConfig: zero shared width");
    for (std::size_t w : head_mlp_widths)
        if (w == 0) throw ValidationError("NetConfig: zero head width");
}

NetworkParameters::NetworkParameters(const NetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    blocks_ = build_blocks(cfg_);
    std::size_t total = 0;
    for (const ParamBlock& b : blocks_) total += b.count();
    flat_.assign(total, 0.0);
}

NetworkParameters NetworkParameters::init(const NetConfig& cfg, std::uint64_t seed) {
    NetworkParameters p(cfg);
    Rng rng(seed);
    for (const ParamBlock& b : p.blocks_) {
        double* dst = p.flat_.data() + b.offset;
        if (b.cols == 1) {
            // Vectors are biases and norm offsets (zero) or the norm scale (one).
            const double fill = b.name == "attn.ln.gamma" ? 1.0 : 0.0;
            std::fill(dst, dst + b.count(), fill);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(b.cols));
            for (std::size_t i = 0; i < b.count(); ++i)
                dst[i] = rng.uniform(-bound, bound);
        }
    }
    return p;
}

const ParamBlock& NetworkParameters::block_info(std::string_view name) const {
    for (const ParamBlock& b : blocks_)
        if (b.name == name) return b;
    throw ValidationError("unknown parameter block: " + std::string(name));
}

double* NetworkParameters::block(std::string_view name) {
    return flat_.data() + block_info(name).offset;
}

const double* NetworkParameters::block(std::string_view name) const {
    return flat_.data() + block_info(name).offset;
}

std::size_t net_param_count(const NetConfig& cfg) {
    cfg.validate();
    std::size_t total = 0;
    for (const ParamBlock& b : build_blocks(cfg)) total += b.count();
    return total;
}

std::vector<std::size_t> knn_graph(const std::vector<double>& embedding, std::size_t n,
                                   std::size_t dim, std::size_t k) {
    if (n == 0 || dim == 0) throw ValidationError("knn_graph: empty embedding");
    if (embedding.size() != n * dim) throw ValidationError("knn_graph: size mismatch");
    if (k == 0 || k >= n) throw ValidationError("knn_graph: k must lie in [1, n)");

    std::vector<std::size_t> edges(n * k);
    std::vector<std::pair<double, std::size_t>> cand(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t m = 0; m < dim; ++m) {
                const double diff = embedding[i * dim + m] - embedding[j * dim + m];
                d2 += diff * diff;
            }
            cand[c++] = {d2, j};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (std::size_t s = 0; s < k; ++s) edges[i * k + s] = cand[s].second;
    }
    return edges;
}

std::vector<double> edgeconv_forward(const std::vector<double>& x, std::size_t n,
                                     std::size_t c_in, const std::vector<std::size_t>& edges,
                                     std::size_t k, const double* w, const double* v,
                                     std::size_t c_out) {
    if (x.size() != n * c_in) throw ValidationError("edgeconv_forward: feature size mismatch");
    if (edges.size() != n * k) throw ValidationError("edgeconv_forward: edge size mismatch");
    for (std::size_t e : edges)
        if (e >= n) throw ValidationError("edgeconv_forward: edge index out of range");
    EdgeTape t;
    t.edges = edges;
    t.n = n;
    t.c_in = c_in;
    t.c_out = c_out;
    t.a.assign(n * c_out, 0.0);
    t.b.assign(n * c_out, 0.0);
    kernels::active().gemm_nt(x.data(), w, t.a.data(), n, c_out, c_in, false);
    kernels::active().gemm_nt(x.data(), v, t.b.data(), n, c_out, c_in, false);
    std::vector<double> out(n * c_out, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t m = 0; m < c_out; ++m) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < k; ++s)
                best = std::max(best, t.a[i * c_out + m] + t.b[edges[i * k + s] * c_out + m]);
            out[i * c_out + m] = best > 0.0 ? best : 0.0;
        }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> cross_attention(
    const NetworkParameters& params, const std::vector<double>& f_src, std::size_t n_src,
    const std::vector<double>& f_tgt, std::size_t n_tgt, std::vector<double>* probs_src_to_tgt,
    std::vector<double>* probs_tgt_to_src) {
    const std::size_t K = params.config().embed_dim;
    if (f_src.size() != n_src * K || f_tgt.size() != n_tgt * K)
        throw ValidationError("cross_attention: feature shape mismatch");
    const Layout L = make_layout(params);
    AttnTape s2t, t2s;
    attention_forward(params.flat().data(), L, f_src, n_src, f_tgt, n_tgt, s2t);
    attention_forward(params.flat().data(), L, f_tgt, n_tgt, f_src, n_src, t2s);
    std::vector<double> phi_src(f_src), phi_tgt(f_tgt);
    for (std::size_t i = 0; i < phi_src.size(); ++i) phi_src[i] += s2t.phi[i];
    for (std::size_t i = 0; i < phi_tgt.size(); ++i) phi_tgt[i] += t2s.phi[i];
    if (probs_src_to_tgt) *probs_src_to_tgt = std::move(s2t.probs);
    if (probs_tgt_to_src) *probs_tgt_to_src = std::move(t2s.probs);
    return {std::move(phi_src), std::move(phi_tgt)};
}

std::vector<double> net_forward(const NetworkParameters& params, const PointCloud& source,
                                const PointCloud& target) {
    const Layout L = make_layout(params);
    ForwardTape t;
    full_forward(params, L, source, target, t);
    return std::move(t.rewards);
}

double net_loss(const std::vector<double>& h, const std::vector<double>& g,
                const NetworkParameters& params, double lambda) {
    const std::size_t n = params.config().n_actions;
    if (h.size() != n || g.size() != n) throw ValidationError("net_loss: reward length mismatch");
    double data = 0.0;
    for (std::size_t i = 0; i < n; ++i) data += (g[i] - h[i]) * (g[i] - h[i]);
    data /= static_cast<double>(n);
    double decay = 0.0;
    if (lambda != 0.0)
        for (double p : params.flat()) decay += p * p;
    return data + lambda * decay;
}

BackwardResult net_backward(const NetworkParameters& params,
                            const std::vector<TrainingSample>& batch, double lambda) {
    if (batch.empty()) throw ValidationError("net_backward: empty batch");
    const Layout L = make_layout(params);
    const std::size_t n_actions = params.config().n_actions;

    BackwardResult result;
    result.gradients.assign(params.size(), 0.0);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    ForwardTape tape;
    for (const TrainingSample& sample : batch) {
        if (sample.reward_target.size() != n_actions)
            throw ValidationError("net_backward: reward target length mismatch");
        full_forward(params, L, sample.source, sample.target, tape);
        double data = 0.0;
        std::vector<double> dh(n_actions);
        for (std::size_t i = 0; i < n_actions; ++i) {
            const double diff = tape.rewards[i] - sample.reward_target[i];
            data += diff * diff;
            dh[i] = 2.0 * diff / static_cast<double>(n_actions) * inv_batch;
        }
        result.loss += data / static_cast<double>(n_actions) * inv_batch;
        full_backward(params, L, tape, dh, result.gradients.data());
    }

    if (lambda != 0.0) {
        double decay = 0.0;
        for (double p : params.flat()) decay += p * p;
        result.loss += lambda * decay;
        kernels::active().axpy(2.0 * lambda, params.flat().data(), result.gradients.data(),
                               params.size());
    }

    for (std::size_t i = 0; i < result.gradients.size(); ++i) {
        if (std::isfinite(result.gradients[i])) continue;
        for (const ParamBlock& b : params.blocks())
            if (i >= b.offset && i < b.offset + b.count())
                throw DegenerateInputError("net_backward: non-finite gradient in block " +
                                           b.name);
        throw DegenerateInputError("net_backward: non-finite gradient");
    }
    return result;
}

GradCheckReport gradient_check(const NetworkParameters& params,
                               const std::vector<TrainingSample>& batch, double lambda,
                               double fd_step) {
    if (!(fd_step > 0.0)) throw ValidationError("gradient_check: step must be positive");
    const BackwardResult analytic = net_backward(params, batch, lambda);

    NetworkParameters probe = params;
    const auto batch_loss = [&]() {
        double total = 0.0;
        for (const TrainingSample& s : batch) {
            const std::vector<double> h = net_forward(probe, s.source, s.target);
            total += net_loss(h, s.reward_target, probe, 0.0);
        }
        total /= static_cast<double>(batch.size());
        if (lambda != 0.0) {
            double decay = 0.0;
            for (double p : probe.flat()) decay += p * p;
            total += lambda * decay;
        }
        return total;
    };

    GradCheckReport report;
    for (const ParamBlock& b : params.blocks()) {
        double block_max = 0.0;
        for (std::size_t i = b.offset; i < b.offset + b.count(); ++i) {
            const double saved = probe.flat()[i];
            probe.flat()[i] = saved + fd_step;
            const double up = batch_loss();
            probe.flat()[i] = saved - fd_step;
            const double down = batch_loss();
            probe.flat()[i] = saved;
            const double numeric = (up - down) / (2.0 * fd_step);
            const double a = analytic.gradients[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            block_max = std::max(block_max, std::abs(a - numeric) / denom);
        }
        report.per_block.emplace_back(b.name, block_max);
        if (block_max > report.max_rel_err) {
            report.max_rel_err = block_max;
            report.worst_block = b.name;
        }
    }
    return report;
}

std::vector<double> NetworkRewardSource::rewards(const CloudPair& pair,
                                                 const AccumulatedTransform& acc) {
    return net_forward(*params_, estimate_to_cloud(pair, acc), pair.target);
}

} // namespace pcreg
