#pragma once

// Decoder-only autoregressive transformer, trained from random init.
// GPT-2 style: learned positional embeddings, pre-norm blocks, causal
// multi-head self-attention, GELU feed-forward, output projection tied to
// the token embedding, final layer norm.
//
// Parameters live in one flat double array. Layout order (also the
// checkpoint order and the init draw order):
//   tok_emb[V*d]  pos_emb[C*d]
//   per layer: ln1_g[d] ln1_b[d] wq[d*d] bq[d] wk[d*d] bk[d] wv[d*d] bv[d]
//              wo[d*d] bo[d] ln2_g[d] ln2_b[d] w1[d*ff] b1[ff] w2[ff*d] b2[d]
//   lnf_g[d] lnf_b[d]
// Weight matrices are row-major [in][out], applied as y = x W + b.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <vector>

#include "capp/rng.hpp"

namespace capp {

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int d_ff = 256;
    int context_len = 17;
    int vocab_size = 38;
    double dropout = 0.0;

    void validate() const {
        if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ff <= 0 || context_len <= 0 || vocab_size <= 0)
            throw std::invalid_argument("ModelConfig: all dimensions must be positive");
        if (d_model % n_heads != 0) throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
        if (dropout != 0.0) throw std::invalid_argument("ModelConfig: only dropout = 0 is supported");
    }

    bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kLnEps = 1e-5;
inline constexpr double kInitStd = 0.02;

// Flat-array offsets for one transformer layer.
struct LayerOffsets {
    std::size_t ln1_g, ln1_b;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_g, ln2_b;
    std::size_t w1, b1, w2, b2;
};

struct ParamLayout {
    std::size_t tok_emb = 0;
    std::size_t pos_emb = 0;
    std::vector<LayerOffsets> layers;
    std::size_t lnf_g = 0, lnf_b = 0;
    std::size_t total = 0;

    explicit ParamLayout(const ModelConfig& cfg) {
        const auto d = static_cast<std::size_t>(cfg.d_model);
        const auto ff = static_cast<std::size_t>(cfg.d_ff);
        std::size_t at = 0;
        auto take = [&at](std::size_t n) {
            std::size_t o = at;
            at += n;
            return o;
        };
        tok_emb = take(static_cast<std::size_t>(cfg.vocab_size) * d);
        pos_emb = take(static_cast<std::size_t>(cfg.context_len) * d);
        layers.reserve(static_cast<std::size_t>(cfg.n_layers));
        for (int l = 0; l < cfg.n_layers; ++l) {
            LayerOffsets lo{};
            lo.ln1_g = take(d);
            lo.ln1_b = take(d);
            lo.wq = take(d * d);
            lo.bq = take(d);
            lo.wk = take(d * d);
            lo.bk = take(d);
            lo.wv = take(d * d);
            lo.bv = take(d);
            lo.wo = take(d * d);
            lo.bo = take(d);
            lo.ln2_g = take(d);
            lo.ln2_b = take(d);
            lo.w1 = take(d * ff);
            lo.b1 = take(ff);
            lo.w2 = take(ff * d);
            lo.b2 = take(d);
            layers.push_back(lo);
        }
        lnf_g = take(d);
        lnf_b = take(d);
        total = at;
    }
};

inline std::size_t param_count(const ModelConfig& cfg) { return ParamLayout(cfg).total; }

struct Model {
    ModelConfig cfg;
    ParamLayout layout;
    std::vector<double> params;

    explicit Model(const ModelConfig& c) : cfg(c), layout(c), params(layout.total, 0.0) { cfg.validate(); }

    const double* p(std::size_t off) const { return params.data() + off; }
    double* p(std::size_t off) { return params.data() + off; }
};

// Weights from a seeded zero-mean Gaussian (std 0.02) drawn in layout order;
// layer-norm gains 1, all biases 0. Bit-identical per (cfg, seed).
inline Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
    Model m(cfg);
    auto eng = rng::make_engine(rng::derive_seed(seed, rng::SeedTag::model_init));
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto ff = static_cast<std::size_t>(cfg.d_ff);

    auto gauss = [&](std::size_t off, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) m.params[off + i] = kInitStd * rng::normal(eng);
    };
    auto ones = [&](std::size_t off, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) m.params[off + i] = 1.0;
    };

    gauss(m.layout.tok_emb, static_cast<std::size_t>(cfg.vocab_size) * d);
    gauss(m.layout.pos_emb, static_cast<std::size_t>(cfg.context_len) * d);
    for (const auto& lo : m.layout.layers) {
        ones(lo.ln1_g, d);
        gauss(lo.wq, d * d);
        gauss(lo.wk, d * d);
        gauss(lo.wv, d * d);
        gauss(lo.wo, d * d);
        ones(lo.ln2_g, d);
        gauss(lo.w1, d * ff);
        gauss(lo.w2, ff * d);
    }
    ones(m.layout.lnf_g, d);
    return m;
}

namespace nn {

// C[T x N] = A[T x M] * W[M x N] + b
inline void mm_bias(const double* a, const double* w, const double* b, double* c, int t_rows, int m_in, int n_out) {
    for (int t = 0; t < t_rows; ++t) {
        const double* at = a + static_cast<std::size_t>(t) * static_cast<std::size_t>(m_in);
        double* ct = c + static_cast<std::size_t>(t) * static_cast<std::size_t>(n_out);
        for (int n = 0; n < n_out; ++n) ct[n] = b ? b[n] : 0.0;
        for (int m = 0; m < m_in; ++m) {
            const double am = at[m];
            const double* wm = w + static_cast<std::size_t>(m) * static_cast<std::size_t>(n_out);
            for (int n = 0; n < n_out; ++n) ct[n] += am * wm[n];
        }
    }
}

// dA[T x M] += dC[T x N] * W^T
inline void mm_backward_data(const double* dc, const double* w, double* da, int t_rows, int m_in, int n_out) {
    for (int t = 0; t < t_rows; ++t) {
        const double* dct = dc + static_cast<std::size_t>(t) * static_cast<std::size_t>(n_out);
        double* dat = da + static_cast<std::size_t>(t) * static_cast<std::size_t>(m_in);
        for (int m = 0; m < m_in; ++m) {
            const double* wm = w + static_cast<std::size_t>(m) * static_cast<std::size_t>(n_out);
            double acc = 0.0;
            for (int n = 0; n < n_out; ++n) acc += dct[n] * wm[n];
            dat[m] += acc;
        }
    }
}

// dW[M x N] += A^T * dC ; db[N] += column sums of dC
inline void mm_backward_weights(const double* a, const double* dc, double* dw, double* db, int t_rows, int m_in, int n_out) {
    for (int t = 0; t < t_rows; ++t) {
        const double* at = a + static_cast<std::size_t>(t) * static_cast<std::size_t>(m_in);
        const double* dct = dc + static_cast<std::size_t>(t) * static_cast<std::size_t>(n_out);
        for (int m = 0; m < m_in; ++m) {
            const double am = at[m];
            double* dwm = dw + static_cast<std::size_t>(m) * static_cast<std::size_t>(n_out);
            for (int n = 0; n < n_out; ++n) dwm[n] += am * dct[n];
        }
        if (db)
            for (int n = 0; n < n_out; ++n) db[n] += dct[n];
    }
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
    return cdf + x * pdf;
}

// y = g * (x - mean)/sqrt(var + eps) + b, per row; stores mean and rstd.
inline void layernorm(const double* x, const double* g, const double* b, double* y, double* mean, double* rstd, int t_rows, int d) {
    for (int t = 0; t < t_rows; ++t) {
        const double* xt = x + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        double* yt = y + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        double mu = 0.0;
        for (int i = 0; i < d; ++i) mu += xt[i];
        mu /= d;
        double var = 0.0;
        for (int i = 0; i < d; ++i) {
            const double c = xt[i] - mu;
            var += c * c;
        }
        var /= d;
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        mean[t] = mu;
        rstd[t] = rs;
        for (int i = 0; i < d; ++i) yt[i] = g[i] * (xt[i] - mu) * rs + b[i];
    }
}

// dx += backward of layernorm; accumulates dg, db.
inline void layernorm_backward(const double* dy, const double* x, const double* g, const double* mean, const double* rstd,
                               double* dx, double* dg, double* db, int t_rows, int d) {
    for (int t = 0; t < t_rows; ++t) {
        const double* dyt = dy + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        const double* xt = x + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        double* dxt = dx + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        const double mu = mean[t];
        const double rs = rstd[t];
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
            const double xhat = (xt[i] - mu) * rs;
            const double dxhat = dyt[i] * g[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dg[i] += dyt[i] * xhat;
            db[i] += dyt[i];
        }
        const double inv_d = 1.0 / d;
        for (int i = 0; i < d; ++i) {
            const double xhat = (xt[i] - mu) * rs;
            const double dxhat = dyt[i] * g[i];
            dxt[i] += rs * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
    }
}

} // namespace nn

// Reusable per-sequence activation storage, sized for context_len.
struct Workspace {
    struct LayerActs {
        std::vector<double> x_in;    // residual input to the attention block
        std::vector<double> ln1_out, ln1_mean, ln1_rstd;
        std::vector<double> q, k, v;
        std::vector<double> att;     // n_heads x T x T, causal rows
        std::vector<double> ctx;
        std::vector<double> x_mid;   // after attention residual
        std::vector<double> ln2_out, ln2_mean, ln2_rstd;
        std::vector<double> ff_pre;  // before activation
        std::vector<double> ff_act;
        std::vector<double> x_out;
    };

    explicit Workspace(const ModelConfig& cfg) : cfg_(cfg) {
        const auto c = static_cast<std::size_t>(cfg.context_len);
        const auto d = static_cast<std::size_t>(cfg.d_model);
        const auto ff = static_cast<std::size_t>(cfg.d_ff);
        const auto h = static_cast<std::size_t>(cfg.n_heads);
        x0.resize(c * d);
        layers.resize(static_cast<std::size_t>(cfg.n_layers));
        for (auto& la : layers) {
            la.x_in.resize(c * d);
            la.ln1_out.resize(c * d);
            la.ln1_mean.resize(c);
            la.ln1_rstd.resize(c);
            la.q.resize(c * d);
            la.k.resize(c * d);
            la.v.resize(c * d);
            la.att.resize(h * c * c);
            la.ctx.resize(c * d);
            la.x_mid.resize(c * d);
            la.ln2_out.resize(c * d);
            la.ln2_mean.resize(c);
            la.ln2_rstd.resize(c);
            la.ff_pre.resize(c * ff);
            la.ff_act.resize(c * ff);
            la.x_out.resize(c * d);
        }
        lnf_out.resize(c * d);
        lnf_mean.resize(c);
        lnf_rstd.resize(c);
        logits.resize(c * static_cast<std::size_t>(cfg.vocab_size));
        // backward scratch
        dx.resize(c * d);
        dbranch.resize(c * d);
        dq.resize(c * d);
        dk.resize(c * d);
        dv.resize(c * d);
        dctx.resize(c * d);
        datt.resize(h * c * c);
        dff_act.resize(c * ff);
        dff_pre.resize(c * ff);
        dlogits.resize(c * static_cast<std::size_t>(cfg.vocab_size));
    }

    const ModelConfig& config() const { return cfg_; }

    std::vector<double> x0;
    std::vector<LayerActs> layers;
    std::vector<double> lnf_out, lnf_mean, lnf_rstd;
    std::vector<double> logits;

    std::vector<double> dx, dbranch, dq, dk, dv, dctx, datt, dff_act, dff_pre, dlogits;

private:
    ModelConfig cfg_;
};

// Causal forward pass; fills ws and returns a view of the logits (T rows of
// vocab_size). Row t conditions on tokens[0..t] only.
inline std::span<const double> forward(const Model& m, std::span<const int> tokens, Workspace& ws) {
    const auto& cfg = m.cfg;
    const int t_len = static_cast<int>(tokens.size());
    if (t_len < 1 || t_len > cfg.context_len) throw std::invalid_argument("forward: sequence length out of range");
    if (ws.config() != cfg) throw std::invalid_argument("forward: workspace built for a different config");
    const int d = cfg.d_model;
    const int ff = cfg.d_ff;
    const int n_heads = cfg.n_heads;
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int t = 0; t < t_len; ++t) {
        const int tok = tokens[static_cast<std::size_t>(t)];
        if (tok < 0 || tok >= cfg.vocab_size) throw std::invalid_argument("forward: token id out of range");
        const double* te = m.p(m.layout.tok_emb) + static_cast<std::size_t>(tok) * static_cast<std::size_t>(d);
        const double* pe = m.p(m.layout.pos_emb) + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        double* x = ws.x0.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        for (int i = 0; i < d; ++i) x[i] = te[i] + pe[i];
    }

    const double* x_cur = ws.x0.data();
    for (int l = 0; l < cfg.n_layers; ++l) {
        auto& la = ws.layers[static_cast<std::size_t>(l)];
        const auto& lo = m.layout.layers[static_cast<std::size_t>(l)];
        std::memcpy(la.x_in.data(), x_cur, static_cast<std::size_t>(t_len) * static_cast<std::size_t>(d) * sizeof(double));

        nn::layernorm(la.x_in.data(), m.p(lo.ln1_g), m.p(lo.ln1_b), la.ln1_out.data(), la.ln1_mean.data(), la.ln1_rstd.data(), t_len, d);
        nn::mm_bias(la.ln1_out.data(), m.p(lo.wq), m.p(lo.bq), la.q.data(), t_len, d, d);
        nn::mm_bias(la.ln1_out.data(), m.p(lo.wk), m.p(lo.bk), la.k.data(), t_len, d, d);
        nn::mm_bias(la.ln1_out.data(), m.p(lo.wv), m.p(lo.bv), la.v.data(), t_len, d, d);

        for (int h = 0; h < n_heads; ++h) {
            const int hoff = h * dh;
            double* att_h = la.att.data() + static_cast<std::size_t>(h) * static_cast<std::size_t>(cfg.context_len) * static_cast<std::size_t>(cfg.context_len);
            for (int i = 0; i < t_len; ++i) {
                const double* qi = la.q.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + hoff;
                double* att_row = att_h + static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg.context_len);
                double max_score = -1e300;
                for (int j = 0; j <= i; ++j) {
                    const double* kj = la.k.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + hoff;
                    double s = 0.0;
                    for (int e = 0; e < dh; ++e) s += qi[e] * kj[e];
                    s *= scale;
                    att_row[j] = s;
                    if (s > max_score) max_score = s;
                }
                double denom = 0.0;
                for (int j = 0; j <= i; ++j) {
                    att_row[j] = std::exp(att_row[j] - max_score);
                    denom += att_row[j];
                }
                const double inv = 1.0 / denom;
                for (int j = 0; j <= i; ++j) att_row[j] *= inv;
                double* ctx_i = la.ctx.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + hoff;
                for (int e = 0; e < dh; ++e) ctx_i[e] = 0.0;
                for (int j = 0; j <= i; ++j) {
                    const double a = att_row[j];
                    const double* vj = la.v.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + hoff;
                    for (int e = 0; e < dh; ++e) ctx_i[e] += a * vj[e];
                }
            }
        }

        // attention residual: x_mid = x_in + ctx Wo + bo
        nn::mm_bias(la.ctx.data(), m.p(lo.wo), m.p(lo.bo), la.x_mid.data(), t_len, d, d);
        for (int i = 0; i < t_len * d; ++i) la.x_mid[static_cast<std::size_t>(i)] += la.x_in[static_cast<std::size_t>(i)];

        nn::layernorm(la.x_mid.data(), m.p(lo.ln2_g), m.p(lo.ln2_b), la.ln2_out.data(), la.ln2_mean.data(), la.ln2_rstd.data(), t_len, d);
        nn::mm_bias(la.ln2_out.data(), m.p(lo.w1), m.p(lo.b1), la.ff_pre.data(), t_len, d, ff);
        for (int i = 0; i < t_len * ff; ++i) la.ff_act[static_cast<std::size_t>(i)] = nn::gelu(la.ff_pre[static_cast<std::size_t>(i)]);
        nn::mm_bias(la.ff_act.data(), m.p(lo.w2), m.p(lo.b2), la.x_out.data(), t_len, ff, d);
        for (int i = 0; i < t_len * d; ++i) la.x_out[static_cast<std::size_t>(i)] += la.x_mid[static_cast<std::size_t>(i)];

        x_cur = la.x_out.data();
    }

    nn::layernorm(x_cur, m.p(m.layout.lnf_g), m.p(m.layout.lnf_b), ws.lnf_out.data(), ws.lnf_mean.data(), ws.lnf_rstd.data(), t_len, d);
    // tied output projection: logits = lnf_out * tok_emb^T
    const double* wte = m.p(m.layout.tok_emb);
    for (int t = 0; t < t_len; ++t) {
        const double* ht = ws.lnf_out.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        double* lt = ws.logits.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(cfg.vocab_size);
        for (int v = 0; v < cfg.vocab_size; ++v) {
            const double* ev = wte + static_cast<std::size_t>(v) * static_cast<std::size_t>(d);
            double acc = 0.0;
            for (int i = 0; i < d; ++i) acc += ht[i] * ev[i];
            lt[v] = acc;
        }
    }
    return {ws.logits.data(), static_cast<std::size_t>(t_len) * static_cast<std::size_t>(cfg.vocab_size)};
}

// Convenience wrapper returning one vector per input position.
inline std::vector<std::vector<double>> forward_rows(const Model& m, const std::vector<int>& tokens) {
    Workspace ws(m.cfg);
    forward(m, tokens, ws);
    std::vector<std::vector<double>> rows(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const double* lt = ws.logits.data() + t * static_cast<std::size_t>(m.cfg.vocab_size);
        rows[t].assign(lt, lt + m.cfg.vocab_size);
    }
    return rows;
}

// --- checkpoint io ----------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'C', 'A', 'P', 'P', 'C', 'K', 'P', '1'};

inline void save_checkpoint(const Model& m, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
        out.write(kCheckpointMagic, 8);
        const std::int32_t dims[6] = {m.cfg.d_model, m.cfg.n_heads, m.cfg.n_layers, m.cfg.d_ff, m.cfg.context_len, m.cfg.vocab_size};
        out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
        out.write(reinterpret_cast<const char*>(&m.cfg.dropout), sizeof(double));
        const std::uint64_t n = m.params.size();
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(m.params.data()), static_cast<std::streamsize>(n * sizeof(double)));
        out.flush();
        if (!out) throw std::runtime_error("checkpoint write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("not a model checkpoint: " + path.string());
    std::int32_t dims[6];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    ModelConfig cfg;
    cfg.d_model = dims[0];
    cfg.n_heads = dims[1];
    cfg.n_layers = dims[2];
    cfg.d_ff = dims[3];
    cfg.context_len = dims[4];
    cfg.vocab_size = dims[5];
    in.read(reinterpret_cast<char*>(&cfg.dropout), sizeof(double));
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    Model m(cfg);
    if (n != m.params.size()) throw std::runtime_error("checkpoint parameter count mismatch: " + path.string());
    in.read(reinterpret_cast<char*>(m.params.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return m;
}

} // namespace capp
