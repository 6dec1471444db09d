#pragma once

// Training for the sequence model: masked cross-entropy over the chain
// suffix, reverse-mode gradients through every block, Adam with global
// gradient-norm clipping. Single-threaded and bit-deterministic per seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capp/dataset.hpp"
#include "capp/model.hpp"
#include "capp/tokenizer.hpp"

namespace capp {

// The loss reads targets only at rows kPromptLen-1 and beyond: the rows
// whose next token is an operation or EOS. Earlier targets are ignored.
inline bool loss_row_active(int row) { return row >= kPromptLen - 1; }

namespace detail {

// Softmax of one logit row into out; returns log(sum exp) shifted max for CE.
inline void softmax_row(const double* logits, double* out, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double denom = 0.0;
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(logits[i] - mx);
        denom += out[i];
    }
    const double inv = 1.0 / denom;
    for (int i = 0; i < n; ++i) out[i] *= inv;
}

} // namespace detail

// Cross-entropy summed over active rows. inputs has T tokens, targets has T
// entries aligned with inputs (targets[t] is the token that should follow
// inputs[t]). Requires a forward() call's worth of work; fills ws.
inline double masked_loss_sum(const Model& m, std::span<const int> inputs, std::span<const int> targets, Workspace& ws) {
    if (inputs.size() != targets.size()) throw std::invalid_argument("masked_loss_sum: inputs/targets length mismatch");
    forward(m, inputs, ws);
    const int v = m.cfg.vocab_size;
    std::vector<double> prob(static_cast<std::size_t>(v));
    double loss = 0.0;
    for (int t = 0; t < static_cast<int>(inputs.size()); ++t) {
        if (!loss_row_active(t)) continue;
        const int y = targets[static_cast<std::size_t>(t)];
        if (y < 0 || y >= v) throw std::invalid_argument("masked_loss_sum: target out of range at active row");
        const double* lt = ws.logits.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(v);
        detail::softmax_row(lt, prob.data(), v);
        loss -= std::log(std::max(prob[static_cast<std::size_t>(y)], 1e-300));
    }
    return loss;
}

inline int active_rows(std::size_t seq_len) {
    return std::max(0, static_cast<int>(seq_len) - (kPromptLen - 1));
}

// Backward pass for one sequence. ws must hold the activations of a forward()
// call on the same inputs. dlogits is consumed from ws.dlogits, which the
// caller fills (typically (softmax - onehot) * scale on active rows, zero
// elsewhere). Gradients accumulate into grads (layout order, same size as
// model params).
inline void backward(const Model& m, std::span<const int> inputs, Workspace& ws, std::vector<double>& grads) {
    const auto& cfg = m.cfg;
    if (grads.size() != m.params.size()) throw std::invalid_argument("backward: gradient buffer size mismatch");
    const int t_len = static_cast<int>(inputs.size());
    const int d = cfg.d_model;
    const int ff = cfg.d_ff;
    const int vocab = cfg.vocab_size;
    const int n_heads = cfg.n_heads;
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t td = static_cast<std::size_t>(t_len) * static_cast<std::size_t>(d);

    auto zero = [](std::vector<double>& buf, std::size_t n) { std::fill(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n), 0.0); };

    // tied output projection: logits[t][v] = lnf_out[t] . tok_emb[v]
    zero(ws.dx, td); // reused as d(lnf_out)
    const double* wte = m.p(m.layout.tok_emb);
    double* d_wte = grads.data() + m.layout.tok_emb;
    for (int t = 0; t < t_len; ++t) {
        const double* dlt = ws.dlogits.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(vocab);
        const double* ht = ws.lnf_out.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        double* dht = ws.dx.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        for (int v = 0; v < vocab; ++v) {
            const double g = dlt[v];
            if (g == 0.0) continue;
            const double* ev = wte + static_cast<std::size_t>(v) * static_cast<std::size_t>(d);
            double* dev = d_wte + static_cast<std::size_t>(v) * static_cast<std::size_t>(d);
            for (int i = 0; i < d; ++i) {
                dht[i] += g * ev[i];
                dev[i] += g * ht[i];
            }
        }
    }

    // final layer norm; its input is the last layer's x_out
    const double* x_final = cfg.n_layers > 0 ? ws.layers[static_cast<std::size_t>(cfg.n_layers - 1)].x_out.data() : ws.x0.data();
    zero(ws.dbranch, td); // d(x_final)
    nn::layernorm_backward(ws.dx.data(), x_final, m.p(m.layout.lnf_g), ws.lnf_mean.data(), ws.lnf_rstd.data(), ws.dbranch.data(),
                           grads.data() + m.layout.lnf_g, grads.data() + m.layout.lnf_b, t_len, d);
    std::copy(ws.dbranch.begin(), ws.dbranch.begin() + static_cast<std::ptrdiff_t>(td), ws.dx.begin()); // dx = d(x_out of top layer)

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        auto& la = ws.layers[static_cast<std::size_t>(l)];
        const auto& lo = m.layout.layers[static_cast<std::size_t>(l)];

        // x_out = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2
        const std::size_t tff = static_cast<std::size_t>(t_len) * static_cast<std::size_t>(ff);
        zero(ws.dff_act, tff);
        nn::mm_backward_data(ws.dx.data(), m.p(lo.w2), ws.dff_act.data(), t_len, ff, d);
        nn::mm_backward_weights(la.ff_act.data(), ws.dx.data(), grads.data() + lo.w2, grads.data() + lo.b2, t_len, ff, d);
        for (std::size_t i = 0; i < tff; ++i) ws.dff_pre[i] = ws.dff_act[i] * nn::gelu_grad(la.ff_pre[i]);
        zero(ws.dbranch, td); // d(ln2_out)
        nn::mm_backward_data(ws.dff_pre.data(), m.p(lo.w1), ws.dbranch.data(), t_len, d, ff);
        nn::mm_backward_weights(la.ln2_out.data(), ws.dff_pre.data(), grads.data() + lo.w1, grads.data() + lo.b1, t_len, d, ff);
        // residual: dx already carries d(x_mid) via the skip path
        nn::layernorm_backward(ws.dbranch.data(), la.x_mid.data(), m.p(lo.ln2_g), la.ln2_mean.data(), la.ln2_rstd.data(), ws.dx.data(),
                               grads.data() + lo.ln2_g, grads.data() + lo.ln2_b, t_len, d);

        // x_mid = x_in + attention(ln1(x_in)) Wo + bo
        zero(ws.dctx, td);
        nn::mm_backward_data(ws.dx.data(), m.p(lo.wo), ws.dctx.data(), t_len, d, d);
        nn::mm_backward_weights(la.ctx.data(), ws.dx.data(), grads.data() + lo.wo, grads.data() + lo.bo, t_len, d, d);

        zero(ws.dq, td);
        zero(ws.dk, td);
        zero(ws.dv, td);
        for (int h = 0; h < n_heads; ++h) {
            const int hoff = h * dh;
            const double* att_h = la.att.data() + static_cast<std::size_t>(h) * static_cast<std::size_t>(cfg.context_len) * static_cast<std::size_t>(cfg.context_len);
            double* datt_h = ws.datt.data() + static_cast<std::size_t>(h) * static_cast<std::size_t>(cfg.context_len) * static_cast<std::size_t>(cfg.context_len);
            for (int i = 0; i < t_len; ++i) {
                const double* dctx_i = ws.dctx.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + hoff;
                const double* att_row = att_h + static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg.context_len);
                double* datt_row = datt_h + static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg.context_len);
                // d(att[i][j]) = dctx_i . v_j ; dv_j += att[i][j] * dctx_i
                for (int j = 0; j <= i; ++j) {
                    const double* vj = la.v.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + hoff;
                    double* dvj = ws.dv.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + hoff;
                    double acc = 0.0;
                    const double a = att_row[j];
                    for (int e = 0; e < dh; ++e) {
                        acc += dctx_i[e] * vj[e];
                        dvj[e] += a * dctx_i[e];
                    }
                    datt_row[j] = acc;
                }
                // softmax jacobian within the causal row
                double dot = 0.0;
                for (int j = 0; j <= i; ++j) dot += att_row[j] * datt_row[j];
                const double* qi = la.q.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + hoff;
                double* dqi = ws.dq.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + hoff;
                for (int j = 0; j <= i; ++j) {
                    const double dscore = att_row[j] * (datt_row[j] - dot) * scale;
                    const double* kj = la.k.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + hoff;
                    double* dkj = ws.dk.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) + hoff;
                    for (int e = 0; e < dh; ++e) {
                        dqi[e] += dscore * kj[e];
                        dkj[e] += dscore * qi[e];
                    }
                }
            }
        }

        zero(ws.dbranch, td); // d(ln1_out)
        nn::mm_backward_data(ws.dq.data(), m.p(lo.wq), ws.dbranch.data(), t_len, d, d);
        nn::mm_backward_data(ws.dk.data(), m.p(lo.wk), ws.dbranch.data(), t_len, d, d);
        nn::mm_backward_data(ws.dv.data(), m.p(lo.wv), ws.dbranch.data(), t_len, d, d);
        nn::mm_backward_weights(la.ln1_out.data(), ws.dq.data(), grads.data() + lo.wq, grads.data() + lo.bq, t_len, d, d);
        nn::mm_backward_weights(la.ln1_out.data(), ws.dk.data(), grads.data() + lo.wk, grads.data() + lo.bk, t_len, d, d);
        nn::mm_backward_weights(la.ln1_out.data(), ws.dv.data(), grads.data() + lo.wv, grads.data() + lo.bv, t_len, d, d);
        // residual: dx carries d(x_in) through the skip; layer-norm path adds in
        nn::layernorm_backward(ws.dbranch.data(), la.x_in.data(), m.p(lo.ln1_g), la.ln1_mean.data(), la.ln1_rstd.data(), ws.dx.data(),
                               grads.data() + lo.ln1_g, grads.data() + lo.ln1_b, t_len, d);
    }

    // embeddings: x0[t] = tok_emb[tokens[t]] + pos_emb[t]
    double* d_pe = grads.data() + m.layout.pos_emb;
    for (int t = 0; t < t_len; ++t) {
        const double* dxt = ws.dx.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        double* dte = d_wte + static_cast<std::size_t>(inputs[static_cast<std::size_t>(t)]) * static_cast<std::size_t>(d);
        double* dpe = d_pe + static_cast<std::size_t>(t) * static_cast<std::size_t>(d);
        for (int i = 0; i < d; ++i) {
            dte[i] += dxt[i];
            dpe[i] += dxt[i];
        }
    }
}

// Forward + loss + dlogits fill + backward for one sequence. loss_scale
// multiplies the per-row CE gradient (use 1/total_active_rows for a batch
// mean). Returns the unscaled CE sum over active rows.
inline double loss_and_backward(const Model& m, std::span<const int> inputs, std::span<const int> targets, double loss_scale,
                                Workspace& ws, std::vector<double>& grads) {
    if (inputs.size() != targets.size()) throw std::invalid_argument("loss_and_backward: inputs/targets length mismatch");
    forward(m, inputs, ws);
    const int v = m.cfg.vocab_size;
    const int t_len = static_cast<int>(inputs.size());
    std::fill(ws.dlogits.begin(), ws.dlogits.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t_len) * static_cast<std::size_t>(v)), 0.0);
    double loss = 0.0;
    for (int t = 0; t < t_len; ++t) {
        if (!loss_row_active(t)) continue;
        const int y = targets[static_cast<std::size_t>(t)];
        if (y < 0 || y >= v) throw std::invalid_argument("loss_and_backward: target out of range at active row");
        const double* lt = ws.logits.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(v);
        double* dlt = ws.dlogits.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(v);
        detail::softmax_row(lt, dlt, v);
        loss -= std::log(std::max(dlt[y], 1e-300));
        for (int i = 0; i < v; ++i) dlt[i] *= loss_scale;
        dlt[y] -= loss_scale;
    }
    backward(m, inputs, ws, grads);
    return loss;
}

struct AdamState {
    std::vector<double> m1, m2;
    std::int64_t step = 0;

    explicit AdamState(std::size_t n) : m1(n, 0.0), m2(n, 0.0) {}
};

struct TrainOptions {
    double learning_rate = 3e-4;
    int batch_size = 16;
    int epochs = 300;
    double grad_clip_norm = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

inline void adam_update(std::vector<double>& params, const std::vector<double>& grads, AdamState& st, const TrainOptions& opt) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(opt.adam_beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(opt.adam_beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m1[i] = opt.adam_beta1 * st.m1[i] + (1.0 - opt.adam_beta1) * grads[i];
        st.m2[i] = opt.adam_beta2 * st.m2[i] + (1.0 - opt.adam_beta2) * grads[i] * grads[i];
        const double mhat = st.m1[i] / bc1;
        const double vhat = st.m2[i] / bc2;
        params[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.adam_eps);
    }
}

// Scales grads in place so the global L2 norm is at most max_norm.
inline double clip_global_norm(std::vector<double>& grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (double& g : grads) g *= s;
    }
    return norm;
}

struct TrainResult {
    std::vector<double> epoch_loss; // mean CE per supervised token, one entry per epoch
};

// Trains in place on (part, chain) pairs. Examples are tokenized once;
// batches use per-sequence gradient accumulation (no padding). The shuffle
// order, and therefore the whole run, is a pure function of opt.seed.
inline TrainResult train_model(Model& m, std::span<const TrainPair> pairs, const TrainOptions& opt) {
    if (pairs.empty()) throw std::invalid_argument("train_model: empty training set");
    if (opt.batch_size <= 0 || opt.epochs < 0) throw std::invalid_argument("train_model: bad batch size or epoch count");

    struct Example {
        std::vector<int> inputs, targets;
    };
    std::vector<Example> ex;
    ex.reserve(pairs.size());
    for (const auto& pr : pairs) {
        const auto full = tokenize(PartEncoding::from_index(pr.part_index), pr.chain);
        Example e;
        e.inputs.assign(full.begin(), full.end() - 1);
        e.targets.assign(full.begin() + 1, full.end());
        ex.push_back(std::move(e));
    }

    Workspace ws(m.cfg);
    std::vector<double> grads(m.params.size(), 0.0);
    AdamState adam(m.params.size());
    auto eng = rng::make_engine(rng::derive_seed(opt.seed, rng::SeedTag::train));
    std::vector<std::size_t> order(ex.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    result.epoch_loss.reserve(static_cast<std::size_t>(opt.epochs));
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        rng::shuffle(order, eng);
        double epoch_ce = 0.0;
        std::int64_t epoch_tokens = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            int batch_tokens = 0;
            for (std::size_t b = start; b < stop; ++b) batch_tokens += active_rows(ex[order[b]].inputs.size());
            if (batch_tokens == 0) continue;
            const double scale = 1.0 / static_cast<double>(batch_tokens);
            std::fill(grads.begin(), grads.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const auto& e = ex[order[b]];
                batch_loss += loss_and_backward(m, e.inputs, e.targets, scale, ws, grads);
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_model: non-finite loss at epoch " + std::to_string(epoch) +
                                         " (learning_rate=" + std::to_string(opt.learning_rate) + ")");
            clip_global_norm(grads, opt.grad_clip_norm);
            adam_update(m.params, grads, adam, opt);
            epoch_ce += batch_loss;
            epoch_tokens += batch_tokens;
        }
        result.epoch_loss.push_back(epoch_tokens > 0 ? epoch_ce / static_cast<double>(epoch_tokens) : 0.0);
    }
    return result;
}

} // namespace capp
