#include "speechae.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "../core/rng.hpp"

namespace a2v::speechae {

namespace {

Tensor normal_init(std::vector<int64_t> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

constexpr double kNormFloor = 1e-12;

}  // namespace

void SpeechAEConfig::validate() const {
    if (input_window < 1 || input_dim < 1 || latent_window < 1 || latent_dim < 1)
        throw std::invalid_argument("speechae: window/dim fields must be >= 1");
    if (temporal_ratio < 1) throw std::invalid_argument("speechae: temporal ratio must be >= 1");
    if (hidden < 1) throw std::invalid_argument("speechae: hidden width must be >= 1");
    if (mix_kernel < 1) throw std::invalid_argument("speechae: mix kernel must be >= 1");
    if (tau <= 0.0) throw std::invalid_argument("speechae: tau must be positive");
    if (alpha_loss < 0.0 || beta_loss < 0.0) throw std::invalid_argument("speechae: loss weights must be >= 0");
}

ParamStore init_params(const SpeechAEConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(Rng::derive(seed, 0x5ae));
    ParamStore ps;
    int64_t fv = cfg.frame_values();
    int64_t lv = cfg.latent_values();
    int64_t hid = cfg.hidden;
    int64_t rt = cfg.temporal_ratio;
    auto lin = [&](const std::string& name, int64_t in, int64_t out) {
        ps.add(name + ".w", normal_init({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
        ps.add(name + ".b", Tensor({out}));
    };
    lin("speechae.enc_in", fv, hid);
    ps.add("speechae.enc_down.w",
           normal_init({rt + 1, hid, hid}, 1.0 / std::sqrt(static_cast<double>((rt + 1) * hid)), rng));
    ps.add("speechae.enc_down.b", Tensor({hid}));
    ps.add("speechae.enc_mix.w",
           normal_init({cfg.mix_kernel, hid, hid}, 1.0 / std::sqrt(static_cast<double>(cfg.mix_kernel * hid)), rng));
    ps.add("speechae.enc_mix.b", Tensor({hid}));
    lin("speechae.enc_out", hid, lv);
    lin("speechae.dec_in", lv, hid);
    ps.add("speechae.dec_mix.w",
           normal_init({cfg.mix_kernel, hid, hid}, 1.0 / std::sqrt(static_cast<double>(cfg.mix_kernel * hid)), rng));
    ps.add("speechae.dec_mix.b", Tensor({hid}));
    lin("speechae.dec_first", hid, hid);
    lin("speechae.dec_exp", hid, rt * hid);
    lin("speechae.dec_out", hid, fv);
    return ps;
}

NodeId build_encoder(Graph& g, NodeId s, int64_t F, const SpeechAEConfig& cfg, const ParamLookup& p) {
    cfg.validate();
    if ((F - 1) % cfg.temporal_ratio != 0)
        throw std::invalid_argument("encode_speech: frame axis: F-1=" + std::to_string(F - 1) +
                                    " not divisible by temporal ratio " + std::to_string(cfg.temporal_ratio));
    int64_t rt = cfg.temporal_ratio;
    NodeId h = g.gelu(g.add_rowvec(g.matmul(s, p("speechae.enc_in.w")), p("speechae.enc_in.b")));
    NodeId d = g.gelu(g.conv1d_causal(h, p("speechae.enc_down.w"), p("speechae.enc_down.b"), rt, rt));
    NodeId m = g.gelu(g.conv1d_causal(d, p("speechae.enc_mix.w"), p("speechae.enc_mix.b"), 1, cfg.mix_kernel - 1));
    return g.add_rowvec(g.matmul(m, p("speechae.enc_out.w")), p("speechae.enc_out.b"));
}

NodeId build_decoder(Graph& g, NodeId c, int64_t f, const SpeechAEConfig& cfg, const ParamLookup& p) {
    cfg.validate();
    int64_t rt = cfg.temporal_ratio;
    int64_t hid = cfg.hidden;
    NodeId h = g.gelu(g.add_rowvec(g.matmul(c, p("speechae.dec_in.w")), p("speechae.dec_in.b")));
    NodeId m = g.gelu(g.conv1d_causal(h, p("speechae.dec_mix.w"), p("speechae.dec_mix.b"), 1, cfg.mix_kernel - 1));
    NodeId first = g.add_rowvec(g.matmul(g.slice_rows(m, 0, 1), p("speechae.dec_first.w")), p("speechae.dec_first.b"));
    NodeId body;
    if (f > 1) {
        NodeId rest = g.add_rowvec(g.matmul(g.slice_rows(m, 1, f), p("speechae.dec_exp.w")), p("speechae.dec_exp.b"));
        body = g.concat_rows({first, g.reshape(rest, {(f - 1) * rt, hid})});
    } else {
        body = first;
    }
    NodeId act = g.gelu(body);
    return g.add_rowvec(g.matmul(act, p("speechae.dec_out.w")), p("speechae.dec_out.b"));
}

namespace {

ParamLookup frozen_lookup(Graph& g, const ParamStore& params) {
    return [&g, &params](const std::string& name) { return g.input(params.at(name), false); };
}

}  // namespace

SpeechLatent encode_speech(const data::SpeechFeatureSeq& S, const SpeechAEConfig& cfg, const ParamStore& params) {
    if (S.data.ndim() != 3 || S.data.shape[1] != cfg.input_window || S.data.shape[2] != cfg.input_dim)
        throw std::invalid_argument("encode_speech: expected (F, " + std::to_string(cfg.input_window) + ", " +
                                    std::to_string(cfg.input_dim) + "), got " + S.data.shape_str());
    int64_t F = S.data.shape[0];
    Graph g;
    NodeId s = g.input(S.data.reshaped({F, cfg.frame_values()}), false);
    NodeId c = build_encoder(g, s, F, cfg, frozen_lookup(g, params));
    SpeechLatent out;
    int64_t f = 1 + (F - 1) / cfg.temporal_ratio;
    out.data = g.val(c).reshaped({f, cfg.latent_window, cfg.latent_dim});
    return out;
}

data::SpeechFeatureSeq decode_speech(const SpeechLatent& C, const SpeechAEConfig& cfg, const ParamStore& params) {
    if (C.data.ndim() != 3 || C.data.shape[1] != cfg.latent_window || C.data.shape[2] != cfg.latent_dim)
        throw std::invalid_argument("decode_speech: expected (f, " + std::to_string(cfg.latent_window) + ", " +
                                    std::to_string(cfg.latent_dim) + "), got " + C.data.shape_str());
    int64_t f = C.data.shape[0];
    Graph g;
    NodeId c = g.input(C.data.reshaped({f, cfg.latent_values()}), false);
    NodeId s = build_decoder(g, c, f, cfg, frozen_lookup(g, params));
    data::SpeechFeatureSeq out;
    int64_t F = 1 + (f - 1) * cfg.temporal_ratio;
    out.data = g.val(s).reshaped({F, cfg.input_window, cfg.input_dim});
    return out;
}

// ----------------------------------------------------------------- losses

NodeId loss_mse_node(Graph& g, NodeId s, NodeId s_hat) { return g.mse(s, s_hat); }

double loss_mse(const Tensor& S, const Tensor& S_hat) {
    if (!S.same_shape(S_hat))
        throw std::invalid_argument("loss_mse: shape mismatch " + S.shape_str() + " vs " + S_hat.shape_str());
    Graph g;
    NodeId a = g.input(S, false);
    NodeId b = g.input(S_hat, false);
    return g.val(loss_mse_node(g, a, b)).data[0];
}

NodeId loss_contrastive_node(Graph& g, NodeId s, NodeId s_hat, int64_t frames, double tau, bool standard_infonce) {
    if (frames < 2) throw std::invalid_argument("loss_contrastive: needs at least 2 frames");
    if (tau <= 0.0) throw std::invalid_argument("loss_contrastive: tau must be positive");
    if (!g.val(s).same_shape(g.val(s_hat)))
        throw std::invalid_argument("loss_contrastive: shape mismatch " + g.val(s).shape_str() + " vs " +
                                    g.val(s_hat).shape_str());
    int64_t fv = g.val(s).numel() / frames;

    // norm check on the values before any node is pushed (val() references
    // do not survive op construction)
    for (int64_t i = 0; i < frames; ++i) {
        double ns = 0.0, nh = 0.0;
        for (int64_t j = 0; j < fv; ++j) {
            double a = g.val(s).data[static_cast<size_t>(i * fv + j)];
            double b = g.val(s_hat).data[static_cast<size_t>(i * fv + j)];
            ns += a * a;
            nh += b * b;
        }
        if (ns < kNormFloor || nh < kNormFloor)
            throw std::invalid_argument("loss_contrastive: zero-norm frame vector at frame " + std::to_string(i) +
                                        "; cosine similarity undefined");
    }

    NodeId s2 = g.reshape(s, {frames, fv});
    NodeId h2 = g.reshape(s_hat, {frames, fv});
    NodeId sn = g.div_rows(s2, g.sqrt(g.sum_rows(g.mul(s2, s2))));
    NodeId hn = g.div_rows(h2, g.sqrt(g.sum_rows(g.mul(h2, h2))));
    NodeId sims = g.matmul(hn, g.transpose(sn));  // sims[i][j] = sim(s_hat_i, s_j)
    NodeId scaled = g.scale(sims, 1.0 / tau);

    Tensor mask({frames, frames}, 1.0);
    if (!standard_infonce)
        for (int64_t i = 0; i < frames; ++i) mask.at2(i, i) = 0.0;
    NodeId denom = g.log(g.sum_rows(g.mul(g.exp(scaled), g.input(mask, false))));

    auto diag_idx = std::make_shared<std::vector<int64_t>>();
    for (int64_t i = 0; i < frames; ++i) diag_idx->push_back(i * frames + i);
    NodeId diag = g.gather(scaled, diag_idx, {frames});

    return g.scale(g.mean_all(g.sub(diag, denom)), -1.0);
}

Tensor frame_similarities(const Tensor& S, const Tensor& S_hat) {
    if (!S.same_shape(S_hat))
        throw std::invalid_argument("frame_similarities: shape mismatch " + S.shape_str() + " vs " + S_hat.shape_str());
    if (S.ndim() < 2) throw std::invalid_argument("frame_similarities: expected frame-major tensor");
    int64_t F = S.shape[0];
    int64_t fv = S.numel() / F;
    Tensor sims({F, F});
    std::vector<double> ns(static_cast<size_t>(F)), nh(static_cast<size_t>(F));
    for (int64_t i = 0; i < F; ++i) {
        double a = 0.0, b = 0.0;
        for (int64_t j = 0; j < fv; ++j) {
            a += S.data[static_cast<size_t>(i * fv + j)] * S.data[static_cast<size_t>(i * fv + j)];
            b += S_hat.data[static_cast<size_t>(i * fv + j)] * S_hat.data[static_cast<size_t>(i * fv + j)];
        }
        if (a < kNormFloor || b < kNormFloor)
            throw std::invalid_argument("frame_similarities: zero-norm frame vector at frame " + std::to_string(i));
        ns[static_cast<size_t>(i)] = std::sqrt(a);
        nh[static_cast<size_t>(i)] = std::sqrt(b);
    }
    for (int64_t i = 0; i < F; ++i)
        for (int64_t j = 0; j < F; ++j) {
            double dot = 0.0;
            for (int64_t k = 0; k < fv; ++k)
                dot += S_hat.data[static_cast<size_t>(i * fv + k)] * S.data[static_cast<size_t>(j * fv + k)];
            sims.at2(i, j) = dot / (nh[static_cast<size_t>(i)] * ns[static_cast<size_t>(j)]);
        }
    return sims;
}

double contrastive_from_sims(const Tensor& sims, double tau, bool standard_infonce) {
    if (sims.ndim() != 2 || sims.shape[0] != sims.shape[1])
        throw std::invalid_argument("contrastive_from_sims: expected square matrix");
    int64_t F = sims.shape[0];
    if (F < 2) throw std::invalid_argument("contrastive_from_sims: needs at least 2 frames");
    if (tau <= 0.0) throw std::invalid_argument("contrastive_from_sims: tau must be positive");
    double total = 0.0;
    for (int64_t i = 0; i < F; ++i) {
        double denom = 0.0;
        for (int64_t j = 0; j < F; ++j) {
            if (!standard_infonce && j == i) continue;
            denom += std::exp(sims.at2(i, j) / tau);
        }
        total += sims.at2(i, i) / tau - std::log(denom);
    }
    return -total / static_cast<double>(F);
}

double loss_contrastive(const Tensor& S, const Tensor& S_hat, double tau, bool standard_infonce) {
    if (S.ndim() < 2) throw std::invalid_argument("loss_contrastive: expected frame-major tensor");
    if (S.shape[0] < 2) throw std::invalid_argument("loss_contrastive: needs at least 2 frames");
    return contrastive_from_sims(frame_similarities(S, S_hat), tau, standard_infonce);
}

NodeId loss_speechae_node(Graph& g, NodeId s, NodeId s_hat, int64_t frames, const SpeechAEConfig& cfg) {
    NodeId mse = loss_mse_node(g, s, s_hat);
    NodeId con = loss_contrastive_node(g, s, s_hat, frames, cfg.tau, cfg.standard_infonce);
    return g.add(g.scale(mse, cfg.alpha_loss), g.scale(con, cfg.beta_loss));
}

double loss_speechae(const Tensor& S, const Tensor& S_hat, const SpeechAEConfig& cfg) {
    return cfg.alpha_loss * loss_mse(S, S_hat) + cfg.beta_loss * loss_contrastive(S, S_hat, cfg.tau, cfg.standard_infonce);
}

// -------------------------------------------------------------- pretraining

PretrainResult pretrain(ParamStore& params, const SpeechAEConfig& cfg, const std::vector<Tensor>& feature_clips,
                        double lr, int64_t epochs, uint64_t seed) {
    if (feature_clips.empty()) throw std::invalid_argument("pretrain: empty corpus");
    PretrainResult res;
    if (epochs == 0) return res;

    AdamOptimizer opt(lr);
    Rng order_rng(Rng::derive(seed, 0x5ae7));
    std::vector<size_t> order(feature_clips.size());
    std::iota(order.begin(), order.end(), 0);

    for (int64_t e = 0; e < epochs; ++e) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        double epoch_loss = 0.0;
        for (size_t idx : order) {
            const Tensor& feats = feature_clips[idx];
            if (feats.ndim() != 3) throw std::invalid_argument("pretrain: feature clips must be (F, H_w, D_A)");
            int64_t F = feats.shape[0];
            Graph g;
            Binder bind(g, params);
            ParamLookup p = [&bind](const std::string& n) { return bind(n); };
            NodeId s = g.input(feats.reshaped({F, cfg.frame_values()}), false);
            int64_t f = 1 + (F - 1) / cfg.temporal_ratio;
            NodeId c = build_encoder(g, s, F, cfg, p);
            NodeId s_hat = build_decoder(g, c, f, cfg, p);
            NodeId loss = loss_speechae_node(g, s, s_hat, F, cfg);
            double lv = g.val(loss).data[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("pretrain: non-finite loss at epoch " + std::to_string(e) + ", clip " +
                                         std::to_string(idx));
            params.zero_grad();
            g.backward(loss);
            bind.harvest();
            opt.step(params);
            epoch_loss += lv;
        }
        res.loss_curve.push_back(epoch_loss / static_cast<double>(feature_clips.size()));
    }
    res.initial_loss = res.loss_curve.front();
    res.final_loss = res.loss_curve.back();
    return res;
}

}  // namespace a2v::speechae
