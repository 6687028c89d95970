#include "backbone.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace a2v::backbone {

namespace {

Tensor normal_init(std::vector<int64_t> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

std::shared_ptr<std::vector<int64_t>> patch_idx(int64_t f, int64_t h, int64_t w, int64_t c, int64_t p) {
    int64_t gh = h / p, gw = w / p;
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(f * h * w * c));
    for (int64_t i = 0; i < f; ++i)
        for (int64_t py = 0; py < gh; ++py)
            for (int64_t px = 0; px < gw; ++px)
                for (int64_t dy = 0; dy < p; ++dy)
                    for (int64_t dx = 0; dx < p; ++dx)
                        for (int64_t ch = 0; ch < c; ++ch)
                            idx->push_back(((i * h + py * p + dy) * w + px * p + dx) * c + ch);
    return idx;
}

std::shared_ptr<std::vector<int64_t>> inverse_idx(const std::vector<int64_t>& fwd) {
    auto inv = std::make_shared<std::vector<int64_t>>(fwd.size());
    for (size_t i = 0; i < fwd.size(); ++i) (*inv)[static_cast<size_t>(fwd[i])] = static_cast<int64_t>(i);
    return inv;
}

std::string blk(int64_t i, const char* name) { return "backbone.blk" + std::to_string(i) + "." + name; }

// layernorm followed by per-frame shift/scale broadcast over that frame's tokens
NodeId mod_ln(Graph& g, NodeId x, NodeId shift_f, NodeId scale_f, int64_t m) {
    NodeId h = g.layernorm_rows(x);
    NodeId scale_tok = g.repeat_rows(scale_f, m);
    NodeId shift_tok = g.repeat_rows(shift_f, m);
    return g.add(g.mul(h, g.add_scalar(scale_tok, 1.0)), shift_tok);
}

NodeId multihead_self_attention(Graph& g, NodeId h, int64_t heads, int64_t d, const std::string& prefix,
                                const ParamLookup& p) {
    NodeId q = g.add_rowvec(g.matmul(h, p(prefix + ".wq")), p(prefix + ".bq"));
    NodeId k = g.add_rowvec(g.matmul(h, p(prefix + ".wk")), p(prefix + ".bk"));
    NodeId v = g.add_rowvec(g.matmul(h, p(prefix + ".wv")), p(prefix + ".bv"));
    int64_t dh = d / heads;
    double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<NodeId> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int64_t hd = 0; hd < heads; ++hd) {
        NodeId qh = g.slice_cols(q, hd * dh, (hd + 1) * dh);
        NodeId kh = g.slice_cols(k, hd * dh, (hd + 1) * dh);
        NodeId vh = g.slice_cols(v, hd * dh, (hd + 1) * dh);
        NodeId probs = g.softmax_rows(g.scale(g.matmul(qh, g.transpose(kh)), scl));
        outs.push_back(g.matmul(probs, vh));
    }
    return g.add_rowvec(g.matmul(g.concat_cols(outs), p(prefix + ".wo")), p(prefix + ".bo"));
}

// Frame-local cross-attention core: queries of frame i attend only to the
// h_w condition tokens of frame i. Frame 0 (reference slot) passes zeros.
NodeId frame_cross_core(Graph& g, NodeId q_tokens, NodeId cond_tokens, int64_t frames_with_ref, int64_t m,
                        int64_t h_w, int64_t d, NodeId wk, NodeId bk, NodeId wv, NodeId bv) {
    NodeId kc = g.add_rowvec(g.matmul(cond_tokens, wk), bk);  // [f*h_w, d]
    NodeId vc = g.add_rowvec(g.matmul(cond_tokens, wv), bv);
    double scl = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<NodeId> rows;
    rows.reserve(static_cast<size_t>(frames_with_ref));
    rows.push_back(g.input(Tensor({m, d}), false));  // reference slot: no audio frame
    for (int64_t i = 1; i < frames_with_ref; ++i) {
        NodeId qi = g.slice_rows(q_tokens, i * m, (i + 1) * m);
        NodeId ki = g.slice_rows(kc, (i - 1) * h_w, i * h_w);
        NodeId vi = g.slice_rows(vc, (i - 1) * h_w, i * h_w);
        NodeId probs = g.softmax_rows(g.scale(g.matmul(qi, g.transpose(ki)), scl));
        rows.push_back(g.matmul(probs, vi));
    }
    return g.concat_rows(rows);
}

}  // namespace

void BackboneConfig::validate() const {
    if (blocks < 1) throw std::invalid_argument("backbone: needs at least one block");
    if (width < 1 || heads < 1 || width % heads != 0)
        throw std::invalid_argument("backbone: width must be a positive multiple of head count");
    if (patch < 1 || latent_h % patch != 0 || latent_w % patch != 0)
        throw std::invalid_argument("backbone: patch size " + std::to_string(patch) + " must divide latent dims " +
                                    std::to_string(latent_h) + "x" + std::to_string(latent_w));
    if (clip_frames < 1) throw std::invalid_argument("backbone: clip_frames must be >= 1");
    if (audio_window < 1 || audio_dim < 1) throw std::invalid_argument("backbone: audio token shape must be positive");
    if (p_drop < 0.0 || p_drop > 1.0) throw std::invalid_argument("backbone: p_drop must be in [0,1]");
}

Tensor patchify(const Tensor& Z, int64_t patch) {
    if (Z.ndim() != 4) throw std::invalid_argument("patchify: expected (f,h,w,c), got " + Z.shape_str());
    int64_t f = Z.shape[0], h = Z.shape[1], w = Z.shape[2], c = Z.shape[3];
    if (patch < 1 || h % patch != 0 || w % patch != 0)
        throw std::invalid_argument("patchify: patch " + std::to_string(patch) + " does not divide " +
                                    std::to_string(h) + "x" + std::to_string(w));
    auto idx = patch_idx(f, h, w, c, patch);
    int64_t m = (h / patch) * (w / patch);
    Tensor out({f * m, patch * patch * c});
    for (size_t i = 0; i < idx->size(); ++i) out.data[i] = Z.data[static_cast<size_t>((*idx)[i])];
    return out;
}

Tensor unpatchify(const Tensor& tokens, int64_t f, int64_t h, int64_t w, int64_t c, int64_t patch) {
    if (patch < 1 || h % patch != 0 || w % patch != 0)
        throw std::invalid_argument("unpatchify: patch " + std::to_string(patch) + " does not divide " +
                                    std::to_string(h) + "x" + std::to_string(w));
    int64_t m = (h / patch) * (w / patch);
    if (tokens.numel() != f * m * patch * patch * c)
        throw std::invalid_argument("unpatchify: token count mismatch for target shape");
    auto idx = patch_idx(f, h, w, c, patch);
    Tensor out({f, h, w, c});
    for (size_t i = 0; i < idx->size(); ++i) out.data[static_cast<size_t>((*idx)[i])] = tokens.data[i];
    return out;
}

Tensor timestep_embedding(const std::vector<double>& tvec, int64_t dim) {
    int64_t frames = static_cast<int64_t>(tvec.size());
    int64_t half = dim / 2;
    Tensor out({frames, dim});
    for (int64_t i = 0; i < frames; ++i) {
        double t = tvec[static_cast<size_t>(i)] * 1000.0;
        for (int64_t j = 0; j < half; ++j) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
            out.at2(i, j) = std::cos(t * freq);
            out.at2(i, half + j) = std::sin(t * freq);
        }
        if (dim % 2 == 1) out.at2(i, dim - 1) = 0.0;
    }
    return out;
}

ParamStore init_params(const BackboneConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(Rng::derive(seed, 0xd17));
    ParamStore ps;
    int64_t d = cfg.width;
    int64_t pd = cfg.patch_dim();
    int64_t m = cfg.tokens_per_frame();
    int64_t T = (cfg.clip_frames + 1) * m;
    auto lin = [&](const std::string& name, int64_t in, int64_t out, double stddev = -1.0) {
        double sd = stddev > 0 ? stddev : 1.0 / std::sqrt(static_cast<double>(in));
        ps.add(name + ".w", normal_init({in, out}, sd, rng));
        ps.add(name + ".b", Tensor({out}));
    };
    lin("backbone.patch_in", pd, d);
    ps.add("backbone.pos_emb", normal_init({T, d}, 0.02, rng));
    lin("backbone.tmlp1", d, d);
    lin("backbone.tmlp2", d, d);
    ps.add("backbone.null_speech", normal_init({cfg.audio_window, cfg.audio_dim}, 0.02, rng));
    ps.add("backbone.null_ref", normal_init({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 0.02, rng));
    for (int64_t i = 0; i < cfg.blocks; ++i) {
        // adaLN modulation: 9 per-frame vectors (shift/scale/gate for self-attn,
        // cross-attn, mlp); zero-init so blocks start as identity.
        ps.add(blk(i, "mod.w"), Tensor({d, 9 * d}));
        ps.add(blk(i, "mod.b"), Tensor({9 * d}));
        for (const char* nm : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
            ps.add(blk(i, nm), normal_init({d, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
        for (const char* nm : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) ps.add(blk(i, nm), Tensor({d}));
        ps.add(blk(i, "cross.wq"), normal_init({d, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
        ps.add(blk(i, "cross.bq"), Tensor({d}));
        ps.add(blk(i, "cross.wk"),
               normal_init({cfg.audio_dim, d}, 1.0 / std::sqrt(static_cast<double>(cfg.audio_dim)), rng));
        ps.add(blk(i, "cross.bk"), Tensor({d}));
        ps.add(blk(i, "cross.wv"),
               normal_init({cfg.audio_dim, d}, 1.0 / std::sqrt(static_cast<double>(cfg.audio_dim)), rng));
        ps.add(blk(i, "cross.bv"), Tensor({d}));
        // the zero-initialized gate (mod slice 5) keeps this branch inert at
        // init; wo itself must carry signal or the gate never gets gradient
        ps.add(blk(i, "cross.wo"), normal_init({d, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
        ps.add(blk(i, "cross.bo"), Tensor({d}));
        if (cfg.text_branch) {
            ps.add(blk(i, "text.wq"), normal_init({d, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
            ps.add(blk(i, "text.bq"), Tensor({d}));
            ps.add(blk(i, "text.wk"),
                   normal_init({cfg.text_dim, d}, 1.0 / std::sqrt(static_cast<double>(cfg.text_dim)), rng));
            ps.add(blk(i, "text.bk"), Tensor({d}));
            ps.add(blk(i, "text.wv"),
                   normal_init({cfg.text_dim, d}, 1.0 / std::sqrt(static_cast<double>(cfg.text_dim)), rng));
            ps.add(blk(i, "text.bv"), Tensor({d}));
            ps.add(blk(i, "text.wo"), Tensor({d, d}));
            ps.add(blk(i, "text.bo"), Tensor({d}));
        }
        lin(blk(i, "mlp1"), d, cfg.mlp_ratio * d);
        lin(blk(i, "mlp2"), cfg.mlp_ratio * d, d);
    }
    if (cfg.text_branch) ps.add("backbone.text_bank", normal_init({cfg.text_tokens, cfg.text_dim}, 0.02, rng));
    // small non-zero init keeps the output sensitive to the timestep vector
    // from the first step
    ps.add("backbone.final_mod.w", normal_init({d, 2 * d}, 0.02, rng));
    ps.add("backbone.final_mod.b", Tensor({2 * d}));
    ps.add("backbone.final.w", normal_init({d, pd}, 0.02, rng));
    ps.add("backbone.final.b", Tensor({pd}));
    return ps;
}

Tensor frame_cross_attention(const Tensor& H, const Tensor& C, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                             const Tensor& wo) {
    if (H.ndim() != 3 || C.ndim() != 3)
        throw std::invalid_argument("frame_cross_attention: expected H (f,n,d) and C (f,h_w,d_A)");
    if (H.shape[0] != C.shape[0])
        throw std::invalid_argument("frame_cross_attention: frame count mismatch: H has " + std::to_string(H.shape[0]) +
                                    ", C has " + std::to_string(C.shape[0]));
    int64_t f = H.shape[0], n = H.shape[1], d = H.shape[2], h_w = C.shape[1], da = C.shape[2];
    Graph g;
    NodeId h = g.input(H.reshaped({f * n, d}), false);
    NodeId c = g.input(C.reshaped({f * h_w, da}), false);
    NodeId q = g.matmul(h, g.input(wq, false));
    NodeId kc = g.matmul(c, g.input(wk, false));
    NodeId vc = g.matmul(c, g.input(wv, false));
    double scl = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<NodeId> rows;
    for (int64_t i = 0; i < f; ++i) {
        NodeId qi = g.slice_rows(q, i * n, (i + 1) * n);
        NodeId ki = g.slice_rows(kc, i * h_w, (i + 1) * h_w);
        NodeId vi = g.slice_rows(vc, i * h_w, (i + 1) * h_w);
        NodeId probs = g.softmax_rows(g.scale(g.matmul(qi, g.transpose(ki)), scl));
        rows.push_back(g.matmul(probs, vi));
    }
    NodeId attn = g.matmul(g.concat_rows(rows), g.input(wo, false));
    NodeId out = g.add(h, attn);
    return g.val(out).reshaped({f, n, d});
}

NodeId build_forward(Graph& g, NodeId zt, const CondNodes& cond, const std::vector<double>& tvec,
                     const BackboneConfig& cfg, const ParamLookup& p) {
    cfg.validate();
    int64_t f = cfg.clip_frames;
    int64_t h = cfg.latent_h, w = cfg.latent_w, c = cfg.latent_channels;
    int64_t d = cfg.width;
    int64_t m = cfg.tokens_per_frame();
    int64_t frames = f + 1;
    if (static_cast<int64_t>(tvec.size()) != frames)
        throw std::invalid_argument("backbone forward: t-vector length " + std::to_string(tvec.size()) +
                                    " does not match frame count " + std::to_string(frames));
    for (double t : tvec)
        if (!std::isfinite(t)) throw std::invalid_argument("backbone forward: non-finite timestep");
    if (cond.reference.has_value() && tvec[0] != 0.0)
        throw std::invalid_argument("backbone forward: reference attached but t[0] != 0");
    if (!g.val(zt).all_finite()) throw std::invalid_argument("backbone forward: non-finite input latents");

    // token assembly: slot 0 from the reference (or its learned null), the
    // rest from the noised stack
    auto full_idx = patch_idx(frames, h, w, c, cfg.patch);
    NodeId all_tokens = g.gather(zt, full_idx, {frames * m, cfg.patch_dim()});
    NodeId content = g.slice_rows(all_tokens, m, frames * m);
    NodeId ref_src = cond.reference.has_value() ? *cond.reference : g.reshape(p("backbone.null_ref"), {h * w * c});
    NodeId ref_tokens = g.gather(ref_src, patch_idx(1, h, w, c, cfg.patch), {m, cfg.patch_dim()});
    NodeId tokens = g.concat_rows({ref_tokens, content});

    NodeId x = g.add(g.add_rowvec(g.matmul(tokens, p("backbone.patch_in.w")), p("backbone.patch_in.b")),
                     p("backbone.pos_emb"));

    NodeId tsin = g.input(timestep_embedding(tvec, d), false);
    NodeId temb = g.add_rowvec(
        g.matmul(g.gelu(g.add_rowvec(g.matmul(tsin, p("backbone.tmlp1.w")), p("backbone.tmlp1.b"))),
                 p("backbone.tmlp2.w")),
        p("backbone.tmlp2.b"));  // [frames, d]

    NodeId speech_tokens;
    if (cond.speech.has_value()) {
        speech_tokens = *cond.speech;
        const Tensor& sv = g.val(speech_tokens);
        if (sv.numel() != f * cfg.audio_window * cfg.audio_dim)
            throw std::invalid_argument("backbone forward: speech condition has wrong size for " + std::to_string(f) +
                                        " frames");
        speech_tokens = g.reshape(speech_tokens, {f * cfg.audio_window, cfg.audio_dim});
    } else {
        NodeId nullsp = g.reshape(p("backbone.null_speech"), {cfg.audio_window, cfg.audio_dim});
        std::vector<NodeId> rows(static_cast<size_t>(f), nullsp);
        speech_tokens = g.concat_rows(rows);
    }

    NodeId text_tokens = -1;
    if (cfg.text_branch)
        text_tokens = cond.text.has_value() ? *cond.text : p("backbone.text_bank");

    for (int64_t i = 0; i < cfg.blocks; ++i) {
        NodeId mod = g.add_rowvec(g.matmul(temb, p(blk(i, "mod.w"))), p(blk(i, "mod.b")));  // [frames, 9d]
        auto mslice = [&](int64_t j) { return g.slice_cols(mod, j * d, (j + 1) * d); };
        NodeId h1 = mod_ln(g, x, mslice(0), mslice(1), m);
        NodeId attn = multihead_self_attention(g, h1, cfg.heads, d, blk(i, "attn"), p);
        x = g.add(x, g.mul(g.repeat_rows(mslice(2), m), attn));

        NodeId h2 = mod_ln(g, x, mslice(3), mslice(4), m);
        NodeId q2 = g.add_rowvec(g.matmul(h2, p(blk(i, "cross.wq"))), p(blk(i, "cross.bq")));
        NodeId cross = frame_cross_core(g, q2, speech_tokens, frames, m, cfg.audio_window, d, p(blk(i, "cross.wk")),
                                        p(blk(i, "cross.bk")), p(blk(i, "cross.wv")), p(blk(i, "cross.bv")));
        NodeId cross_o = g.add_rowvec(g.matmul(cross, p(blk(i, "cross.wo"))), p(blk(i, "cross.bo")));
        x = g.add(x, g.mul(g.repeat_rows(mslice(5), m), cross_o));

        if (cfg.text_branch) {
            NodeId qt = g.matmul(x, p(blk(i, "text.wq")));
            NodeId kt = g.add_rowvec(g.matmul(text_tokens, p(blk(i, "text.wk"))), p(blk(i, "text.bk")));
            NodeId vt = g.add_rowvec(g.matmul(text_tokens, p(blk(i, "text.wv"))), p(blk(i, "text.bv")));
            NodeId probs = g.softmax_rows(g.scale(g.matmul(qt, g.transpose(kt)), 1.0 / std::sqrt(static_cast<double>(d))));
            NodeId to = g.add_rowvec(g.matmul(g.matmul(probs, vt), p(blk(i, "text.wo"))), p(blk(i, "text.bo")));
            x = g.add(x, to);
        }

        NodeId h3 = mod_ln(g, x, mslice(6), mslice(7), m);
        NodeId mlp = g.add_rowvec(
            g.matmul(g.gelu(g.add_rowvec(g.matmul(h3, p(blk(i, "mlp1.w"))), p(blk(i, "mlp1.b")))), p(blk(i, "mlp2.w"))),
            p(blk(i, "mlp2.b")));
        x = g.add(x, g.mul(g.repeat_rows(mslice(8), m), mlp));
    }

    NodeId fmod = g.add_rowvec(g.matmul(temb, p("backbone.final_mod.w")), p("backbone.final_mod.b"));
    NodeId hf = mod_ln(g, x, g.slice_cols(fmod, 0, d), g.slice_cols(fmod, d, 2 * d), m);
    NodeId out_tokens = g.add_rowvec(g.matmul(hf, p("backbone.final.w")), p("backbone.final.b"));
    return g.gather(g.reshape(out_tokens, {frames * m * cfg.patch_dim()}), inverse_idx(*full_idx),
                    {frames * h * w * c});
}

Tensor forward(const Tensor& Zt, const ConditionSet& cond, const std::vector<double>& tvec,
               const BackboneConfig& cfg, const ParamStore& params) {
    cfg.validate();
    int64_t frames = cfg.clip_frames + 1;
    if (Zt.ndim() != 4 || Zt.shape[0] != frames || Zt.shape[1] != cfg.latent_h || Zt.shape[2] != cfg.latent_w ||
        Zt.shape[3] != cfg.latent_channels)
        throw std::invalid_argument("backbone forward: expected (" + std::to_string(frames) + ", " +
                                    std::to_string(cfg.latent_h) + ", " + std::to_string(cfg.latent_w) + ", " +
                                    std::to_string(cfg.latent_channels) + "), got " + Zt.shape_str());
    if (cond.speech.has_value() && cond.speech->ndim() == 3 && cond.speech->shape[0] != cfg.clip_frames)
        throw std::invalid_argument("backbone forward: speech frame count " + std::to_string(cond.speech->shape[0]) +
                                    " does not match clip frames " + std::to_string(cfg.clip_frames));
    Graph g;
    ParamLookup p = [&g, &params](const std::string& n) { return g.input(params.at(n), false); };
    CondNodes cn;
    if (cond.speech.has_value())
        cn.speech = g.input(cond.speech->reshaped({cfg.clip_frames * cfg.audio_window, cfg.audio_dim}), false);
    if (cond.reference.has_value()) {
        if (cond.reference->numel() != cfg.latent_h * cfg.latent_w * cfg.latent_channels)
            throw std::invalid_argument("backbone forward: reference latent has wrong shape " +
                                        cond.reference->shape_str());
        cn.reference = g.input(cond.reference->reshaped({cfg.latent_h * cfg.latent_w * cfg.latent_channels}), false);
    }
    if (cond.text.has_value()) cn.text = g.input(*cond.text, false);
    NodeId zt = g.input(Zt.reshaped({frames * cfg.latent_h * cfg.latent_w * cfg.latent_channels}), false);
    NodeId out = build_forward(g, zt, cn, tvec, cfg, p);
    return g.val(out).reshaped({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels});
}

ConditionSet condition_dropout(const ConditionSet& cond, double p_drop, Rng& rng) {
    if (p_drop < 0.0 || p_drop > 1.0) throw std::invalid_argument("condition_dropout: p_drop must be in [0,1]");
    ConditionSet out = cond;
    if (rng.uniform() < p_drop) out.speech.reset();
    if (rng.uniform() < p_drop) out.reference.reset();
    return out;
}

}  // namespace a2v::backbone
