#include "codec.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "../core/rng.hpp"

namespace a2v::codec {

namespace {

Tensor normal_init(std::vector<int64_t> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

// frame-major pixel layout (F,H,W,C) -> patch token rows [F*P, r_s*r_s*C],
// tokens ordered frame-major, patches row-major within a frame.
std::shared_ptr<std::vector<int64_t>> patch_gather_idx(int64_t F, int64_t H, int64_t W, int64_t C, int64_t rs) {
    int64_t ph = H / rs, pw = W / rs;
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(F * H * W * C));
    for (int64_t i = 0; i < F; ++i)
        for (int64_t py = 0; py < ph; ++py)
            for (int64_t px = 0; px < pw; ++px)
                for (int64_t dy = 0; dy < rs; ++dy)
                    for (int64_t dx = 0; dx < rs; ++dx)
                        for (int64_t c = 0; c < C; ++c)
                            idx->push_back(((i * H + py * rs + dy) * W + px * rs + dx) * C + c);
    return idx;
}

// inverse of patch_gather_idx: token rows back to (F,H,W,C)
std::shared_ptr<std::vector<int64_t>> patch_scatter_idx(int64_t F, int64_t H, int64_t W, int64_t C, int64_t rs) {
    auto fwd = patch_gather_idx(F, H, W, C, rs);
    auto inv = std::make_shared<std::vector<int64_t>>(fwd->size());
    for (size_t i = 0; i < fwd->size(); ++i) (*inv)[static_cast<size_t>((*fwd)[i])] = static_cast<int64_t>(i);
    return inv;
}

// [T*P, n] frame-major rows -> [P*T, n] patch-major rows
std::shared_ptr<std::vector<int64_t>> to_patch_major_idx(int64_t T, int64_t P, int64_t n) {
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(T * P * n));
    for (int64_t p = 0; p < P; ++p)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t j = 0; j < n; ++j) idx->push_back((t * P + p) * n + j);
    return idx;
}

std::shared_ptr<std::vector<int64_t>> to_frame_major_idx(int64_t T, int64_t P, int64_t n) {
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(T * P * n));
    for (int64_t t = 0; t < T; ++t)
        for (int64_t p = 0; p < P; ++p)
            for (int64_t j = 0; j < n; ++j) idx->push_back((p * T + t) * n + j);
    return idx;
}

}  // namespace

void CodecConfig::validate() const {
    if (spatial_ratio < 1) throw std::invalid_argument("codec: spatial_ratio must be >= 1");
    if (temporal_ratio < 1) throw std::invalid_argument("codec: temporal_ratio must be >= 1");
    if (pixel_channels < 1 || latent_channels < 1) throw std::invalid_argument("codec: channel counts must be >= 1");
    if (hidden < 1) throw std::invalid_argument("codec: hidden width must be >= 1");
}

Shape3 compression_shape(int64_t F, int64_t H, int64_t W, const CodecConfig& cfg) {
    cfg.validate();
    if (F < 1) throw std::invalid_argument("codec shape: frame axis: F must be >= 1, got " + std::to_string(F));
    if ((F - 1) % cfg.temporal_ratio != 0)
        throw std::invalid_argument("codec shape: frame axis: F-1=" + std::to_string(F - 1) +
                                    " not divisible by temporal ratio " + std::to_string(cfg.temporal_ratio));
    if (H % cfg.spatial_ratio != 0)
        throw std::invalid_argument("codec shape: height axis: H=" + std::to_string(H) +
                                    " not divisible by spatial ratio " + std::to_string(cfg.spatial_ratio));
    if (W % cfg.spatial_ratio != 0)
        throw std::invalid_argument("codec shape: width axis: W=" + std::to_string(W) +
                                    " not divisible by spatial ratio " + std::to_string(cfg.spatial_ratio));
    return Shape3{1 + (F - 1) / cfg.temporal_ratio, H / cfg.spatial_ratio, W / cfg.spatial_ratio};
}

ParamStore init_params(const CodecConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(Rng::derive(seed, 0xc0dec));
    ParamStore ps;
    int64_t pv = cfg.patch_values();
    int64_t hid = cfg.hidden;
    int64_t rt = cfg.temporal_ratio;
    auto lin = [&](const std::string& name, int64_t in, int64_t out) {
        ps.add(name + ".w", normal_init({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
        ps.add(name + ".b", Tensor({out}));
    };
    lin("codec.sp1", pv, hid);
    lin("codec.sp2", hid, hid);
    ps.add("codec.tconv1.w", normal_init({rt + 1, hid, hid}, 1.0 / std::sqrt(static_cast<double>((rt + 1) * hid)), rng));
    ps.add("codec.tconv1.b", Tensor({hid}));
    ps.add("codec.tconv2.w", normal_init({2, hid, hid}, 1.0 / std::sqrt(static_cast<double>(2 * hid)), rng));
    ps.add("codec.tconv2.b", Tensor({hid}));
    lin("codec.out", hid, cfg.latent_channels);
    lin("codec.dec_in", cfg.latent_channels, hid);
    ps.add("codec.dec_tconv.w", normal_init({2, hid, hid}, 1.0 / std::sqrt(static_cast<double>(2 * hid)), rng));
    ps.add("codec.dec_tconv.b", Tensor({hid}));
    lin("codec.dec_first", hid, hid);
    lin("codec.dec_exp", hid, rt * hid);
    lin("codec.dec_mix", hid, hid);
    lin("codec.dec_out", hid, pv);
    return ps;
}

NodeId build_encoder(Graph& g, NodeId x, int64_t F, int64_t H, int64_t W, const CodecConfig& cfg,
                     const ParamLookup& p) {
    Shape3 s = compression_shape(F, H, W, cfg);
    int64_t P = s.h * s.w;
    int64_t C = cfg.pixel_channels;
    int64_t pv = cfg.patch_values();
    int64_t hid = cfg.hidden;
    int64_t rt = cfg.temporal_ratio;

    NodeId tokens = g.gather(x, patch_gather_idx(F, H, W, C, cfg.spatial_ratio), {F * P, pv});
    NodeId h1 = g.gelu(g.add_rowvec(g.matmul(tokens, p("codec.sp1.w")), p("codec.sp1.b")));
    NodeId h2 = g.gelu(g.add_rowvec(g.matmul(h1, p("codec.sp2.w")), p("codec.sp2.b")));

    NodeId pm = g.gather(h2, to_patch_major_idx(F, P, hid), {P * F, hid});
    NodeId w1 = p("codec.tconv1.w"), b1 = p("codec.tconv1.b");
    NodeId w2 = p("codec.tconv2.w"), b2 = p("codec.tconv2.b");
    std::vector<NodeId> per_patch;
    per_patch.reserve(static_cast<size_t>(P));
    for (int64_t q = 0; q < P; ++q) {
        NodeId seq = g.slice_rows(pm, q * F, (q + 1) * F);
        NodeId c1 = g.gelu(g.conv1d_causal(seq, w1, b1, rt, rt));
        NodeId c2 = g.gelu(g.conv1d_causal(c1, w2, b2, 1, 1));
        per_patch.push_back(c2);
    }
    NodeId tcat = g.concat_rows(per_patch);  // [P*f, hid]
    NodeId lat = g.add_rowvec(g.matmul(tcat, p("codec.out.w")), p("codec.out.b"));
    // back to frame-major latent cells [f*P, d_v]
    return g.gather(lat, to_frame_major_idx(s.f, P, cfg.latent_channels), {s.f * P, cfg.latent_channels});
}

NodeId build_decoder(Graph& g, NodeId z, int64_t f, int64_t h, int64_t w, const CodecConfig& cfg,
                     const ParamLookup& p) {
    cfg.validate();
    int64_t P = h * w;
    int64_t hid = cfg.hidden;
    int64_t rt = cfg.temporal_ratio;
    int64_t F = 1 + (f - 1) * rt;

    NodeId pm = g.gather(z, to_patch_major_idx(f, P, cfg.latent_channels), {P * f, cfg.latent_channels});
    NodeId d0 = g.gelu(g.add_rowvec(g.matmul(pm, p("codec.dec_in.w")), p("codec.dec_in.b")));
    NodeId wt = p("codec.dec_tconv.w"), bt = p("codec.dec_tconv.b");
    NodeId wf = p("codec.dec_first.w"), bf = p("codec.dec_first.b");
    NodeId we = p("codec.dec_exp.w"), be = p("codec.dec_exp.b");
    std::vector<NodeId> per_patch;
    per_patch.reserve(static_cast<size_t>(P));
    for (int64_t q = 0; q < P; ++q) {
        NodeId seq = g.slice_rows(d0, q * f, (q + 1) * f);
        NodeId mixed = g.gelu(g.conv1d_causal(seq, wt, bt, 1, 1));  // [f, hid]
        NodeId first = g.add_rowvec(g.matmul(g.slice_rows(mixed, 0, 1), wf), bf);  // [1, hid]
        if (f > 1) {
            NodeId rest = g.add_rowvec(g.matmul(g.slice_rows(mixed, 1, f), we), be);  // [f-1, rt*hid]
            NodeId expanded = g.reshape(rest, {(f - 1) * rt, hid});
            per_patch.push_back(g.gelu(g.concat_rows({first, expanded})));  // [F, hid]
        } else {
            per_patch.push_back(g.gelu(first));
        }
    }
    NodeId cat = g.concat_rows(per_patch);  // [P*F, hid]
    NodeId fm = g.gather(cat, to_frame_major_idx(F, P, hid), {F * P, hid});
    NodeId m1 = g.gelu(g.add_rowvec(g.matmul(fm, p("codec.dec_mix.w")), p("codec.dec_mix.b")));
    NodeId out = g.add_rowvec(g.matmul(m1, p("codec.dec_out.w")), p("codec.dec_out.b"));  // [F*P, pv]
    int64_t H = h * cfg.spatial_ratio, W = w * cfg.spatial_ratio;
    return g.gather(out, patch_scatter_idx(F, H, W, cfg.pixel_channels, cfg.spatial_ratio),
                    {F * H * W * cfg.pixel_channels});
}

namespace {

ParamLookup frozen_lookup(Graph& g, const ParamStore& params) {
    return [&g, &params](const std::string& name) { return g.input(params.at(name), false); };
}

}  // namespace

LatentVideo encode_video(const data::VideoTensor& X, const CodecConfig& cfg, const ParamStore& params) {
    if (X.data.ndim() != 4) throw std::invalid_argument("encode_video: expected (F,H,W,C), got " + X.data.shape_str());
    int64_t F = X.data.shape[0], H = X.data.shape[1], W = X.data.shape[2];
    if (X.data.shape[3] != cfg.pixel_channels)
        throw std::invalid_argument("encode_video: channel axis: expected " + std::to_string(cfg.pixel_channels) +
                                    ", got " + std::to_string(X.data.shape[3]));
    if (!X.data.all_finite()) throw std::invalid_argument("encode_video: non-finite input values");
    Shape3 s = compression_shape(F, H, W, cfg);

    Graph g;
    NodeId x = g.input(X.data.reshaped({F * H * W * cfg.pixel_channels}), false);
    NodeId z = build_encoder(g, x, F, H, W, cfg, frozen_lookup(g, params));
    LatentVideo out;
    out.data = g.val(z).reshaped({s.f, s.h, s.w, cfg.latent_channels});
    out.has_reference = false;
    return out;
}

Tensor encode_reference(const Tensor& image, const CodecConfig& cfg, const ParamStore& params) {
    if (image.ndim() != 3) throw std::invalid_argument("encode_reference: expected (H,W,C), got " + image.shape_str());
    data::VideoTensor clip;
    clip.data = image.reshaped({1, image.shape[0], image.shape[1], image.shape[2]});
    LatentVideo z = encode_video(clip, cfg, params);
    return z.data.reshaped({z.data.shape[1], z.data.shape[2], z.data.shape[3]});
}

data::VideoTensor decode_latents(const LatentVideo& Z, const CodecConfig& cfg, const ParamStore& params) {
    if (Z.has_reference)
        throw std::invalid_argument("decode_latents: reference frame still attached; strip it before decoding");
    if (Z.data.ndim() != 4) throw std::invalid_argument("decode_latents: expected (f,h,w,d_v), got " + Z.data.shape_str());
    int64_t f = Z.data.shape[0], h = Z.data.shape[1], w = Z.data.shape[2];
    if (Z.data.shape[3] != cfg.latent_channels)
        throw std::invalid_argument("decode_latents: channel axis: expected " + std::to_string(cfg.latent_channels) +
                                    ", got " + std::to_string(Z.data.shape[3]));

    Graph g;
    NodeId z = g.input(Z.data.reshaped({f * h * w * cfg.latent_channels}), false);
    NodeId x = build_decoder(g, z, f, h, w, cfg, frozen_lookup(g, params));
    int64_t F = 1 + (f - 1) * cfg.temporal_ratio;
    data::VideoTensor out;
    out.data = g.val(x).reshaped({F, h * cfg.spatial_ratio, w * cfg.spatial_ratio, cfg.pixel_channels});
    for (double& v : out.data.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

TrainResult train_codec(ParamStore& params, const CodecConfig& cfg, const std::vector<Tensor>& clips,
                        int64_t epochs, double lr, uint64_t seed) {
    if (clips.empty()) throw std::invalid_argument("train_codec: empty dataset");
    for (const Tensor& c : clips)
        if (c.ndim() != 4 || c.shape[1] != clips[0].shape[1] || c.shape[2] != clips[0].shape[2] ||
            c.shape[3] != cfg.pixel_channels)
            throw std::invalid_argument("train_codec: inconsistent clip shapes in dataset");

    TrainResult res;
    if (epochs == 0) return res;

    AdamOptimizer opt(lr);
    Rng order_rng(Rng::derive(seed, 0x0dd));
    std::vector<size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);

    for (int64_t e = 0; e < epochs; ++e) {
        // deterministic shuffle
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        double epoch_loss = 0.0;
        for (size_t idx : order) {
            const Tensor& clip = clips[idx];
            int64_t F = clip.shape[0], H = clip.shape[1], W = clip.shape[2];
            Graph g;
            Binder bind(g, params);
            ParamLookup p = [&bind](const std::string& n) { return bind(n); };
            NodeId x = g.input(clip.reshaped({F * H * W * cfg.pixel_channels}), false);
            NodeId z = build_encoder(g, x, F, H, W, cfg, p);
            Shape3 s = compression_shape(F, H, W, cfg);
            NodeId xhat = build_decoder(g, g.reshape(z, {s.f * s.h * s.w * cfg.latent_channels}), s.f, s.h, s.w, cfg, p);
            NodeId loss = g.mse(xhat, x);
            double lv = g.val(loss).data[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_codec: non-finite loss at epoch " + std::to_string(e) + ", clip " +
                                         std::to_string(idx));
            params.zero_grad();
            g.backward(loss);
            bind.harvest();
            opt.step(params);
            epoch_loss += lv;
        }
        epoch_loss /= static_cast<double>(clips.size());
        res.loss_curve.push_back(epoch_loss);
    }
    res.initial_loss = res.loss_curve.front();
    res.final_loss = res.loss_curve.back();
    return res;
}

}  // namespace a2v::codec
