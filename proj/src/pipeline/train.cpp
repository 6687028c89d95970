#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "../core/rng.hpp"

namespace a2v::pipeline {

namespace {

constexpr const char* kRawProjW = "backbone.raw_proj.w";
constexpr const char* kRawProjB = "backbone.raw_proj.b";

// feature frame index feeding latent frame i under naive subsampling: the
// causally-latest pixel frame the latent covers
int64_t raw_feature_index(int64_t latent_index, int64_t rt, int64_t F) {
    return std::min(latent_index * rt, F - 1);
}

// [f, H_w*D_A] rows picked from the raw features, one per latent frame
Tensor subsample_features(const Tensor& feats, int64_t f, int64_t rt) {
    int64_t F = feats.shape[0];
    int64_t fv = feats.numel() / F;
    Tensor out({f, fv});
    for (int64_t i = 0; i < f; ++i) {
        int64_t src = raw_feature_index(i, rt, F);
        std::copy(feats.data.begin() + src * fv, feats.data.begin() + (src + 1) * fv, out.data.begin() + i * fv);
    }
    return out;
}

}  // namespace

Checkpoint train_stage1(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;
    cfg.derive_and_validate();
    data::Corpus corpus = data::Corpus::open(cfg.corpus.path);
    if (corpus.size() < 1) throw std::runtime_error("train_stage1: corpus is empty");

    // codec training works on a bounded slice of the corpus to keep the
    // resident set small; scenes repeat structurally anyway
    int64_t codec_clips = std::min<int64_t>(corpus.size(), 96);
    std::vector<Tensor> videos;
    std::vector<Tensor> features;
    videos.reserve(static_cast<size_t>(codec_clips));
    for (int64_t i = 0; i < corpus.size(); ++i) {
        data::ClipTriple t = corpus.load(i);
        if (i < codec_clips) videos.push_back(std::move(t.video.data));
        features.push_back(std::move(t.features.data));
    }

    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.stage = 1;
    ckpt.codec_params = codec::init_params(cfg.codec, Rng::derive(cfg.seed, 1));
    codec::TrainResult cr =
        codec::train_codec(ckpt.codec_params, cfg.codec, videos, cfg.stage1.codec_epochs, cfg.stage1.codec_lr,
                           Rng::derive(cfg.seed, 2));
    ckpt.loss_curves["codec"] = cr.loss_curve;

    ckpt.speechae_params = speechae::init_params(cfg.speechae, Rng::derive(cfg.seed, 3));
    speechae::PretrainResult sr =
        speechae::pretrain(ckpt.speechae_params, cfg.speechae, features, cfg.stage1.speechae_lr,
                           cfg.stage1.speechae_epochs, Rng::derive(cfg.seed, 4));
    ckpt.loss_curves["speechae"] = sr.loss_curve;
    return ckpt;
}

Checkpoint train_stage2(const ExperimentConfig& cfg_in, const Checkpoint& stage1) {
    ExperimentConfig cfg = cfg_in;
    cfg.derive_and_validate();
    if (stage1.codec_params.order.empty()) throw std::invalid_argument("train_stage2: stage-1 checkpoint has no codec");
    if (cfg.codec.temporal_ratio != cfg.speechae.temporal_ratio)
        throw std::invalid_argument("train_stage2: temporal ratio mismatch between codec and speech encoder");

    const Arm arm = cfg.stage2.arm;
    data::Corpus corpus = data::Corpus::open(cfg.corpus.path);
    int64_t n_clips = corpus.size();
    if (n_clips < 1) throw std::runtime_error("train_stage2: corpus is empty");

    const int64_t f = cfg.backbone.clip_frames;
    const int64_t h = cfg.backbone.latent_h, w = cfg.backbone.latent_w, ch = cfg.backbone.latent_channels;
    const int64_t per = h * w * ch;
    const int64_t rt = cfg.codec.temporal_ratio;

    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.stage = 2;
    ckpt.codec_params = stage1.codec_params;  // frozen throughout

    bool train_speechae = false;
    switch (arm) {
        case Arm::Full:
        case Arm::NoAns:
            if (!stage1.has_speechae())
                throw std::invalid_argument("train_stage2: stage-1 checkpoint has no speech autoencoder params");
            ckpt.speechae_params = stage1.speechae_params;
            train_speechae = !cfg.stage2.freeze_speechae;
            break;
        case Arm::NoPretrain:
            // trained from scratch jointly with the backbone
            ckpt.speechae_params = speechae::init_params(cfg.speechae, Rng::derive(cfg.seed, 5));
            train_speechae = true;
            break;
        case Arm::NoSpeechAE:
            break;  // raw features only
    }

    ckpt.backbone_params = backbone::init_params(cfg.backbone, Rng::derive(cfg.seed, 6));
    if (arm == Arm::NoSpeechAE) {
        Rng rng(Rng::derive(cfg.seed, 7));
        int64_t in_dim = cfg.speechae.frame_values();
        int64_t out_dim = cfg.speechae.latent_values();
        Tensor wproj({in_dim, out_dim});
        for (double& v : wproj.data) v = rng.normal() / std::sqrt(static_cast<double>(in_dim));
        ckpt.backbone_params.add(kRawProjW, std::move(wproj));
        ckpt.backbone_params.add(kRawProjB, Tensor({out_dim}));
    }

    // per-clip cache: latent stack [z_R, z_1..z_f], speech latents, raw rows
    struct ClipCache {
        Tensor stack;     // (f+1, h, w, ch)
        Tensor speech;    // (f, h_w, d_A) token source (empty unless frozen speech path)
        Tensor raw_rows;  // (f, H_w*D_A) for joint/raw conditioning
    };
    std::vector<ClipCache> cache(static_cast<size_t>(n_clips));
    for (int64_t i = 0; i < n_clips; ++i) {
        data::ClipTriple t = corpus.load(i);
        codec::LatentVideo z = codec::encode_video(t.video, cfg.codec, ckpt.codec_params);
        if (z.data.shape[0] != f)
            throw std::runtime_error("train_stage2: clip maps to " + std::to_string(z.data.shape[0]) +
                                     " latent frames, expected " + std::to_string(f));
        int64_t ref_frame = static_cast<int64_t>(Rng::derive(t.spec.seed, 8) % static_cast<uint64_t>(t.video.frames()));
        Tensor ref_img({t.video.data.shape[1], t.video.data.shape[2], t.video.data.shape[3]});
        std::copy(t.video.data.data.begin() + ref_frame * ref_img.numel(),
                  t.video.data.data.begin() + (ref_frame + 1) * ref_img.numel(), ref_img.data.begin());
        Tensor z_ref = codec::encode_reference(ref_img, cfg.codec, ckpt.codec_params);

        ClipCache& cc = cache[static_cast<size_t>(i)];
        cc.stack = Tensor({f + 1, h, w, ch});
        std::copy(z_ref.data.begin(), z_ref.data.end(), cc.stack.data.begin());
        std::copy(z.data.data.begin(), z.data.data.end(), cc.stack.data.begin() + per);

        if (arm == Arm::Full || arm == Arm::NoAns) {
            speechae::SpeechLatent c = speechae::encode_speech(t.features, cfg.speechae, ckpt.speechae_params);
            cc.speech = c.data;
        }
        if (arm == Arm::NoPretrain) cc.raw_rows = t.features.data.reshaped({t.features.frames(), cfg.speechae.frame_values()});
        if (arm == Arm::NoSpeechAE) cc.raw_rows = subsample_features(t.features.data, f, rt);
    }

    AdamOptimizer opt_backbone(cfg.stage2.lr);
    AdamOptimizer opt_speech(cfg.stage2.lr);
    Rng rng(Rng::derive(cfg.seed, 9));
    std::vector<size_t> order(static_cast<size_t>(n_clips));
    std::iota(order.begin(), order.end(), 0);
    std::vector<bool> ref_mask(static_cast<size_t>(f + 1), false);
    ref_mask[0] = true;
    std::vector<double> curve;
    curve.reserve(static_cast<size_t>(cfg.stage2.steps));

    int64_t batch = std::max<int64_t>(1, cfg.stage2.batch_size);
    int64_t in_batch = 0;
    for (int64_t step = 0; step < cfg.stage2.steps; ++step) {
        size_t pos = static_cast<size_t>(step) % order.size();
        if (pos == 0)
            for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        const ClipCache& cc = cache[order[pos]];

        double t1, t2;
        if (arm == Arm::NoAns) {
            // the synchronous baseline draws one shared level
            auto [a, b] = sched::sample_async_timesteps(cfg.sampler.mu, cfg.sampler.sigma, cfg.sampler.shift, rng);
            (void)b;
            t1 = t2 = a;
        } else {
            std::tie(t1, t2) =
                sched::sample_async_timesteps(cfg.sampler.mu, cfg.sampler.sigma, cfg.sampler.shift, rng);
        }
        std::vector<double> tvec = sched::build_train_tvec(f, t1, t2, cfg.sampler.interpolated_train_tvec);

        Tensor eps(cc.stack.shape);
        for (double& v : eps.data) v = rng.normal();
        Tensor zt = sched::add_noise_async(cc.stack, tvec, eps);
        Tensor target = sched::fm_target(cc.stack, eps);

        bool drop_speech = rng.uniform() < cfg.backbone.p_drop;
        bool drop_ref = rng.uniform() < cfg.backbone.p_drop;
        ckpt.dropout_steps += 1;
        if (drop_speech) ckpt.dropout_speech += 1;
        if (drop_ref) ckpt.dropout_ref += 1;

        if (in_batch == 0) {
            ckpt.backbone_params.zero_grad();
            if (train_speechae) ckpt.speechae_params.zero_grad();
        }

        Graph g;
        Binder bind_backbone(g, ckpt.backbone_params);
        Binder bind_speech(g, ckpt.speechae_params);
        backbone::ParamLookup p = [&bind_backbone](const std::string& n) { return bind_backbone(n); };

        backbone::CondNodes cn;
        if (!drop_speech) {
            switch (arm) {
                case Arm::Full:
                case Arm::NoAns:
                    cn.speech = g.input(cc.speech.reshaped({f * cfg.speechae.latent_window, cfg.speechae.latent_dim}),
                                        false);
                    break;
                case Arm::NoPretrain: {
                    speechae::ParamLookup sp = [&bind_speech](const std::string& n) { return bind_speech(n); };
                    NodeId raw = g.input(cc.raw_rows, false);
                    cn.speech = speechae::build_encoder(g, raw, cc.raw_rows.shape[0], cfg.speechae, sp);
                    break;
                }
                case Arm::NoSpeechAE: {
                    NodeId raw = g.input(cc.raw_rows, false);
                    cn.speech = g.add_rowvec(g.matmul(raw, bind_backbone(kRawProjW)), bind_backbone(kRawProjB));
                    break;
                }
            }
        }
        if (!drop_ref) {
            Tensor z_ref({per});
            std::copy(cc.stack.data.begin(), cc.stack.data.begin() + per, z_ref.data.begin());
            cn.reference = g.input(z_ref, false);
        }

        NodeId zin = g.input(zt.reshaped({zt.numel()}), false);
        NodeId out = backbone::build_forward(g, zin, cn, tvec, cfg.backbone, p);
        NodeId loss = sched::fm_loss_node(g, g.reshape(out, {f + 1, per}),
                                          g.input(target.reshaped({f + 1, per}), false), ref_mask);
        NodeId scaled = g.scale(loss, 1.0 / static_cast<double>(batch));
        double lv = g.val(loss).data[0];
        if (!std::isfinite(lv))
            throw std::runtime_error("train_stage2: non-finite loss at step " + std::to_string(step));
        curve.push_back(lv);

        g.backward(scaled);
        bind_backbone.harvest();
        if (train_speechae) bind_speech.harvest();

        if (++in_batch == batch) {
            opt_backbone.step(ckpt.backbone_params);
            if (train_speechae) opt_speech.step(ckpt.speechae_params);
            in_batch = 0;
        }
        ckpt.step = step + 1;
    }

    ckpt.loss_curves = stage1.loss_curves;
    ckpt.loss_curves["stage2_fm"] = curve;
    return ckpt;
}

}  // namespace a2v::pipeline
