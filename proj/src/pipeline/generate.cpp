#include "generate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "../core/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace a2v::pipeline {

namespace {

Tensor raw_projection_tokens(const Tensor& feats, int64_t N, int64_t rt, const ParamStore& bp, int64_t h_w,
                             int64_t d_a) {
    const Tensor& w = bp.at("backbone.raw_proj.w");
    const Tensor& b = bp.at("backbone.raw_proj.b");
    int64_t F = feats.shape[0];
    int64_t fv = feats.numel() / F;
    int64_t out_dim = w.shape[1];
    Tensor tokens({N, h_w, d_a});
    for (int64_t i = 0; i < N; ++i) {
        int64_t src = std::min(i * rt, F - 1);
        for (int64_t o = 0; o < out_dim; ++o) {
            double acc = b.data[static_cast<size_t>(o)];
            for (int64_t k = 0; k < fv; ++k)
                acc += feats.data[static_cast<size_t>(src * fv + k)] * w.data[static_cast<size_t>(k * out_dim + o)];
            tokens.data[static_cast<size_t>(i * out_dim + o)] = acc;
        }
    }
    return tokens;
}

}  // namespace

GenerateOutput generate_video(const Checkpoint& ckpt, const AudioSource& audio, const Tensor& reference_image,
                              const GenerateOptions& opt) {
    const ExperimentConfig& cfg = ckpt.config;
    if (!ckpt.has_backbone()) throw std::invalid_argument("generate_video: checkpoint has no trained backbone");
    if (opt.frames < 1) throw std::invalid_argument("generate_video: requested frame count must be >= 1");
    if (reference_image.ndim() != 3 || reference_image.shape[0] != cfg.corpus.dist.height ||
        reference_image.shape[1] != cfg.corpus.dist.width || reference_image.shape[2] != cfg.codec.pixel_channels)
        throw std::invalid_argument("generate_video: reference image resolution " + reference_image.shape_str() +
                                    " does not match the codec configuration");

    const Arm arm = cfg.stage2.arm;
    const int64_t f = cfg.backbone.clip_frames;
    const int64_t rt = cfg.codec.temporal_ratio;

    // requested pixel frames -> latent frame count, rounded up to a valid N
    int64_t n_req = 1 + (opt.frames - 1 + rt - 1) / rt;
    int64_t k, N;
    if (arm == Arm::NoAns) {
        k = std::max<int64_t>(1, (n_req + f - 1) / f);
        N = k * f;
    } else {
        k = std::max<int64_t>(1, (n_req - 1 + f - 2) / (f - 1));
        N = k * (f - 1) + 1;
    }
    int64_t pixel_frames = 1 + (N - 1) * rt;

    // driving features over the full (rounded-up) length
    data::SpeechFeatureSeq feats;
    data::Envelope envelope;
    if (audio.kind == AudioSource::Kind::Synthetic) {
        envelope = data::make_envelope(audio.scene, pixel_frames);
        feats = data::synthetic_features(envelope, audio.scene.seed, cfg.speechae.input_window,
                                         cfg.speechae.input_dim, cfg.corpus.fps);
    } else {
        data::WavAudio wav = data::read_wav(audio.wav_path);
        double need = static_cast<double>(pixel_frames) / cfg.corpus.fps * wav.sample_rate;
        double requested = static_cast<double>(opt.frames) / cfg.corpus.fps * wav.sample_rate;
        if (static_cast<double>(wav.samples.size()) + 0.5 < requested)
            throw std::invalid_argument("generate_video: audio shorter than the requested duration");
        if (static_cast<double>(wav.samples.size()) < need)
            wav.samples.resize(static_cast<size_t>(std::ceil(need)), 0.0);  // silence pad for the round-up tail
        data::MelConfig mel;
        mel.n_mels = cfg.speechae.input_dim;
        mel.window_splits = cfg.speechae.input_window;
        feats = data::logmel_features(wav, cfg.corpus.fps, pixel_frames, mel);
    }

    // conditioning tokens per latent frame
    Tensor c_full;  // (N, h_w, d_A)
    if (arm == Arm::NoSpeechAE) {
        c_full = raw_projection_tokens(feats.data, N, rt, ckpt.backbone_params, cfg.speechae.latent_window,
                                       cfg.speechae.latent_dim);
    } else {
        if (!ckpt.has_speechae()) throw std::invalid_argument("generate_video: checkpoint has no speech encoder");
        speechae::SpeechLatent c = speechae::encode_speech(feats, cfg.speechae, ckpt.speechae_params);
        if (c.data.shape[0] != N)
            throw std::runtime_error("generate_video: speech latent count mismatch: " +
                                     std::to_string(c.data.shape[0]) + " vs " + std::to_string(N));
        c_full = c.data;
    }

    Tensor z_ref = codec::encode_reference(reference_image, cfg.codec, ckpt.codec_params);

    const int64_t h_w = cfg.speechae.latent_window, d_a = cfg.speechae.latent_dim;
    int64_t clip_stride = arm == Arm::NoAns ? f : f - 1;
    sched::DenoiserFn denoiser = [&](const Tensor& clip, sched::CondBranch br, int64_t clip_index,
                                     const std::vector<double>& tvec) {
        backbone::ConditionSet cond;
        if (br != sched::CondBranch::Uncond || !cfg.backbone.drop_ref_in_uncond) cond.reference = z_ref;
        if (br == sched::CondBranch::Full) {
            int64_t lo = 1 + (clip_index - 1) * clip_stride;  // 1-based global latent index of clip frame 1
            Tensor slice({f, h_w, d_a});
            std::copy(c_full.data.begin() + (lo - 1) * h_w * d_a, c_full.data.begin() + (lo - 1 + f) * h_w * d_a,
                      slice.data.begin());
            cond.speech = std::move(slice);
        }
        return backbone::forward(clip, cond, tvec, cfg.backbone, ckpt.backbone_params);
    };

    sched::NoiseSchedule schedule = sched::NoiseSchedule::uniform(opt.steps, cfg.sampler.shift);
    sched::SamplerConfig scfg = cfg.sampler;
    scfg.mode = opt.mode;
    scfg.alpha = opt.alpha;
    scfg.beta = opt.beta;
    scfg.steps = opt.steps;

    sched::GenerateResult gen =
        arm == Arm::NoAns ? sched::generate_concat_baseline(denoiser, N, f, z_ref, schedule, scfg, opt.seed)
                          : sched::generate(denoiser, N, f, z_ref, schedule, scfg, opt.seed);

    codec::LatentVideo lat;
    lat.data = Tensor({N, z_ref.shape[0], z_ref.shape[1], z_ref.shape[2]});
    std::copy(gen.latents.data.begin() + z_ref.numel(), gen.latents.data.end(), lat.data.data.begin());
    data::VideoTensor full = codec::decode_latents(lat, cfg.codec, ckpt.codec_params);
    full.fps = cfg.corpus.fps;

    GenerateOutput out;
    out.latents = std::move(gen.latents);
    out.stats = gen.stats;
    out.latent_frames = N;
    out.clips = k;
    out.video.fps = cfg.corpus.fps;
    out.video.data = Tensor({opt.frames, full.data.shape[1], full.data.shape[2], full.data.shape[3]});
    std::copy(full.data.data.begin(), full.data.data.begin() + out.video.data.numel(), out.video.data.data.begin());
    if (audio.kind == AudioSource::Kind::Synthetic) {
        out.envelope.values.assign(envelope.values.begin(), envelope.values.begin() + opt.frames);
    }

    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        for (int64_t i = 0; i < opt.frames; ++i) {
            Tensor frame({full.data.shape[1], full.data.shape[2], full.data.shape[3]});
            std::copy(out.video.data.data.begin() + i * frame.numel(),
                      out.video.data.data.begin() + (i + 1) * frame.numel(), frame.data.begin());
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%05lld.png", static_cast<long long>(i));
            write_png((fs::path(opt.out_dir) / name).string(), frame);
        }
        json manifest;
        manifest["frames"] = opt.frames;
        manifest["latent_frames"] = N;
        manifest["clips"] = k;
        manifest["steps"] = opt.steps;
        manifest["cfg_mode"] = opt.mode == sched::CfgMode::Split ? "split" : "joint";
        manifest["alpha"] = opt.alpha;
        manifest["beta"] = opt.beta;
        manifest["seed"] = opt.seed;
        manifest["arm"] = arm_name(arm);
        manifest["denoiser_calls"] = out.stats.denoiser_calls;
        manifest["denoiser_seconds"] = out.stats.denoiser_seconds;
        manifest["fps"] = cfg.corpus.fps;
        manifest["audio"] = audio.kind == AudioSource::Kind::Wav ? audio.wav_path : "synthetic";
        if (audio.kind == AudioSource::Kind::Synthetic) manifest["envelope"] = out.envelope.values;
        std::string mpath = (fs::path(opt.out_dir) / "run_manifest.json").string();
        std::ofstream os(mpath, std::ios::trunc);
        os << manifest.dump(2) << "\n";
        out.manifest_path = mpath;
    }
    return out;
}

}  // namespace a2v::pipeline
