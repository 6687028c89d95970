#include "config.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace a2v::pipeline {

using nlohmann::json;

const char* arm_name(Arm a) {
    switch (a) {
        case Arm::Full: return "full";
        case Arm::NoPretrain: return "no-pretrain";
        case Arm::NoSpeechAE: return "no-speechae";
        case Arm::NoAns: return "no-ans";
    }
    return "?";
}

Arm arm_from_name(const std::string& s) {
    if (s == "full") return Arm::Full;
    if (s == "no-pretrain") return Arm::NoPretrain;
    if (s == "no-speechae") return Arm::NoSpeechAE;
    if (s == "no-ans") return Arm::NoAns;
    throw std::invalid_argument("unknown ablation arm: " + s + " (expected full|no-pretrain|no-speechae|no-ans)");
}

ExperimentConfig::ExperimentConfig() {
    corpus.path = "corpus";
    corpus.n_clips = 160;
    corpus.frames = 57;
    codec.hidden = 40;
    speechae.hidden = 48;
    derive_and_validate();
}

void ExperimentConfig::derive_and_validate() {
    codec.validate();
    speechae.validate();
    sampler.validate();
    if (speechae.temporal_ratio != codec.temporal_ratio)
        throw std::invalid_argument("config: speech temporal ratio " + std::to_string(speechae.temporal_ratio) +
                                    " must equal codec temporal ratio " + std::to_string(codec.temporal_ratio));
    if (corpus.feat_window != speechae.input_window || corpus.feat_dim != speechae.input_dim)
        throw std::invalid_argument("config: corpus feature shape does not match the speech encoder input");
    codec::Shape3 s = codec::compression_shape(corpus.frames, corpus.dist.height, corpus.dist.width, codec);
    if (s.f < 2) throw std::invalid_argument("config: clip must map to at least 2 latent frames");
    backbone.latent_channels = codec.latent_channels;
    backbone.latent_h = s.h;
    backbone.latent_w = s.w;
    backbone.clip_frames = s.f;
    backbone.audio_window = speechae.latent_window;
    backbone.audio_dim = speechae.latent_dim;
    backbone.validate();
}

namespace {

json sampler_to_json(const sched::SamplerConfig& s) {
    json j;
    j["mu"] = s.mu;
    j["sigma"] = s.sigma;
    j["shift"] = s.shift;
    j["cfg_mode"] = s.mode == sched::CfgMode::Split ? "split" : "joint";
    j["alpha"] = s.alpha;
    j["beta"] = s.beta;
    j["steps"] = s.steps;
    j["interpolated_train_tvec"] = s.interpolated_train_tvec;
    return j;
}

void sampler_from_json(const json& j, sched::SamplerConfig& s) {
    s.mu = j.value("mu", s.mu);
    s.sigma = j.value("sigma", s.sigma);
    s.shift = j.value("shift", s.shift);
    if (j.contains("cfg_mode")) {
        std::string m = j["cfg_mode"].get<std::string>();
        if (m == "split")
            s.mode = sched::CfgMode::Split;
        else if (m == "joint")
            s.mode = sched::CfgMode::Joint;
        else
            throw std::invalid_argument("config: cfg_mode must be 'joint' or 'split', got " + m);
    }
    s.alpha = j.value("alpha", s.alpha);
    s.beta = j.value("beta", s.beta);
    s.steps = j.value("steps", s.steps);
    s.interpolated_train_tvec = j.value("interpolated_train_tvec", s.interpolated_train_tvec);
}

}  // namespace

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["corpus"] = {{"path", corpus.path},
                   {"n_clips", corpus.n_clips},
                   {"frames", corpus.frames},
                   {"fps", corpus.fps},
                   {"feat_window", corpus.feat_window},
                   {"feat_dim", corpus.feat_dim},
                   {"seed", corpus.seed},
                   {"width", corpus.dist.width},
                   {"height", corpus.dist.height},
                   {"p_sine", corpus.dist.p_sine}};
    j["codec"] = {{"spatial_ratio", codec.spatial_ratio},   {"temporal_ratio", codec.temporal_ratio},
                  {"pixel_channels", codec.pixel_channels}, {"latent_channels", codec.latent_channels},
                  {"hidden", codec.hidden}};
    j["speechae"] = {{"input_window", speechae.input_window},
                     {"input_dim", speechae.input_dim},
                     {"latent_window", speechae.latent_window},
                     {"latent_dim", speechae.latent_dim},
                     {"temporal_ratio", speechae.temporal_ratio},
                     {"hidden", speechae.hidden},
                     {"mix_kernel", speechae.mix_kernel},
                     {"tau", speechae.tau},
                     {"alpha_loss", speechae.alpha_loss},
                     {"beta_loss", speechae.beta_loss},
                     {"standard_infonce", speechae.standard_infonce}};
    j["backbone"] = {{"blocks", backbone.blocks},     {"width", backbone.width},
                     {"heads", backbone.heads},       {"patch", backbone.patch},
                     {"mlp_ratio", backbone.mlp_ratio}, {"p_drop", backbone.p_drop},
                     {"text_branch", backbone.text_branch}, {"text_tokens", backbone.text_tokens},
                     {"text_dim", backbone.text_dim}, {"drop_ref_in_uncond", backbone.drop_ref_in_uncond}};
    j["sampler"] = sampler_to_json(sampler);
    j["stage1"] = {{"codec_lr", stage1.codec_lr},
                   {"codec_epochs", stage1.codec_epochs},
                   {"speechae_lr", stage1.speechae_lr},
                   {"speechae_epochs", stage1.speechae_epochs}};
    j["stage2"] = {{"lr", stage2.lr},
                   {"steps", stage2.steps},
                   {"batch_size", stage2.batch_size},
                   {"freeze_speechae", stage2.freeze_speechae},
                   {"arm", arm_name(stage2.arm)}};
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("corpus")) {
        const json& jc = j["corpus"];
        c.corpus.path = jc.value("path", c.corpus.path);
        c.corpus.n_clips = jc.value("n_clips", c.corpus.n_clips);
        c.corpus.frames = jc.value("frames", c.corpus.frames);
        c.corpus.fps = jc.value("fps", c.corpus.fps);
        c.corpus.feat_window = jc.value("feat_window", c.corpus.feat_window);
        c.corpus.feat_dim = jc.value("feat_dim", c.corpus.feat_dim);
        c.corpus.seed = jc.value("seed", c.corpus.seed);
        c.corpus.dist.width = jc.value("width", c.corpus.dist.width);
        c.corpus.dist.height = jc.value("height", c.corpus.dist.height);
        c.corpus.dist.p_sine = jc.value("p_sine", c.corpus.dist.p_sine);
    }
    if (j.contains("codec")) {
        const json& jc = j["codec"];
        c.codec.spatial_ratio = jc.value("spatial_ratio", c.codec.spatial_ratio);
        c.codec.temporal_ratio = jc.value("temporal_ratio", c.codec.temporal_ratio);
        c.codec.pixel_channels = jc.value("pixel_channels", c.codec.pixel_channels);
        c.codec.latent_channels = jc.value("latent_channels", c.codec.latent_channels);
        c.codec.hidden = jc.value("hidden", c.codec.hidden);
    }
    if (j.contains("speechae")) {
        const json& jc = j["speechae"];
        c.speechae.input_window = jc.value("input_window", c.speechae.input_window);
        c.speechae.input_dim = jc.value("input_dim", c.speechae.input_dim);
        c.speechae.latent_window = jc.value("latent_window", c.speechae.latent_window);
        c.speechae.latent_dim = jc.value("latent_dim", c.speechae.latent_dim);
        c.speechae.temporal_ratio = jc.value("temporal_ratio", c.speechae.temporal_ratio);
        c.speechae.hidden = jc.value("hidden", c.speechae.hidden);
        c.speechae.mix_kernel = jc.value("mix_kernel", c.speechae.mix_kernel);
        c.speechae.tau = jc.value("tau", c.speechae.tau);
        c.speechae.alpha_loss = jc.value("alpha_loss", c.speechae.alpha_loss);
        c.speechae.beta_loss = jc.value("beta_loss", c.speechae.beta_loss);
        c.speechae.standard_infonce = jc.value("standard_infonce", c.speechae.standard_infonce);
    }
    if (j.contains("backbone")) {
        const json& jc = j["backbone"];
        c.backbone.blocks = jc.value("blocks", c.backbone.blocks);
        c.backbone.width = jc.value("width", c.backbone.width);
        c.backbone.heads = jc.value("heads", c.backbone.heads);
        c.backbone.patch = jc.value("patch", c.backbone.patch);
        c.backbone.mlp_ratio = jc.value("mlp_ratio", c.backbone.mlp_ratio);
        c.backbone.p_drop = jc.value("p_drop", c.backbone.p_drop);
        c.backbone.text_branch = jc.value("text_branch", c.backbone.text_branch);
        c.backbone.text_tokens = jc.value("text_tokens", c.backbone.text_tokens);
        c.backbone.text_dim = jc.value("text_dim", c.backbone.text_dim);
        c.backbone.drop_ref_in_uncond = jc.value("drop_ref_in_uncond", c.backbone.drop_ref_in_uncond);
    }
    if (j.contains("sampler")) sampler_from_json(j["sampler"], c.sampler);
    if (j.contains("stage1")) {
        const json& jc = j["stage1"];
        c.stage1.codec_lr = jc.value("codec_lr", c.stage1.codec_lr);
        c.stage1.codec_epochs = jc.value("codec_epochs", c.stage1.codec_epochs);
        c.stage1.speechae_lr = jc.value("speechae_lr", c.stage1.speechae_lr);
        c.stage1.speechae_epochs = jc.value("speechae_epochs", c.stage1.speechae_epochs);
    }
    if (j.contains("stage2")) {
        const json& jc = j["stage2"];
        c.stage2.lr = jc.value("lr", c.stage2.lr);
        c.stage2.steps = jc.value("steps", c.stage2.steps);
        c.stage2.batch_size = jc.value("batch_size", c.stage2.batch_size);
        c.stage2.freeze_speechae = jc.value("freeze_speechae", c.stage2.freeze_speechae);
        if (jc.contains("arm")) c.stage2.arm = arm_from_name(jc["arm"].get<std::string>());
    }
    c.derive_and_validate();
    return c;
}

void ExperimentConfig::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    os << to_json_text() << "\n";
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

}  // namespace a2v::pipeline
