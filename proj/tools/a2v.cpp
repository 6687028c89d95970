#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "bench/bench.hpp"
#include "core/image.hpp"
#include "core/serialize.hpp"
#include "pipeline/generate.hpp"
#include "pipeline/train.hpp"

using namespace a2v;
namespace fs = std::filesystem;

namespace {

pipeline::ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return pipeline::ExperimentConfig{};
    return pipeline::ExperimentConfig::load(path);
}

Tensor load_reference_image(const std::string& path) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".png") return read_png(path);
    return load_tensor(path);
}

std::vector<uint64_t> parse_seed_list(const std::string& text) {
    std::vector<uint64_t> seeds;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
    if (seeds.empty()) throw std::invalid_argument("expected a comma-separated seed list");
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"audio-driven talking-head toy pipeline: compressed latents, audio-conditioned "
                 "diffusion transformer, asynchronous noise scheduling"};
    app.require_subcommand(1);

    std::string config_path, out_path, stage1_path, ckpt_path, wav_path, ref_path, arm_str, mode_str = "split";
    std::string seeds_str = "1,2,3", arms_str, clips_str = "1,4,8";
    int64_t frames = 0, steps = 8;
    double duration = 0.0, alpha = 2.0, beta = 6.0;
    uint64_t seed = 1, scene_seed = 1001;
    bool long_horizon = false, oracle = false;

    auto* init_cmd = app.add_subcommand("init-config", "write a default experiment config (documents the schema)");
    init_cmd->add_option("--out", out_path, "output json path")->required();

    auto* data_cmd = app.add_subcommand("make-data", "generate the synthetic audio-video corpus");
    data_cmd->add_option("--config", config_path, "experiment config json");
    data_cmd->add_option("--out", out_path, "corpus directory (overrides config)");

    auto* stage1_cmd = app.add_subcommand("pretrain-speechae",
                                          "stage 1: codec training + speech autoencoder pretraining");
    stage1_cmd->add_option("--config", config_path, "experiment config json");
    stage1_cmd->add_option("--out", out_path, "stage-1 checkpoint path")->required();

    auto* train_cmd = app.add_subcommand("train", "stage 2: backbone training with asynchronous noise");
    train_cmd->add_option("--config", config_path, "experiment config json");
    train_cmd->add_option("--stage1", stage1_path, "stage-1 checkpoint")->required();
    train_cmd->add_option("--out", out_path, "stage-2 checkpoint path")->required();
    train_cmd->add_option("--arm", arm_str, "training arm: full|no-pretrain|no-speechae|no-ans");

    auto* gen_cmd = app.add_subcommand("generate", "generate a video from audio + reference image");
    gen_cmd->add_option("--checkpoint", ckpt_path, "stage-2 checkpoint")->required();
    gen_cmd->add_option("--ref", ref_path, "reference image (.png or .arr)");
    gen_cmd->add_option("--wav", wav_path, "driving wav (16-bit mono pcm)");
    gen_cmd->add_option("--scene-seed", scene_seed, "synthetic driving scene seed (when no wav)");
    gen_cmd->add_option("--frames", frames, "requested frame count");
    gen_cmd->add_option("--duration", duration, "requested duration in seconds");
    gen_cmd->add_option("--steps", steps, "sampling steps");
    gen_cmd->add_option("--cfg-mode", mode_str, "guidance mode: joint|split");
    gen_cmd->add_option("--alpha", alpha, "guidance weight alpha");
    gen_cmd->add_option("--beta", beta, "guidance weight beta (split mode)");
    gen_cmd->add_option("--seed", seed, "sampling seed");
    gen_cmd->add_option("--out", out_path, "output directory")->required();

    auto* bench_cmd = app.add_subcommand("bench", "runtime sweep / long-horizon evaluation");
    bench_cmd->add_option("--checkpoint", ckpt_path, "stage-2 checkpoint");
    bench_cmd->add_option("--out", out_path, "report directory")->required();
    bench_cmd->add_flag("--long-horizon", long_horizon, "run the generation-length study instead of the step sweep");
    bench_cmd->add_flag("--oracle", oracle, "long-horizon study with the closed-form oracle denoiser");
    bench_cmd->add_option("--clips", clips_str, "clip counts for the long-horizon study");
    bench_cmd->add_option("--seeds", seeds_str, "comma-separated seeds");
    bench_cmd->add_option("--seed", seed, "sweep seed");
    bench_cmd->add_option("--config", config_path, "config (oracle mode without a checkpoint)");

    auto* ablate_cmd = app.add_subcommand("ablate", "score trained ablation arms");
    ablate_cmd
        ->add_option("--checkpoints", arms_str, "comma-separated name=path pairs, e.g. full=a.ckpt,no-ans=b.ckpt")
        ->required();
    ablate_cmd->add_option("--seeds", seeds_str, "comma-separated seeds");
    ablate_cmd->add_option("--out", out_path, "report directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (init_cmd->parsed()) {
            pipeline::ExperimentConfig cfg;
            cfg.save(out_path);
            std::cout << "wrote " << out_path << "\n";
            return 0;
        }
        if (data_cmd->parsed()) {
            pipeline::ExperimentConfig cfg = load_config(config_path);
            if (!out_path.empty()) cfg.corpus.path = out_path;
            data::make_dataset(cfg.corpus);
            std::cout << "corpus: " << cfg.corpus.n_clips << " clips at " << cfg.corpus.path << "\n";
            return 0;
        }
        if (stage1_cmd->parsed()) {
            pipeline::ExperimentConfig cfg = load_config(config_path);
            pipeline::Checkpoint ckpt = pipeline::train_stage1(cfg);
            ckpt.save(out_path);
            std::cout << "stage-1 checkpoint: " << out_path << " (codec loss "
                      << ckpt.loss_curves["codec"].back() << ", speech loss "
                      << ckpt.loss_curves["speechae"].back() << ")\n";
            return 0;
        }
        if (train_cmd->parsed()) {
            pipeline::ExperimentConfig cfg = load_config(config_path);
            if (!arm_str.empty()) cfg.stage2.arm = pipeline::arm_from_name(arm_str);
            pipeline::Checkpoint stage1 = pipeline::Checkpoint::load(stage1_path);
            pipeline::Checkpoint ckpt = pipeline::train_stage2(cfg, stage1);
            ckpt.save(out_path);
            const auto& curve = ckpt.loss_curves["stage2_fm"];
            std::cout << "stage-2 checkpoint: " << out_path << " (arm " << pipeline::arm_name(cfg.stage2.arm)
                      << ", " << curve.size() << " steps, final loss " << (curve.empty() ? 0.0 : curve.back())
                      << ")\n";
            return 0;
        }
        if (gen_cmd->parsed()) {
            pipeline::Checkpoint ckpt = pipeline::Checkpoint::load(ckpt_path);
            pipeline::GenerateOptions opt;
            if (frames > 0)
                opt.frames = frames;
            else if (duration > 0.0)
                opt.frames = static_cast<int64_t>(std::llround(duration * ckpt.config.corpus.fps));
            opt.steps = steps;
            opt.mode = mode_str == "joint" ? sched::CfgMode::Joint : sched::CfgMode::Split;
            opt.alpha = alpha;
            opt.beta = beta;
            opt.seed = seed;
            opt.out_dir = out_path;

            data::SceneDistribution dist;
            dist.width = ckpt.config.corpus.dist.width;
            dist.height = ckpt.config.corpus.dist.height;
            data::SceneSpec scene = data::sample_scene(dist, scene_seed);
            Tensor ref;
            if (!ref_path.empty()) {
                ref = load_reference_image(ref_path);
            } else {
                data::Envelope env0 = data::make_envelope(scene, 1);
                data::VideoTensor first = data::render_video(scene, env0);
                ref = first.data.reshaped({first.data.shape[1], first.data.shape[2], first.data.shape[3]});
            }
            pipeline::AudioSource audio = wav_path.empty() ? pipeline::AudioSource::synthetic(scene)
                                                           : pipeline::AudioSource::wav(wav_path);
            pipeline::GenerateOutput out = pipeline::generate_video(ckpt, audio, ref, opt);
            std::cout << "wrote " << opt.frames << " frames to " << out_path << " (" << out.clips << " clips, "
                      << out.stats.denoiser_calls << " denoiser calls, " << out.stats.denoiser_seconds
                      << "s backbone)\n";
            return 0;
        }
        if (bench_cmd->parsed()) {
            std::vector<int64_t> clip_counts;
            for (uint64_t v : parse_seed_list(clips_str)) clip_counts.push_back(static_cast<int64_t>(v));
            if (oracle) {
                pipeline::ExperimentConfig cfg =
                    ckpt_path.empty() ? load_config(config_path) : pipeline::Checkpoint::load(ckpt_path).config;
                bench::EvalReport rep = bench::long_horizon_oracle(cfg, clip_counts, out_path);
                std::cout << rep.text_summary();
                return 0;
            }
            pipeline::Checkpoint ckpt = pipeline::Checkpoint::load(ckpt_path);
            if (long_horizon) {
                bench::EvalReport rep =
                    bench::long_horizon_eval(ckpt, clip_counts, parse_seed_list(seeds_str), out_path);
                std::cout << rep.text_summary();
            } else {
                bench::EvalReport rep = bench::runtime_sweep(ckpt, {4, 5, 6, 7, 8, 9, 10}, seed, out_path);
                std::cout << rep.text_summary();
            }
            return 0;
        }
        if (ablate_cmd->parsed()) {
            std::map<std::string, pipeline::Checkpoint> arms;
            std::stringstream ss(arms_str);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                size_t eq = tok.find('=');
                if (eq == std::string::npos)
                    throw std::invalid_argument("--checkpoints expects name=path pairs, got " + tok);
                arms.emplace(tok.substr(0, eq), pipeline::Checkpoint::load(tok.substr(eq + 1)));
            }
            bench::EvalReport rep = bench::ablate(arms, parse_seed_list(seeds_str), out_path);
            std::cout << rep.text_summary();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
