#include "bench.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "../core/serialize.hpp"
#include "../pipeline/train.hpp"

namespace fs = std::filesystem;

namespace a2v::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor flatten_frames(const Tensor& latents, int64_t first_frame) {
    int64_t frames = latents.shape[0];
    int64_t per = latents.numel() / frames;
    Tensor out({frames - first_frame, per});
    std::copy(latents.data.begin() + first_frame * per, latents.data.end(), out.data.begin());
    return out;
}

std::string provenance_line(const pipeline::Checkpoint& ckpt) {
    return "arm=" + std::string(pipeline::arm_name(ckpt.config.stage2.arm)) +
           " stage=" + std::to_string(ckpt.stage) + " steps_trained=" + std::to_string(ckpt.step) +
           " config_crc=" + std::to_string(crc32(ckpt.config.to_json_text().data(), ckpt.config.to_json_text().size()));
}

}  // namespace

data::SceneSpec eval_scene(uint64_t index, const data::SceneDistribution& dist) {
    return data::sample_scene(dist, Rng::derive(0xe7a1, index));
}

std::vector<int64_t> seam_indices(pipeline::Arm arm, int64_t clips, int64_t clip_frames, int64_t temporal_ratio,
                                  int64_t max_frames) {
    std::vector<int64_t> seams;
    int64_t stride = arm == pipeline::Arm::NoAns ? clip_frames : clip_frames - 1;
    for (int64_t c = 1; c < clips; ++c) {
        int64_t boundary_latent = arm == pipeline::Arm::NoAns ? c * clip_frames : 1 + c * (clip_frames - 1);
        int64_t t = (boundary_latent - 1) * temporal_ratio + 1;  // first pixel frame of the next latent frame
        if (t >= 1 && t < max_frames) seams.push_back(t);
    }
    (void)stride;
    return seams;
}

CaseMetrics evaluate_case(const pipeline::Checkpoint& ckpt, const data::SceneSpec& scene, int64_t frames,
                          pipeline::GenerateOptions opt) {
    opt.frames = frames;
    Tensor ref_image;
    {
        data::Envelope env0 = data::make_envelope(scene, 1);
        data::VideoTensor first = data::render_video(scene, env0);
        ref_image = first.data.reshaped({first.data.shape[1], first.data.shape[2], first.data.shape[3]});
    }

    auto t0 = Clock::now();
    pipeline::GenerateOutput gen =
        pipeline::generate_video(ckpt, pipeline::AudioSource::synthetic(scene), ref_image, opt);
    double total = seconds_since(t0);

    CaseMetrics m;
    m.total_seconds = total;
    m.backbone_seconds = gen.stats.denoiser_seconds;
    m.denoiser_calls = gen.stats.denoiser_calls;
    m.clips = gen.clips;
    m.latent_frames = gen.latent_frames;
    m.sync = sync_proxy(gen.video.data, gen.envelope.values, scene.mouth);

    int64_t rt = ckpt.config.codec.temporal_ratio;
    int64_t full_frames = 1 + (gen.latent_frames - 1) * rt;
    data::Envelope env = data::make_envelope(scene, full_frames);
    data::VideoTensor gt = data::render_video(scene, env);
    codec::LatentVideo gt_lat = codec::encode_video(gt, ckpt.config.codec, ckpt.codec_params);
    m.frechet = latent_frechet(flatten_frames(gen.latents, 1), flatten_frames(gt_lat.data, 0));

    std::vector<int64_t> seams =
        seam_indices(ckpt.config.stage2.arm, gen.clips, ckpt.config.backbone.clip_frames, rt, frames);
    m.boundary = boundary_score(gen.video.data, seams);
    return m;
}

EvalReport runtime_sweep(const pipeline::Checkpoint& ckpt, const std::vector<int64_t>& steps_set,
                         uint64_t seed, const std::string& out_dir) {
    EvalReport rep;
    rep.title = "runtime sweep: steps x guidance mode";
    rep.provenance = provenance_line(ckpt);
    rep.label_columns = {"steps", "mode"};
    rep.value_columns = {"sync_proxy", "latent_frechet", "backbone_s", "total_s", "denoiser_calls", "clips"};
    rep.seeds = {seed};
    if (ckpt.step == 0) rep.warnings.push_back("untrained checkpoint: quality metrics are not meaningful");

    data::SceneDistribution dist;
    data::SceneSpec scene = eval_scene(1, dist);
    int64_t f = ckpt.config.backbone.clip_frames;
    int64_t rt = ckpt.config.codec.temporal_ratio;
    int64_t frames = 1 + (f - 1) * rt;  // single-clip case

    std::vector<PlotSeries> runtime_series, sync_series;
    for (sched::CfgMode mode : {sched::CfgMode::Joint, sched::CfgMode::Split}) {
        PlotSeries rt_s, sy_s;
        rt_s.name = sy_s.name = mode == sched::CfgMode::Joint ? "joint" : "split";
        for (int64_t steps : steps_set) {
            pipeline::GenerateOptions opt;
            opt.steps = steps;
            opt.mode = mode;
            opt.alpha = ckpt.config.sampler.alpha;
            opt.beta = ckpt.config.sampler.beta;
            opt.seed = seed;
            // warm-up, then median of 5 repetitions (single-threaded)
            evaluate_case(ckpt, scene, frames, opt);
            std::vector<double> backbone_times, total_times;
            CaseMetrics last;
            for (int rep_i = 0; rep_i < 5; ++rep_i) {
                last = evaluate_case(ckpt, scene, frames, opt);
                backbone_times.push_back(last.backbone_seconds);
                total_times.push_back(last.total_seconds);
            }
            EvalRow row;
            row.labels["steps"] = std::to_string(steps);
            row.labels["mode"] = rt_s.name;
            row.values["sync_proxy"] = last.sync;
            row.values["latent_frechet"] = last.frechet;
            row.values["backbone_s"] = median(backbone_times);
            row.values["total_s"] = median(total_times);
            row.values["denoiser_calls"] = static_cast<double>(last.denoiser_calls);
            row.values["clips"] = static_cast<double>(last.clips);
            rep.rows.push_back(row);
            rt_s.x.push_back(static_cast<double>(steps));
            rt_s.y.push_back(median(backbone_times));
            sy_s.x.push_back(static_cast<double>(steps));
            sy_s.y.push_back(last.sync);
        }
        runtime_series.push_back(rt_s);
        sync_series.push_back(sy_s);
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        rep.write_csv((fs::path(out_dir) / "runtime_sweep.csv").string());
        rep.write_text((fs::path(out_dir) / "runtime_sweep.txt").string());
        write_svg_plot((fs::path(out_dir) / "runtime_vs_steps.svg").string(), "backbone runtime vs steps", "steps",
                       "seconds", runtime_series);
        write_svg_plot((fs::path(out_dir) / "sync_vs_steps.svg").string(), "sync proxy vs steps", "steps",
                       "pearson r", sync_series);
    }
    return rep;
}

EvalReport long_horizon_eval(const pipeline::Checkpoint& ckpt, const std::vector<int64_t>& clip_counts,
                             const std::vector<uint64_t>& seeds, const std::string& out_dir) {
    EvalReport rep;
    rep.title = "long-horizon stability";
    rep.provenance = provenance_line(ckpt);
    rep.label_columns = {"clips", "row", "seed"};
    rep.value_columns = {"sync_proxy", "latent_frechet", "boundary_score", "sync_drift", "frechet_drift"};
    rep.seeds = seeds;

    data::SceneDistribution dist;
    data::SceneSpec scene = eval_scene(2, dist);
    int64_t f = ckpt.config.backbone.clip_frames;
    int64_t rt = ckpt.config.codec.temporal_ratio;

    double base_sync = 0.0, base_frechet = 0.0;
    for (int64_t k : clip_counts) {
        int64_t frames = 1 + k * (f - 1) * rt;
        std::vector<double> syncs, frechets, boundaries;
        for (uint64_t s : seeds) {
            pipeline::GenerateOptions opt;
            opt.steps = ckpt.config.sampler.steps;
            opt.mode = ckpt.config.sampler.mode;
            opt.alpha = ckpt.config.sampler.alpha;
            opt.beta = ckpt.config.sampler.beta;
            opt.seed = s;
            CaseMetrics m = evaluate_case(ckpt, scene, frames, opt);
            syncs.push_back(m.sync);
            frechets.push_back(m.frechet);
            boundaries.push_back(m.boundary);
            EvalRow row;
            row.labels["clips"] = std::to_string(k);
            row.labels["row"] = "seed";
            row.labels["seed"] = std::to_string(s);
            row.values["sync_proxy"] = m.sync;
            row.values["latent_frechet"] = m.frechet;
            row.values["boundary_score"] = m.boundary;
            rep.rows.push_back(row);
        }
        double ms = median(syncs), mf = median(frechets);
        if (k == clip_counts.front()) {
            base_sync = ms;
            base_frechet = mf;
        }
        EvalRow row;
        row.labels["clips"] = std::to_string(k);
        row.labels["row"] = "median";
        row.values["sync_proxy"] = ms;
        row.values["latent_frechet"] = mf;
        row.values["boundary_score"] = median(boundaries);
        row.values["sync_drift"] = std::fabs(ms - base_sync) / std::max(1e-12, std::fabs(base_sync));
        row.values["frechet_drift"] = std::fabs(mf - base_frechet) / std::max(1e-12, std::fabs(base_frechet));
        rep.rows.push_back(row);
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        rep.write_csv((fs::path(out_dir) / "long_horizon.csv").string());
        rep.write_text((fs::path(out_dir) / "long_horizon.txt").string());
    }
    return rep;
}

EvalReport long_horizon_oracle(const pipeline::ExperimentConfig& cfg, const std::vector<int64_t>& clip_counts,
                               const std::string& out_dir) {
    EvalReport rep;
    rep.title = "long-horizon stability (oracle denoiser)";
    rep.provenance = "oracle mode: closed-form denoiser on a periodic dyadic target";
    rep.label_columns = {"clips", "row"};
    rep.value_columns = {"sync_proxy", "latent_frechet", "boundary_score", "sync_drift", "frechet_drift"};

    int64_t f = cfg.backbone.clip_frames;
    int64_t rt = cfg.codec.temporal_ratio;
    int64_t h = cfg.backbone.latent_h, w = cfg.backbone.latent_w, ch = cfg.backbone.latent_channels;
    if (ch < rt)
        throw std::invalid_argument("long_horizon_oracle: needs latent_channels >= temporal_ratio to carry the "
                                    "per-frame pattern");
    int64_t period = (f - 1) * rt;

    // dyadic periodic envelope: antisymmetric halves give an exact mean of
    // 0.5, and env[0]=0.5 equals that mean, so correlation sums tile exactly
    std::vector<double> pattern(static_cast<size_t>(period));
    for (int64_t j = 0; j < period / 2; ++j) {
        double a = j == 0 ? 0.5 : static_cast<double>((j * 5) % 16) / 16.0;
        pattern[static_cast<size_t>(j)] = a;
        pattern[static_cast<size_t>(j + period / 2)] = 1.0 - a;
    }
    auto env_at = [&](int64_t p) { return p == 0 ? 0.5 : pattern[static_cast<size_t>((p - 1) % period)]; };

    double base_sync = 0.0, base_frechet = 0.0;
    for (int64_t k : clip_counts) {
        int64_t N = k * (f - 1) + 1;
        int64_t frames = 1 + (N - 1) * rt;

        // ground-truth latents: channel c of content frame j holds the
        // envelope of pixel frame (j-2)*rt+1+c (frame 1 holds pixel 0)
        Tensor z0({N + 1, h, w, ch});
        auto fill_frame = [&](int64_t slot, int64_t content_j) {
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    for (int64_t c = 0; c < ch; ++c) {
                        double v = 0.0;
                        if (content_j == 1)
                            v = c == 0 ? env_at(0) : 0.0;
                        else if (c < rt)
                            v = env_at((content_j - 2) * rt + 1 + c);
                        z0.at4(slot, y, x, c) = v;
                    }
        };
        fill_frame(0, 1);  // reference slot mirrors the first content frame
        for (int64_t j = 1; j <= N; ++j) fill_frame(j, j);

        sched::DenoiserFn oracle = [&](const Tensor& clip, sched::CondBranch, int64_t clip_index,
                                       const std::vector<double>& tvec) {
            int64_t per = clip.numel() / clip.shape[0];
            Tensor v(clip.shape);
            int64_t lo = 1 + (clip_index - 1) * (f - 1);
            for (int64_t i = 1; i < clip.shape[0]; ++i) {
                double t = tvec[static_cast<size_t>(i)];
                if (t <= 0.0) continue;
                for (int64_t jj = 0; jj < per; ++jj)
                    v.data[static_cast<size_t>(i * per + jj)] =
                        (clip.data[static_cast<size_t>(i * per + jj)] -
                         z0.data[static_cast<size_t>((lo + i - 1) * per + jj)]) /
                        t;
            }
            return v;
        };

        Tensor z_ref({h, w, ch});
        std::copy(z0.data.begin(), z0.data.begin() + h * w * ch, z_ref.data.begin());
        sched::NoiseSchedule schedule = sched::NoiseSchedule::uniform(cfg.sampler.steps);
        sched::SamplerConfig scfg = cfg.sampler;
        scfg.mode = sched::CfgMode::Joint;
        scfg.alpha = 1.0;
        sched::GenerateResult gen = sched::generate(oracle, N, f, z_ref, schedule, scfg, 12345);

        // oracle decode: pixel frame p is the constant stored for it
        Tensor video({frames, cfg.corpus.dist.height, cfg.corpus.dist.width, cfg.codec.pixel_channels});
        std::vector<double> envelope(static_cast<size_t>(frames));
        for (int64_t p = 0; p < frames; ++p) {
            int64_t j = p == 0 ? 1 : 2 + (p - 1) / rt;
            int64_t c = p == 0 ? 0 : (p - 1) % rt;
            double v = gen.latents.at4(j, 0, 0, c);
            envelope[static_cast<size_t>(p)] = env_at(p);
            for (int64_t y = 0; y < video.shape[1]; ++y)
                for (int64_t x = 0; x < video.shape[2]; ++x)
                    for (int64_t cc = 0; cc < video.shape[3]; ++cc) video.at4(p, y, x, cc) = v;
        }

        data::Rect full_rect{0, 0, video.shape[2], video.shape[1]};
        double sync = sync_proxy(video, envelope, full_rect);
        double frechet = latent_frechet(flatten_frames(gen.latents, 1), flatten_frames(z0, 1));
        std::vector<int64_t> seams = seam_indices(pipeline::Arm::Full, k, f, rt, frames);
        double boundary = boundary_score(video, seams);

        if (k == clip_counts.front()) {
            base_sync = sync;
            base_frechet = frechet;
        }
        EvalRow row;
        row.labels["clips"] = std::to_string(k);
        row.labels["row"] = "oracle";
        row.values["sync_proxy"] = sync;
        row.values["latent_frechet"] = frechet;
        row.values["boundary_score"] = boundary;
        row.values["sync_drift"] = std::fabs(sync - base_sync);
        row.values["frechet_drift"] = std::fabs(frechet - base_frechet);
        rep.rows.push_back(row);
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        rep.write_csv((fs::path(out_dir) / "long_horizon_oracle.csv").string());
        rep.write_text((fs::path(out_dir) / "long_horizon_oracle.txt").string());
    }
    return rep;
}

EvalReport ablate(const std::map<std::string, pipeline::Checkpoint>& arms, const std::vector<uint64_t>& seeds,
                  const std::string& out_dir) {
    if (arms.empty()) throw std::invalid_argument("ablate: no arm checkpoints given");
    EvalReport rep;
    rep.title = "ablation arms";
    rep.provenance = "arms=" + std::to_string(arms.size()) + " seeds=" + std::to_string(seeds.size());
    rep.label_columns = {"arm", "row", "seed"};
    rep.value_columns = {"sync_proxy", "latent_frechet", "boundary_score"};
    rep.seeds = seeds;

    data::SceneDistribution dist;
    std::vector<data::SceneSpec> scenes = {eval_scene(3, dist), eval_scene(4, dist)};

    std::map<std::string, double> median_sync, median_boundary;
    for (const auto& [name, ckpt] : arms) {
        int64_t f = ckpt.config.backbone.clip_frames;
        int64_t rt = ckpt.config.codec.temporal_ratio;
        int64_t frames = 1 + 2 * (f - 1) * rt;  // two-clip generations so seams exist
        std::vector<double> syncs, frechets, boundaries;
        for (uint64_t s : seeds) {
            double sync_acc = 0.0, frechet_acc = 0.0, boundary_acc = 0.0;
            for (const auto& scene : scenes) {
                pipeline::GenerateOptions opt;
                opt.steps = ckpt.config.sampler.steps;
                opt.mode = ckpt.config.sampler.mode;
                opt.alpha = ckpt.config.sampler.alpha;
                opt.beta = ckpt.config.sampler.beta;
                opt.seed = s;
                CaseMetrics m = evaluate_case(ckpt, scene, frames, opt);
                sync_acc += m.sync;
                frechet_acc += m.frechet;
                boundary_acc += m.boundary;
            }
            double ns = static_cast<double>(scenes.size());
            syncs.push_back(sync_acc / ns);
            frechets.push_back(frechet_acc / ns);
            boundaries.push_back(boundary_acc / ns);
            EvalRow row;
            row.labels["arm"] = name;
            row.labels["row"] = "seed";
            row.labels["seed"] = std::to_string(s);
            row.values["sync_proxy"] = syncs.back();
            row.values["latent_frechet"] = frechets.back();
            row.values["boundary_score"] = boundaries.back();
            rep.rows.push_back(row);
        }
        EvalRow med;
        med.labels["arm"] = name;
        med.labels["row"] = "median";
        med.values["sync_proxy"] = median(syncs);
        med.values["latent_frechet"] = median(frechets);
        med.values["boundary_score"] = median(boundaries);
        rep.rows.push_back(med);
        median_sync[name] = median(syncs);
        median_boundary[name] = median(boundaries);
    }

    if (median_sync.count("full") && median_sync.count("no-speechae"))
        rep.warnings.push_back("sync gap (full - no-speechae) = " +
                               std::to_string(median_sync["full"] - median_sync["no-speechae"]));
    if (median_boundary.count("full") && median_boundary.count("no-ans"))
        rep.warnings.push_back("boundary gap (no-ans - full) = " +
                               std::to_string(median_boundary["no-ans"] - median_boundary["full"]));

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        rep.write_csv((fs::path(out_dir) / "ablation.csv").string());
        rep.write_text((fs::path(out_dir) / "ablation.txt").string());
    }
    return rep;
}

}  // namespace a2v::bench
