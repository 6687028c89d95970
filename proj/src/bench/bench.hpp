#ifndef A2V_BENCH_BENCH_HPP
#define A2V_BENCH_BENCH_HPP

#include <map>
#include <string>
#include <vector>

#include "../pipeline/generate.hpp"
#include "metrics.hpp"
#include "report.hpp"

namespace a2v::bench {

// Held-out evaluation scene (seed space disjoint from corpus clip seeds).
data::SceneSpec eval_scene(uint64_t index, const data::SceneDistribution& dist);

struct CaseMetrics {
    double sync = 0.0;
    double frechet = 0.0;
    double boundary = 0.0;
    double backbone_seconds = 0.0;
    double total_seconds = 0.0;
    int64_t denoiser_calls = 0;
    int64_t clips = 0;
    int64_t latent_frames = 0;
};

// Seam transitions (pixel-frame indices) implied by the clip layout of a
// generation run.
std::vector<int64_t> seam_indices(pipeline::Arm arm, int64_t clips, int64_t clip_frames, int64_t temporal_ratio,
                                  int64_t max_frames);

// Generates from a synthetic scene and scores the result against the scene's
// ground truth (envelope sync, latent Frechet vs the encoded ground-truth
// clip, seam boundary score).
CaseMetrics evaluate_case(const pipeline::Checkpoint& ckpt, const data::SceneSpec& scene, int64_t frames,
                          pipeline::GenerateOptions opt);

// Fig-5 style study: steps x {joint, split}, wall-clock (median of 5 after a
// warm-up) plus quality metrics per cell. Writes CSV + SVG + text summary.
EvalReport runtime_sweep(const pipeline::Checkpoint& ckpt, const std::vector<int64_t>& steps_set,
                         uint64_t seed, const std::string& out_dir);

// Table-3 style study: metrics per generation length with relative drift
// against the 1-clip baseline, medians over seeds.
EvalReport long_horizon_eval(const pipeline::Checkpoint& ckpt, const std::vector<int64_t>& clip_counts,
                             const std::vector<uint64_t>& seeds, const std::string& out_dir);

// Same protocol driven by the closed-form oracle denoiser on a periodic
// dyadic scene; drift is zero to double precision by construction.
EvalReport long_horizon_oracle(const pipeline::ExperimentConfig& cfg, const std::vector<int64_t>& clip_counts,
                               const std::string& out_dir);

// Table-2 / Fig-3 style study over trained ablation arms; medians over seeds
// per arm plus the headline gaps.
EvalReport ablate(const std::map<std::string, pipeline::Checkpoint>& arms, const std::vector<uint64_t>& seeds,
                  const std::string& out_dir);

}  // namespace a2v::bench

#endif
