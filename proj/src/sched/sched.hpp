#ifndef A2V_SCHED_HPP
#define A2V_SCHED_HPP

#include <functional>
#include <utility>
#include <vector>

#include "../core/graph.hpp"
#include "../core/rng.hpp"
#include "../core/tensor.hpp"

namespace a2v::sched {

// Strictly decreasing reverse-time schedule T_1=1 ... T_n=0.
struct NoiseSchedule {
    std::vector<double> levels;
    static NoiseSchedule uniform(int64_t steps, double shift = 1.0);
    void validate() const;
    int64_t steps() const { return static_cast<int64_t>(levels.size()); }
};

// Overlapping clip decomposition of N latent frames: N = k*(f-1)+1, clip j
// spans latent indices 1+(j-1)(f-1) .. 1+j(f-1) (1-based), adjacent clips
// sharing exactly one frame.
struct ClipPlan {
    int64_t total = 0;     // N
    int64_t clip_len = 0;  // f
    int64_t clips = 0;     // k
    struct Range {
        int64_t lo = 0, hi = 0;  // inclusive 1-based latent indices
    };
    std::vector<Range> ranges;
};

enum class CfgMode { Joint, Split };

struct SamplerConfig {
    double mu = 0.0;     // logit-normal location
    double sigma = 1.0;  // logit-normal scale
    double shift = 1.0;  // time-shift transform parameter
    CfgMode mode = CfgMode::Split;
    double alpha = 2.0;
    double beta = 6.0;
    int64_t steps = 8;
    bool interpolated_train_tvec = false;  // ablation: linear ramp t1 -> t2
    void validate() const;
};

// t -> s*t / (1 + (s-1)*t); identity at s=1, fixes 0 and 1.
double shift_time(double t, double s);

// Two draws of sigmoid(Normal(mu, sigma)) pushed through shift_time,
// returned sorted ascending (t1 <= t2).
std::pair<double, double> sample_async_timesteps(double mu, double sigma, double s, Rng& rng);

// [0, t1, t2, t2, ..., t2] over f non-reference frames (position 0 is the
// reference). Interpolated variant ramps linearly from t1 to t2.
std::vector<double> build_train_tvec(int64_t f, double t1, double t2, bool interpolated = false);

// Per frame i: (1-t_i)*Z0_i + t_i*eps_i. tvec[0] must be 0 so the reference
// frame passes through unchanged.
Tensor add_noise_async(const Tensor& z0_with_ref, const std::vector<double>& tvec, const Tensor& eps);

// Eq. of the linear Gaussian path: v = eps - Z0.
Tensor fm_target(const Tensor& z0, const Tensor& eps);

// Mean squared error over unmasked frames (mask true = excluded, e.g. the
// reference position).
double fm_loss(const Tensor& v_hat, const Tensor& v, const std::vector<bool>& frame_mask);
NodeId fm_loss_node(Graph& g, NodeId v_hat, NodeId v, const std::vector<bool>& frame_mask);

// Z'_i = Z_i + (t_to[i] - t_from[i]) * v_i; requires t_to <= t_from.
Tensor euler_update(const Tensor& z, const Tensor& v_hat, const std::vector<double>& t_from,
                    const std::vector<double>& t_to);

// Throws for invalid N, naming the nearest valid value.
ClipPlan segment_clips(int64_t N, int64_t f);

Tensor cfg_joint(const Tensor& v_uncond, const Tensor& v_cond, double alpha);
Tensor cfg_split(const Tensor& v_uncond, const Tensor& v_ref, const Tensor& v_full, double alpha, double beta);

// Which conditions a denoiser evaluation sees.
enum class CondBranch { Uncond, RefOnly, Full };

// clip: (f+1, h, w, d_v) with the reference at slot 0; returns the velocity
// prediction with the same shape. clip_index is 1-based.
using DenoiserFn =
    std::function<Tensor(const Tensor& clip, CondBranch branch, int64_t clip_index, const std::vector<double>& tvec)>;

struct StepInfo {
    int64_t step = 0;  // outer index i, 1-based
    int64_t clip = 0;  // clip index j, 1-based
    std::vector<double> tvec;
    uint64_t state_digest = 0;   // digest of the clip state after its update
    uint64_t motion_digest = 0;  // digest of the clip's first (motion) frame after update
    uint64_t last_digest = 0;    // digest of the clip's last frame after update
};
using StepHook = std::function<void(const StepInfo&)>;

struct GenerateStats {
    int64_t denoiser_calls = 0;
    double denoiser_seconds = 0.0;
    int64_t clips = 0;
    int64_t outer_steps = 0;
};

struct GenerateResult {
    Tensor latents;  // (N+1, h, w, d_v) with the reference at slot 0
    GenerateStats stats;
};

// Motion-guided multi-clip reverse process. Clips are processed in index
// order within each outer step; clip j>1 first substitutes its first frame
// with clip j-1's last frame (already advanced to T_{i+1}). The reference
// slot is never written.
GenerateResult generate(const DenoiserFn& denoiser, int64_t total_frames, int64_t clip_len, const Tensor& z_ref,
                        const NoiseSchedule& schedule, const SamplerConfig& cfg, uint64_t seed,
                        const StepHook& hook = nullptr);

// Plain synchronous baseline: clips of clip_len cover the target without
// overlap or motion substitution and denoise independently (standard
// concatenation strategy). Returns ceil(total/clip_len)*clip_len frames plus
// the reference at slot 0.
GenerateResult generate_concat_baseline(const DenoiserFn& denoiser, int64_t total_frames, int64_t clip_len,
                                        const Tensor& z_ref, const NoiseSchedule& schedule, const SamplerConfig& cfg,
                                        uint64_t seed);

}  // namespace a2v::sched

#endif
