#include "sched.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace a2v::sched {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_frames(const Tensor& t, const std::vector<double>& tvec, const char* op) {
    if (t.ndim() < 1 || t.shape[0] != static_cast<int64_t>(tvec.size()))
        throw std::invalid_argument(std::string(op) + ": t-vector length " + std::to_string(tvec.size()) +
                                    " does not match frame axis of " + t.shape_str());
}

}  // namespace

NoiseSchedule NoiseSchedule::uniform(int64_t steps, double shift) {
    if (steps < 2) throw std::invalid_argument("schedule: needs at least 2 levels");
    if (shift <= 0.0) throw std::invalid_argument("schedule: shift must be positive");
    NoiseSchedule s;
    s.levels.resize(static_cast<size_t>(steps));
    for (int64_t i = 0; i < steps; ++i) {
        double t = 1.0 - static_cast<double>(i) / static_cast<double>(steps - 1);
        s.levels[static_cast<size_t>(i)] = shift_time(t, shift);
    }
    s.levels.front() = 1.0;
    s.levels.back() = 0.0;
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    if (levels.size() < 2) throw std::invalid_argument("schedule: needs at least 2 levels");
    if (levels.front() != 1.0) throw std::invalid_argument("schedule: T_1 must be 1");
    if (levels.back() != 0.0) throw std::invalid_argument("schedule: T_n must be 0");
    for (size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i] < levels[i - 1])) throw std::invalid_argument("schedule: levels must be strictly decreasing");
}

void SamplerConfig::validate() const {
    if (sigma < 0.0) throw std::invalid_argument("sampler: sigma must be >= 0");
    if (shift <= 0.0) throw std::invalid_argument("sampler: shift must be positive");
    if (steps < 2) throw std::invalid_argument("sampler: steps must be >= 2");
}

double shift_time(double t, double s) { return s * t / (1.0 + (s - 1.0) * t); }

std::pair<double, double> sample_async_timesteps(double mu, double sigma, double s, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("sample_async_timesteps: sigma must be >= 0");
    if (s <= 0.0) throw std::invalid_argument("sample_async_timesteps: shift must be positive");
    double a = shift_time(sigmoid(mu + sigma * rng.normal()), s);
    double b = shift_time(sigmoid(mu + sigma * rng.normal()), s);
    if (a > b) std::swap(a, b);
    return {a, b};
}

std::vector<double> build_train_tvec(int64_t f, double t1, double t2, bool interpolated) {
    if (f < 2) throw std::invalid_argument("build_train_tvec: needs f >= 2 non-reference frames");
    if (!(0.0 <= t1 && t1 <= t2 && t2 <= 1.0))
        throw std::invalid_argument("build_train_tvec: need 0 <= t1 <= t2 <= 1, got t1=" + std::to_string(t1) +
                                    " t2=" + std::to_string(t2));
    std::vector<double> tvec(static_cast<size_t>(f + 1), t2);
    tvec[0] = 0.0;
    tvec[1] = t1;
    if (interpolated)
        for (int64_t i = 1; i <= f; ++i)
            tvec[static_cast<size_t>(i)] =
                t1 + (t2 - t1) * static_cast<double>(i - 1) / static_cast<double>(f - 1);
    return tvec;
}

Tensor add_noise_async(const Tensor& z0_with_ref, const std::vector<double>& tvec, const Tensor& eps) {
    check_frames(z0_with_ref, tvec, "add_noise_async");
    if (!z0_with_ref.same_shape(eps))
        throw std::invalid_argument("add_noise_async: noise shape " + eps.shape_str() + " does not match latents " +
                                    z0_with_ref.shape_str());
    for (double t : tvec)
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("add_noise_async: timestep outside [0,1]: " + std::to_string(t));
    if (tvec[0] != 0.0)
        throw std::invalid_argument("add_noise_async: reference position must have t=0, got " + std::to_string(tvec[0]));
    int64_t frames = z0_with_ref.shape[0];
    int64_t per = z0_with_ref.numel() / frames;
    Tensor out = z0_with_ref;
    for (int64_t i = 0; i < frames; ++i) {
        double t = tvec[static_cast<size_t>(i)];
        for (int64_t j = 0; j < per; ++j) {
            size_t k = static_cast<size_t>(i * per + j);
            out.data[k] = (1.0 - t) * z0_with_ref.data[k] + t * eps.data[k];
        }
    }
    return out;
}

Tensor fm_target(const Tensor& z0, const Tensor& eps) {
    if (!z0.same_shape(eps))
        throw std::invalid_argument("fm_target: shape mismatch " + z0.shape_str() + " vs " + eps.shape_str());
    Tensor v = eps;
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] -= z0.data[i];
    return v;
}

NodeId fm_loss_node(Graph& g, NodeId v_hat, NodeId v, const std::vector<bool>& frame_mask) {
    // copy shape facts up front; val() references go stale once ops push nodes
    if (!g.val(v_hat).same_shape(g.val(v)))
        throw std::invalid_argument("fm_loss: shape mismatch " + g.val(v_hat).shape_str() + " vs " +
                                    g.val(v).shape_str());
    int64_t frames = g.val(v_hat).shape[0];
    int64_t total = g.val(v_hat).numel();
    if (static_cast<int64_t>(frame_mask.size()) != frames)
        throw std::invalid_argument("fm_loss: mask length does not match frame count");
    int64_t per = total / frames;
    auto idx = std::make_shared<std::vector<int64_t>>();
    for (int64_t i = 0; i < frames; ++i) {
        if (frame_mask[static_cast<size_t>(i)]) continue;
        for (int64_t j = 0; j < per; ++j) idx->push_back(i * per + j);
    }
    if (idx->empty()) throw std::invalid_argument("fm_loss: every frame is masked out");
    std::vector<int64_t> flat{static_cast<int64_t>(idx->size())};
    NodeId fa = g.gather(g.reshape(v_hat, {total}), idx, flat);
    NodeId fb = g.gather(g.reshape(v, {total}), idx, flat);
    return g.mse(fa, fb);
}

double fm_loss(const Tensor& v_hat, const Tensor& v, const std::vector<bool>& frame_mask) {
    Graph g;
    NodeId a = g.input(v_hat, false);
    NodeId b = g.input(v, false);
    return g.val(fm_loss_node(g, a, b, frame_mask)).data[0];
}

Tensor euler_update(const Tensor& z, const Tensor& v_hat, const std::vector<double>& t_from,
                    const std::vector<double>& t_to) {
    check_frames(z, t_from, "euler_update");
    if (t_to.size() != t_from.size()) throw std::invalid_argument("euler_update: t_from/t_to length mismatch");
    if (!z.same_shape(v_hat))
        throw std::invalid_argument("euler_update: velocity shape " + v_hat.shape_str() + " does not match state " +
                                    z.shape_str());
    for (size_t i = 0; i < t_from.size(); ++i)
        if (t_to[i] > t_from[i])
            throw std::invalid_argument("euler_update: t_to > t_from at frame " + std::to_string(i) +
                                        " (reverse process runs toward 0)");
    int64_t frames = z.shape[0];
    int64_t per = z.numel() / frames;
    Tensor out = z;
    for (int64_t i = 0; i < frames; ++i) {
        double dt = t_to[static_cast<size_t>(i)] - t_from[static_cast<size_t>(i)];
        if (dt == 0.0) continue;
        for (int64_t j = 0; j < per; ++j) {
            size_t k = static_cast<size_t>(i * per + j);
            out.data[k] = z.data[k] + dt * v_hat.data[k];
        }
    }
    return out;
}

ClipPlan segment_clips(int64_t N, int64_t f) {
    if (f < 2) throw std::invalid_argument("segment_clips: clip length must be >= 2");
    if (N < f || (N - 1) % (f - 1) != 0) {
        int64_t k_near = (N - 1 + (f - 1) / 2) / (f - 1);
        if (k_near < 1) k_near = 1;
        int64_t cand = k_near * (f - 1) + 1;
        int64_t alt = (k_near + 1) * (f - 1) + 1;
        int64_t nearest = std::abs(cand - N) <= std::abs(alt - N) ? cand : alt;
        if (nearest < f) nearest = f;
        throw std::invalid_argument("segment_clips: N=" + std::to_string(N) + " is not k*(f-1)+1 for f=" +
                                    std::to_string(f) + "; nearest valid N is " + std::to_string(nearest));
    }
    ClipPlan plan;
    plan.total = N;
    plan.clip_len = f;
    plan.clips = (N - 1) / (f - 1);
    for (int64_t j = 1; j <= plan.clips; ++j)
        plan.ranges.push_back({1 + (j - 1) * (f - 1), 1 + j * (f - 1)});
    return plan;
}

Tensor cfg_joint(const Tensor& v_uncond, const Tensor& v_cond, double alpha) {
    if (!v_uncond.same_shape(v_cond))
        throw std::invalid_argument("cfg_joint: shape mismatch " + v_uncond.shape_str() + " vs " + v_cond.shape_str());
    Tensor out = v_uncond;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (1.0 - alpha) * v_uncond.data[i] + alpha * v_cond.data[i];
    return out;
}

Tensor cfg_split(const Tensor& v_uncond, const Tensor& v_ref, const Tensor& v_full, double alpha, double beta) {
    if (!v_uncond.same_shape(v_ref) || !v_uncond.same_shape(v_full))
        throw std::invalid_argument("cfg_split: shape mismatch between branch outputs");
    Tensor out = v_uncond;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] =
            (1.0 - alpha - beta) * v_uncond.data[i] + alpha * v_ref.data[i] + beta * v_full.data[i];
    return out;
}

namespace {

struct BranchTimer {
    const DenoiserFn& fn;
    GenerateStats& stats;
    Tensor operator()(const Tensor& clip, CondBranch br, int64_t j, const std::vector<double>& tvec) {
        auto t0 = std::chrono::steady_clock::now();
        Tensor v = fn(clip, br, j, tvec);
        auto t1 = std::chrono::steady_clock::now();
        stats.denoiser_calls += 1;
        stats.denoiser_seconds += std::chrono::duration<double>(t1 - t0).count();
        if (!v.same_shape(clip))
            throw std::runtime_error("generate: denoiser output shape " + v.shape_str() +
                                     " does not match clip shape " + clip.shape_str());
        return v;
    }
};

Tensor guided_velocity(BranchTimer& call, const SamplerConfig& cfg, const Tensor& clip, int64_t j,
                       const std::vector<double>& tvec) {
    if (cfg.mode == CfgMode::Joint) {
        Tensor vu = call(clip, CondBranch::Uncond, j, tvec);
        Tensor vc = call(clip, CondBranch::Full, j, tvec);
        return cfg_joint(vu, vc, cfg.alpha);
    }
    Tensor vu = call(clip, CondBranch::Uncond, j, tvec);
    Tensor vr = call(clip, CondBranch::RefOnly, j, tvec);
    Tensor vf = call(clip, CondBranch::Full, j, tvec);
    return cfg_split(vu, vr, vf, cfg.alpha, cfg.beta);
}

}  // namespace

GenerateResult generate(const DenoiserFn& denoiser, int64_t total_frames, int64_t clip_len, const Tensor& z_ref,
                        const NoiseSchedule& schedule, const SamplerConfig& cfg, uint64_t seed,
                        const StepHook& hook) {
    schedule.validate();
    cfg.validate();
    if (z_ref.ndim() != 3) throw std::invalid_argument("generate: reference latent must be (h, w, d_v)");
    ClipPlan plan = segment_clips(total_frames, clip_len);
    int64_t h = z_ref.shape[0], w = z_ref.shape[1], c = z_ref.shape[2];
    int64_t per = h * w * c;
    int64_t N = plan.total;
    int64_t f = plan.clip_len;

    // state: slot 0 = reference (pinned), slots 1..N = latent frames at eps
    Tensor state({N + 1, h, w, c});
    std::copy(z_ref.data.begin(), z_ref.data.end(), state.data.begin());
    Rng rng(Rng::derive(seed, 0x9e11e));
    for (int64_t i = per; i < state.numel(); ++i) state.data[static_cast<size_t>(i)] = rng.normal();

    GenerateResult res;
    res.stats.clips = plan.clips;
    res.stats.outer_steps = schedule.steps() - 1;
    BranchTimer call{denoiser, res.stats};

    int64_t n = schedule.steps();
    for (int64_t i = 1; i <= n - 1; ++i) {
        double Ti = schedule.levels[static_cast<size_t>(i - 1)];
        double Tn = schedule.levels[static_cast<size_t>(i)];
        for (int64_t j = 1; j <= plan.clips; ++j) {
            const auto& range = plan.ranges[static_cast<size_t>(j - 1)];
            Tensor clip({f + 1, h, w, c});
            std::copy(z_ref.data.begin(), z_ref.data.end(), clip.data.begin());
            std::copy(state.data.begin() + range.lo * per, state.data.begin() + (range.hi + 1) * per,
                      clip.data.begin() + per);

            std::vector<double> t_from(static_cast<size_t>(f + 1), Ti);
            std::vector<double> t_to(static_cast<size_t>(f + 1), Tn);
            t_from[0] = t_to[0] = 0.0;
            if (j > 1) {
                // motion frame was already advanced by clip j-1 this step
                t_from[1] = Tn;
                t_to[1] = Tn;
            }

            Tensor v = guided_velocity(call, cfg, clip, j, t_from);
            Tensor updated = euler_update(clip, v, t_from, t_to);
            if (!updated.all_finite())
                throw std::runtime_error("generate: non-finite state at outer step " + std::to_string(i) + ", clip " +
                                         std::to_string(j));

            // write back; clips j>1 never write their motion position, which
            // belongs to clip j-1's trajectory
            int64_t first_written = j == 1 ? range.lo : range.lo + 1;
            int64_t clip_row = j == 1 ? 1 : 2;
            std::copy(updated.data.begin() + clip_row * per, updated.data.end(),
                      state.data.begin() + first_written * per);

            if (hook) {
                StepInfo info;
                info.step = i;
                info.clip = j;
                info.tvec = t_from;
                info.state_digest = digest(updated);
                info.motion_digest = fnv1a(updated.data.data() + per, static_cast<size_t>(per) * sizeof(double));
                info.last_digest =
                    fnv1a(updated.data.data() + f * per, static_cast<size_t>(per) * sizeof(double));
                hook(info);
            }
        }
    }

    res.latents = std::move(state);
    return res;
}

GenerateResult generate_concat_baseline(const DenoiserFn& denoiser, int64_t total_frames, int64_t clip_len,
                                        const Tensor& z_ref, const NoiseSchedule& schedule, const SamplerConfig& cfg,
                                        uint64_t seed) {
    schedule.validate();
    cfg.validate();
    if (z_ref.ndim() != 3) throw std::invalid_argument("generate: reference latent must be (h, w, d_v)");
    if (total_frames < 1) throw std::invalid_argument("generate: total frames must be >= 1");
    int64_t h = z_ref.shape[0], w = z_ref.shape[1], c = z_ref.shape[2];
    int64_t per = h * w * c;
    int64_t f = clip_len;
    int64_t k = (total_frames + f - 1) / f;
    int64_t N = k * f;

    Tensor state({N + 1, h, w, c});
    std::copy(z_ref.data.begin(), z_ref.data.end(), state.data.begin());
    Rng rng(Rng::derive(seed, 0x9e11e));
    for (int64_t i = per; i < state.numel(); ++i) state.data[static_cast<size_t>(i)] = rng.normal();

    GenerateResult res;
    res.stats.clips = k;
    res.stats.outer_steps = schedule.steps() - 1;
    BranchTimer call{denoiser, res.stats};

    int64_t n = schedule.steps();
    for (int64_t i = 1; i <= n - 1; ++i) {
        double Ti = schedule.levels[static_cast<size_t>(i - 1)];
        double Tn = schedule.levels[static_cast<size_t>(i)];
        for (int64_t j = 1; j <= k; ++j) {
            int64_t lo = 1 + (j - 1) * f;
            Tensor clip({f + 1, h, w, c});
            std::copy(z_ref.data.begin(), z_ref.data.end(), clip.data.begin());
            std::copy(state.data.begin() + lo * per, state.data.begin() + (lo + f) * per, clip.data.begin() + per);
            std::vector<double> t_from(static_cast<size_t>(f + 1), Ti);
            std::vector<double> t_to(static_cast<size_t>(f + 1), Tn);
            t_from[0] = t_to[0] = 0.0;
            Tensor v = guided_velocity(call, cfg, clip, j, t_from);
            Tensor updated = euler_update(clip, v, t_from, t_to);
            if (!updated.all_finite())
                throw std::runtime_error("generate: non-finite state at outer step " + std::to_string(i) + ", clip " +
                                         std::to_string(j));
            std::copy(updated.data.begin() + per, updated.data.end(), state.data.begin() + lo * per);
        }
    }

    res.latents = std::move(state);
    return res;
}

}  // namespace a2v::sched
