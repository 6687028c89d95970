#include <doctest.h>

#include <cmath>

#include "backbone/backbone.hpp"
#include "core/rng.hpp"
#include "gradcheck.hpp"
#include "sched/sched.hpp"

using namespace a2v;
using namespace a2v::backbone;

namespace {

BackboneConfig tiny_cfg() {
    BackboneConfig cfg;
    cfg.blocks = 1;
    cfg.width = 16;
    cfg.heads = 2;
    cfg.patch = 1;
    cfg.latent_channels = 2;
    cfg.latent_h = 2;
    cfg.latent_w = 2;
    cfg.clip_frames = 3;
    cfg.audio_window = 1;
    cfg.audio_dim = 4;
    cfg.mlp_ratio = 2;
    return cfg;
}

BackboneConfig toy_cfg() {
    BackboneConfig cfg;
    cfg.blocks = 2;
    cfg.width = 32;
    cfg.heads = 4;
    cfg.patch = 2;
    cfg.latent_channels = 4;
    cfg.latent_h = 4;
    cfg.latent_w = 4;
    cfg.clip_frames = 4;
    cfg.audio_window = 2;
    cfg.audio_dim = 6;
    return cfg;
}

Tensor rand_t(std::vector<int64_t> shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return gradcheck::random_tensor(std::move(shape), rng, scale);
}

}  // namespace

TEST_CASE("patchify / unpatchify roundtrip identity") {
    Tensor z = rand_t({8, 4, 4, 8}, 1);
    Tensor tok = patchify(z, 2);
    CHECK(tok.shape == std::vector<int64_t>{8 * 4, 2 * 2 * 8});
    Tensor back = unpatchify(tok, 8, 4, 4, 8, 2);
    CHECK(max_abs_diff(back, z) == 0.0);

    Tensor tok1 = patchify(z, 1);
    CHECK(tok1.shape == std::vector<int64_t>{8 * 16, 8});
    CHECK(max_abs_diff(unpatchify(tok1, 8, 4, 4, 8, 1), z) == 0.0);

    CHECK_THROWS_AS(patchify(z, 3), std::invalid_argument);
}

TEST_CASE("frame_cross_attention: zero projection is the identity") {
    int64_t f = 4, n = 5, d = 8, hw = 2, da = 3;
    Tensor H = rand_t({f, n, d}, 2);
    Tensor C = rand_t({f, hw, da}, 3);
    Tensor wq = rand_t({d, d}, 4, 0.3);
    Tensor wk = rand_t({da, d}, 5, 0.3);
    Tensor wv = rand_t({da, d}, 6, 0.3);
    Tensor wo_zero({d, d});
    Tensor out = frame_cross_attention(H, C, wq, wk, wv, wo_zero);
    CHECK(max_abs_diff(out, H) == 0.0);

    Tensor wo = rand_t({d, d}, 7, 0.3);
    Tensor out2 = frame_cross_attention(H, C, wq, wk, wv, wo);
    CHECK(out2.shape == H.shape);
    CHECK(max_abs_diff(out2, H) > 0.0);
}

TEST_CASE("frame_cross_attention: per-frame locality under perturbation") {
    int64_t f = 5, n = 3, d = 6, hw = 2, da = 4;
    Tensor H = rand_t({f, n, d}, 8);
    Tensor C = rand_t({f, hw, da}, 9);
    Tensor wq = rand_t({d, d}, 10, 0.4);
    Tensor wk = rand_t({da, d}, 11, 0.4);
    Tensor wv = rand_t({da, d}, 12, 0.4);
    Tensor wo = rand_t({d, d}, 13, 0.4);
    Tensor base = frame_cross_attention(H, C, wq, wk, wv, wo);
    for (int64_t j = 0; j < f; ++j) {
        Tensor Cp = C;
        for (int64_t u = 0; u < hw; ++u)
            for (int64_t k = 0; k < da; ++k) Cp.at3(j, u, k) += 1.0;
        Tensor pert = frame_cross_attention(H, Cp, wq, wk, wv, wo);
        for (int64_t i = 0; i < f; ++i) {
            double diff = 0.0;
            for (int64_t q = 0; q < n; ++q)
                for (int64_t e = 0; e < d; ++e) diff = std::max(diff, std::fabs(pert.at3(i, q, e) - base.at3(i, q, e)));
            if (i == j)
                CHECK(diff > 0.0);
            else
                CHECK(diff == 0.0);
        }
    }
}

TEST_CASE("forward shape, determinism and timestep sensitivity") {
    BackboneConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 1);
    int64_t frames = cfg.clip_frames + 1;
    Tensor zt = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 20);
    ConditionSet cond;
    cond.speech = rand_t({cfg.clip_frames, cfg.audio_window, cfg.audio_dim}, 21);
    cond.reference = rand_t({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 22);
    std::vector<double> tvec(static_cast<size_t>(frames), 0.7);
    tvec[0] = 0.0;

    Tensor v1 = forward(zt, cond, tvec, cfg, ps);
    CHECK(v1.shape == zt.shape);
    CHECK(v1.all_finite());
    Tensor v2 = forward(zt, cond, tvec, cfg, ps);
    CHECK(digest(v1) == digest(v2));

    // changing the timestep of one frame changes the output there
    for (int64_t i = 1; i < frames; ++i) {
        std::vector<double> tp = tvec;
        tp[static_cast<size_t>(i)] = 0.3;
        Tensor vp = forward(zt, cond, tp, cfg, ps);
        CHECK(max_abs_diff(vp, v1) > 0.0);
    }

    std::vector<double> bad(static_cast<size_t>(frames - 1), 0.5);
    CHECK_THROWS_AS(forward(zt, cond, bad, cfg, ps), std::invalid_argument);
    std::vector<double> badref = tvec;
    badref[0] = 0.5;
    CHECK_THROWS_AS(forward(zt, cond, badref, cfg, ps), std::invalid_argument);
    Tensor znan = zt;
    znan.data[3] = std::nan("");
    CHECK_THROWS_AS(forward(znan, cond, tvec, cfg, ps), std::invalid_argument);
}

TEST_CASE("self-attention spans frames") {
    BackboneConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 2);
    // give the attention branches non-zero gates so cross-frame paths exist
    for (int64_t b = 0; b < cfg.blocks; ++b) {
        Tensor& mod = ps.at("backbone.blk" + std::to_string(b) + ".mod.b");
        for (int64_t j = 2 * cfg.width; j < 3 * cfg.width; ++j) mod.data[static_cast<size_t>(j)] = 0.5;
        for (int64_t j = 8 * cfg.width; j < 9 * cfg.width; ++j) mod.data[static_cast<size_t>(j)] = 0.5;
    }
    int64_t frames = cfg.clip_frames + 1;
    Tensor zt = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 23);
    ConditionSet cond;
    cond.reference = rand_t({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 24);
    std::vector<double> tvec(static_cast<size_t>(frames), 0.5);
    tvec[0] = 0.0;
    Tensor base = forward(zt, cond, tvec, cfg, ps);

    Tensor zp = zt;
    for (int64_t y = 0; y < cfg.latent_h; ++y)
        for (int64_t x = 0; x < cfg.latent_w; ++x)
            for (int64_t c = 0; c < cfg.latent_channels; ++c) zp.at4(frames - 1, y, x, c) += 0.5;
    Tensor pert = forward(zp, cond, tvec, cfg, ps);
    int64_t per = cfg.latent_h * cfg.latent_w * cfg.latent_channels;
    double diff_other = 0.0;
    for (int64_t i = per; i < 2 * per; ++i)  // frame 1, far from the perturbed last frame
        diff_other = std::max(diff_other,
                              std::fabs(pert.data[static_cast<size_t>(i)] - base.data[static_cast<size_t>(i)]));
    CHECK(diff_other > 0.0);
}

TEST_CASE("condition_dropout basics and monte-carlo frequency") {
    BackboneConfig cfg = toy_cfg();
    ConditionSet cond;
    cond.speech = rand_t({cfg.clip_frames, cfg.audio_window, cfg.audio_dim}, 30);
    cond.reference = rand_t({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 31);

    Rng rng(5);
    ConditionSet keep = condition_dropout(cond, 0.0, rng);
    CHECK(keep.speech.has_value());
    CHECK(keep.reference.has_value());
    ConditionSet drop = condition_dropout(cond, 1.0, rng);
    CHECK_FALSE(drop.speech.has_value());
    CHECK_FALSE(drop.reference.has_value());

    int ns = 0, nr = 0;
    const int trials = 10000;
    Rng rng2(42);
    for (int i = 0; i < trials; ++i) {
        ConditionSet c = condition_dropout(cond, 0.1, rng2);
        if (!c.speech.has_value()) ++ns;
        if (!c.reference.has_value()) ++nr;
    }
    CHECK(std::fabs(ns / static_cast<double>(trials) - 0.1) < 0.01);
    CHECK(std::fabs(nr / static_cast<double>(trials) - 0.1) < 0.01);
}

TEST_CASE("null conditions flow through learned embeddings") {
    BackboneConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 3);
    int64_t frames = cfg.clip_frames + 1;
    Tensor zt = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 40);
    std::vector<double> tvec(static_cast<size_t>(frames), 0.6);
    tvec[0] = 0.0;

    ConditionSet full;
    full.speech = rand_t({cfg.clip_frames, cfg.audio_window, cfg.audio_dim}, 41);
    full.reference = rand_t({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 42);
    ConditionSet none;

    Tensor vf = forward(zt, full, tvec, cfg, ps);
    Tensor vn = forward(zt, none, tvec, cfg, ps);
    CHECK(vf.all_finite());
    CHECK(vn.all_finite());
    // reference substitution feeds slot 0 through patch_in, so dropping it
    // must change the output even at zero-gate initialization
    CHECK(max_abs_diff(vf, vn) > 0.0);
}

TEST_CASE("speech conditioning becomes active after training begins") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore ps = init_params(cfg, 4);
    int64_t frames = cfg.clip_frames + 1;
    std::vector<double> tvec(static_cast<size_t>(frames), 0.5);
    tvec[0] = 0.0;
    std::vector<bool> mask(static_cast<size_t>(frames), false);
    mask[0] = true;

    Tensor zt = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 50);
    Tensor speech = rand_t({cfg.clip_frames, cfg.audio_window, cfg.audio_dim}, 51);
    Tensor ref = rand_t({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 52);
    Tensor target = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 53);

    ConditionSet cond;
    cond.speech = speech;
    cond.reference = ref;

    // at zero-gate initialization the cross-attention branch is inert
    ConditionSet nospeech;
    nospeech.reference = ref;
    CHECK(max_abs_diff(forward(zt, cond, tvec, cfg, ps), forward(zt, nospeech, tvec, cfg, ps)) == 0.0);

    AdamOptimizer opt(3e-3);
    for (int step = 0; step < 30; ++step) {
        Graph g;
        Binder bind(g, ps);
        ParamLookup p = [&bind](const std::string& n) { return bind(n); };
        CondNodes cn;
        cn.speech = g.input(speech.reshaped({cfg.clip_frames * cfg.audio_window, cfg.audio_dim}), false);
        cn.reference = g.input(ref.reshaped({ref.numel()}), false);
        NodeId zin = g.input(zt.reshaped({zt.numel()}), false);
        NodeId out = build_forward(g, zin, cn, tvec, cfg, p);
        NodeId loss = sched::fm_loss_node(g, g.reshape(out, {frames, zt.numel() / frames}),
                                          g.input(target.reshaped({frames, zt.numel() / frames}), false), mask);
        ps.zero_grad();
        g.backward(loss);
        bind.harvest();
        opt.step(ps);
    }
    Tensor with_speech = forward(zt, cond, tvec, cfg, ps);
    Tensor without = forward(zt, nospeech, tvec, cfg, ps);
    CHECK(max_abs_diff(with_speech, without) > 0.0);
}

TEST_CASE("end-to-end forward+loss gradients match finite differences (1e-3)") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore ps = init_params(cfg, 5);
    int64_t frames = cfg.clip_frames + 1;
    std::vector<double> tvec{0.0, 0.2, 0.55, 0.9};
    std::vector<bool> mask{true, false, false, false};

    Tensor zt = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 60);
    Tensor speech = rand_t({cfg.clip_frames, cfg.audio_window, cfg.audio_dim}, 61);
    Tensor ref = rand_t({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 62);
    Tensor target = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 63);

    // randomize the zero-initialized tensors so the check exercises every path
    Rng prng(64);
    for (const auto& name : ps.order) {
        Tensor& t = ps.value.at(name);
        bool all_zero = true;
        for (double v : t.data)
            if (v != 0.0) all_zero = false;
        if (all_zero)
            for (double& v : t.data) v = 0.05 * prng.normal();
    }

    auto eval = [&]() {
        Graph g;
        Binder bind(g, ps);
        ParamLookup p = [&bind](const std::string& n) { return bind(n); };
        CondNodes cn;
        cn.speech = g.input(speech.reshaped({cfg.clip_frames * cfg.audio_window, cfg.audio_dim}), false);
        cn.reference = g.input(ref.reshaped({ref.numel()}), false);
        NodeId zin = g.input(zt.reshaped({zt.numel()}), false);
        NodeId out = build_forward(g, zin, cn, tvec, cfg, p);
        NodeId loss = sched::fm_loss_node(g, g.reshape(out, {frames, zt.numel() / frames}),
                                          g.input(target.reshaped({frames, zt.numel() / frames}), false), mask);
        return g.val(loss).data[0];
    };

    {
        Graph g;
        Binder bind(g, ps);
        ParamLookup p = [&bind](const std::string& n) { return bind(n); };
        CondNodes cn;
        cn.speech = g.input(speech.reshaped({cfg.clip_frames * cfg.audio_window, cfg.audio_dim}), false);
        cn.reference = g.input(ref.reshaped({ref.numel()}), false);
        NodeId zin = g.input(zt.reshaped({zt.numel()}), false);
        NodeId out = build_forward(g, zin, cn, tvec, cfg, p);
        NodeId loss = sched::fm_loss_node(g, g.reshape(out, {frames, zt.numel() / frames}),
                                          g.input(target.reshaped({frames, zt.numel() / frames}), false), mask);
        ps.zero_grad();
        g.backward(loss);
        bind.harvest();
    }
    double err = gradcheck::max_param_rel_error(ps, eval, 99, 8);
    INFO("e2e max rel err ", err);
    CHECK(err < 1e-3);
}

TEST_CASE("text branch is structurally sound when enabled") {
    BackboneConfig cfg = tiny_cfg();
    cfg.text_branch = true;
    cfg.text_tokens = 3;
    cfg.text_dim = 5;
    ParamStore ps = init_params(cfg, 6);
    int64_t frames = cfg.clip_frames + 1;
    Tensor zt = rand_t({frames, cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 70);
    std::vector<double> tvec(static_cast<size_t>(frames), 0.4);
    tvec[0] = 0.0;
    ConditionSet cond;
    cond.reference = rand_t({cfg.latent_h, cfg.latent_w, cfg.latent_channels}, 71);
    Tensor v1 = forward(zt, cond, tvec, cfg, ps);  // learned bank
    CHECK(v1.all_finite());
    cond.text = rand_t({4, cfg.text_dim}, 72);  // external tokens
    Tensor v2 = forward(zt, cond, tvec, cfg, ps);
    CHECK(v2.all_finite());
}
