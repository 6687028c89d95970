#include <doctest.h>

#include "codec/codec.hpp"
#include "core/rng.hpp"
#include "data/data.hpp"

using namespace a2v;
using namespace a2v::codec;

namespace {

CodecConfig toy_cfg() {
    CodecConfig cfg;
    cfg.spatial_ratio = 8;
    cfg.temporal_ratio = 8;
    cfg.pixel_channels = 3;
    cfg.latent_channels = 8;
    cfg.hidden = 16;  // small for unit tests
    return cfg;
}

data::VideoTensor random_video(int64_t F, int64_t H, int64_t W, uint64_t seed) {
    data::VideoTensor v;
    v.data = Tensor({F, H, W, 3});
    Rng rng(seed);
    for (double& x : v.data.data) x = rng.uniform();
    return v;
}

}  // namespace

TEST_CASE("compression_shape worked examples") {
    CodecConfig paper;
    paper.spatial_ratio = 32;
    paper.temporal_ratio = 8;
    Shape3 s = compression_shape(121, 512, 512, paper);
    CHECK(s.f == 16);
    CHECK(s.h == 16);
    CHECK(s.w == 16);

    CodecConfig toy = toy_cfg();
    Shape3 s1 = compression_shape(1, 32, 32, toy);
    CHECK(s1.f == 1);
    CHECK(s1.h == 4);
    CHECK(s1.w == 4);
    Shape3 s9 = compression_shape(9, 32, 32, toy);
    CHECK(s9.f == 2);
    CHECK(s9.h == 4);
    CHECK(s9.w == 4);
}

TEST_CASE("compression_shape errors name the offending axis") {
    CodecConfig toy = toy_cfg();
    CHECK_THROWS_WITH_AS(compression_shape(10, 32, 32, toy), doctest::Contains("frame axis"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(compression_shape(9, 33, 32, toy), doctest::Contains("height axis"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(compression_shape(9, 32, 30, toy), doctest::Contains("width axis"), std::invalid_argument);
}

TEST_CASE("encode shape contract and determinism") {
    CodecConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 1);
    data::VideoTensor v = random_video(9, 32, 32, 5);
    LatentVideo z1 = encode_video(v, cfg, ps);
    CHECK(z1.data.shape == std::vector<int64_t>{2, 4, 4, 8});
    CHECK_FALSE(z1.has_reference);
    LatentVideo z2 = encode_video(v, cfg, ps);
    CHECK(digest(z1.data) == digest(z2.data));
}

TEST_CASE("encoder temporal causality via perturbation") {
    CodecConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 2);
    data::VideoTensor v = random_video(9, 32, 32, 6);
    LatentVideo base = encode_video(v, cfg, ps);

    // perturbing the last pixel frame (1-based index 9) must leave latent
    // frame 0 untouched
    data::VideoTensor pert = v;
    for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x)
            for (int64_t c = 0; c < 3; ++c) pert.data.at4(8, y, x, c) = 1.0 - pert.data.at4(8, y, x, c);
    LatentVideo z = encode_video(pert, cfg, ps);
    int64_t per = 4 * 4 * 8;
    for (int64_t j = 0; j < per; ++j) CHECK(z.data.data[static_cast<size_t>(j)] == base.data.data[static_cast<size_t>(j)]);

    // general sweep on a longer clip: latent frame i ignores pixel frames
    // with 1-based index > 1 + i*r_t
    data::VideoTensor v2 = random_video(25, 32, 32, 7);
    LatentVideo base2 = encode_video(v2, cfg, ps);
    for (int64_t li = 0; li < 4; ++li) {
        int64_t first_outside = 1 + li * cfg.temporal_ratio;  // 0-based pixel index
        if (first_outside >= 25) continue;
        data::VideoTensor p2 = v2;
        for (int64_t t = first_outside; t < 25; ++t)
            for (int64_t y = 0; y < 32; ++y)
                for (int64_t x = 0; x < 32; ++x)
                    for (int64_t c = 0; c < 3; ++c) p2.data.at4(t, y, x, c) = 1.0 - p2.data.at4(t, y, x, c);
        LatentVideo z2 = encode_video(p2, cfg, ps);
        for (int64_t i = 0; i <= li; ++i)
            for (int64_t j = 0; j < per; ++j)
                CHECK(z2.data.data[static_cast<size_t>(i * per + j)] ==
                      base2.data.data[static_cast<size_t>(i * per + j)]);
    }
}

TEST_CASE("decode shape inversion, clamping and reference guard") {
    CodecConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 3);
    LatentVideo z;
    z.data = Tensor({2, 4, 4, 8});
    data::VideoTensor v = decode_latents(z, cfg, ps);
    CHECK(v.data.shape == std::vector<int64_t>{9, 32, 32, 3});
    CHECK(v.data.all_finite());
    for (double x : v.data.data) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }

    z.has_reference = true;
    CHECK_THROWS_WITH_AS(decode_latents(z, cfg, ps), doctest::Contains("reference"), std::invalid_argument);
}

TEST_CASE("shape algebra roundtrip property") {
    CodecConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 4);
    for (auto [F, H, W] : {std::tuple<int64_t, int64_t, int64_t>{1, 16, 24}, {9, 32, 32}, {17, 16, 16}}) {
        data::VideoTensor v = random_video(F, H, W, static_cast<uint64_t>(F * 100 + H));
        LatentVideo z = encode_video(v, cfg, ps);
        data::VideoTensor back = decode_latents(z, cfg, ps);
        CHECK(back.data.shape == v.data.shape);
    }
}

TEST_CASE("encode rejects bad inputs") {
    CodecConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 8);
    data::VideoTensor v = random_video(8, 32, 32, 1);  // F=8 violates (F-1) % 8 == 0
    CHECK_THROWS_AS(encode_video(v, cfg, ps), std::invalid_argument);

    data::VideoTensor v2 = random_video(9, 32, 32, 1);
    v2.data.data[10] = std::nan("");
    CHECK_THROWS_WITH_AS(encode_video(v2, cfg, ps), doctest::Contains("finite"), std::invalid_argument);
}

TEST_CASE("encode_reference treats the image as a one-frame clip") {
    CodecConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 9);
    data::VideoTensor v = random_video(1, 32, 32, 12);
    Tensor ref = encode_reference(v.data.reshaped({32, 32, 3}), cfg, ps);
    LatentVideo z = encode_video(v, cfg, ps);
    CHECK(ref.shape == std::vector<int64_t>{4, 4, 8});
    CHECK(max_abs_diff(ref, z.data.reshaped({4, 4, 8})) == 0.0);
}

TEST_CASE("train_codec contracts: zero epochs, empty dataset") {
    CodecConfig cfg = toy_cfg();
    ParamStore ps = init_params(cfg, 10);
    Tensor before = ps.at("codec.sp1.w");

    std::vector<Tensor> clips;
    CHECK_THROWS_WITH_AS(train_codec(ps, cfg, clips, 1, 1e-3, 0), doctest::Contains("empty"), std::invalid_argument);

    clips.push_back(random_video(9, 32, 32, 3).data);
    TrainResult r = train_codec(ps, cfg, clips, 0, 1e-3, 0);
    CHECK(r.loss_curve.empty());
    CHECK(max_abs_diff(before, ps.at("codec.sp1.w")) == 0.0);
}

TEST_CASE("train_codec reduces reconstruction loss on a small corpus") {
    CodecConfig cfg = toy_cfg();
    cfg.hidden = 24;
    ParamStore ps = init_params(cfg, 11);
    data::SceneDistribution dist;
    std::vector<Tensor> clips;
    for (uint64_t s = 0; s < 6; ++s) {
        data::SceneSpec spec = data::sample_scene(dist, s);
        clips.push_back(data::make_pair(spec, 9).video.data);
    }
    TrainResult r = train_codec(ps, cfg, clips, 8, 2e-3, 1);
    CHECK(r.loss_curve.size() == 8);
    CHECK(r.final_loss < r.initial_loss);
}
