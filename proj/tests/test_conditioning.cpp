#include "editprop/conditioning.hpp"
#include "editprop/tokenizer.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace editprop;

namespace {

// Reference latent-mask rule: independent nested-loop check that a cell is 1
// only when every covered pixel is 1.
LatentMask latent_mask_oracle(const PixelMask& m, const CodecSpec& spec) {
    LatentMask lm(m.t / spec.temporal_factor, m.h / spec.spatial_factor,
                  m.w / spec.spatial_factor);
    for (int ti = 0; ti < lm.t; ++ti)
        for (int yi = 0; yi < lm.h; ++yi)
            for (int xi = 0; xi < lm.w; ++xi) {
                int covered = 0, total = 0;
                for (int dt = 0; dt < spec.temporal_factor; ++dt)
                    for (int dy = 0; dy < spec.spatial_factor; ++dy)
                        for (int dx = 0; dx < spec.spatial_factor; ++dx) {
                            ++total;
                            covered += m.at(ti * spec.temporal_factor + dt,
                                            yi * spec.spatial_factor + dy,
                                            xi * spec.spatial_factor + dx);
                        }
                lm.at(ti, yi, xi) = covered == total ? 1 : 0;
            }
    return lm;
}

PixelMask centered_square(int t, int h, int w, int side) {
    PixelMask r(t, h, w, 0);
    const int y0 = (h - side) / 2, x0 = (w - side) / 2;
    for (int ti = 0; ti < t; ++ti)
        for (int yi = y0; yi < y0 + side; ++yi)
            for (int xi = x0; xi < x0 + side; ++xi) r.at(ti, yi, xi) = 1;
    return r;
}

} // namespace

TEST_CASE("condition video: ones is identity, zeros blanks everything") {
    VideoTensor v = test_util::random_video(4, 8, 8, 3);
    PixelMask ones(4, 8, 8, 1);
    PixelMask zeros(4, 8, 8, 0);
    CHECK(build_condition_video(v, ones).data.data == v.data.data);
    for (float x : build_condition_video(v, zeros).data.data) CHECK(x == 0.0f);
}

TEST_CASE("condition video: default mask keeps frame 1 and blanks the rest") {
    VideoTensor v = test_util::random_video(13, 6, 6, 4);
    PixelMask m = make_mask(MaskConfigKind::DefaultI2V, 13, 6, 6);
    VideoTensor c = build_condition_video(v, m);
    for (int ci = 0; ci < 3; ++ci)
        for (int yi = 0; yi < 6; ++yi)
            for (int xi = 0; xi < 6; ++xi) {
                CHECK(c.data.at(ci, 0, yi, xi) == v.data.at(ci, 0, yi, xi));
                for (int ti = 1; ti < 13; ++ti) CHECK(c.data.at(ci, ti, yi, xi) == 0.0f);
            }
}

TEST_CASE("condition video: masked-out positions are exactly zero, kept ones exact") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        VideoTensor v = test_util::random_video(3, 6, 4, 100 + seed);
        PixelMask m = test_util::random_mask(3, 6, 4, 200 + seed);
        VideoTensor c = build_condition_video(v, m);
        for (int ci = 0; ci < 3; ++ci)
            for (int ti = 0; ti < 3; ++ti)
                for (int yi = 0; yi < 6; ++yi)
                    for (int xi = 0; xi < 4; ++xi) {
                        if (m.at(ti, yi, xi)) {
                            CHECK(c.data.at(ci, ti, yi, xi) == v.data.at(ci, ti, yi, xi));
                        } else {
                            CHECK(c.data.at(ci, ti, yi, xi) == 0.0f);
                        }
                    }
    }
    CHECK_THROWS_AS(
        build_condition_video(test_util::random_video(2, 4, 4, 1), PixelMask(2, 4, 6, 1)),
        ShapeError);
}

TEST_CASE("make_mask covers all six configurations") {
    const int t = 4, h = 8, w = 8;
    PixelMask region = centered_square(t, h, w, 4);

    PixelMask def = make_mask(MaskConfigKind::DefaultI2V, 13, h, w);
    CHECK(def.count_ones() == std::size_t(h) * w);

    CHECK(make_mask(MaskConfigKind::NoPreservation, t, h, w).count_ones() == 0);
    CHECK(make_mask(MaskConfigKind::AllPreservation, t, h, w).count_ones() ==
          std::size_t(t) * h * w);

    PixelMask sel = make_mask(MaskConfigKind::SelectivePreservation, t, h, w, &region);
    for (int ti = 0; ti < t; ++ti) {
        std::size_t ones = 0;
        for (int yi = 0; yi < h; ++yi)
            for (int xi = 0; xi < w; ++xi) ones += sel.at(ti, yi, xi);
        CHECK(ones == std::size_t(h) * w - 16);
    }

    PixelMask dis = make_mask(MaskConfigKind::Disentangle, t, h, w, &region);
    std::size_t frame1 = 0;
    for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi) frame1 += dis.at(0, yi, xi);
    CHECK(frame1 == std::size_t(h) * w);
    for (int ti = 1; ti < t; ++ti) {
        std::size_t ones = 0;
        for (int yi = 0; yi < h; ++yi)
            for (int xi = 0; xi < w; ++xi) ones += dis.at(ti, yi, xi);
        CHECK(ones == std::size_t(h) * w - 16);
    }

    PixelMask region1 = centered_square(1, h, w, 4); // 16 of 64 pixels -> 25%
    PixelMask app = make_mask(MaskConfigKind::Appearance, 1, h, w, &region1);
    CHECK(double(app.count_ones()) / (h * w) == doctest::Approx(0.75));
}

TEST_CASE("make_mask error paths") {
    CHECK_THROWS_AS(make_mask(MaskConfigKind::Disentangle, 4, 8, 8, nullptr), ShapeError);
    PixelMask wrong(4, 6, 6, 1);
    CHECK_THROWS_AS(make_mask(MaskConfigKind::SelectivePreservation, 4, 8, 8, &wrong), ShapeError);
    PixelMask r1 = centered_square(1, 8, 8, 2);
    CHECK_THROWS_AS(make_mask(MaskConfigKind::Appearance, 2, 8, 8, &r1), ShapeError);
}

TEST_CASE("make_mask degenerate regions reduce to the simple configurations") {
    const int t = 3, h = 6, w = 6;
    PixelMask empty(t, h, w, 0);
    PixelMask full(t, h, w, 1);
    CHECK(make_mask(MaskConfigKind::Disentangle, t, h, w, &empty).data ==
          make_mask(MaskConfigKind::AllPreservation, t, h, w).data);
    CHECK(make_mask(MaskConfigKind::SelectivePreservation, t, h, w, &full).data ==
          make_mask(MaskConfigKind::NoPreservation, t, h, w).data);
    // Full region on every frame turns Disentangle into the default I2V mask.
    CHECK(make_mask(MaskConfigKind::Disentangle, t, h, w, &full).data ==
          make_mask(MaskConfigKind::DefaultI2V, t, h, w).data);
}

TEST_CASE("single-frame region broadcasts across frames") {
    PixelMask region = centered_square(1, 8, 8, 4);
    PixelMask m = make_mask(MaskConfigKind::SelectivePreservation, 5, 8, 8, &region);
    for (int ti = 0; ti < 5; ++ti) CHECK(m.at(ti, 4, 4) == 0);
}

TEST_CASE("to_latent_mask: conservative all-covered rule") {
    CodecSpec spec; // spatial 2, temporal 1

    PixelMask ones(3, 8, 8, 1);
    CHECK(to_latent_mask(ones, spec).count_ones() == std::size_t(3) * 4 * 4);

    PixelMask one_zero = ones;
    one_zero.at(1, 5, 6) = 0;
    LatentMask lm = to_latent_mask(one_zero, spec);
    CHECK(lm.count_ones() == std::size_t(3) * 4 * 4 - 1);
    CHECK(lm.at(1, 2, 3) == 0);

    PixelMask odd(1, 6, 7, 1);
    CHECK_THROWS_AS(to_latent_mask(odd, spec), ShapeError);
}

TEST_CASE("to_latent_mask matches the brute-force oracle, including temporal grouping") {
    CodecSpec toy;
    CodecSpec temporal{2, 2, 24};
    for (uint64_t seed = 0; seed < 30; ++seed) {
        PixelMask m = test_util::random_mask(4, 8, 8, 500 + seed, 0.7);
        LatentMask a = to_latent_mask(m, toy);
        LatentMask b = latent_mask_oracle(m, toy);
        CHECK(a.data == b.data);
        LatentMask c = to_latent_mask(m, temporal);
        LatentMask d = latent_mask_oracle(m, temporal);
        CHECK(c.data == d.data);
    }
    // Disentangle-shaped mask through the oracle.
    PixelMask region = centered_square(4, 8, 8, 3);
    PixelMask dis = make_mask(MaskConfigKind::Disentangle, 4, 8, 8, &region);
    CHECK(to_latent_mask(dis, toy).data == latent_mask_oracle(dis, toy).data);
    LatentMask lm = to_latent_mask(dis, toy);
    for (int yi = 0; yi < lm.h; ++yi)
        for (int xi = 0; xi < lm.w; ++xi) CHECK(lm.at(0, yi, xi) == 1);
}

TEST_CASE("to_latent_mask is monotone") {
    CodecSpec spec;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        PixelMask m1 = test_util::random_mask(2, 6, 6, 900 + seed, 0.4);
        PixelMask m2 = m1;
        // m2 >= m1 pointwise
        test_util::TempDir unused("nop");
        Rng rng(1000 + seed);
        for (auto& v : m2.data)
            if (!v && rng.uniform() < 0.3) v = 1;
        LatentMask l1 = to_latent_mask(m1, spec);
        LatentMask l2 = to_latent_mask(m2, spec);
        for (std::size_t i = 0; i < l1.data.size(); ++i) CHECK(l1.data[i] <= l2.data[i]);
    }
}

TEST_CASE("assemble_bundle wires codec, mask, and prompt together") {
    ToyCodec codec;
    ToyTokenizer tok;
    VideoTensor v = test_util::random_video(4, 8, 8, 77);
    PixelMask ones(4, 8, 8, 1);
    PixelMask zeros(4, 8, 8, 0);
    auto prompt = compose_prompt(tok, "a scene").ids;

    auto b1 = assemble_bundle<float>(v, ones, prompt, codec);
    Array4<float> enc = codec.encode<float>(v);
    CHECK(b1.cond_latent.data == enc.data);
    CHECK(b1.cond_latent.t == b1.mask.t);
    CHECK(b1.cond_latent.h == b1.mask.h);
    CHECK(b1.cond_latent.w == b1.mask.w);
    CHECK(b1.prompt_tokens[0] == tok.special_token());

    auto b0 = assemble_bundle<float>(v, zeros, prompt, codec);
    for (float x : b0.cond_latent.data) CHECK(x == 0.0f);

    CHECK_THROWS_AS(assemble_bundle<float>(v, ones, {}, codec), ShapeError);
}

TEST_CASE("substitute_first_frame") {
    VideoTensor v = test_util::random_video(3, 6, 6, 5);
    VideoTensor same = frame_at(v, 0);
    CHECK(substitute_first_frame(v, same).data.data == v.data.data);

    VideoTensor edited = test_util::random_video(1, 6, 6, 6);
    VideoTensor out = substitute_first_frame(v, edited);
    for (int ci = 0; ci < 3; ++ci)
        for (int yi = 0; yi < 6; ++yi)
            for (int xi = 0; xi < 6; ++xi) {
                CHECK(out.data.at(ci, 0, yi, xi) == edited.data.at(ci, 0, yi, xi));
                CHECK(out.data.at(ci, 1, yi, xi) == v.data.at(ci, 1, yi, xi));
                CHECK(out.data.at(ci, 2, yi, xi) == v.data.at(ci, 2, yi, xi));
            }

    VideoTensor wrong = test_util::random_video(1, 4, 6, 7);
    CHECK_THROWS_AS(substitute_first_frame(v, wrong), ShapeError);
    CHECK_THROWS_AS(substitute_first_frame(v, v), ShapeError);
}
