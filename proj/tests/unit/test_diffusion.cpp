// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "fd_oracle.hpp"

#include "wildsplat/diffusion/attention.hpp"
#include "wildsplat/diffusion/codec.hpp"
#include "wildsplat/diffusion/ddim.hpp"
#include "wildsplat/diffusion/denoiser.hpp"
#include "wildsplat/diffusion/schedule.hpp"
#include "wildsplat/metrics/losses.hpp"
#include "wildsplat/tensor/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace wildsplat;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig c;
    c.latent_size = 8;
    c.widths = {8, 8, 16};
    c.temb_dim = 16;
    c.groups = 4;
    return c;
}

/// ᾱ_t computed directly from the linear β grid.
double alpha_bar_oracle(int t, int T = 1000, double b0 = 1e-4, double b1 = 0.02) {
    double ab = 1.0;
    for (int s = 0; s <= t; ++s) ab *= 1.0 - (b0 + (b1 - b0) * s / (T - 1));
    return ab;
}

Tensor brute_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    const int64_t n = q.size(0), m = k.size(0), d = q.size(1), dv = v.size(1);
    std::vector<float> out(static_cast<size_t>(n * dv));
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> s(static_cast<size_t>(m));
        double mx = -1e300;
        for (int64_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int64_t c = 0; c < d; ++c) acc += double(q[i * d + c]) * k[j * d + c];
            s[j] = acc / std::sqrt(double(d));
            mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (int64_t c = 0; c < dv; ++c) {
            double acc = 0.0;
            for (int64_t j = 0; j < m; ++j) acc += s[j] / z * v[j * dv + c];
            out[i * dv + c] = static_cast<float>(acc);
        }
    }
    return Tensor({n, dv}, std::move(out));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

std::vector<Tensor> smooth_latents(int n, uint64_t seed, int64_t size = 8) {
    // Structured latents: low-frequency waves per channel.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<Tensor> out;
    for (int k = 0; k < n; ++k) {
        Tensor t({4, size, size});
        auto d = t.mutable_data();
        for (int64_t c = 0; c < 4; ++c) {
            const float fx = 0.3f + 0.5f * u(rng), fy = 0.3f + 0.5f * u(rng), ph = 6.0f * u(rng);
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x) d[(c * size + y) * size + x] = std::sin(fx * x + fy * y + ph);
        }
        out.push_back(t);
    }
    return out;
}

ImageRGB wave_image(std::mt19937_64& rng, int64_t size) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t({3, size, size});
    auto d = t.mutable_data();
    const float fx = 0.05f + 0.2f * u(rng), fy = 0.05f + 0.2f * u(rng), ph = 6.0f * u(rng);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x)
                d[(c * size + y) * size + x] = 0.5f + 0.4f * std::sin(fx * x + fy * y + ph + 0.7f * c);
    return t;
}

} // namespace

TEST(Schedule, MatchesProductOfBetas) {
    NoiseSchedule s;
    for (int t : {0, 1, 19, 500, 980, 999}) EXPECT_NEAR(s.alpha_bar(t), alpha_bar_oracle(t), 1e-12 + 1e-9 * alpha_bar_oracle(t));
    EXPECT_EQ(s.stride(), 20);
    EXPECT_EQ(s.timestep(0), 0);
    EXPECT_EQ(s.timestep(49), 980);
    EXPECT_EQ(s.alpha_bar_prev(0), 1.0);
    EXPECT_EQ(s.alpha_bar_prev(7), s.alpha_bar(s.timestep(6)));
    EXPECT_THROW(s.alpha_bar(1000), DomainError);
    EXPECT_THROW(s.alpha_bar(-1), DomainError);
}

TEST(Schedule, ForwardDiffuseMoments) {
    NoiseSchedule s;
    std::mt19937_64 rng(4);
    const int t = 300;
    const double ab = s.alpha_bar(t);
    const Tensor x0({1, 1, 1}, 0.8f);
    const int n = 20000;
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = forward_diffuse(s, x0, t, Tensor::randn({1, 1, 1}, rng))[0];
        m += x;
        m2 += x * x;
    }
    m /= n;
    const double var = m2 / n - m * m;
    // Standard errors are about 0.007 for the mean and 0.01 for the variance.
    EXPECT_NEAR(m, std::sqrt(ab) * 0.8, 0.03);
    EXPECT_NEAR(var, 1.0 - ab, 0.04);
}

TEST(Ddim, ZeroPredictorClosedForm) {
    NoiseSchedule s;
    std::mt19937_64 rng(5);
    const auto x0 = Tensor::randn({4, 8, 8}, rng);
    const EpsilonFn zero = [](const Tensor& x, int, int) { return Tensor(x.shape()); };
    const auto xT = ddim_invert(s, zero, x0);
    const double k = std::sqrt(alpha_bar_oracle(980));
    for (int64_t i = 0; i < x0.numel(); ++i) EXPECT_NEAR(xT[i], k * x0[i], 1e-6 * std::abs(k * x0[i]) + 1e-12);
    const auto back = ddim_sample(s, zero, xT);
    for (int64_t i = 0; i < x0.numel(); ++i) EXPECT_NEAR(back[i], x0[i], 1e-5);
}

TEST(Ddim, RejectsNonFinitePrediction) {
    NoiseSchedule s;
    const EpsilonFn bad = [](const Tensor& x, int t, int) {
        return Tensor(x.shape(), t == 500 ? std::nanf("") : 0.0f);
    };
    try {
        ddim_sample(s, bad, Tensor({4, 8, 8}, 1.0f));
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("t=500"), std::string::npos) << e.what();
    }
}

TEST(Attention, MatchesBruteForce) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto q = Tensor::randn({7, 5}, rng, 2.0f);
        const auto k = Tensor::randn({9, 5}, rng, 2.0f);
        const auto v = Tensor::randn({9, 3}, rng);
        const auto a = self_attention(q, k, v), b = brute_attention(q, k, v);
        for (int64_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
    }
    EXPECT_THROW(self_attention(Tensor({3, 4}), Tensor({3, 5}), Tensor({3, 2})), DimensionError);
}

TEST(Attention, InjectionReductions) {
    std::mt19937_64 rng(7);
    const auto q = Tensor::randn({16, 6}, rng), k = Tensor::randn({16, 6}, rng);
    const auto qe = Tensor::randn({16, 6}, rng), ke = Tensor::randn({16, 6}, rng);
    const auto ve = Tensor::randn({16, 6}, rng);
    AttentionTape tape;
    tape.record(3, BranchRole::Reconstruction, {q, k, Tensor::randn({16, 6}, rng)});
    tape.record(3, BranchRole::Enhancement, {qe, ke, ve});

    // Full injection is attention with the reconstruction Q, K.
    EXPECT_TRUE(bit_equal(injected_attention(tape, 3, ve, InjectionMode::Full), self_attention(q, k, ve)));
    // With matching Q, K it is plain attention.
    AttentionTape same;
    same.record(0, BranchRole::Reconstruction, {qe, ke, ve});
    EXPECT_TRUE(bit_equal(injected_attention(same, 0, ve, InjectionMode::Full), self_attention(qe, ke, ve)));
    // Masked: M = 0 everywhere reduces to full injection, M = 1 to none.
    const std::vector<float> zeros(16, 0.0f), ones(16, 1.0f);
    EXPECT_TRUE(bit_equal(injected_attention(tape, 3, ve, InjectionMode::Masked, zeros),
                          injected_attention(tape, 3, ve, InjectionMode::Full)));
    EXPECT_TRUE(bit_equal(injected_attention(tape, 3, ve, InjectionMode::Masked, ones), self_attention(qe, ke, ve)));

    EXPECT_THROW(injected_attention(tape, 4, ve, InjectionMode::Full), StateError);
    EXPECT_THROW(tape.record(3, BranchRole::Reconstruction, {q, k, ve}), StateError);
    EXPECT_THROW(injected_attention(tape, 3, ve, InjectionMode::Masked, std::vector<float>(15, 0.0f)),
                 DimensionError);
}

TEST(Attention, BlendTokensOracle) {
    std::mt19937_64 rng(8);
    const auto a = Tensor::randn({5, 3}, rng), b = Tensor::randn({5, 3}, rng);
    const std::vector<float> m{1, 0, 0, 1, 0};
    const auto out = blend_tokens(a, b, m);
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t c = 0; c < 3; ++c) EXPECT_EQ(out[i * 3 + c], m[i] ? a[i * 3 + c] : b[i * 3 + c]);
}

TEST(Denoiser, ShapeAndZeroInitOutput) {
    DenoiserModel model(tiny_config(), 1);
    std::mt19937_64 rng(9);
    const auto x = Tensor::randn({4, 8, 8}, rng);
    const auto y = model.forward(x, 400);
    EXPECT_EQ(y.shape(), x.shape());
    // The output convolution starts at zero.
    for (float v : y.data()) EXPECT_EQ(v, 0.0f);
    EXPECT_THROW(model.forward(Tensor({4, 16, 16}), 0), DimensionError);
}

TEST(Denoiser, HooksAreNonInvasive) {
    DenoiserModel model(tiny_config(), 2);
    // Give the output layer weight so the attention path is visible.
    std::mt19937_64 rng(10);
    for (auto& [name, t] : model.named_parameters())
        if (name == "out.w" || name == "attn.o" || name.ends_with("conv2.w")) {
            auto d = const_cast<Tensor&>(t).mutable_data();
            for (auto& v : d) v = 0.2f * std::normal_distribution<float>()(rng);
        }
    const auto x = Tensor::randn({4, 8, 8}, rng);
    const AttentionFn plain = [](const Tensor& q, const Tensor& k, const Tensor& v) { return self_attention(q, k, v); };
    EXPECT_TRUE(bit_equal(model.forward(x, 100), model.forward(x, 100, &plain)));
    const AttentionFn empty;
    EXPECT_TRUE(bit_equal(model.forward(x, 100), model.forward(x, 100, &empty)));
    const AttentionFn uniform = [](const Tensor& q, const Tensor& k, const Tensor& v) {
        return self_attention(scale(q, 0.0f), k, v);
    };
    EXPECT_FALSE(bit_equal(model.forward(x, 100), model.forward(x, 100, &uniform)));

    const AttentionFn wrong = [](const Tensor&, const Tensor&, const Tensor&) { return Tensor({3, 3}); };
    EXPECT_THROW(model.forward(x, 100, &wrong), DimensionError);
}

TEST(Denoiser, LossGradientMatchesFiniteDifferences) {
    DenoiserModel model(tiny_config(), 3);
    NoiseSchedule s;
    std::mt19937_64 rng(11);
    const auto x0 = smooth_latents(1, 3)[0];
    const auto eps = Tensor::randn({4, 8, 8}, rng);
    // Make the zero-initialised layers active so gradients reach early weights.
    for (auto& [name, t] : model.named_parameters())
        if (name == "out.w" || name.ends_with("conv2.w")) {
            auto d = const_cast<Tensor&>(t).mutable_data();
            for (auto& v : d) v = 0.1f * std::normal_distribution<float>()(rng);
        }
    for (const std::string target : {"in.w", "attn.q", "out.w"}) {
        Tensor* w = nullptr;
        for (auto& [name, t] : model.named_parameters())
            if (name == target) w = const_cast<Tensor*>(&t);
        ASSERT_NE(w, nullptr);
        w->zero_grad();
        denoising_loss(model, s, x0, 260, eps).backward();
        const std::vector<float> analytic(w->grad().begin(), w->grad().begin() + 2);
        auto d = w->mutable_data();
        std::vector<float> slice(d.begin(), d.begin() + 2);
        const auto numeric = wildsplat::testing::central_differences(slice, [&] {
            d[0] = slice[0];
            d[1] = slice[1];
            NoGradGuard ng;
            return double(denoising_loss(model, s, x0, 260, eps).item());
        });
        d[0] = slice[0];
        d[1] = slice[1];
        EXPECT_LT(wildsplat::testing::relative_error(analytic, numeric, 1e-4), 2e-2) << target;
    }
}

TEST(Denoiser, WeightedLossOracle) {
    DenoiserModel model(tiny_config(), 4);
    NoiseSchedule s;
    std::mt19937_64 rng(12);
    for (auto& [name, t] : model.named_parameters())
        if (name == "out.w") {
            auto d = const_cast<Tensor&>(t).mutable_data();
            for (auto& v : d) v = 0.2f * std::normal_distribution<float>()(rng);
        }
    const auto x0 = smooth_latents(1, 4)[0];
    const auto eps = Tensor::randn({4, 8, 8}, rng);
    const auto w = Tensor::uniform({1, 8, 8}, rng, 0.0f, 1.0f);
    NoGradGuard ng;
    const auto pred = model.forward(forward_diffuse(s, x0, 500, eps), 500);
    double num = 0.0, den = 0.0;
    for (int64_t c = 0; c < 4; ++c)
        for (int64_t i = 0; i < 64; ++i) {
            const double e = double(eps[c * 64 + i]) - pred[c * 64 + i];
            num += w[i] * e * e;
            den += w[i];
        }
    EXPECT_NEAR(denoising_loss(model, s, x0, 500, eps, w).item(), num / den, 1e-5 * num / den);
    EXPECT_NEAR(denoising_loss(model, s, x0, 500, eps, Tensor({1, 8, 8}, 1.0f)).item(),
                denoising_loss(model, s, x0, 500, eps).item(), 1e-6);
}

TEST(Training, LossHalvesAcrossSeeds) {
    NoiseSchedule s;
    const auto latents = smooth_latents(6, 21);
    for (uint64_t seed : {0u, 1u, 2u}) {
        DiffusionTrainOptions o;
        o.steps = 300;
        o.batch = 2;
        o.lr = 2e-3f;
        o.seed = seed;
        std::vector<double> log;
        const auto trained = train_base(DenoiserModel(tiny_config(), seed), latents, s, o, &log);
        ASSERT_EQ(log.size(), 300u);
        // Compare window means; single batches are noisy.
        double head = 0.0, tail = 0.0;
        for (int i = 0; i < 30; ++i) head += log[i], tail += log[log.size() - 1 - i];
        EXPECT_LT(tail, 0.5 * head) << "seed " << seed;
        EXPECT_EQ(trained.variant(), DenoiserVariant::Base);
    }
}

TEST(Training, DeterministicAndFinetuneContract) {
    NoiseSchedule s;
    const auto latents = smooth_latents(4, 22);
    DiffusionTrainOptions o;
    o.steps = 40;
    o.batch = 2;
    o.seed = 5;
    const DenoiserModel init(tiny_config(), 0);
    const auto a = train_base(init, latents, s, o);
    const auto b = train_base(init, latents, s, o);
    EXPECT_TRUE(a.same_weights(b));
    EXPECT_FALSE(a.same_weights(init));

    FinetuneOptions f;
    f.iters = 0;
    const auto same = finetune_constrained(a, {latents[0]}, s, f);
    EXPECT_TRUE(same.same_weights(a));
    EXPECT_EQ(same.variant(), DenoiserVariant::Constrained);
    EXPECT_EQ(a.variant(), DenoiserVariant::Base);
}

TEST(Training, FinetuneFitsAnchorsBetterThanBase) {
    NoiseSchedule s;
    DiffusionTrainOptions o;
    o.steps = 150;
    o.batch = 2;
    const auto base = train_base(DenoiserModel(tiny_config(), 0), smooth_latents(8, 23), s, o);
    const auto anchors = smooth_latents(2, 99);
    FinetuneOptions f;
    f.iters = 150;
    f.lr = 1e-3f;
    const auto tuned = finetune_constrained(base, anchors, s, f);
    EXPECT_FALSE(tuned.same_weights(base));

    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> td(0, 999);
    double lb = 0.0, lt = 0.0;
    NoGradGuard ng;
    for (int i = 0; i < 64; ++i) {
        const auto& x0 = anchors[i % 2];
        const auto eps = Tensor::randn(x0.shape(), rng);
        const int t = td(rng);
        lb += denoising_loss(base, s, x0, t, eps).item();
        lt += denoising_loss(tuned, s, x0, t, eps).item();
    }
    EXPECT_LT(lt, lb);
}

TEST(Training, SaveLoadRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "wildsplat_test_denoiser";
    std::filesystem::remove_all(dir);
    DenoiserModel m(tiny_config(), 17);
    m.set_variant(DenoiserVariant::Constrained);
    m.save(dir);
    const auto back = DenoiserModel::load(dir);
    EXPECT_TRUE(back.same_weights(m));
    EXPECT_EQ(back.variant(), DenoiserVariant::Constrained);
    EXPECT_EQ(back.parameter_count(), m.parameter_count());
    std::filesystem::remove_all(dir);
    EXPECT_THROW(DenoiserModel::load(dir), IoError);
}

TEST(DualBranch, WithoutInjectionBranchesMatchPlainSampling) {
    NoiseSchedule s(1000, 10);
    DiffusionTrainOptions o;
    o.steps = 30;
    o.batch = 2;
    const auto base = train_base(DenoiserModel(tiny_config(), 0), smooth_latents(4, 24), s, o);
    FinetuneOptions f;
    f.iters = 20;
    f.lr = 1e-3f;
    const auto constrained = finetune_constrained(base, smooth_latents(1, 25), s, f);
    std::mt19937_64 rng(14);
    const auto xT = Tensor::randn({4, 8, 8}, rng);

    DualBranchOptions plain;
    plain.inject = false;
    AttentionTape tape;
    const auto r = dual_branch_denoise(base, constrained, s, xT, plain, &tape);
    EXPECT_TRUE(bit_equal(r.reconstruction, ddim_sample(base, s, xT)));
    EXPECT_TRUE(bit_equal(r.enhancement, ddim_sample(constrained, s, xT)));
    EXPECT_EQ(tape.size(), 20u);

    // Injecting into an identical model reproduces the reconstruction.
    const auto same = dual_branch_denoise(base, base, s, xT);
    EXPECT_TRUE(bit_equal(same.enhancement, same.reconstruction));
    const auto injected = dual_branch_denoise(base, constrained, s, xT);
    EXPECT_FALSE(bit_equal(injected.enhancement, r.enhancement));

    // Masked fusion with M = 0 is full injection.
    DualBranchOptions masked;
    masked.mode = InjectionMode::Masked;
    masked.token_mask.assign(4, 0.0f);
    EXPECT_TRUE(bit_equal(dual_branch_denoise(base, constrained, s, xT, masked).enhancement, injected.enhancement));
}

TEST(Codec, SpaceToDepthLayout) {
    std::mt19937_64 rng(15);
    const auto x = Tensor::randn({3, 8, 12}, rng);
    const auto y = space_to_depth(x, 4);
    ASSERT_EQ(y.shape(), (Shape{48, 2, 3}));
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t py = 0; py < 8; ++py)
            for (int64_t px = 0; px < 12; ++px) {
                const int64_t oc = (c * 4 + py % 4) * 4 + px % 4;
                EXPECT_EQ(y[(oc * 2 + py / 4) * 3 + px / 4], x[(c * 8 + py) * 12 + px]);
            }
    EXPECT_TRUE(bit_equal(depth_to_space(y, 4), x));
    EXPECT_THROW(space_to_depth(Tensor({3, 6, 8}), 4), DimensionError);
}

TEST(Codec, PrincipalSubspaceReconstruction) {
    std::mt19937_64 rng(16);
    std::vector<ImageRGB> train;
    for (int i = 0; i < 12; ++i) train.push_back(wave_image(rng, 32));
    const auto codec = LatentCodec::fit(train, 4);
    EXPECT_EQ(codec.latent_channels(), 4);
    EXPECT_EQ(codec.patch_dim(), 48);
    const auto z = codec.encode(train[0]);
    ASSERT_EQ(z.shape(), (Shape{4, 8, 8}));

    // The latent code of a decoded latent is the latent itself (projection).
    const auto z2 = codec.encode(codec.decode(z));
    for (int64_t i = 0; i < z.numel(); ++i) EXPECT_NEAR(z2[i], z[i], 1e-4);

    // Latents are standardized over the fitting set.
    double m = 0.0, v = 0.0;
    int64_t n = 0;
    for (const auto& im : train) {
        const auto e = codec.encode(im);
        for (int64_t i = 0; i < 64; ++i, ++n) {
            m += e[i];
            v += double(e[i]) * e[i];
        }
    }
    EXPECT_NEAR(m / n, 0.0, 1e-3);
    EXPECT_NEAR(v / n, 1.0, 1e-2);

    // Held-out smooth images reconstruct well.
    for (int i = 0; i < 3; ++i) {
        const auto im = wave_image(rng, 32);
        EXPECT_GT(psnr(codec.decode_image(codec.encode(im)), im), 30.0);
    }

    const auto dir = std::filesystem::temp_directory_path() / "wildsplat_test_codec";
    codec.save(dir);
    const auto back = LatentCodec::load(dir);
    EXPECT_TRUE(bit_equal(back.encode(train[1]), codec.encode(train[1])));
    std::filesystem::remove_all(dir);
}
