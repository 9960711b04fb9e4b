// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/diffusion/denoiser.hpp"

#include "wildsplat/tensor/io.hpp"
#include "wildsplat/tensor/ops.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace wildsplat {

namespace {

Tensor he_normal(Shape shape, int64_t fan_in, std::mt19937_64& rng, float gain = 1.0f) {
    return Tensor::randn(shape, rng, gain * std::sqrt(2.0f / static_cast<float>(fan_in)));
}

int64_t groups_for(int64_t channels, int64_t groups) {
    while (channels % groups != 0) --groups;
    return groups;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

} // namespace

void DenoiserConfig::validate() const {
    if (latent_channels <= 0 || temb_dim <= 0 || groups <= 0) throw DomainError("denoiser sizes must be positive");
    if (latent_size % 4 != 0) throw DomainError("latent size must be divisible by 4");
    for (auto w : widths)
        if (w <= 0) throw DomainError("denoiser widths must be positive");
}

const char* variant_name(DenoiserVariant v) { return v == DenoiserVariant::Base ? "base" : "constrained"; }

DenoiserModel::DenoiserModel(DenoiserConfig config, uint64_t seed) : config_(config) {
    config_.validate();
    build(seed);
}

DenoiserModel::DenoiserModel(DenoiserConfig config, Uninitialized) : config_(config) { config_.validate(); }

Tensor& DenoiserModel::add_param(const std::string& name, Tensor value) {
    value.set_requires_grad(true);
    params_.emplace_back(name, std::move(value));
    return params_.back().second;
}

const Tensor& DenoiserModel::p(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw StateError("denoiser has no parameter " + name);
}

void DenoiserModel::build(uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto [w0, w1, w2] = config_.widths;
    const int64_t c = config_.latent_channels, e = config_.temb_dim;

    add_param("temb.w1", he_normal({e / 2, e}, e / 2, rng));
    add_param("temb.b1", Tensor({e}));
    add_param("temb.w2", he_normal({e, e}, e, rng));
    add_param("temb.b2", Tensor({e}));

    auto conv = [&](const std::string& name, int64_t cin, int64_t cout, int64_t k, float gain) {
        add_param(name + ".w", gain == 0.0f ? Tensor({cout, cin, k, k}) : he_normal({cout, cin, k, k}, cin * k * k, rng, gain));
        add_param(name + ".b", Tensor({cout}));
    };
    auto res = [&](const std::string& name, int64_t cin, int64_t cout) {
        conv(name + ".conv1", cin, cout, 3, 1.0f);
        add_param(name + ".temb.w", he_normal({e, cout}, e, rng, 0.5f));
        add_param(name + ".temb.b", Tensor({cout}));
        conv(name + ".conv2", cout, cout, 3, 0.0f);
        if (cin != cout) conv(name + ".skip", cin, cout, 1, 1.0f);
    };

    conv("in", c, w0, 3, 1.0f);
    res("enc0", w0, w0);
    conv("down0", w0, w1, 3, 1.0f);
    res("enc1", w1, w1);
    conv("down1", w1, w2, 3, 1.0f);
    res("mid0", w2, w2);
    for (const char* n : {"attn.q", "attn.k", "attn.v"}) add_param(n, he_normal({w2, w2}, w2, rng, 0.7071f));
    add_param("attn.o", Tensor({w2, w2}));
    add_param("attn.o_b", Tensor({w2}));
    res("mid1", w2, w2);
    conv("up1", w2, w1, 3, 1.0f);
    res("dec1", 2 * w1, w1);
    conv("up0", w1, w0, 3, 1.0f);
    res("dec0", 2 * w0, w0);
    conv("out", w0, c, 3, 0.0f);
}

Tensor timestep_embedding(int t, int64_t dim) {
    const int64_t half = dim / 2;
    std::vector<float> v(static_cast<size_t>(2 * half));
    for (int64_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        v[static_cast<size_t>(i)] = static_cast<float>(std::sin(t * freq));
        v[static_cast<size_t>(half + i)] = static_cast<float>(std::cos(t * freq));
    }
    return Tensor({1, 2 * half}, std::move(v));
}

Tensor DenoiserModel::res_block(const std::string& name, const Tensor& x, const Tensor& temb) const {
    const int64_t cin = x.size(0);
    const int64_t cout = p(name + ".conv1.b").numel();
    Tensor h = conv2d(silu(group_norm(x, groups_for(cin, config_.groups))), p(name + ".conv1.w"), p(name + ".conv1.b"), 1, 1);
    const Tensor shift = linear(temb, p(name + ".temb.w"), p(name + ".temb.b"));
    h = add(h, reshape(shift, {cout, 1, 1}));
    h = conv2d(silu(group_norm(h, groups_for(cout, config_.groups))), p(name + ".conv2.w"), p(name + ".conv2.b"), 1, 1);
    const Tensor skip = cin == cout ? x : conv2d(x, p(name + ".skip.w"), p(name + ".skip.b"), 1, 0);
    return add(skip, h);
}

Tensor DenoiserModel::attention_block(const Tensor& x, const AttentionFn* attention) const {
    const int64_t c = x.size(0), hw = x.size(1) * x.size(2);
    const Tensor tokens = transpose(reshape(group_norm(x, groups_for(c, config_.groups)), {c, hw}));
    const Tensor q = matmul(tokens, p("attn.q"));
    const Tensor k = matmul(tokens, p("attn.k"));
    const Tensor v = matmul(tokens, p("attn.v"));
    const Tensor f = attention && *attention ? (*attention)(q, k, v) : self_attention(q, k, v);
    if (f.shape() != Shape{hw, c}) throw DimensionError("attention replacement returned " + shape_str(f.shape()));
    const Tensor o = add(matmul(f, p("attn.o")), p("attn.o_b"));
    return add(x, reshape(transpose(o), x.shape()));
}

Tensor DenoiserModel::forward(const Tensor& x, int t, const AttentionFn* attention) const {
    const int64_t c = config_.latent_channels, s = config_.latent_size;
    if (x.shape() != Shape{c, s, s})
        throw DimensionError("denoiser input " + shape_str(x.shape()) + ", expected " + shape_str({c, s, s}));
    Tensor temb = timestep_embedding(t, config_.temb_dim / 2);
    temb = silu(linear(temb, p("temb.w1"), p("temb.b1")));
    temb = silu(linear(temb, p("temb.w2"), p("temb.b2")));

    Tensor h = conv2d(x, p("in.w"), p("in.b"), 1, 1);
    const Tensor skip0 = res_block("enc0", h, temb);
    h = conv2d(skip0, p("down0.w"), p("down0.b"), 2, 1);
    const Tensor skip1 = res_block("enc1", h, temb);
    h = conv2d(skip1, p("down1.w"), p("down1.b"), 2, 1);
    h = res_block("mid0", h, temb);
    h = attention_block(h, attention);
    h = res_block("mid1", h, temb);
    h = conv2d(upsample_nearest2(h), p("up1.w"), p("up1.b"), 1, 1);
    h = res_block("dec1", concat0(h, skip1), temb);
    h = conv2d(upsample_nearest2(h), p("up0.w"), p("up0.b"), 1, 1);
    h = res_block("dec0", concat0(h, skip0), temb);
    h = silu(group_norm(h, groups_for(h.size(0), config_.groups)));
    return conv2d(h, p("out.w"), p("out.b"), 1, 1);
}

std::vector<Tensor> DenoiserModel::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : params_) out.push_back(t);
    return out;
}

int64_t DenoiserModel::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

DenoiserModel DenoiserModel::clone() const {
    DenoiserModel out(config_, Uninitialized{});
    out.variant_ = variant_;
    for (const auto& [n, t] : params_) out.add_param(n, t.clone());
    return out;
}

bool DenoiserModel::same_weights(const DenoiserModel& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (size_t i = 0; i < params_.size(); ++i) {
        const auto& a = params_[i].second;
        const auto& b = other.params_[i].second;
        if (params_[i].first != other.params_[i].first || a.shape() != b.shape()) return false;
        if (!std::equal(a.data().begin(), a.data().end(), b.data().begin())) return false;
    }
    return true;
}

void DenoiserModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "params");
    std::ofstream out(dir / "manifest.txt");
    out << "variant " << variant_name(variant_) << "\nlatent_channels " << config_.latent_channels << "\nlatent_size "
        << config_.latent_size << "\nwidths " << config_.widths[0] << ' ' << config_.widths[1] << ' '
        << config_.widths[2] << "\ntemb_dim " << config_.temb_dim << "\ngroups " << config_.groups << "\nparams "
        << params_.size() << '\n';
    for (const auto& [n, t] : params_) {
        out << "param " << n << '\n';
        save_tensor(dir / "params" / (n + ".sgsw"), t);
    }
    if (!out) throw IoError("failed writing denoiser manifest in " + dir.string());
}

DenoiserModel DenoiserModel::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw IoError("missing denoiser manifest in " + dir.string());
    DenoiserConfig cfg;
    DenoiserVariant variant = DenoiserVariant::Base;
    std::vector<std::string> names;
    std::string key;
    size_t count = 0;
    while (in >> key) {
        if (key == "variant") {
            std::string v;
            in >> v;
            if (v == "base") variant = DenoiserVariant::Base;
            else if (v == "constrained") variant = DenoiserVariant::Constrained;
            else throw IoError("unknown denoiser variant " + v);
        } else if (key == "latent_channels") in >> cfg.latent_channels;
        else if (key == "latent_size") in >> cfg.latent_size;
        else if (key == "widths") in >> cfg.widths[0] >> cfg.widths[1] >> cfg.widths[2];
        else if (key == "temb_dim") in >> cfg.temb_dim;
        else if (key == "groups") in >> cfg.groups;
        else if (key == "params") in >> count;
        else if (key == "param") {
            std::string n;
            in >> n;
            names.push_back(n);
        } else throw IoError("unknown denoiser manifest key " + key);
    }
    if (names.size() != count) throw IoError("denoiser manifest parameter count mismatch");
    // Build once to learn the expected layout, then replace every tensor.
    DenoiserModel model(cfg, 0);
    if (model.params_.size() != names.size()) throw IoError("denoiser checkpoint does not match architecture");
    for (size_t i = 0; i < names.size(); ++i) {
        auto& [n, t] = model.params_[i];
        if (n != names[i]) throw IoError("denoiser parameter order mismatch at " + names[i]);
        Tensor loaded = load_tensor(dir / "params" / (n + ".sgsw"));
        if (loaded.shape() != t.shape()) throw IoError("denoiser parameter " + n + " has wrong shape");
        t = loaded.set_requires_grad(true);
    }
    model.variant_ = variant;
    return model;
}

} // namespace wildsplat
