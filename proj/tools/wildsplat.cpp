// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

// Command-line entry points: synth, train, render, eval, enhance, inpaint.

#include "run_config.hpp"

#include "wildsplat/cnve/enhance.hpp"
#include "wildsplat/occlusion/inpaint.hpp"
#include "wildsplat/pipeline/experiment.hpp"
#include "wildsplat/psts/trainer.hpp"
#include "wildsplat/synth/dataset.hpp"
#include "wildsplat/synth/scene.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <limits>
#include <optional>

namespace fs = std::filesystem;
using namespace wildsplat;
using wildsplat::cli::RunConfig;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

/// Keys that name locations rather than behaviour; they stay out of the
/// checkpoint hash so identical runs in different directories match.
const std::vector<std::string> kPathKeys{"out", "data", "prior_cache"};

std::map<std::string, std::string> synth_defaults() {
    const SceneSpec s;
    return {{"seed", "0"},
            {"out", ""},
            {"n_train", std::to_string(s.n_train)},
            {"n_test", std::to_string(s.n_test)},
            {"image_size", std::to_string(s.image_size)},
            {"occluders", std::to_string(s.occluders)},
            {"gain_range", fmt::format("{}", s.gain_range)},
            {"gamma_range", fmt::format("{}", s.gamma_range)},
            {"white_balance_range", fmt::format("{}", s.white_balance_range)}};
}

std::map<std::string, std::string> train_defaults() {
    const PriorConfig p;
    const FinetuneOptions f;
    const TrainerConfig t;
    const DenseInitOptions d;
    return {{"seed", "0"},
            {"out", ""},
            {"data", ""},
            {"scene", ""},
            {"total_iters", "750"},
            {"tau_c", "auto"},
            {"tau_o", "auto"},
            {"beta", fmt::format("{}", t.schedule.beta)},
            {"progressive", "true"},
            {"pool_size", std::to_string(t.pool_size)},
            {"delta_frac", fmt::format("{}", t.delta_frac)},
            {"refresh_every", std::to_string(t.refresh_every)},
            {"reference_view", std::to_string(t.reference_view)},
            {"lambda1", fmt::format("{}", t.weights.lambda1)},
            {"lambda2", fmt::format("{}", t.weights.lambda2)},
            {"lambda3", fmt::format("{}", t.weights.lambda3)},
            {"ddim_steps", "50"},
            {"dilation", std::to_string(InpaintOptions{}.dilation)},
            {"jitter", fmt::format("{}", d.jitter)},
            {"spurious_frac", fmt::format("{}", d.spurious_frac)},
            {"prior_cache", ""},
            {"prior_seed", "0"},
            {"prior_scenes", std::to_string(p.scenes)},
            {"prior_views", std::to_string(p.views_per_scene)},
            {"prior_steps", std::to_string(p.train_steps)},
            {"finetune_iters", std::to_string(f.iters)},
            {"finetune_lr", fmt::format("{}", f.lr)},
            {"checkpoint_every", "0"},
            {"resume", "false"}};
}

std::string behaviour_hash(const RunConfig& cfg) {
    RunConfig copy = cfg;
    for (const auto& k : kPathKeys)
        if (copy.has(k)) copy.set(k, "");
    return fingerprint(copy.dump());
}

const std::string& require(const RunConfig& cfg, const std::string& key) {
    const auto& v = cfg.str(key);
    if (v.empty()) throw DomainError("--" + key + " is required");
    return v;
}

/// "auto" keeps the scaled default, "inf" means never (total_iters).
int iteration_key(const RunConfig& cfg, const std::string& key, int scaled, int total) {
    const auto& v = cfg.str(key);
    if (v == "auto") return scaled;
    if (v == "inf") return total;
    return cfg.integer(key);
}

std::string scene_label(const RunConfig& cfg, const fs::path& data) {
    if (!cfg.str("scene").empty()) return cfg.str("scene");
    const auto name = fs::path(data).lexically_normal().filename().string();
    return name.empty() ? fs::path(data).lexically_normal().parent_path().filename().string() : name;
}

void write_eval_csv(std::ostream& out, const std::string& scene, const GaussianCloud& cloud, const Dataset& ds) {
    out << "scene,split,psnr,ssim\n";
    for (Split split : {Split::Train, Split::Test}) {
        bool any = false;
        for (size_t k : ds.indices(split)) any = any || ds.views[k].clean.defined();
        if (!any) continue;
        const auto r = evaluate(cloud, ds, split, scene_background());
        out << fmt::format("{},{},{:.6f},{:.6f}\n", scene, split_name(split), r.psnr, r.ssim);
    }
}

int cmd_synth(const RunConfig& cfg) {
    const fs::path out = require(cfg, "out");
    SceneSpec spec;
    spec.seed = cfg.uint("seed");
    spec.n_train = cfg.integer("n_train");
    spec.n_test = cfg.integer("n_test");
    spec.image_size = cfg.integer("image_size");
    spec.focal = SceneSpec{}.focal * spec.image_size / 128.0;
    spec.occluders = cfg.integer("occluders");
    spec.gain_range = cfg.real("gain_range");
    spec.gamma_range = cfg.real("gamma_range");
    spec.white_balance_range = cfg.real("white_balance_range");
    spdlog::info("generating scene seed {} into {}", spec.seed, out.string());
    const auto scene = generate_scene(spec);
    write_dataset(out, scene);
    cfg.write(out / "config.txt");
    spdlog::info("wrote {} views", scene.views.size());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const fs::path data = require(cfg, "data");
    const fs::path out = require(cfg, "out");
    if (!fs::exists(data)) throw IoError("dataset directory " + data.string() + " does not exist");
    const Dataset ds = load_dataset(data);
    fs::create_directories(out);
    cfg.write(out / "config.txt");
    const std::string hash = behaviour_hash(cfg);
    const uint64_t seed = cfg.uint("seed");

    DenseInitOptions init_opts;
    init_opts.jitter = cfg.real("jitter");
    init_opts.spurious_frac = cfg.real("spurious_frac");
    init_opts.seed = seed;
    const DenseInit init = dense_init(ds, init_opts);
    save_cloud(out / "init", init.cloud, 0, hash);
    spdlog::info("dense init: {} gaussians", init.cloud.size());

    TrainerConfig tc;
    const int iters = cfg.integer("total_iters");
    tc.schedule = TrainSchedule::scaled(iters);
    tc.schedule.tau_c = iteration_key(cfg, "tau_c", tc.schedule.tau_c, iters);
    tc.schedule.tau_o = iteration_key(cfg, "tau_o", tc.schedule.tau_o, iters);
    tc.schedule.beta = cfg.real("beta");
    tc.schedule.progressive = cfg.boolean("progressive");
    tc.pool_size = cfg.integer("pool_size");
    tc.delta_frac = cfg.real("delta_frac");
    tc.refresh_every = cfg.integer("refresh_every");
    tc.reference_view = cfg.integer("reference_view");
    tc.weights.lambda1 = static_cast<float>(cfg.real("lambda1"));
    tc.weights.lambda2 = static_cast<float>(cfg.real("lambda2"));
    tc.weights.lambda3 = static_cast<float>(cfg.real("lambda3"));
    tc.seed = seed;
    tc.validate();

    std::optional<DiffusionPrior> prior;
    std::optional<DiffusionPseudoGt> source;
    const bool needs_prior = tc.schedule.beta > 0.0 || tc.schedule.tau_o < tc.schedule.total_iters;
    if (needs_prior) {
        PriorConfig pc;
        pc.seed = cfg.uint("prior_seed");
        pc.scenes = cfg.integer("prior_scenes");
        pc.views_per_scene = cfg.integer("prior_views");
        pc.train_steps = cfg.integer("prior_steps");
        pc.image_size = static_cast<int>(ds.views.front().camera.width);
        const fs::path cache = cfg.str("prior_cache").empty() ? out / "prior" : fs::path(cfg.str("prior_cache"));
        const BasePrior base = build_base_prior(pc, cache, [](const std::string& m) { spdlog::info("{}", m); });
        FinetuneOptions fo;
        fo.iters = cfg.integer("finetune_iters");
        fo.lr = static_cast<float>(cfg.real("finetune_lr"));
        fo.seed = seed;
        spdlog::info("fine-tuning the constrained denoiser ({} iterations)", fo.iters);
        prior.emplace(make_scene_prior(base, ds, fo, cfg.integer("ddim_steps")));
        prior->constrained.save(out / "constrained");
        InpaintOptions io;
        io.dilation = cfg.integer("dilation");
        source.emplace(*prior, EnhanceOptions{}, io);
    }

    Trainer trainer(ds, init.cloud.clone(), init.filled, tc, source ? &*source : nullptr);
    if (cfg.boolean("resume") && fs::exists(out / "state" / "trainer.txt")) {
        trainer.load(out / "state");
        spdlog::info("resumed at iteration {}", trainer.iteration());
    }
    const int every = cfg.integer("checkpoint_every");
    const int report = std::max(1, iters / 10);
    while (!trainer.done()) {
        int stop = trainer.iteration() + report;
        if (every > 0) stop = std::min(stop, (trainer.iteration() / every + 1) * every);
        trainer.run(stop);
        const auto& last = trainer.log().back();
        spdlog::info("iter {}/{} loss {:.5f} ({})", trainer.iteration(), iters, last.loss, last.term);
        if (every > 0 && trainer.iteration() % every == 0 && !trainer.done()) trainer.save(out / "state", hash);
    }
    trainer.save(out / "state", hash);
    save_cloud(out / "cloud", trainer.cloud(), trainer.iteration(), hash);
    Trainer::write_log_csv(out / "loss_log.csv", trainer.log());
    if (source) spdlog::info("pseudo ground truth: {} enhanced, {} inpainted", source->enhance_calls(), source->inpaint_calls());

    std::ofstream csv(out / "eval.csv");
    write_eval_csv(csv, scene_label(cfg, data), trainer.cloud(), ds);
    if (!csv) throw IoError("failed writing eval.csv");
    spdlog::info("wrote {}", (out / "eval.csv").string());
    return 0;
}

GaussianCloud load_cloud_dir(const std::string& dir) {
    if (!fs::exists(fs::path(dir) / "manifest.txt")) throw IoError("no cloud checkpoint in " + dir);
    return load_cloud(dir).cloud;
}

int cmd_render(const RunConfig& cfg) {
    const auto cloud = load_cloud_dir(require(cfg, "cloud"));
    const Dataset ds = load_dataset(require(cfg, "data"));
    const fs::path out = require(cfg, "out");
    fs::create_directories(out);
    const auto& which = cfg.str("split");
    if (which != "train" && which != "test" && which != "all") throw DomainError("--split must be train, test or all");
    int n = 0;
    for (const auto& v : ds.views) {
        if (which != "all" && which != split_name(v.split)) continue;
        write_png_rgb(out / (v.name + ".png"), render_view(cloud, v.camera, scene_background()));
        ++n;
    }
    spdlog::info("rendered {} views into {}", n, out.string());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    const auto cloud = load_cloud_dir(require(cfg, "cloud"));
    const fs::path data = require(cfg, "data");
    const Dataset ds = load_dataset(data);
    const auto label = scene_label(cfg, data);
    if (cfg.str("out").empty()) {
        write_eval_csv(std::cout, label, cloud, ds);
        return 0;
    }
    std::ofstream out(cfg.str("out"));
    write_eval_csv(out, label, cloud, ds);
    if (!out) throw IoError("failed writing " + cfg.str("out"));
    return 0;
}

DiffusionPrior load_prior(const RunConfig& cfg) {
    const fs::path base_dir = require(cfg, "base");
    const fs::path constrained_dir = require(cfg, "constrained");
    const fs::path codec_dir = cfg.str("codec").empty() ? base_dir.parent_path() / "codec" : fs::path(cfg.str("codec"));
    for (const auto& d : {base_dir, constrained_dir})
        if (!fs::exists(d / "manifest.txt")) throw IoError("no denoiser checkpoint in " + d.string());
    DiffusionPrior prior{LatentCodec::load(codec_dir), DenoiserModel::load(base_dir), DenoiserModel::load(constrained_dir),
                         NoiseSchedule(1000, cfg.integer("ddim_steps"))};
    prior.validate();
    return prior;
}

int cmd_enhance(const RunConfig& cfg) {
    const auto prior = load_prior(cfg);
    const auto in = read_png_rgb(require(cfg, "in"));
    const auto ref = read_png_rgb(require(cfg, "ref"));
    EnhanceOptions o;
    o.inject = cfg.boolean("inject");
    write_png_rgb(require(cfg, "out"), enhance(in, ref, prior, o));
    return 0;
}

int cmd_inpaint(const RunConfig& cfg) {
    const auto prior = load_prior(cfg);
    const auto rendered = read_png_rgb(require(cfg, "render"));
    const auto gt = read_png_rgb(require(cfg, "gt"));
    const auto mask = read_mask_png(require(cfg, "mask"));
    const auto ref = cfg.str("ref").empty() ? gt : read_png_rgb(cfg.str("ref"));
    InpaintOptions o;
    o.dilation = cfg.integer("dilation");
    write_png_rgb(require(cfg, "out"), inpaint_occlusion(rendered, gt, mask, ref, prior, o));
    return 0;
}

/// One subcommand: its defaults, the flags that override them and the action.
struct Command {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> defaults;
    std::map<std::string, std::string> flags;
    std::map<std::string, std::string> names;
    std::string config_file;
    int (*action)(const RunConfig&) = nullptr;

    /// Adds `--key` (underscores become dashes) plus any `aliases`.
    void flag(const std::string& key, const std::string& help, const std::string& aliases = "") {
        std::string name = "--" + key;
        std::replace(name.begin(), name.end(), '_', '-');
        names[key] = name;
        const auto& d = defaults.at(key);
        const bool documented = help.find("(default") != std::string::npos;
        app->add_option(aliases.empty() ? name : name + "," + aliases, flags[key],
                        documented ? help : help + " (default: " + (d.empty() ? "none" : d) + ")");
    }

    RunConfig resolve() {
        RunConfig cfg(defaults);
        if (!config_file.empty()) cfg.merge_file(config_file);
        for (const auto& [key, value] : flags)
            if (app->count(names.at(key)) > 0) cfg.set(key, value);
        return cfg;
    }
};

} // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_logger_mt("wildsplat");
    logger->set_pattern("[%H:%M:%S] %v");
    spdlog::set_default_logger(logger);

    CLI::App app{"Sparse-view Gaussian splatting with diffusion pseudo ground truth"};
    app.require_subcommand(1);
    std::vector<Command> commands;
    commands.reserve(6);

    auto add = [&](const char* name, const char* help, std::map<std::string, std::string> defaults,
                   int (*action)(const RunConfig&)) -> Command& {
        Command& c = commands.emplace_back();
        c.app = app.add_subcommand(name, help);
        c.defaults = std::move(defaults);
        c.action = action;
        c.app->add_option("--config", c.config_file, "key = value file; flags take precedence");
        return c;
    };

    {
        auto& c = add("synth", "Generate a synthetic scene dataset", synth_defaults(), cmd_synth);
        for (const auto* k : {"seed", "out", "n_train", "n_test", "image_size", "occluders", "gain_range", "gamma_range",
                              "white_balance_range"})
            c.flag(k, k);
    }
    {
        auto& c = add("train", "Train a Gaussian cloud on a dataset", train_defaults(), cmd_train);
        c.flag("data", "dataset directory");
        c.flag("out", "output directory");
        c.flag("seed", "seed for every random choice of the run");
        c.flag("total_iters", "total training iterations", "--iters");
        c.flag("beta", "probability of a pseudo view once sampling starts");
        c.flag("tau_c", "first iteration with pseudo views (auto, or a number)");
        c.flag("tau_o", "first iteration with occlusion handling (auto, inf, or a number)");
        c.flag("progressive", "unlock view difficulty tiers progressively");
        c.flag("pool_size", "number of sampled novel views");
        c.flag("refresh_every", "regenerate pseudo ground truth older than this many iterations");
        for (const auto* k : {"lambda1", "lambda2", "lambda3"}) c.flag(k, "loss weight");
        c.flag("ddim_steps", "DDIM sampling steps");
        c.flag("prior_cache", "directory for the shared diffusion prior (default: <out>/prior)");
        c.flag("prior_steps", "training steps of the base denoiser");
        c.flag("finetune_iters", "constrained fine-tune iterations");
        c.flag("checkpoint_every", "save the trainer state every N iterations (0: only at the end)");
        c.flag("resume", "continue from <out>/state when present");
        c.flag("scene", "scene label for eval.csv (default: dataset directory name)");
    }
    {
        auto& c = add("render", "Render dataset views from a cloud checkpoint",
                      {{"cloud", ""}, {"data", ""}, {"out", ""}, {"split", "test"}, {"seed", "0"}}, cmd_render);
        for (const auto* k : {"cloud", "data", "out", "split", "seed"}) c.flag(k, k);
    }
    {
        auto& c = add("eval", "PSNR and SSIM against clean references as CSV",
                      {{"cloud", ""}, {"data", ""}, {"out", ""}, {"scene", ""}, {"seed", "0"}}, cmd_eval);
        for (const auto* k : {"cloud", "data", "out", "scene", "seed"}) c.flag(k, k);
    }
    const std::map<std::string, std::string> model_keys{
        {"base", ""}, {"constrained", ""}, {"codec", ""}, {"ddim_steps", "50"}, {"seed", "0"}, {"out", ""}};
    {
        auto d = model_keys;
        d.insert({{"in", ""}, {"ref", ""}, {"inject", "true"}});
        auto& c = add("enhance", "Enhance a rendered image with the two denoisers", d, cmd_enhance);
        for (const auto* k : {"in", "ref", "base", "constrained", "codec", "out", "ddim_steps", "seed", "inject"}) c.flag(k, k);
    }
    {
        auto d = model_keys;
        d.insert({{"render", ""}, {"gt", ""}, {"mask", ""}, {"ref", ""}, {"dilation", "2"}});
        auto& c = add("inpaint", "Remove masked occluders from a captured image", d, cmd_inpaint);
        for (const auto* k : {"render", "gt", "mask", "ref", "base", "constrained", "codec", "out", "ddim_steps", "seed",
                              "dilation"})
            c.flag(k, k);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    for (auto& c : commands) {
        if (!c.app->parsed()) continue;
        try {
            return c.action(c.resolve());
        } catch (const NumericError& e) {
            spdlog::error("numeric failure: {}", e.what());
            return kExitNumeric;
        } catch (const std::exception& e) {
            spdlog::error("{}", e.what());
            return kExitUsage;
        }
    }
    return kExitUsage;
}
