// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/psts/trainer.hpp"

#include "wildsplat/raster/rasterizer.hpp"
#include "wildsplat/tensor/io.hpp"
#include "wildsplat/tensor/ops.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace wildsplat {

ImageRGB DiffusionPseudoGt::enhance(const ImageRGB& rendered, const ImageRGB& reference) {
    ++enhance_calls_;
    return wildsplat::enhance(rendered, reference, prior_, enhance_options_);
}

ImageRGB DiffusionPseudoGt::inpaint(const ImageRGB& rendered, const ImageRGB& ground_truth, const Mask& mask,
                                    const ImageRGB& reference) {
    ++inpaint_calls_;
    return inpaint_occlusion(rendered, ground_truth, mask, reference, prior_, inpaint_options_);
}

void TrainerConfig::validate() const {
    schedule.validate();
    weights.validate();
    if (pool_size < 3) throw DomainError("pool size must be at least 3");
    if (delta_frac < 0.0) throw DomainError("delta_frac must be nonnegative");
    if (refresh_every < 1) throw DomainError("refresh_every must be positive");
    if (reference_view < 0) throw DomainError("reference view must be nonnegative");
    for (float lr : {lr_means, lr_quats, lr_scales, lr_opacity, lr_colors})
        if (!(lr >= 0.0f)) throw DomainError("learning rates must be nonnegative");
}

Trainer::Trainer(const Dataset& dataset, GaussianCloud init, std::vector<ImageRGB> filled, TrainerConfig config,
                 PseudoGtSource* pseudo_gt)
    : dataset_(dataset), filled_(std::move(filled)), config_(config), pseudo_gt_(pseudo_gt), cloud_(std::move(init)),
      view_rng_(config.seed) {
    config_.validate();
    cloud_.validate();
    train_ = dataset_.indices(Split::Train);
    if (train_.size() < 2) throw DomainError("training needs at least 2 training views");
    if (filled_.size() != train_.size()) throw DimensionError("one filled image per training view is required");
    if (static_cast<size_t>(config_.reference_view) >= train_.size()) throw DomainError("reference view out of range");
    for (size_t k : train_) train_cams_.push_back(dataset_.views[k].camera);
    const bool needs_pgt = config_.schedule.beta > 0.0 || config_.schedule.tau_o < config_.schedule.total_iters;
    if (needs_pgt && !pseudo_gt_) throw ContractError("schedule uses pseudo ground truth but no source was given");

    cloud_.set_requires_grad(true);
    adam_.add_group({cloud_.means}, config_.lr_means);
    adam_.add_group({cloud_.quats}, config_.lr_quats);
    adam_.add_group({cloud_.log_scales}, config_.lr_scales);
    adam_.add_group({cloud_.opacity_logits}, config_.lr_opacity);
    adam_.add_group({cloud_.colors}, config_.lr_colors);

    std::mt19937_64 pool_rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
    pool_ = build_view_pool(train_cams_, config_.pool_size, default_delta(train_cams_, config_.delta_frac), pool_rng);
}

const ImageRGB& Trainer::pseudo_gt(bool pool, size_t index, const ImageRGB& rendered) {
    const auto key = std::make_pair(pool, index);
    const auto it = cache_.find(key);
    if (it != cache_.end() && iter_ - it->second.iter < config_.refresh_every) return it->second.image;
    ImageRGB image;
    if (pool) {
        image = pseudo_gt_->enhance(rendered, filled_[static_cast<size_t>(config_.reference_view)]);
    } else {
        const auto& v = dataset_.views[train_[index]];
        image = pseudo_gt_->inpaint(rendered, v.image, v.mask, filled_[index]);
    }
    auto& entry = cache_[key];
    entry.image = std::move(image);
    entry.iter = iter_;
    return entry.image;
}

void Trainer::step() {
    if (done()) throw StateError("training already finished at iteration " + std::to_string(iter_));
    const auto& sched = config_.schedule;
    const ViewChoice choice = next_view(sched, iter_, pool_, train_.size(), view_rng_);
    choices_.push_back(choice);
    const Camera& cam = choice.pool ? pool_[choice.index].camera : train_cams_[choice.index];

    Tensor rendered = render(cloud_, cam, config_.background);
    LossRecord rec;
    rec.iter = iter_;
    rec.pool = choice.pool;
    rec.view = choice.index;
    Tensor loss;
    if (choice.pool) {
        const ImageRGB target = pseudo_gt(true, choice.index, rendered.detach());
        loss = loss_total(Tensor::scalar(0.0f), loss_c(rendered, target, config_.weights), config_.weights.lambda3);
        rec.term = "enhanced";
    } else if (iter_ >= sched.tau_o) {
        const ImageRGB target = pseudo_gt(false, choice.index, rendered.detach());
        loss = loss_c(rendered, target, config_.weights);
        rec.term = "inpainted";
    } else {
        const auto& v = dataset_.views[train_[choice.index]];
        loss = masked_loss_c(rendered, v.image, v.mask, config_.weights);
        rec.term = "masked";
    }
    rec.loss = loss.item();
    if (!std::isfinite(rec.loss))
        throw NumericError(fmt::format("loss is not finite at iteration {} ({} view {})", iter_,
                                       choice.pool ? "pool" : "training", choice.index));
    adam_.zero_grad();
    loss.backward();
    adam_.step();
    cloud_.project_parameters();
    log_.push_back(rec);
    ++iter_;
}

void Trainer::run(int until) {
    const int end = until < 0 ? config_.schedule.total_iters : std::min(until, config_.schedule.total_iters);
    while (iter_ < end) step();
}

void Trainer::write_log_csv(const fs::path& path, const std::vector<LossRecord>& log) {
    std::ofstream out(path);
    out << "iter,kind,view,term,loss\n";
    for (const auto& r : log)
        out << r.iter << ',' << (r.pool ? "pool" : "train") << ',' << r.view << ',' << r.term << ','
            << fmt::format("{:.9g}", r.loss) << '\n';
    if (!out) throw IoError("failed writing loss log " + path.string());
}

void Trainer::save(const fs::path& dir, const std::string& config_hash) const {
    fs::create_directories(dir / "adam");
    fs::create_directories(dir / "pgt");
    save_cloud(dir / "cloud", cloud_, iter_, config_hash);
    const auto state = adam_.state();
    for (size_t i = 0; i < state.size(); ++i) save_tensor(dir / "adam" / fmt::format("state_{:03d}.sgsw", i), state[i]);
    std::ofstream meta(dir / "trainer.txt");
    meta << "iteration " << iter_ << "\nadam_tensors " << state.size() << "\nview_rng " << view_rng_ << '\n';
    std::ofstream index(dir / "pgt" / "index.txt");
    for (const auto& [key, entry] : cache_) {
        const std::string name = fmt::format("{}_{:03d}", key.first ? "pool" : "train", key.second);
        index << key.first << ' ' << key.second << ' ' << entry.iter << ' ' << name << '\n';
        save_tensor(dir / "pgt" / (name + ".sgsw"), entry.image);
    }
    write_log_csv(dir / "loss_log.csv", log_);
    if (!meta || !index) throw IoError("failed writing trainer state in " + dir.string());
}

void Trainer::load(const fs::path& dir) {
    std::ifstream meta(dir / "trainer.txt");
    if (!meta) throw IoError("missing trainer state in " + dir.string());
    std::string key;
    int iteration = 0;
    size_t n_state = 0;
    while (meta >> key) {
        if (key == "iteration") meta >> iteration;
        else if (key == "adam_tensors") meta >> n_state;
        else if (key == "view_rng") meta >> view_rng_;
        else throw IoError("unknown trainer state key " + key);
    }
    const CloudCheckpoint ck = load_cloud(dir / "cloud");
    if (ck.cloud.size() != cloud_.size()) throw IoError("checkpoint cloud size differs from the trainer's");
    // Copy into the registered leaves so the optimizer keeps its bindings.
    const auto dst = cloud_.parameters();
    const auto src = ck.cloud.parameters();
    for (size_t i = 0; i < dst.size(); ++i) {
        auto out = Tensor(dst[i]).mutable_data();
        std::copy(src[i].data().begin(), src[i].data().end(), out.begin());
    }
    std::vector<Tensor> state;
    for (size_t i = 0; i < n_state; ++i) state.push_back(load_tensor(dir / "adam" / fmt::format("state_{:03d}.sgsw", i)));
    adam_.load_state(state);

    cache_.clear();
    std::ifstream index(dir / "pgt" / "index.txt");
    bool pool = false;
    size_t idx = 0;
    int at = 0;
    std::string name;
    while (index >> pool >> idx >> at >> name) cache_[{pool, idx}] = {load_tensor(dir / "pgt" / (name + ".sgsw")), at};

    log_.clear();
    choices_.clear();
    std::ifstream csv(dir / "loss_log.csv");
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        std::istringstream ls(line);
        std::string it, kind, view, term, loss;
        std::getline(ls, it, ',');
        std::getline(ls, kind, ',');
        std::getline(ls, view, ',');
        std::getline(ls, term, ',');
        std::getline(ls, loss, ',');
        // Losses are f32 values; nine digits round-trip them through float.
        LossRecord r{std::stoi(it), kind == "pool", std::stoul(view), term, static_cast<double>(std::stof(loss))};
        log_.push_back(r);
        choices_.push_back({r.pool, r.view});
    }
    iter_ = iteration;
}

} // namespace wildsplat
