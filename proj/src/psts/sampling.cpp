// Copyright Contributors to the wildsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "wildsplat/psts/sampling.hpp"

#include "wildsplat/tensor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wildsplat {

Camera slerp_pose(const Camera& a, const Camera& b, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("slerp α must be in [0,1], got " + std::to_string(alpha));
    const Eigen::Quaterniond qa = a.rotation.normalized();
    Eigen::Quaterniond qb = b.rotation.normalized();
    double d = qa.dot(qb);
    if (d < 0.0) {
        qb.coeffs() *= -1.0;
        d = -d;
    }
    double s0 = 1.0 - alpha, s1 = alpha;
    if (d < 1.0 - 1e-12) {
        const double theta = std::acos(std::min(d, 1.0));
        const double st = std::sin(theta);
        s0 = std::sin((1.0 - alpha) * theta) / st;
        s1 = std::sin(alpha * theta) / st;
    }
    Eigen::Quaterniond q;
    q.coeffs() = s0 * qa.coeffs() + s1 * qb.coeffs();
    q.normalize();
    const Eigen::Vector3d center = (1.0 - alpha) * a.center() + alpha * b.center();
    Camera out = a;
    out.rotation = q;
    return with_center(out, center);
}

Eigen::Quaterniond average_rotation(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
    const Eigen::Quaterniond qa = a.normalized();
    Eigen::Quaterniond qb = b.normalized();
    if (qa.dot(qb) < 0.0) qb.coeffs() *= -1.0;
    Eigen::Quaterniond q;
    q.coeffs() = qa.coeffs() + qb.coeffs();
    if (q.norm() < 1e-12) throw DegeneracyError("cannot average opposite rotations");
    return q.normalized();
}

std::array<size_t, 2> nearest_two(const std::vector<Camera>& train, const Eigen::Vector3d& p) {
    if (train.size() < 2) throw DomainError("need at least 2 training cameras");
    std::vector<size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> dist(train.size());
    for (size_t i = 0; i < train.size(); ++i) dist[i] = (train[i].center() - p).norm();
    std::stable_sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return dist[x] < dist[y]; });
    return {idx[0], idx[1]};
}

Camera perturb_pose(const Camera& cam, const Eigen::Vector3d& delta, const std::vector<Camera>& train,
                    std::mt19937_64& rng) {
    if (train.size() < 2) throw DomainError("perturb_pose needs at least 2 training cameras");
    if ((delta.array() < 0.0).any()) throw DomainError("perturbation std-devs must be nonnegative");
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector3d center = cam.center();
    for (int a = 0; a < 3; ++a) center(a) += delta(a) * normal(rng);
    const auto [i, j] = nearest_two(train, center);
    Camera out = cam;
    out.rotation = average_rotation(train[i].rotation, train[j].rotation);
    return with_center(out, center);
}

const char* difficulty_name(Difficulty d) {
    switch (d) {
    case Difficulty::Simple: return "simple";
    case Difficulty::Medium: return "medium";
    default: return "difficult";
    }
}

Eigen::Vector3d default_delta(const std::vector<Camera>& train, double fraction) {
    if (train.empty()) throw DomainError("default_delta needs training cameras");
    Eigen::Vector3d lo = train[0].center(), hi = lo;
    for (const auto& c : train) {
        lo = lo.cwiseMin(c.center());
        hi = hi.cwiseMax(c.center());
    }
    return Eigen::Vector3d::Constant(fraction * (hi - lo).norm());
}

std::vector<SampledView> build_view_pool(const std::vector<Camera>& train, int pool_size, const Eigen::Vector3d& delta,
                                         std::mt19937_64& rng) {
    if (train.size() < 2) throw DomainError("view pool needs at least 2 training cameras");
    if (pool_size < 3) throw DomainError("pool size must be at least 3");
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t i = 0; i < train.size(); ++i)
        for (size_t j = i + 1; j < train.size(); ++j) pairs.emplace_back(i, j);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SampledView> pool;
    const int n_interp = pool_size / 2;
    for (int k = 0; k < n_interp; ++k) {
        const auto [i, j] = pairs[static_cast<size_t>(k) % pairs.size()];
        SampledView v;
        v.kind = SampledView::Kind::Interpolated;
        v.i = i;
        v.j = j;
        v.alpha = unit(rng);
        v.camera = slerp_pose(train[i], train[j], v.alpha);
        pool.push_back(v);
    }
    for (int k = n_interp; k < pool_size; ++k) {
        SampledView v;
        v.kind = SampledView::Kind::Perturbed;
        v.i = static_cast<size_t>(k - n_interp) % train.size();
        v.camera = perturb_pose(train[v.i], delta, train, rng);
        pool.push_back(v);
    }
    for (auto& v : pool) {
        v.distance = 1e300;
        for (const auto& c : train) v.distance = std::min(v.distance, (c.center() - v.camera.center()).norm());
    }
    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return pool[a].distance < pool[b].distance; });
    for (size_t r = 0; r < order.size(); ++r)
        pool[order[r]].difficulty = static_cast<Difficulty>(3 * r / order.size());
    return pool;
}

void TrainSchedule::validate() const {
    if (!(0 < tau_c && tau_c <= tau_o && tau_o <= total_iters))
        throw DomainError("schedule needs 0 < tau_c <= tau_o <= total_iters (got " + std::to_string(tau_c) + ", " +
                          std::to_string(tau_o) + ", " + std::to_string(total_iters) + ")");
    if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must be in [0,1]");
}

int TrainSchedule::stage(int iter) const {
    if (iter < tau_c) return 0;
    const int64_t window = total_iters - tau_c;
    if (window <= 0) return 3;
    return 1 + static_cast<int>(std::min<int64_t>(2, 3 * static_cast<int64_t>(iter - tau_c) / window));
}

Difficulty TrainSchedule::max_difficulty(int iter) const {
    if (!progressive) return Difficulty::Difficult;
    return static_cast<Difficulty>(std::max(0, stage(iter) - 1));
}

TrainSchedule TrainSchedule::scaled(int total_iters) {
    if (total_iters < 3) throw DomainError("total iterations must be at least 3");
    TrainSchedule s;
    s.total_iters = total_iters;
    s.tau_c = std::max(1, static_cast<int>(std::lround(total_iters * 5500.0 / 7500.0)));
    s.tau_o = std::max(s.tau_c, static_cast<int>(std::lround(total_iters * 6500.0 / 7500.0)));
    return s;
}

ViewChoice next_view(const TrainSchedule& sched, int iter, const std::vector<SampledView>& pool, size_t n_train,
                     std::mt19937_64& rng) {
    if (n_train == 0) throw DomainError("next_view needs training views");
    auto train_view = [&] { return ViewChoice{false, std::uniform_int_distribution<size_t>(0, n_train - 1)(rng)}; };
    if (iter < sched.tau_c || sched.beta == 0.0 || pool.empty()) return train_view();
    if (!std::bernoulli_distribution(sched.beta)(rng)) return train_view();
    const Difficulty top = sched.max_difficulty(iter);
    std::vector<size_t> open;
    for (size_t i = 0; i < pool.size(); ++i)
        if (pool[i].difficulty <= top) open.push_back(i);
    if (open.empty()) return train_view();
    return {true, open[std::uniform_int_distribution<size_t>(0, open.size() - 1)(rng)]};
}

} // namespace wildsplat
