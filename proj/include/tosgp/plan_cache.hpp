#pragma once

#include "tosgp/error.hpp"
#include "tosgp/hash.hpp"
#include "tosgp/ot.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>

namespace tosgp {

/// Content key of a plan: hash of both supports, lambda and solver options.
inline std::string plan_key(const EmpiricalMeasure& mu, const EmpiricalMeasure& ref, double lambda,
                            const SinkhornOptions& opts) {
    Fnv1a64 h;
    h.text("tosgp-plan-v1");
    for (const Matrix* m : {&mu.support(), &ref.support()}) {
        h.value(m->rows()).value(m->cols());
        h.bytes(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
    }
    h.value(lambda).value(opts.tol).value(opts.max_iter);
    h.value(static_cast<std::uint8_t>(opts.median_cost_scaling)).value(static_cast<std::uint8_t>(opts.epsilon_scaling));
    h.value(opts.scaling_factor).value(opts.stage_iter).value(opts.newton_after);
    return h.hex();
}

namespace detail {

inline constexpr char kPlanMagic[8] = {'T', 'O', 'S', 'G', 'P', 'P', 'L', 'N'};
inline constexpr std::uint32_t kPlanVersion = 1;

inline void write_plan_file(const std::filesystem::path& path, const TransportPlan& plan) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("plan cache: cannot write " + tmp);
        const std::uint64_t rows = static_cast<std::uint64_t>(plan.rows());
        const std::uint64_t cols = static_cast<std::uint64_t>(plan.cols());
        const std::int32_t iters = plan.iterations;
        out.write(kPlanMagic, sizeof kPlanMagic);
        out.write(reinterpret_cast<const char*>(&kPlanVersion), sizeof kPlanVersion);
        out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
        out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
        out.write(reinterpret_cast<const char*>(&plan.lambda), sizeof plan.lambda);
        out.write(reinterpret_cast<const char*>(&plan.residual), sizeof plan.residual);
        out.write(reinterpret_cast<const char*>(&iters), sizeof iters);
        out.write(reinterpret_cast<const char*>(plan.coupling.data()),
                  static_cast<std::streamsize>(plan.coupling.size() * sizeof(double)));
        if (!out) throw DataError("plan cache: short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::optional<TransportPlan> read_plan_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t rows = 0, cols = 0;
    std::int32_t iters = 0;
    TransportPlan plan;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    in.read(reinterpret_cast<char*>(&plan.lambda), sizeof plan.lambda);
    in.read(reinterpret_cast<char*>(&plan.residual), sizeof plan.residual);
    in.read(reinterpret_cast<char*>(&iters), sizeof iters);
    if (!in || std::memcmp(magic, kPlanMagic, sizeof magic) != 0 || version != kPlanVersion) return std::nullopt;
    plan.iterations = iters;
    plan.coupling.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char*>(plan.coupling.data()),
            static_cast<std::streamsize>(plan.coupling.size() * sizeof(double)));
    if (!in) return std::nullopt;
    return plan;
}

} // namespace detail

/// Memoizes Sinkhorn plans in memory and, when given a directory, on disk so
/// preprocessing can resume. Safe to share between worker threads.
class PlanCache {
public:
    PlanCache() = default;
    explicit PlanCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    TransportPlan get_or_compute(const EmpiricalMeasure& mu, const EmpiricalMeasure& ref, double lambda,
                                 const SinkhornOptions& opts) {
        const auto key = plan_key(mu, ref, lambda, opts);
        {
            std::lock_guard lock(mutex_);
            if (auto it = memory_.find(key); it != memory_.end()) {
                ++hits_;
                return it->second;
            }
        }
        if (!dir_.empty()) {
            if (auto plan = detail::read_plan_file(dir_ / (key + ".plan"));
                plan && plan->rows() == mu.size() && plan->cols() == ref.size()) {
                std::lock_guard lock(mutex_);
                ++hits_;
                memory_.emplace(key, *plan);
                return *plan;
            }
        }
        TransportPlan plan = sinkhorn_plan(mu, ref, lambda, opts);
        if (!dir_.empty()) detail::write_plan_file(dir_ / (key + ".plan"), plan);
        std::lock_guard lock(mutex_);
        ++misses_;
        memory_.emplace(key, plan);
        return plan;
    }

    [[nodiscard]] std::size_t hits() const {
        std::lock_guard lock(mutex_);
        return hits_;
    }
    [[nodiscard]] std::size_t misses() const {
        std::lock_guard lock(mutex_);
        return misses_;
    }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, TransportPlan> memory_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

} // namespace tosgp
