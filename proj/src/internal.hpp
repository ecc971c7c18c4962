#pragma once

#include "smallgs/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <span>
#include <thread>
#include <vector>

namespace smallgs::detail {

inline void log_json(LogLevel level, const nlohmann::json& j) { log_line(level, j.dump()); }

inline void warn(std::string_view event, std::string_view message) {
    log_json(LogLevel::kWarn, {{"level", "warn"}, {"event", event}, {"message", message}});
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions from
/// workers are rethrown on the calling thread.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    threads = std::clamp(threads, 1, std::max(n, 1));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n && !failed; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Adam over a flat parameter vector with per-coordinate learning rates.
class Adam {
public:
    explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// params[i] -= scale * lr[i] * mhat / (sqrt(vhat) + eps)
    void step(std::span<double> params, std::span<const double> grad, std::span<const double> lr, double scale) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < m_.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            params[i] -= scale * lr[i] * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, eps_;
    int t_ = 0;
};

}  // namespace smallgs::detail
