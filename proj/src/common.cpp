#include "diformer/common.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace diformer {

double Rng::gaussian() {
    if (have_gauss_) {
        have_gauss_ = false;
        return cached_gauss_;
    }
    // Box-Muller on two uniforms; guard u1 away from zero.
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_gauss_ = r * std::sin(a);
    have_gauss_ = true;
    return r * std::cos(a);
}

double Rng::exponential(double mean) {
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    return -mean * std::log(u);
}

uint64_t hash_mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull + (b << 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

uint64_t hash_string(const std::string &s) {
    // FNV-1a
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ─── Thread pool ────────────────────────────────────────────────────────────

namespace {

class Pool {
public:
    static Pool &instance() {
        static Pool pool;
        return pool;
    }

    void resize(int n) {
        std::lock_guard<std::mutex> outer(api_mutex_);
        stop_workers();
        n_workers_ = n > 0 ? n : 1;
        start_workers();
    }

    int size() {
        std::lock_guard<std::mutex> outer(api_mutex_);
        return n_workers_;
    }

    void run(int64_t n, const std::function<void(int64_t, int64_t)> &fn) {
        std::lock_guard<std::mutex> outer(api_mutex_);
        if (n <= 0) return;
        const int workers = n_workers_;
        if (workers <= 1 || n < 2) {
            fn(0, n);
            return;
        }
        const int parts = static_cast<int>(std::min<int64_t>(workers, n));
        {
            std::lock_guard<std::mutex> lk(mutex_);
            job_fn_ = &fn;
            job_n_ = n;
            job_parts_ = parts;
            next_part_ = 0;
            pending_ = parts;
            ++generation_;
        }
        cv_.notify_all();
        // The caller participates as a worker too.
        work_on_job();
        std::unique_lock<std::mutex> lk(mutex_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        job_fn_ = nullptr;
    }

private:
    Pool() {
        n_workers_ = static_cast<int>(std::thread::hardware_concurrency());
        if (n_workers_ <= 0) n_workers_ = 1;
        start_workers();
    }

    ~Pool() { stop_workers(); }

    void start_workers() {
        stop_ = false;
        // n_workers_ - 1 helper threads; the calling thread is the last worker.
        for (int i = 0; i + 1 < n_workers_; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> lk(mutex_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto &t : threads_) t.join();
        threads_.clear();
    }

    void worker_loop() {
        uint64_t seen = 0;
        while (true) {
            {
                std::unique_lock<std::mutex> lk(mutex_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                if (!job_fn_) continue;
            }
            work_on_job();
        }
    }

    void work_on_job() {
        while (true) {
            int part;
            const std::function<void(int64_t, int64_t)> *fn;
            int64_t n;
            int parts;
            {
                std::lock_guard<std::mutex> lk(mutex_);
                if (!job_fn_ || next_part_ >= job_parts_) return;
                part = next_part_++;
                fn = job_fn_;
                n = job_n_;
                parts = job_parts_;
            }
            const int64_t chunk = (n + parts - 1) / parts;
            const int64_t begin = part * chunk;
            const int64_t end = std::min<int64_t>(n, begin + chunk);
            if (begin < end) (*fn)(begin, end);
            {
                std::lock_guard<std::mutex> lk(mutex_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::mutex api_mutex_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> threads_;
    const std::function<void(int64_t, int64_t)> *job_fn_ = nullptr;
    int64_t job_n_ = 0;
    int job_parts_ = 0;
    int next_part_ = 0;
    int pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
    int n_workers_ = 1;
};

} // namespace

void set_num_threads(int n) { Pool::instance().resize(n); }

int num_threads() { return Pool::instance().size(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)> &fn) {
    Pool::instance().run(n, fn);
}

} // namespace diformer
