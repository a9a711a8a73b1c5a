#pragma once

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rivercast {

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

// ---------------------------------------------------------------------------
// Deterministic random numbers. std::mt19937_64 gives a portable bit stream;
// the distributions are hand-rolled so results do not depend on the standard
// library implementation.
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  // standard normal via Box-Muller; two uniforms per call keeps the call
  // sequence reproducible regardless of how results are consumed
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// stateless hash for counter-based noise streams
inline std::uint64_t mix_u64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Bounded worker pool for per-point parallel sections. n_threads <= 1 runs
// inline, which is the bit-deterministic mode the CLI defaults to.
// ---------------------------------------------------------------------------
inline void parallel_for(std::size_t n, int n_threads, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  if (n_threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(std::size_t(n_threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Persistent pool for splitting heavy tensor kernels into contiguous chunks.
// Every output element is produced by exactly one chunk with a fixed serial
// reduction order, so results are bit-identical for any thread count.
// ---------------------------------------------------------------------------
class ComputePool {
 public:
  static ComputePool& instance() {
    static ComputePool pool;
    return pool;
  }

  void set_threads(int n) {
    std::unique_lock<std::mutex> lock(mu_);
    want_ = std::max(1, n);
    resize_locked();
  }

  int threads() const { return want_; }

  // fn(chunk_index, begin, end) over a partition of [0, n)
  void for_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& fn) {
    int workers = want_;
    if (workers <= 1 || n < 2) {
      fn(0, 0, n);
      return;
    }
    int chunks = int(std::min<std::size_t>(std::size_t(workers), n));
    {
      std::unique_lock<std::mutex> lock(mu_);
      task_ = &fn;
      task_n_ = n;
      task_chunks_ = chunks;
      pending_ = chunks - 1;  // chunk 0 runs on the caller
      ++generation_;
    }
    cv_.notify_all();
    run_chunk(fn, 0, n, chunks, 0);
    {
      std::unique_lock<std::mutex> lock(mu_);
      done_cv_.wait(lock, [&] { return pending_ == 0; });
      task_ = nullptr;
    }
  }

  ~ComputePool() {
    {
      std::unique_lock<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

 private:
  ComputePool() = default;

  static void run_chunk(const std::function<void(int, std::size_t, std::size_t)>& fn, int c, std::size_t n,
                        int chunks, int) {
    std::size_t begin = n * std::size_t(c) / std::size_t(chunks);
    std::size_t end = n * std::size_t(c + 1) / std::size_t(chunks);
    fn(c, begin, end);
  }

  void resize_locked() {
    int need = want_ - 1 - int(workers_.size());
    for (int i = 0; i < need; ++i) {
      int id = int(workers_.size()) + 1;
      workers_.emplace_back([this, id]() { worker_loop(id); });
    }
  }

  void worker_loop(int id) {
    std::uint64_t seen = 0;
    while (true) {
      const std::function<void(int, std::size_t, std::size_t)>* fn = nullptr;
      std::size_t n = 0;
      int chunks = 0;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return stop_ || (task_ && generation_ != seen && id < task_chunks_); });
        if (stop_) return;
        seen = generation_;
        fn = task_;
        n = task_n_;
        chunks = task_chunks_;
      }
      if (id < chunks) {
        run_chunk(*fn, id, n, chunks, id);
        std::unique_lock<std::mutex> lock(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> workers_;
  const std::function<void(int, std::size_t, std::size_t)>* task_ = nullptr;
  std::size_t task_n_ = 0;
  int task_chunks_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  int want_ = 1;
  bool stop_ = false;
};

// ---------------------------------------------------------------------------
// Civil calendar (proleptic Gregorian), used for annual maxima grouping and
// day-of-year climatology slots.
// ---------------------------------------------------------------------------
struct Date {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
};

inline bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || (y % 400 == 0); }

inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (unsigned(m) + (m > 2 ? -3 : 9)) + 2) / 5 + unsigned(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + std::int64_t(doe) - 719468;
}

inline Date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = std::int64_t(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{int(y + (m <= 2)), int(m), int(d)};
}

inline std::int64_t days_from_civil(const Date& dt) { return days_from_civil(dt.year, dt.month, dt.day); }

// day-of-year slot on a fixed 366-day calendar (Mar 1 is always slot 61)
inline int doy366(int month, int day) {
  static const int cum[12] = {0, 31, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335};
  return cum[month - 1] + day;  // 1..366
}

inline int doy366(const Date& dt) { return doy366(dt.month, dt.day); }

inline std::string format_date(const Date& dt) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", dt.year, dt.month, dt.day);
  return std::string(buf);
}

}  // namespace rivercast
