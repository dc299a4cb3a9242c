#include "morphopt/common/worker_pool.hpp"

#include <algorithm>

namespace morphopt {

WorkerPool::WorkerPool(int workers) : workers_(std::max(1, workers)) {
  for (int id = 1; id < workers_; ++id) {
    threads_.emplace_back([this, id] { worker_loop(id); });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

namespace {

void run_stripe(const std::function<void(std::size_t)>& fn, std::size_t n, int id,
                int stride, std::vector<std::exception_ptr>& errors) {
  for (std::size_t i = static_cast<std::size_t>(id); i < n; i += static_cast<std::size_t>(stride)) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
}

}  // namespace

void WorkerPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  errors_.assign(n, nullptr);
  if (workers_ == 1 || n == 1) {
    run_stripe(fn, n, 0, 1, errors_);
  } else {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      job_ = &fn;
      job_size_ = n;
      pending_ = workers_ - 1;
      ++generation_;
    }
    start_cv_.notify_all();
    run_stripe(fn, n, 0, workers_, errors_);
    std::unique_lock<std::mutex> lock(mutex_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }
  for (auto& e : errors_) {
    if (e) std::rethrow_exception(e);
  }
}

void WorkerPool::worker_loop(int id) {
  std::size_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t)>* job;
    std::size_t n;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
      n = job_size_;
    }
    run_stripe(*job, n, id, workers_, errors_);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      --pending_;
    }
    done_cv_.notify_one();
  }
}

}  // namespace morphopt
