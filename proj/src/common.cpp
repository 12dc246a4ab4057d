#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "nifflow/error.hpp"
#include "nifflow/matrix.hpp"
#include "nifflow/parallel.hpp"

namespace nifflow {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::estimator: return "estimator";
    case ErrorKind::io: return "io";
    case ErrorKind::unsupported: return "unsupported";
  }
  return "unknown";
}

std::vector<double> Matrix::column(std::size_t c) const {
  assert(c < cols_);
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = data_[r * cols_ + c];
  return out;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) {
    throw Error(ErrorKind::shape_mismatch,
                "matrix product: " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                    " times " + std::to_string(rhs.rows_) + "x" + std::to_string(rhs.cols_));
  }
  Matrix out(rows_, rhs.cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
    }
  }
  return out;
}

namespace {

std::atomic<unsigned> g_thread_limit{0};
std::once_flag g_env_once;

unsigned threads_from_env() {
  if (const char* env = std::getenv("NIFFLOW_THREADS")) {
    try {
      const long value = std::stol(env);
      if (value > 0) return static_cast<unsigned>(value);
    } catch (const std::exception&) {
    }
  }
  return 0;
}

}  // namespace

void set_thread_limit(unsigned threads) {
  std::call_once(g_env_once, [] {});
  g_thread_limit = threads;
}

unsigned thread_limit() {
  std::call_once(g_env_once, [] { g_thread_limit = threads_from_env(); });
  const unsigned limit = g_thread_limit.load();
  if (limit != 0) return limit;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(thread_limit(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace nifflow
