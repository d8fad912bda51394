#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hrmsm {

// Error taxonomy maps onto CLI exit codes: config=2, data=3, numeric=4.
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};

// Resolve a worker count: explicit request > HRMSM_THREADS env > hardware.
int resolve_threads(int requested = 0);

// Static-chunked parallel loop over [0, n). fn must be safe to call
// concurrently for distinct indices. Runs inline when workers == 1.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// Pairwise summation over contiguous slots; the reduction tree depends only
// on the slot count, so results are identical for any worker count.
double pairwise_sum(const double* data, std::size_t n);

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), v.size());
}

}  // namespace hrmsm
