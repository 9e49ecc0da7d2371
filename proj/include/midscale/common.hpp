#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace midscale {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Error taxonomy shared by the library and the CLI. Each kind maps to a
/// distinct process exit code so scripted callers can tell config problems
/// from solver failures from I/O trouble.
struct error : std::runtime_error {
  enum class kind {
    validation,    // bad arguments, malformed config, math-domain violations
    solver,        // non-convergence within the iteration budget
    precondition,  // an experiment's sanity gate failed (e.g. oracle drift)
    io,            // file read/write failure
  };
  kind k;
  error(kind k_, const std::string& msg) : std::runtime_error(msg), k(k_) {}
};

inline int exit_code_for(error::kind k) {
  switch (k) {
    case error::kind::validation: return 2;
    case error::kind::solver: return 3;
    case error::kind::precondition: return 4;
    case error::kind::io: return 5;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Seeding. All randomness flows through explicit 64-bit seeds; replicate
// seeds are derived by mixing (base seed, experiment id, replicate index) so
// that every replicate is reproducible in isolation.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t replicate_seed(std::uint64_t base, std::string_view experiment_id,
                                    std::uint64_t rep) {
  return mix_seed(mix_seed(base, fnv1a64(experiment_id)), rep);
}

// ---------------------------------------------------------------------------
// Deterministic parallel loop. Work items write only to their own slot, so
// results are identical for every thread count (including the serial path).

inline void parallel_for(std::int64_t count, int threads,
                         const std::function<void(std::int64_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::int64_t i = 0; i < count; ++i) body(i);
    return;
  }
  const int t = static_cast<int>(std::min<std::int64_t>(threads, count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < count; i += t) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Number formatting for CSV output: shortest representation that round-trips
// a double, with '.' as the decimal separator regardless of locale.

inline std::string format_double(double v) {
  char buf[40];
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Trim to the shortest form that still parses back to the same bits.
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[40];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

}  // namespace midscale
