#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace asyncgp {

/// Per-worker, per-iteration compute time for the simulator (virtual time
/// units) and for optional sleep injection in threaded runs (seconds).
///
/// Spec grammar: KIND:ARGS[;jitter=F][;freeze=W@I]...
///   const:T          every worker takes T
///   list:a,b,...     worker k takes the k-th value (cycled)
///   tiers:a,b,...    each worker gets one tier; tiers are dealt round-robin
///                    after a seeded shuffle so every tier is used
///   uniform:lo,hi    every (worker, iteration) draws from [lo, hi]
///   jitter=F         multiply by a factor drawn from [1 - F, 1 + F]
///   freeze=W@I       worker W never finishes iteration I or later
/// Draws are a pure function of (seed, worker, iteration).
class LatencyModel {
 public:
  LatencyModel() = default;
  static LatencyModel constant(double t);
  static LatencyModel parse(std::string_view spec, int workers,
                            std::uint64_t seed);

  /// +infinity once the worker is frozen.
  double compute_time(int worker, std::int64_t iteration) const;
  /// Typical time for the worker, ignoring jitter and freezes.
  double nominal(int worker) const;
  double median_nominal(int workers) const;
  const std::string& spec() const { return spec_; }

 private:
  enum class Kind { Constant, PerWorker, Uniform };
  struct Freeze {
    int worker;
    std::int64_t iteration;
  };
  Kind kind_ = Kind::Constant;
  std::vector<double> values_{1.0};
  double lo_ = 0.0;
  double hi_ = 0.0;
  double jitter_ = 0.0;
  std::uint64_t seed_ = 0;
  std::vector<Freeze> freezes_;
  std::string spec_ = "const:1";
};

}  // namespace asyncgp
