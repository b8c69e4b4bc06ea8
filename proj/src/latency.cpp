#include "asyncgp/latency.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace asyncgp {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double unit_draw(std::uint64_t seed, int worker, std::int64_t iteration,
                 std::uint64_t stream) {
  std::uint64_t h = splitmix(seed ^ splitmix(stream));
  h = splitmix(h ^ static_cast<std::uint64_t>(worker));
  h = splitmix(h ^ static_cast<std::uint64_t>(iteration));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("latency model: bad number '" +
                                std::string(s) + "'");
  return v;
}

std::int64_t to_int(std::string_view s) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("latency model: bad integer '" +
                                std::string(s) + "'");
  return v;
}

std::vector<double> to_doubles(std::string_view s) {
  std::vector<double> out;
  for (auto part : split(s, ',')) {
    const double v = to_double(part);
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("latency model: times must be finite, >= 0");
    out.push_back(v);
  }
  return out;
}

}  // namespace

LatencyModel LatencyModel::constant(double t) {
  LatencyModel model;
  model.values_ = {t};
  model.spec_ = "const:" + std::to_string(t);
  return model;
}

LatencyModel LatencyModel::parse(std::string_view spec, int workers,
                                 std::uint64_t seed) {
  if (workers < 1) throw std::invalid_argument("latency model: workers < 1");
  LatencyModel model;
  model.spec_ = std::string(spec);
  model.seed_ = seed;
  const auto parts = split(spec, ';');
  const auto head = parts.front();
  const auto colon = head.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("latency model: expected KIND:ARGS in '" +
                                std::string(spec) + "'");
  const auto kind = head.substr(0, colon);
  const auto args = head.substr(colon + 1);

  if (kind == "const") {
    model.kind_ = Kind::Constant;
    model.values_ = to_doubles(args);
    if (model.values_.size() != 1)
      throw std::invalid_argument("latency model: const takes one value");
  } else if (kind == "list") {
    model.kind_ = Kind::PerWorker;
    model.values_ = to_doubles(args);
  } else if (kind == "tiers") {
    model.kind_ = Kind::PerWorker;
    const auto tiers = to_doubles(args);
    std::vector<int> order(static_cast<std::size_t>(workers));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    model.values_.assign(static_cast<std::size_t>(workers), 0.0);
    for (std::size_t i = 0; i < order.size(); ++i)
      model.values_[static_cast<std::size_t>(order[i])] =
          tiers[i % tiers.size()];
  } else if (kind == "uniform") {
    model.kind_ = Kind::Uniform;
    const auto bounds = to_doubles(args);
    if (bounds.size() != 2 || bounds[0] > bounds[1])
      throw std::invalid_argument("latency model: uniform takes lo,hi");
    model.lo_ = bounds[0];
    model.hi_ = bounds[1];
    model.values_ = {0.5 * (bounds[0] + bounds[1])};
  } else {
    throw std::invalid_argument("latency model: unknown kind '" +
                                std::string(kind) + "'");
  }
  if (model.values_.empty())
    throw std::invalid_argument("latency model: no values");

  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto opt = parts[i];
    const auto eq = opt.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("latency model: bad option '" +
                                  std::string(opt) + "'");
    const auto key = opt.substr(0, eq);
    const auto value = opt.substr(eq + 1);
    if (key == "jitter") {
      model.jitter_ = to_double(value);
      if (!(model.jitter_ >= 0.0 && model.jitter_ < 1.0))
        throw std::invalid_argument("latency model: jitter must be in [0, 1)");
    } else if (key == "freeze") {
      const auto at = value.find('@');
      if (at == std::string_view::npos)
        throw std::invalid_argument("latency model: freeze=W@I");
      model.freezes_.push_back({static_cast<int>(to_int(value.substr(0, at))),
                                to_int(value.substr(at + 1))});
    } else {
      throw std::invalid_argument("latency model: unknown option '" +
                                  std::string(key) + "'");
    }
  }
  return model;
}

double LatencyModel::nominal(int worker) const {
  switch (kind_) {
    case Kind::Constant:
      return values_.front();
    case Kind::PerWorker:
      return values_[static_cast<std::size_t>(worker) % values_.size()];
    case Kind::Uniform:
      return 0.5 * (lo_ + hi_);
  }
  return values_.front();
}

double LatencyModel::median_nominal(int workers) const {
  std::vector<double> v;
  for (int k = 0; k < workers; ++k) v.push_back(nominal(k));
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double LatencyModel::compute_time(int worker, std::int64_t iteration) const {
  for (const auto& f : freezes_)
    if (f.worker == worker && iteration >= f.iteration)
      return std::numeric_limits<double>::infinity();
  double t = nominal(worker);
  if (kind_ == Kind::Uniform)
    t = lo_ + (hi_ - lo_) * unit_draw(seed_, worker, iteration, 1);
  if (jitter_ > 0.0)
    t *= 1.0 + jitter_ * (2.0 * unit_draw(seed_, worker, iteration, 2) - 1.0);
  return t;
}

}  // namespace asyncgp
