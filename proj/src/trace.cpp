#include <charconv>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "asyncgp/coordination.hpp"

namespace asyncgp {

namespace {

constexpr std::pair<TraceAction, std::string_view> kActionNames[] = {
    {TraceAction::Pull, "pull"},       {TraceAction::Push, "push"},
    {TraceAction::Apply, "apply"},     {TraceAction::Publish, "publish"},
    {TraceAction::Exclude, "exclude"}, {TraceAction::Fault, "fault"},
    {TraceAction::Terminal, "terminal"}};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Shortest representation that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string_view to_string(TraceAction a) {
  for (const auto& [action, name] : kActionNames)
    if (action == a) return name;
  return "unknown";
}

TraceAction parse_trace_action(std::string_view s) {
  for (const auto& [action, name] : kActionNames)
    if (name == s) return action;
  throw std::invalid_argument("unknown trace action: " + std::string(s));
}

void write_trace(std::ostream& out, const RunTrace& trace) {
  // Events and metrics interleaved in time order; events first on ties.
  std::size_t e = 0, m = 0;
  while (e < trace.events.size() || m < trace.metrics.size()) {
    const bool take_event =
        m == trace.metrics.size() ||
        (e < trace.events.size() &&
         trace.events[e].time <= trace.metrics[m].time);
    if (take_event) {
      const auto& ev = trace.events[e++];
      out << "event," << fmt(ev.time) << ',' << ev.worker << ',' << ev.version
          << ',' << to_string(ev.action) << '\n';
    } else {
      const auto& row = trace.metrics[m++];
      out << "metric," << fmt(row.time) << ',' << row.iteration << ','
          << fmt(row.neg_elbo);
      if (row.rmse) {
        out << ',' << fmt(*row.rmse);
        if (row.mnlp) out << ',' << fmt(*row.mnlp);
      }
      out << '\n';
    }
  }
}

RunTrace read_trace(std::istream& in) {
  RunTrace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    try {
      if (cells.at(0) == "event" && cells.size() == 5) {
        TraceEvent ev;
        ev.time = std::stod(cells[1]);
        ev.worker = std::stoi(cells[2]);
        ev.version = std::stoll(cells[3]);
        ev.action = parse_trace_action(cells[4]);
        trace.events.push_back(ev);
      } else if (cells.at(0) == "metric" && cells.size() >= 4 &&
                 cells.size() <= 6) {
        MetricRow row;
        row.time = std::stod(cells[1]);
        row.iteration = std::stoll(cells[2]);
        row.neg_elbo = std::stod(cells[3]);
        if (cells.size() >= 5) row.rmse = std::stod(cells[4]);
        if (cells.size() == 6) row.mnlp = std::stod(cells[5]);
        trace.metrics.push_back(row);
      } else {
        throw std::invalid_argument("bad record");
      }
    } catch (const std::exception&) {
      throw std::runtime_error("trace line " + std::to_string(lineno) +
                               ": cannot parse '" + line + "'");
    }
  }
  return trace;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "iteration,time,neg_elbo,rmse,mnlp\n";
  for (const auto& row : rows) {
    out << row.iteration << ',' << fmt(row.time) << ',' << fmt(row.neg_elbo)
        << ',';
    if (row.rmse) out << fmt(*row.rmse);
    out << ',';
    if (row.mnlp) out << fmt(*row.mnlp);
    out << '\n';
  }
}

std::int64_t max_staleness_from_trace(const RunTrace& trace) {
  std::map<int, std::int64_t> latest_push;
  std::map<int, bool> excluded;
  int workers = 0;
  for (const auto& ev : trace.events)
    if (ev.worker >= 0) workers = std::max(workers, ev.worker + 1);
  std::int64_t worst = 0;
  for (const auto& ev : trace.events) {
    switch (ev.action) {
      case TraceAction::Push:
        latest_push[ev.worker] = ev.version;
        break;
      case TraceAction::Exclude:
        excluded[ev.worker] = true;
        break;
      case TraceAction::Apply:
        for (int k = 0; k < workers; ++k) {
          if (excluded[k]) continue;
          const auto it = latest_push.find(k);
          if (it == latest_push.end()) return -1;
          worst = std::max(worst, ev.version - it->second);
        }
        break;
      default:
        break;
    }
  }
  return worst;
}

}  // namespace asyncgp
