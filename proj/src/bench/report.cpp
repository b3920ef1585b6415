#include "adaplan/bench/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "adaplan/errors.hpp"

namespace adaplan::bench {
namespace {

std::string fixed6(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::json json_number(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::string csv_header() {
  return "env,tier,mode,delta,M,loss,seeds,return_mean,return_std,saved_nfe,plans_mean,secs_per_100_steps";
}

std::string csv_line(const MetricsRow& r) {
  std::ostringstream line;
  line << r.env << ',' << r.tier << ',' << r.mode << ',' << fixed6(r.delta) << ',' << r.M << ',' << r.loss << ','
       << r.seeds << ',' << fixed6(r.return_mean) << ',' << fixed6(r.return_std) << ',' << fixed6(r.saved_nfe) << ','
       << fixed6(r.plans_mean) << ',' << fixed6(r.secs_per_100_steps);
  return line.str();
}

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << csv_header() << '\n';
  for (const MetricsRow& r : rows) out << csv_line(r) << '\n';
}

void write_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ostringstream text;
  write_csv(text, rows);
  write_text(path, text.str());
}

std::string plot_json(const std::vector<MetricsRow>& rows) {
  nlohmann::json points = nlohmann::json::array();
  for (const MetricsRow& r : rows) {
    points.push_back({{"x", json_number(r.delta)},
                      {"y", r.return_mean},
                      {"y_std", r.return_std},
                      {"annotation", {{"saved_nfe", r.saved_nfe}, {"plans_mean", r.plans_mean}}}});
  }
  nlohmann::json doc = {{"version", 1},
                        {"kind", "delta_sweep"},
                        {"x_label", "delta"},
                        {"y_label", "normalized_return"},
                        {"env", rows.empty() ? "" : rows.front().env},
                        {"tier", rows.empty() ? "" : rows.front().tier},
                        {"loss", rows.empty() ? "" : rows.front().loss},
                        {"M", rows.empty() ? 0 : rows.front().M},
                        {"seeds", rows.empty() ? 0 : rows.front().seeds},
                        {"points", points}};
  return doc.dump(2) + "\n";
}

std::string timing_json(const TimingReport& r) {
  nlohmann::json doc = {{"version", 1},
                        {"kind", "bench_time"},
                        {"steps", r.steps},
                        {"repetitions", r.repetitions},
                        {"delta", json_number(r.delta)},
                        {"always_replan_seconds", r.always_replan_seconds},
                        {"adaptive_seconds", r.adaptive_seconds},
                        {"ratio", r.ratio},
                        {"always_replan_plans", r.always_replan_plans},
                        {"adaptive_plans", r.adaptive_plans},
                        {"always_replan_samples", r.always_replan_samples},
                        {"adaptive_samples", r.adaptive_samples}};
  return doc.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto parent = std::filesystem::absolute(path).parent_path();
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw FileError("failed writing '" + path.string() + "'");
}

}  // namespace adaplan::bench
