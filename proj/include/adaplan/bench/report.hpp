#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "adaplan/bench/harness.hpp"

namespace adaplan::bench {

/// env,tier,mode,delta,M,loss,seeds,return_mean,return_std,saved_nfe,plans_mean,secs_per_100_steps
std::string csv_header();

/// One line without the trailing newline. Reals use six decimals; an infinite
/// delta prints as "inf"; NaN (static delta, untimed seconds) prints as "NA".
std::string csv_line(const MetricsRow& row);

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
/// Creates parent directories. Throws FileError when the file cannot be written.
void write_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

/// Plot data for a delta sweep: x = delta ("inf" for infinity), y = mean
/// normalized return with its std, annotation = saved-NFE fraction.
/// Validates against schemas/plot_data.schema.json.
std::string plot_json(const std::vector<MetricsRow>& rows);

std::string timing_json(const TimingReport& report);

/// Writes text to a file, creating parent directories. Throws FileError.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace adaplan::bench
