#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace gradcredit::harness {

enum class ReportFormat { Ansi, Html };
ReportFormat parse_report_format(const std::string& name);

struct DumpRecord {
  nlohmann::json raw;
  std::string rubric_id;
  std::string z;
  bool gated = false;
  std::vector<double> alpha;
  std::vector<int> tokens;  // empty if the dump has no tokens
  std::string method;
  double tau = 0.0;
  long step = 0;
  std::size_t response_index = 0;
};

/// Reads an attribution dump; errors cite the 1-based line number.
std::vector<DumpRecord> read_attribution_dump(const std::string& path);
std::vector<DumpRecord> parse_attribution_dump(const std::string& text, const std::string& source = "<dump>");

/// Heatmap with one row per record; intensity proportional to alpha_t
/// relative to the row maximum.
std::string render_attribution_report(const std::vector<DumpRecord>& records, ReportFormat format);

/// alpha values read back from the data-alpha attributes of an HTML report,
/// one vector per non-gated row.
std::vector<std::vector<double>> parse_html_alphas(const std::string& html);

}  // namespace gradcredit::harness
