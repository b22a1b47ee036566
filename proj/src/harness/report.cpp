#include "gradcredit/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "gradcredit/error.hpp"

namespace gradcredit::harness {

using nlohmann::json;

ReportFormat parse_report_format(const std::string& name) {
  if (name == "ansi") return ReportFormat::Ansi;
  if (name == "html") return ReportFormat::Html;
  throw ConfigError("unknown report format '" + name + "' (expected ansi or html)");
}

std::vector<DumpRecord> parse_attribution_dump(const std::string& text, const std::string& source) {
  std::vector<DumpRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      DumpRecord r;
      r.raw = json::parse(line);
      r.rubric_id = r.raw.at("rubric_id").get<std::string>();
      r.z = r.raw.at("z").get<std::string>();
      r.gated = r.raw.at("gated").get<bool>();
      r.alpha = r.raw.at("alpha").get<std::vector<double>>();
      r.method = r.raw.at("method").get<std::string>();
      r.tau = r.raw.at("tau").get<double>();
      r.step = r.raw.at("step").get<long>();
      r.response_index = r.raw.at("response_index").get<std::size_t>();
      if (r.raw.contains("tokens")) r.tokens = r.raw.at("tokens").get<std::vector<int>>();
      if (!r.tokens.empty() && r.tokens.size() != r.alpha.size()) {
        throw InputError("tokens and alpha differ in length");
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw InputError(fmt::format("{}:{}: malformed attribution record: {}", source, n, e.what()));
    } catch (const InputError& e) {
      throw InputError(fmt::format("{}:{}: {}", source, n, e.what()));
    }
  }
  return out;
}

std::vector<DumpRecord> read_attribution_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open attribution dump '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_attribution_dump(ss.str(), path);
}

namespace {

std::string token_label(const DumpRecord& r, std::size_t t) {
  return r.tokens.empty() ? fmt::format("t{}", t) : std::to_string(r.tokens[t]);
}

std::string header(const DumpRecord& r) {
  return fmt::format("step {} response {} rubric {} verdict {} method {} tau {}", r.step, r.response_index,
                     r.rubric_id, r.z, r.method, r.tau);
}

std::string html_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace

std::string render_attribution_report(const std::vector<DumpRecord>& records, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::Html) {
    out += "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attribution</title>\n"
           "<style>body{font-family:monospace}.tok{padding:2px 4px;margin:1px;display:inline-block}"
           ".gated{color:#888}</style></head><body>\n";
  }
  for (const auto& r : records) {
    const double peak = r.alpha.empty() ? 0.0 : *std::max_element(r.alpha.begin(), r.alpha.end());
    if (format == ReportFormat::Ansi) {
      out += header(r) + "\n  ";
      if (r.gated) {
        out += "[gated]";
        for (std::size_t t = 0; t < r.alpha.size(); ++t) out += " " + token_label(r, t);
      } else {
        for (std::size_t t = 0; t < r.alpha.size(); ++t) {
          const double x = peak > 0.0 ? r.alpha[t] / peak : 0.0;
          // six levels of the 256-colour cube, 231 (white) to 196 (red)
          const int level = static_cast<int>(std::lround(x * 5.0));
          const int code = 231 - 7 * level;
          out += fmt::format("\x1b[48;5;{}m {} \x1b[0m", code, token_label(r, t));
        }
      }
      out += "\n";
    } else {
      out += fmt::format("<div class=\"row{}\" data-rubric=\"{}\" data-verdict=\"{}\" data-gated=\"{}\">",
                         r.gated ? " gated" : "", html_escape(r.rubric_id), html_escape(r.z), r.gated ? "true" : "false");
      out += "<div class=\"header\">" + html_escape(header(r)) + (r.gated ? " [gated]" : "") + "</div>";
      for (std::size_t t = 0; t < r.alpha.size(); ++t) {
        if (r.gated) {
          out += fmt::format("<span class=\"tok\">{}</span>", html_escape(token_label(r, t)));
        } else {
          const double x = peak > 0.0 ? r.alpha[t] / peak : 0.0;
          out += fmt::format(
              "<span class=\"tok\" data-alpha=\"{:.17g}\" style=\"background-color: rgba(220, 40, 40, {:.4f})\">{}</span>",
              r.alpha[t], x, html_escape(token_label(r, t)));
        }
      }
      out += "</div>\n";
    }
  }
  if (format == ReportFormat::Html) out += "</body></html>\n";
  return out;
}

std::vector<std::vector<double>> parse_html_alphas(const std::string& html) {
  std::vector<std::vector<double>> rows;
  static const std::regex alpha_re("data-alpha=\"([^\"]+)\"");
  std::istringstream in(html);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("<div class=\"row\"", 0) != 0) continue;
    std::vector<double> a;
    for (std::sregex_iterator it(line.begin(), line.end(), alpha_re), end; it != end; ++it) {
      a.push_back(std::stod((*it)[1].str()));
    }
    rows.push_back(std::move(a));
  }
  return rows;
}

}  // namespace gradcredit::harness
