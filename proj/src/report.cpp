#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "surgseg/errors.hpp"
#include "surgseg/experiment.hpp"

namespace surgseg {
namespace {

std::string fmt_accuracy(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%% ± %.2f%%", mean, sd);
  return buf;
}

std::string fmt_iou(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", mean, sd);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

// "a<sep>b" where sep is " ± "; trailing '%' stripped.
std::pair<double, double> parse_pm(const std::string& s, int line_no) {
  static const std::string kSep = " ± ";
  const auto pos = s.find(kSep);
  if (pos == std::string::npos) throw DataError("report line " + std::to_string(line_no) + ": expected 'mean ± sd'");
  auto num = [&](std::string t) {
    if (!t.empty() && t.back() == '%') t.pop_back();
    try {
      return std::stod(t);
    } catch (const std::exception&) {
      throw DataError("report line " + std::to_string(line_no) + ": bad number '" + t + "'");
    }
  };
  return {num(s.substr(0, pos)), num(s.substr(pos + kSep.size()))};
}

std::vector<ClassReport> sorted_by_name(std::vector<ClassReport> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const ClassReport& a, const ClassReport& b) {
    const auto ka = normalize_class_name(a.class_name);
    const auto kb = normalize_class_name(b.class_name);
    return ka != kb ? ka < kb : a.class_name < b.class_name;
  });
  return reports;
}

}  // namespace

std::pair<double, double> mean_and_population_sd(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::vector<ClassReport> aggregate_reports(const std::vector<EvalRecord>& records, const ClassTaxonomy& taxonomy,
                                           int num_folds) {
  std::vector<ClassReport> out;
  for (ClassId c = 0; c < taxonomy.num_instruments(); ++c) {
    std::vector<double> accuracies;
    std::vector<double> ious;
    int total = 0;
    std::vector<int> skipped;
    for (int f = 0; f < num_folds; ++f) {
      int count = 0;
      int correct = 0;
      double iou_sum = 0.0;
      for (const auto& r : records) {
        if (r.truth_class != c || r.fold_index != f) continue;
        ++count;
        correct += r.correct ? 1 : 0;
        iou_sum += r.iou;
      }
      if (count == 0) {
        skipped.push_back(f);
        continue;
      }
      total += count;
      accuracies.push_back(100.0 * correct / count);
      ious.push_back(iou_sum / count);
    }
    if (total == 0) continue;
    for (int f : skipped) {
      spdlog::warn("class '{}' has no test images in fold {}; fold excluded from its statistics", taxonomy.name(c), f);
    }
    ClassReport rep;
    rep.class_name = taxonomy.name(c);
    rep.sample_size = total;
    std::tie(rep.accuracy_mean, rep.accuracy_sd) = mean_and_population_sd(accuracies);
    std::tie(rep.iou_mean, rep.iou_sd) = mean_and_population_sd(ious);
    rep.folds_used = static_cast<int>(accuracies.size());
    out.push_back(std::move(rep));
  }
  return out;
}

double pooled_accuracy(const std::vector<EvalRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) correct += r.correct ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

std::string emit_report(const std::vector<ClassReport>& reports, ReportFormat format, std::optional<double> tau) {
  if (reports.empty()) throw ConfigError("cannot emit an empty report");
  const auto rows = sorted_by_name(reports);
  std::string out;
  char tau_text[32] = "";
  if (tau) std::snprintf(tau_text, sizeof tau_text, "%.4f", *tau);
  if (format == ReportFormat::kCsv) {
    if (tau) out += std::string("# tau=") + tau_text + "\n";
    out += "Instrument,Sample Size,Accuracy (mean ± SD),IoU (mean ± SD)\n";
    for (const auto& r : rows) {
      out += csv_field(r.class_name) + ',' + std::to_string(r.sample_size) + ',' +
             fmt_accuracy(r.accuracy_mean, r.accuracy_sd) + ',' + fmt_iou(r.iou_mean, r.iou_sd) + '\n';
    }
    return out;
  }
  out += "| Instrument | Sample Size | Accuracy (mean ± SD) | IoU (mean ± SD) |\n";
  out += "|---|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out += "| " + r.class_name + " | " + std::to_string(r.sample_size) + " | " +
           fmt_accuracy(r.accuracy_mean, r.accuracy_sd) + " | " + fmt_iou(r.iou_mean, r.iou_sd) + " |\n";
  }
  if (tau) out += std::string("\nThreshold tau = ") + tau_text + "\n";
  return out;
}

std::vector<ClassReport> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ClassReport> out;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line.rfind("Instrument,", 0) != 0) throw DataError("report CSV lacks header");
      header_seen = true;
      continue;
    }
    const auto f = parse_csv_line(line);
    if (f.size() != 4) throw DataError("report line " + std::to_string(line_no) + ": expected 4 columns");
    ClassReport r;
    r.class_name = f[0];
    try {
      r.sample_size = std::stoi(f[1]);
    } catch (const std::exception&) {
      throw DataError("report line " + std::to_string(line_no) + ": bad sample size");
    }
    std::tie(r.accuracy_mean, r.accuracy_sd) = parse_pm(f[2], line_no);
    std::tie(r.iou_mean, r.iou_sd) = parse_pm(f[3], line_no);
    out.push_back(std::move(r));
  }
  if (!header_seen) throw DataError("report CSV lacks header");
  return out;
}

}  // namespace surgseg
