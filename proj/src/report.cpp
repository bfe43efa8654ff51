#include "canonprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace canonprobe {

using nlohmann::json;

namespace {

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);  // no "-0.000"
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::string format_table_csv(const std::vector<AggregateStats>& stats, const ReportOptions& opts) {
  if (opts.precision < 0 || opts.precision > 17) throw std::invalid_argument("precision must lie in [0,17]");
  std::string out = "category,condition,steps,mean,std,n\n";
  for (const auto& s : stats) {
    out += csv_field(s.category) + "," + std::string(condition_name(s.condition)) + "," +
           std::to_string(s.inference_steps) + "," + fixed(s.mean, opts.precision) + "," +
           fixed(s.std, opts.precision) + "," + std::to_string(s.n) + "\n";
  }
  return out;
}

json record_to_json(const ProbeRecord& r) {
  json j;
  j["source_id"] = r.source_id;
  j["category"] = r.category;
  j["condition"] = condition_name(r.condition);
  j["label_applied"] = r.label_applied.degrees();
  j["label_predicted"] = r.label_predicted ? json(r.label_predicted->degrees()) : json(nullptr);
  j["inference_steps"] = r.inference_steps;
  j["score"] = r.score ? json(*r.score) : json(nullptr);
  j["seed"] = r.seed;
  if (r.failed()) j["error"] = r.error;
  return j;
}

ProbeRecord record_from_json(const json& j) {
  try {
    ProbeRecord r;
    r.source_id = j.at("source_id").get<std::string>();
    r.category = j.at("category").get<std::string>();
    r.condition = parse_condition(j.at("condition").get<std::string>());
    r.label_applied = RotationLabel::from_degrees(j.at("label_applied").get<int>());
    if (!j.at("label_predicted").is_null())
      r.label_predicted = RotationLabel::from_degrees(j.at("label_predicted").get<int>());
    r.inference_steps = j.at("inference_steps").get<int>();
    if (!j.at("score").is_null()) {
      r.score = j.at("score").get<double>();
      SimilarityScore check(*r.score);
    } else {
      r.error = j.value("error", std::string("unknown failure"));
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    if (r.condition == Condition::Canonical && !r.label_applied.is_identity())
      throw std::invalid_argument("canonical record with a non-zero applied rotation");
    if (r.condition == Condition::Corrected && !r.label_predicted && !r.failed())
      throw std::invalid_argument("corrected record without a prediction");
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed probe record: ") + e.what());
  }
}

std::string format_records_jsonl(const std::vector<ProbeRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  return out;
}

std::vector<ProbeRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<ProbeRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string curves_filename(const std::string& category) {
  std::string safe;
  for (char c : category) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_';
    safe += ok ? c : '_';
  }
  return "curves_" + (safe.empty() ? std::string("_") : safe) + ".svg";
}

std::string format_curves_svg(const std::string& category, const std::vector<AggregateStats>& stats,
                              const std::vector<ProbeRecord>& records) {
  struct Series {
    std::string label;
    std::string color;
    std::map<int, double> points;  // steps -> mean
  };
  std::vector<Series> series;
  const char* condition_colors[] = {"#1b9e77", "#d95f02", "#7570b3"};
  for (Condition c : {Condition::Canonical, Condition::Rotated, Condition::Corrected}) {
    Series s{std::string(condition_name(c)), condition_colors[static_cast<int>(c)], {}};
    for (const auto& st : stats)
      if (st.category == category && st.condition == c) s.points[st.inference_steps] = st.mean;
    if (!s.points.empty()) series.push_back(std::move(s));
  }
  // Per-angle breakdown of the pooled rotated condition.
  const char* angle_colors[] = {"", "#e7298a", "#66a61e", "#e6ab02"};
  for (int k = 1; k < 4; ++k) {
    std::map<int, std::vector<double>> by_steps;
    for (const auto& r : records)
      if (r.category == category && r.condition == Condition::Rotated && r.label_applied.k() == k && !r.failed())
        by_steps[r.inference_steps].push_back(*r.score);
    if (by_steps.empty()) continue;
    Series s{"rotated " + std::to_string(90 * k) + "deg", angle_colors[k], {}};
    for (auto& [steps, v] : by_steps) s.points[steps] = mean_and_sample_std(v).mean;
    series.push_back(std::move(s));
  }

  std::set<int> xs;
  double ylo = 0.0, yhi = 0.0;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xs.insert(x);
      ylo = first ? y : std::min(ylo, y);
      yhi = first ? y : std::max(yhi, y);
      first = false;
    }
  if (first) ylo = 0.0, yhi = 1.0;
  if (yhi - ylo < 1e-9) ylo -= 0.05, yhi += 0.05;
  const double pad = 0.08 * (yhi - ylo);
  ylo -= pad, yhi += pad;

  const double W = 640, H = 400, L = 70, R = 170, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  const int xmin = xs.empty() ? 0 : *xs.begin(), xmax = xs.empty() ? 1 : *xs.rbegin();
  auto px = [&](int x) { return xmin == xmax ? L + pw / 2 : L + pw * (x - xmin) / double(xmax - xmin); };
  auto py = [&](double y) { return T + ph * (1.0 - (y - ylo) / (yhi - ylo)); };
  auto num = [](double v) { return fixed(v, 2); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(L + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + xml_escape(category) + ": similarity vs inference steps</text>\n";
  out += "<line x1=\"" + num(L) + "\" y1=\"" + num(T + ph) + "\" x2=\"" + num(L + pw) + "\" y2=\"" + num(T + ph) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(T + ph) +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ylo + (yhi - ylo) * i / 4.0;
    out += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(y) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fixed(y, 3) + "</text>\n";
  }
  for (int x : xs)
    out += "<text x=\"" + num(px(x)) + "\" y=\"" + num(T + ph + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(x) +
           "</text>\n";
  out += "<text x=\"" + num(L + pw / 2) + "\" y=\"" + num(H - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">inference steps</text>\n";
  out += "<text x=\"16\" y=\"" + num(T + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 " + num(T + ph / 2) + ")\">mean similarity</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.points.size() > 1) {
      out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\" points=\"";
      bool sep = false;
      for (const auto& [x, y] : s.points) {
        out += (sep ? " " : "") + num(px(x)) + "," + num(py(y));
        sep = true;
      }
      out += "\"/>\n";
    }
    for (const auto& [x, y] : s.points)
      out += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3.5\" fill=\"" + s.color + "\"/>\n";
    const double ly = T + 14 + 18.0 * static_cast<double>(i);
    out += "<line x1=\"" + num(W - R + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(W - R + 32) + "\" y2=\"" +
           num(ly) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(W - R + 38) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(s.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::vector<std::filesystem::path> emit_report(const std::vector<AggregateStats>& stats,
                                               const std::vector<ProbeRecord>& records,
                                               const std::filesystem::path& out_dir, const ReportOptions& opts) {
  if (stats.empty()) throw std::invalid_argument("no aggregate statistics to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  const auto table = out_dir / "table.csv";
  write_text(table, format_table_csv(stats, opts));
  written.push_back(table);
  const auto jsonl = out_dir / "records.jsonl";
  write_text(jsonl, format_records_jsonl(records));
  written.push_back(jsonl);

  std::set<std::string> categories;
  for (const auto& s : stats) categories.insert(s.category);
  for (const auto& c : categories) {
    const auto svg = out_dir / curves_filename(c);
    write_text(svg, format_curves_svg(c, stats, records));
    written.push_back(svg);
  }
  return written;
}

}  // namespace canonprobe
