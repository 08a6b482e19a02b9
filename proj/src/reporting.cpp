#include "ghost/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ghost {

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string metrics_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << "task,mode,seed,acc_all,acc_seen,acc_unseen,continual_acc_so_far,"
        "wallclock_s\n";
  double running = 0.0;
  for (std::size_t i = 0; i < log.reports.size(); ++i) {
    const AccuracyReport& r = log.reports[i];
    running += r.acc_all;
    os << (i + 1) << ',' << mode_name(log.mode) << ',' << log.seed << ','
       << fmt(r.acc_all) << ',' << fmt(r.acc_seen) << ',';
    if (r.acc_unseen) os << fmt(*r.acc_unseen);
    os << ',' << fmt(running / static_cast<double>(i + 1)) << ',';
    os << '\n';  // wallclock deliberately blank: see timings.csv
  }
  return os.str();
}

std::string timings_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << "task,wallclock_s\n";
  for (std::size_t i = 0; i < log.wallclock_s.size(); ++i) {
    os << (i + 1) << ',' << fmt(log.wallclock_s[i], 3) << '\n';
  }
  return os.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

nlohmann::json load_snapshot(const std::string& run_dir) {
  std::ifstream in(run_dir + "/config-snapshot.json");
  if (!in) {
    throw std::runtime_error("missing config-snapshot.json in " + run_dir);
  }
  return nlohmann::json::parse(in);
}

}  // namespace

RunSummary read_run_summary(const std::string& run_dir) {
  std::ifstream in(run_dir + "/metrics.csv");
  if (!in) throw std::runtime_error("missing metrics.csv in " + run_dir);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty metrics.csv");
  RunSummary s;
  std::vector<std::string> last;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    last = split_csv_line(line);
  }
  if (last.size() < 8) throw std::runtime_error("malformed metrics.csv row");
  s.mode = last[1];
  s.seed = std::stoull(last[2]);
  s.final_acc = std::stod(last[3]);
  s.continual_acc = std::stod(last[6]);
  return s;
}

std::vector<CompareRow> compare_runs(const std::vector<std::string>& run_dirs) {
  if (run_dirs.size() < 2) {
    throw std::invalid_argument("compare needs at least two runs");
  }
  nlohmann::json reference;
  std::map<std::string, std::vector<RunSummary>> by_mode;
  std::vector<std::string> mode_order;
  for (const std::string& dir : run_dirs) {
    const nlohmann::json snap = load_snapshot(dir);
    nlohmann::json key = {{"dataset", snap.at("dataset")},
                          {"scenario", snap.at("scenario")},
                          {"arch", snap.at("arch")}};
    if (reference.is_null()) {
      reference = key;
    } else if (reference != key) {
      throw std::invalid_argument("compare: incompatible scenarios between runs");
    }
    RunSummary s = read_run_summary(dir);
    if (!by_mode.count(s.mode)) mode_order.push_back(s.mode);
    by_mode[s.mode].push_back(s);
  }
  std::vector<CompareRow> rows;
  for (const std::string& mode : mode_order) {
    const auto& group = by_mode[mode];
    CompareRow row;
    row.mode = mode;
    row.runs = static_cast<int>(group.size());
    auto stats = [&](auto getter, double& mean, double& stddev) {
      double m = 0.0;
      for (const auto& s : group) m += getter(s);
      m /= group.size();
      double v = 0.0;
      for (const auto& s : group) {
        const double d = getter(s) - m;
        v += d * d;
      }
      mean = m;
      stddev = std::sqrt(v / group.size());  // population std
    };
    stats([](const RunSummary& s) { return s.continual_acc; },
          row.continual_mean, row.continual_std);
    stats([](const RunSummary& s) { return s.final_acc; }, row.final_mean,
          row.final_std);
    rows.push_back(row);
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "mode,runs,continual_mean,continual_std,final_mean,final_std\n";
  for (const auto& r : rows) {
    os << r.mode << ',' << r.runs << ',' << fmt(r.continual_mean) << ','
       << fmt(r.continual_std) << ',' << fmt(r.final_mean) << ','
       << fmt(r.final_std) << '\n';
  }
  return os.str();
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %4s %22s %22s\n", "mode", "runs",
                "continual acc", "final acc");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %4d    %7.4f +/- %-7.4f %7.4f +/- %-7.4f\n",
                  r.mode.c_str(), r.runs, r.continual_mean, r.continual_std,
                  r.final_mean, r.final_std);
    os << buf;
  }
  return os.str();
}

// ---- SVG ------------------------------------------------------------------------

namespace {

const char* kPalette[10] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                            "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
                            "#9c755f", "#bab0ac"};

}  // namespace

std::string render_latent_svg(const PlotInputs& in) {
  if (in.features.rank() != 2 || in.features.cols() != 2 ||
      in.proxies.cols() != 2) {
    throw std::invalid_argument("latent plot requires a 2D feature space");
  }
  const std::size_t n = in.features.rows();
  if (in.labels.size() != n) {
    throw std::invalid_argument("plot: one label per feature row");
  }

  // Data bounds (features plus scaled proxy markers).
  double mean_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_norm += std::hypot(in.features.at(i, 0), in.features.at(i, 1));
  }
  mean_norm = n ? mean_norm / static_cast<double>(n) : 1.0;
  if (mean_norm == 0.0) mean_norm = 1.0;

  std::vector<std::pair<double, double>> proxy_pos;
  for (std::size_t c = 0; c < in.proxies.rows(); ++c) {
    const double norm = std::hypot(in.proxies.at(c, 0), in.proxies.at(c, 1));
    if (norm == 0.0) {
      proxy_pos.emplace_back(0.0, 0.0);
    } else {
      // Proxies are directions; draw them at the data's typical radius.
      proxy_pos.emplace_back(in.proxies.at(c, 0) / norm * mean_norm,
                             in.proxies.at(c, 1) / norm * mean_norm);
    }
  }

  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  auto grow = [&](double x, double y) {
    xlo = std::min(xlo, x);
    xhi = std::max(xhi, x);
    ylo = std::min(ylo, y);
    yhi = std::max(yhi, y);
  };
  for (std::size_t i = 0; i < n; ++i) grow(in.features.at(i, 0), in.features.at(i, 1));
  for (const auto& [x, y] : proxy_pos) grow(x, y);
  if (xhi <= xlo) xhi = xlo + 1.0;
  if (yhi <= ylo) yhi = ylo + 1.0;
  const double margin = 0.05 * std::max(xhi - xlo, yhi - ylo);
  xlo -= margin; xhi += margin; ylo -= margin; yhi += margin;

  const double W = 640.0, H = 640.0;
  auto sx = [&](double x) { return (x - xlo) / (xhi - xlo) * W; };
  auto sy = [&](double y) { return H - (y - ylo) / (yhi - ylo) * H; };
  auto f2 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int label = in.labels[i];
    os << "<circle cx=\"" << f2(sx(in.features.at(i, 0))) << "\" cy=\""
       << f2(sy(in.features.at(i, 1))) << "\" r=\"2\" fill=\""
       << kPalette[label % 10] << "\" fill-opacity=\"0.45\"/>\n";
  }
  for (std::size_t c = 0; c < in.proxies.rows(); ++c) {
    const auto& [px, py] = proxy_pos[c];
    const int cls = in.proxy_class_ids[c];
    if (in.proxy_seen[c]) {
      os << "<circle cx=\"" << f2(sx(px)) << "\" cy=\"" << f2(sy(py))
         << "\" r=\"8\" fill=\"" << kPalette[cls % 10]
         << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    } else {
      // Ghost proxy: empty circle.
      os << "<circle cx=\"" << f2(sx(px)) << "\" cy=\"" << f2(sy(py))
         << "\" r=\"8\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\""
         << " stroke-dasharray=\"3,2\"/>\n";
    }
    os << "<text x=\"" << f2(sx(px) + 9) << "\" y=\"" << f2(sy(py) - 9)
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << cls
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ghost
